use nalgebra::DMatrix;

use crate::error::{check_len, Result};

/// `(A + xxᵀ)⁻¹` from `A⁻¹` by the Sherman–Morrison identity.
pub fn sherman_morrison_update(gram_inverse: &DMatrix<f64>, x: &[f64]) -> Result<DMatrix<f64>> {
    let mut out = gram_inverse.clone();
    sherman_morrison_in_place(&mut out, x)?;
    Ok(out)
}

/// In-place variant; the result is re-symmetrized.
pub fn sherman_morrison_in_place(gram_inverse: &mut DMatrix<f64>, x: &[f64]) -> Result<()> {
    let d = x.len();
    check_len(gram_inverse.nrows(), d)?;
    check_len(gram_inverse.ncols(), d)?;
    let mut u = vec![0.0; d];
    mat_vec(gram_inverse, x, &mut u);
    let denom = 1.0 + x.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>();
    for r in 0..d {
        for c in 0..d {
            gram_inverse[(r, c)] -= u[r] * u[c] / denom;
        }
    }
    for r in 0..d {
        for c in (r + 1)..d {
            let avg = 0.5 * (gram_inverse[(r, c)] + gram_inverse[(c, r)]);
            gram_inverse[(r, c)] = avg;
            gram_inverse[(c, r)] = avg;
        }
    }
    Ok(())
}

pub(crate) fn mat_vec(m: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    for (r, slot) in out.iter_mut().enumerate() {
        *slot = (0..x.len()).map(|c| m[(r, c)] * x[c]).sum();
    }
}

/// `xᵀ M x`.
pub(crate) fn quad_form(m: &DMatrix<f64>, x: &[f64]) -> f64 {
    let d = x.len();
    let mut acc = 0.0;
    for r in 0..d {
        let mut row = 0.0;
        for c in 0..d {
            row += m[(r, c)] * x[c];
        }
        acc += x[r] * row;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn unit_vector_update_halves_one_diagonal_entry() {
        let out = sherman_morrison_update(&DMatrix::identity(3, 3), &[1.0, 0.0, 0.0]).unwrap();
        let expected = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, 1.0, 1.0]));
        assert!((out - expected).norm() < 1e-15);
    }

    #[test]
    fn zero_update_leaves_inverse_unchanged() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let out = sherman_morrison_update(&a, &[0.0, 0.0]).unwrap();
        assert_eq!(out, a);
    }

    #[test]
    fn fifty_updates_track_direct_inverse() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(50);
        let d = 5;
        let mut gram = DMatrix::<f64>::identity(d, d);
        let mut inv = DMatrix::<f64>::identity(d, d);
        for _ in 0..50 {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let xv = nalgebra::DVector::from_column_slice(&x);
            gram += &xv * xv.transpose();
            sherman_morrison_in_place(&mut inv, &x).unwrap();
        }
        let direct = gram.try_inverse().unwrap();
        assert!((&inv - &direct).norm() < 1e-8);
        assert!((&inv - inv.transpose()).norm() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert!(sherman_morrison_update(&DMatrix::identity(2, 2), &[1.0]).is_err());
    }

    #[test]
    fn quad_form_of_identity_is_squared_norm() {
        assert_eq!(quad_form(&DMatrix::identity(2, 2), &[3.0, 4.0]), 25.0);
    }
}
