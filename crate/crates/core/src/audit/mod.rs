//! Executable checks of the mechanism's incentive and learning guarantees.
//!
//! Every check returns an [`AuditReport`] holding one row per trial plus a
//! verdict. Exact checks pass only with zero violations; statistical checks
//! state their standard-error tolerance in the report.

mod incentives;
mod lemmas;
mod payment;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub use incentives::{
    agreement_rate, epic_estimate, epic_grid, epir_check, epir_sweep, monotonicity_audit,
    monotonicity_pair, monotonicity_probe, random_probes, EpicConfig, MonotonicityProbe,
    ProbeOutcome,
};
pub use lemmas::{lemma_instrumentation, LemmaConfig};
pub use payment::{
    payment_identity, payment_identity_check, random_frozen_setups, FrozenAllocation,
    FrozenSelector, PaymentIdentityResult, ThresholdAllocation, QUADRATURE_POINTS,
};

use crate::env::{EnvSpec, Environment};
use crate::error::{Error, Result};
use crate::mechanism::TrcmConfig;

pub const REPORT_HEADER: &str = "kind,trial,setting,value,standard_error,violations";

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub trial: u64,
    /// `key=value` pairs joined by `;`.
    pub setting: String,
    pub value: f64,
    pub standard_error: f64,
    pub violations: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub check: &'static str,
    pub trials: u64,
    pub violations: u64,
    /// Distance to the pass boundary; negative when failing.
    pub worst_margin: f64,
    pub standard_error: f64,
    pub passed: bool,
    pub detail: String,
    pub rows: Vec<TrialRow>,
}

impl AuditReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "trial,{},{},{},{},{}",
                r.trial, r.setting, r.value, r.standard_error, r.violations
            );
        }
        let _ = writeln!(
            out,
            "summary,{},{},{},{},{}",
            self.trials,
            if self.passed { "pass" } else { "fail" },
            self.worst_margin,
            self.standard_error,
            self.violations
        );
        out
    }

    /// Writes `<dir>/<check>.csv` and returns its path.
    pub fn write_csv(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(format!("{}.csv", self.check));
        std::fs::write(&path, self.to_csv()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{} {}: trials={} violations={} margin={:.6} se={:.6} {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.check,
            self.trials,
            self.violations,
            self.worst_margin,
            self.standard_error,
            self.detail
        )
    }
}

/// Mean and standard error of the mean, independent of input order.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let mut dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    dev.sort_by(f64::total_cmp);
    let var = dev.iter().sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuditCheck {
    Monotonicity,
    Epic,
    Epir,
    PaymentIdentity,
    Agreement,
    Lemmas,
}

impl AuditCheck {
    pub const ALL: [AuditCheck; 6] = [
        AuditCheck::Monotonicity,
        AuditCheck::Epic,
        AuditCheck::Epir,
        AuditCheck::PaymentIdentity,
        AuditCheck::Agreement,
        AuditCheck::Lemmas,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AuditCheck::Monotonicity => "monotonicity",
            AuditCheck::Epic => "epic",
            AuditCheck::Epir => "epir",
            AuditCheck::PaymentIdentity => "payment-identity",
            AuditCheck::Agreement => "agreement",
            AuditCheck::Lemmas => "lemmas",
        }
    }

    /// Trial count of the reference configuration.
    pub fn default_trials(self) -> u64 {
        match self {
            AuditCheck::Monotonicity => 200,
            AuditCheck::Epic => 5000,
            AuditCheck::Epir => 40,
            AuditCheck::PaymentIdentity => 20,
            AuditCheck::Agreement => 2000,
            AuditCheck::Lemmas => 5,
        }
    }
}

impl std::str::FromStr for AuditCheck {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AuditCheck::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::param("check", format!("unknown check `{s}`")))
    }
}

/// Exploration scale used by the reference audits.
pub const AUDIT_ALPHA: f64 = 0.75;

/// Runs `check` in its reference configuration, overriding the trial count
/// when `trials` is given. What a "trial" is depends on the check: a paired
/// probe, a run per grid point, a seed, a frozen setup, a paired run, or an
/// instrumented run.
pub fn run_check(check: AuditCheck, trials: Option<u64>) -> Result<AuditReport> {
    let n = trials.unwrap_or_else(|| check.default_trials());
    if n == 0 {
        return Err(Error::param("trials", "must be at least 1"));
    }
    match check {
        AuditCheck::Monotonicity => {
            let env = Environment::synthetic(&EnvSpec::default())?;
            let probes = random_probes(&env, n as usize, 2024);
            monotonicity_audit(&env, 2000, AUDIT_ALPHA, &probes)
        }
        AuditCheck::Epic => {
            let env = Environment::synthetic(&EnvSpec {
                providers: 2,
                ..EnvSpec::default()
            })?;
            epic_estimate(&env, &EpicConfig::reference(&env, n))
        }
        AuditCheck::Epir => {
            let env = Environment::synthetic(&EnvSpec::default())?;
            let seeds: Vec<u64> = (0..n).collect();
            epir_sweep(&env, &TrcmConfig::new(10_000, AUDIT_ALPHA, 0.05), &seeds)
        }
        AuditCheck::PaymentIdentity => {
            let env = Environment::synthetic(&EnvSpec::default())?;
            let setups = random_frozen_setups(&env, n as usize, 11)?;
            payment_identity_check(&setups, 0.5, 100_000, 13)
        }
        AuditCheck::Agreement => {
            let env = Environment::synthetic(&EnvSpec::default())?;
            agreement_rate(&env, 1000, AUDIT_ALPHA, 0.05, n, 0)
        }
        AuditCheck::Lemmas => {
            let env = Environment::synthetic(&EnvSpec {
                providers: 3,
                dim: 3,
                ..EnvSpec::default()
            })?;
            lemma_instrumentation(
                &env,
                &LemmaConfig {
                    runs: n,
                    ..LemmaConfig::default()
                },
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(passed: bool) -> AuditReport {
        AuditReport {
            check: "demo",
            trials: 2,
            violations: 0,
            worst_margin: 0.5,
            standard_error: 0.25,
            passed,
            detail: String::new(),
            rows: vec![
                TrialRow {
                    trial: 0,
                    setting: "bid=0.1".into(),
                    value: 1.5,
                    standard_error: 0.0,
                    violations: 0,
                },
                TrialRow {
                    trial: 1,
                    setting: "bid=0.2".into(),
                    value: -2.0,
                    standard_error: 0.1,
                    violations: 0,
                },
            ],
        }
    }

    #[test]
    fn csv_has_rows_and_summary() {
        let csv = report(true).to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], REPORT_HEADER);
        assert_eq!(lines[1], "trial,0,bid=0.1,1.5,0,0");
        assert_eq!(lines[3], "summary,2,pass,0.5,0.25,0");
        assert!(report(false).to_csv().contains("summary,2,fail"));
    }

    #[test]
    fn csv_lands_in_the_directory() {
        let dir = tempfile::tempdir().unwrap();
        let path = report(true).write_csv(dir.path()).unwrap();
        assert_eq!(path, dir.path().join("demo.csv"));
        assert_eq!(
            std::fs::read_to_string(path).unwrap(),
            report(true).to_csv()
        );
    }

    #[test]
    fn mean_and_se_is_order_free() {
        let a = [0.1, 0.7, 1e-9, 3.0, -2.5, 0.3];
        let mut b = a;
        b.reverse();
        assert_eq!(mean_and_se(&a), mean_and_se(&b));
        let (m, se) = mean_and_se(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - 1.0).abs() < 1e-15);
    }

    #[test]
    fn check_names_round_trip() {
        for c in AuditCheck::ALL {
            assert_eq!(c.name().parse::<AuditCheck>().unwrap(), c);
        }
        assert!("bogus".parse::<AuditCheck>().is_err());
        assert!(run_check(AuditCheck::Epir, Some(0)).is_err());
    }
}
