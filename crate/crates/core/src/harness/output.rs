use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::plot::{render_plot, PlotKind};
use super::{ExperimentResult, RoundAggregate, RunSummary};
use crate::error::{Error, Result};

pub const METRICS_HEADER: &str =
    "round,mean_cum_regret,mean_round_regret,mean_user_utility,mean_clairvoyant_utility";
pub const SUMMARY_HEADER: &str = "seed,total_regret,total_utility,total_payments,resample_count";

// `{}` on f64 prints the shortest string that parses back to the same value.
fn metrics_csv(rows: &[RoundAggregate]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.round,
            r.mean_cum_regret,
            r.mean_round_regret,
            r.mean_user_utility,
            r.mean_clairvoyant_utility
        );
    }
    out
}

fn summary_csv(runs: &[RunSummary]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in runs {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.seed, r.total_regret, r.total_utility, r.total_payments, r.resample_count
        );
    }
    out
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn write_metrics_csv(rows: &[RoundAggregate], path: &Path) -> Result<()> {
    write(path, &metrics_csv(rows))
}

pub fn write_summary_csv(runs: &[RunSummary], path: &Path) -> Result<()> {
    write(path, &summary_csv(runs))
}

/// Writes both CSVs and the three plots into `dir`, creating it if needed.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_metrics_csv(&result.by_round, &dir.join("metrics_by_round.csv"))?;
    write_summary_csv(&result.runs, &dir.join("runs_summary.csv"))?;
    for (kind, name) in [
        (PlotKind::CumRegret, "cum_regret.svg"),
        (PlotKind::RoundRegret, "round_regret.svg"),
        (PlotKind::Revenue, "revenue.svg"),
    ] {
        write(&dir.join(name), &render_plot(&result.by_round, kind)?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(round: u64) -> RoundAggregate {
        RoundAggregate {
            round,
            mean_cum_regret: 0.1 * round as f64,
            mean_round_regret: 0.1,
            mean_user_utility: 1.0 / 3.0,
            mean_clairvoyant_utility: 2.5,
        }
    }

    #[test]
    fn single_round_has_header_and_one_row() {
        let text = metrics_csv(&[row(1)]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], METRICS_HEADER);
        assert!(text.ends_with('\n') && !text.contains('\r'));
    }

    #[test]
    fn floats_round_trip() {
        let text = metrics_csv(&[row(3)]);
        let fields: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(fields[3].parse::<f64>().unwrap(), 1.0 / 3.0);
        assert_eq!(fields[1].parse::<f64>().unwrap(), 0.1 * 3.0);
    }

    #[test]
    fn summary_header_is_exact() {
        let text = summary_csv(&[RunSummary {
            seed: 4,
            total_regret: 1.5,
            total_utility: -2.0,
            total_payments: 3.0,
            resample_count: 1,
        }]);
        assert_eq!(text, format!("{SUMMARY_HEADER}\n4,1.5,-2,3,1\n"));
    }

    #[test]
    fn unwritable_directory_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let result = ExperimentResult {
            by_round: vec![row(1)],
            runs: vec![],
        };
        let err = write_outputs(&result, &blocker.join("sub")).unwrap_err();
        assert!(err.is_io());
    }
}
