//! File layout for one experiment run:
//! `exp{N}/summary.csv`, `records.json`, `robustness.csv`, `plotdata.csv`,
//! `manifest.json`.
//!
//! Floats are written with the shortest round-trip representation, so a
//! reader recovers the exact values.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;

use super::{ExperimentResult, Method, RobustnessTable};

/// Table-3-shaped row: one experiment, four (min, median, max) triplets.
pub fn summary_csv_header() -> String {
    let mut out = String::from("experiment,scale,replicates,failed");
    for method in Method::ALL {
        let _ = write!(out, ",{m}_min,{m}_median,{m}_max", m = method.tag());
    }
    out.push_str(",gamma_star\n");
    out
}

pub fn summary_csv_row(result: &ExperimentResult) -> String {
    let mut out = format!(
        "{},{},{},{}",
        result.experiment_id,
        result.scale.tag(),
        result.replicates_requested,
        result.replicates_failed
    );
    for method in Method::ALL {
        match result.summary_for(method) {
            Some(s) => {
                let _ = write!(out, ",{},{},{}", s.min, s.median, s.max);
            }
            None => out.push_str(",,,"),
        }
    }
    let _ = writeln!(out, ",{}", result.config.gamma_star);
    out
}

pub fn robustness_csv(table: &RobustnessTable) -> String {
    let mut out = String::from("experiment,replicates,B,choice,gamma,pct_null,pct_ate_star\n");
    for entry in &table.entries {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            table.experiment_id,
            table.replicates,
            table.b,
            entry.choice.label,
            entry.choice.gamma,
            entry.pct_null,
            entry.pct_ate_star
        );
    }
    out
}

/// Long-format plot data: per-replicate bounds curves (`kind=curve`) plus
/// the calibrator estimates behind the box plots (`kind=calibrator`).
pub fn plotdata_csv(result: &ExperimentResult) -> String {
    let mut out = String::from(
        "kind,experiment,replicate,gamma,pei_lower,pei_upper,ci_lower,ci_upper,method,estimate\n",
    );
    for record in &result.records {
        if let Some(curve) = &record.curve {
            for (i, &gamma) in curve.grid.values().iter().enumerate() {
                let _ = write!(
                    out,
                    "curve,{},{},{},{},{}",
                    result.experiment_id, record.replicate, gamma, curve.pei_lower[i], curve.pei_upper[i]
                );
                match (&curve.ci_lower, &curve.ci_upper) {
                    (Some(lo), Some(hi)) => {
                        let _ = write!(out, ",{},{}", lo[i], hi[i]);
                    }
                    _ => out.push_str(",,"),
                }
                out.push_str(",,\n");
            }
        }
        for method in Method::ALL {
            if let Some(value) = record.method_value(method) {
                let _ = writeln!(
                    out,
                    "calibrator,{},{},,,,,,{},{}",
                    result.experiment_id,
                    record.replicate,
                    method.tag(),
                    value
                );
            }
        }
    }
    out
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'static str,
    experiment_id: u8,
    scale: &'static str,
    base_seed: u64,
    replicates: usize,
    replicate_seeds: Vec<u64>,
    config: &'a crate::sim::SimulationConfig,
}

/// Write the full per-experiment output tree under `out_dir/exp{N}/`.
pub fn write_experiment(
    result: &ExperimentResult,
    robustness: Option<&RobustnessTable>,
    out_dir: &Path,
) -> Result<PathBuf> {
    let dir = out_dir.join(format!("exp{}", result.experiment_id));
    std::fs::create_dir_all(&dir)?;

    let mut summary = summary_csv_header();
    summary.push_str(&summary_csv_row(result));
    std::fs::write(dir.join("summary.csv"), summary)?;

    std::fs::write(dir.join("records.json"), serde_json::to_string_pretty(&result.records)?)?;
    std::fs::write(dir.join("plotdata.csv"), plotdata_csv(result))?;
    if let Some(table) = robustness {
        std::fs::write(dir.join("robustness.csv"), robustness_csv(table))?;
    }

    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        experiment_id: result.experiment_id,
        scale: result.scale.tag(),
        base_seed: result.base_seed,
        replicates: result.replicates_requested,
        replicate_seeds: result.records.iter().map(|r| r.seed).collect(),
        config: &result.config,
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{run_experiment, CurveMode, ExperimentOptions, Scale};

    fn small_result() -> ExperimentResult {
        let opts = ExperimentOptions {
            replicates: 2,
            base_seed: 1,
            scale: Scale::Desk,
            interval: None,
            curve: CurveMode::Pei,
        };
        run_experiment(9, &opts).unwrap()
    }

    #[test]
    fn plotdata_has_one_row_per_grid_point_and_replicate() {
        let result = small_result();
        let csv = plotdata_csv(&result);
        let curve_rows = csv.lines().filter(|l| l.starts_with("curve,")).count();
        assert_eq!(curve_rows, 2 * 20);
        let calib_rows = csv.lines().filter(|l| l.starts_with("calibrator,")).count();
        assert_eq!(calib_rows, 2 * 4);
    }

    #[test]
    fn plotdata_round_trips_through_a_csv_reader() {
        let result = small_result();
        let csv = plotdata_csv(&result);
        let mut reader = csv::Reader::from_reader(csv.as_bytes());
        let mut seen = 0;
        for row in reader.records() {
            let row = row.unwrap();
            if &row[0] != "curve" {
                continue;
            }
            let replicate: usize = row[2].parse().unwrap();
            let gamma: f64 = row[3].parse().unwrap();
            let lower: f64 = row[4].parse().unwrap();
            let curve = result.records[replicate].curve.as_ref().unwrap();
            let g = curve.grid.values().iter().position(|&v| v == gamma).unwrap();
            assert_eq!(lower, curve.pei_lower[g], "float round-trip must be exact");
            seen += 1;
        }
        assert_eq!(seen, 40);
    }

    #[test]
    fn files_land_in_the_documented_layout() {
        let result = small_result();
        let dir = tempfile::tempdir().unwrap();
        let exp_dir = write_experiment(&result, None, dir.path()).unwrap();
        assert!(exp_dir.join("summary.csv").exists());
        assert!(exp_dir.join("records.json").exists());
        assert!(exp_dir.join("plotdata.csv").exists());
        assert!(exp_dir.join("manifest.json").exists());
        let summary = std::fs::read_to_string(exp_dir.join("summary.csv")).unwrap();
        assert!(summary.starts_with("experiment,scale,replicates,failed,ib_logistic_min"));
        assert_eq!(summary.lines().count(), 2);
    }
}
