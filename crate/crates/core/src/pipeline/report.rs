//! Plot-data export from run summaries.

use std::fs;
use std::path::{Path, PathBuf};

use super::config::Estimator;
use super::run::EpochSummary;
use super::summary_path;
use crate::error::{Error, Result};
use crate::iekf::mahalanobis_bound;

pub(crate) const SUMMARY_COLUMNS: [&str; 7] = [
    "t",
    "mean_error_deg",
    "rms_error_deg",
    "mean_abs_error_deg",
    "mean_3sigma_deg",
    "mean_mahalanobis",
    "mean_nees",
];

pub fn read_summary(path: &Path) -> Result<Vec<EpochSummary>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::data(path, e.to_string()))?;
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    if header != SUMMARY_COLUMNS {
        return Err(Error::data(path, format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let v = row
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| Error::data(path, e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(EpochSummary {
            t: v[0],
            mean_error_deg: v[1],
            rms_error_deg: v[2],
            mean_abs_error_deg: v[3],
            mean_3sigma_deg: v[4],
            mean_mahalanobis: v[5],
            mean_nees: v[6],
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct ReportFiles {
    pub error_bounds: Vec<PathBuf>,
    pub mahalanobis: Vec<PathBuf>,
    pub abs_error: PathBuf,
}

fn write_table(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(f64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads every `summary_<estimator>.csv` under `traces` and writes:
/// `error_bounds_<estimator>.csv`, `mahalanobis_<estimator>.csv` (estimators
/// that perform corrections) and `abs_error.csv` with one column per estimator.
pub fn cmd_report(traces: &Path, out: &Path) -> Result<ReportFiles> {
    let found: Vec<(Estimator, Vec<EpochSummary>)> = Estimator::ALL
        .into_iter()
        .filter_map(|e| {
            let p = summary_path(traces, e);
            p.exists().then(|| read_summary(&p).map(|s| (e, s)))
        })
        .collect::<Result<_>>()?;
    if found.is_empty() {
        return Err(Error::data(
            traces,
            "no summary_<estimator>.csv trace files found",
        ));
    }
    fs::create_dir_all(out)?;
    let bound = mahalanobis_bound(0.997, 1)?;
    let mut files = ReportFiles::default();

    for (e, s) in &found {
        let path = out.join(format!("error_bounds_{}.csv", e.name()));
        let header =
            ["t", "mean_error_deg", "minus_3sigma_deg", "plus_3sigma_deg"].map(String::from);
        write_table(
            &path,
            &header,
            s.iter()
                .map(|r| vec![r.t, r.mean_error_deg, -r.mean_3sigma_deg, r.mean_3sigma_deg]),
        )?;
        files.error_bounds.push(path);

        if *e != Estimator::DeadReckon {
            let path = out.join(format!("mahalanobis_{}.csv", e.name()));
            let header = ["t", "mean_mahalanobis", "bound_99_7", "expected_mean"].map(String::from);
            write_table(
                &path,
                &header,
                s.iter().map(|r| vec![r.t, r.mean_mahalanobis, bound, 1.0]),
            )?;
            files.mahalanobis.push(path);
        }
    }

    let n = found[0].1.len();
    if found.iter().any(|(_, s)| s.len() != n) {
        return Err(Error::data(traces, "summaries cover different epochs"));
    }
    let mut header = vec!["t".to_string()];
    header.extend(found.iter().map(|(e, _)| e.name().to_string()));
    let path = out.join("abs_error.csv");
    write_table(
        &path,
        &header,
        (0..n).map(|k| {
            let mut row = vec![found[0].1[k].t];
            row.extend(found.iter().map(|(_, s)| s[k].mean_abs_error_deg));
            row
        }),
    )?;
    files.abs_error = path;
    Ok(files)
}
