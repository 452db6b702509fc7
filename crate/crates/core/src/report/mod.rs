//! Summary statistics, machine-readable tables and SVG figures.

mod boxstats;
mod figures;
mod tables;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use boxstats::{box_stats, box_stats_metric, quantile, BoxStats, BoxStatsError};
pub use figures::{
    blob_plot, box_panel, delta_aop_panel, significance_heatmap, tau_histogram, tau_strips, Figure, TAU_BINS,
};
pub use tables::{
    box_json, groups_json, leaderboard_json, round_numbers, significance_json, stability_json, strata_json, to_value,
    DECIMALS, TAU_DECIMALS,
};

use crate::biometry::{write_biometry_csv, BiometryRow};
use crate::cohorts::{AttributeTable, CohortError, StratumKey};
use crate::metrics::{write_records_csv, MetricKind, MetricRecord, RecordsCsvError};
use crate::ranking::{
    bootstrap_rankings, run_scheme, significance_map, BootstrapOptions, MetricTable, RankingError, Scheme,
    SignificanceOptions,
};

/// Rounds half away from zero to `decimals` places.
pub fn round_to(x: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (x * f).round() / f
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("nothing to report")]
    NothingToReport,
    #[error("cannot write `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Ranking(#[from] RankingError),
    #[error(transparent)]
    Cohort(#[from] CohortError),
    #[error(transparent)]
    Records(#[from] RecordsCsvError),
    #[error("biometry table: {0}")]
    Biometry(#[from] csv::Error),
}

/// What to include in a report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportOptions {
    pub scheme: Scheme,
    pub significance: SignificanceOptions,
    /// Bootstrap stability analysis; its scheme is replaced by `scheme`.
    pub bootstrap: Option<BootstrapOptions>,
    pub strata: Vec<StratumKey>,
    /// Design-attribute table and the attributes to group teams by.
    pub attributes: Option<(AttributeTable, Vec<String>)>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            scheme: Scheme::RankThenMean,
            significance: SignificanceOptions::default(),
            bootstrap: Some(BootstrapOptions::default()),
            strata: vec![StratumKey::Institution, StratumKey::AopStratum],
            attributes: None,
        }
    }
}

/// Serializes a JSON value with a trailing newline.
pub fn json_bytes(v: &serde_json::Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s.into_bytes()
}

/// Writes `bytes`, creating parent directories.
pub fn write_output(path: &Path, bytes: &[u8]) -> Result<(), ReportError> {
    let io = |source| ReportError::Io {
        path: path.to_owned(),
        source,
    };
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    std::fs::write(path, bytes).map_err(io)
}

/// File-name-safe form of a label.
fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn axis_label(metric: MetricKind) -> &'static str {
    match metric {
        MetricKind::Dsc => "DSC",
        MetricKind::Hd | MetricKind::Asd => "distance",
    }
}

/// Writes every table and figure under `out_dir` and returns the written
/// paths in sorted order. Output depends only on the inputs and options.
pub fn emit_report(
    records: &[MetricRecord],
    biometry: &[BiometryRow],
    opts: &ReportOptions,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    if records.is_empty() {
        return Err(ReportError::NothingToReport);
    }
    let table = MetricTable::from_records(records)?;
    let teams = table.teams().to_vec();
    let tasks = table.tasks().to_vec();
    let mut files: Vec<(PathBuf, Vec<u8>)> = Vec::new();
    let mut put = |name: String, bytes: Vec<u8>| files.push((out_dir.join(name), bytes));

    let mut csv = Vec::new();
    write_records_csv(&mut csv, records)?;
    put("metrics.csv".into(), csv);
    if !biometry.is_empty() {
        let mut csv = Vec::new();
        write_biometry_csv(&mut csv, biometry)?;
        put("biometry.csv".into(), csv);
    }
    put("leaderboard.json".into(), json_bytes(&leaderboard_json(&table, opts.scheme, &opts.significance)?));
    put("significance.json".into(), json_bytes(&significance_json(&table, &opts.significance)?));
    for key in &opts.strata {
        let v = strata_json(records, key, &tasks)?;
        put(format!("strata_{}.json", slug(&key.to_string())), json_bytes(&v));
    }
    if let Some((attrs, names)) = &opts.attributes {
        for name in names {
            let v = groups_json(records, attrs, name, &tasks)?;
            put(format!("groups_{}.json", slug(name)), json_bytes(&v));
        }
    }

    let mut figures: Vec<(String, Figure)> = tasks
        .par_iter()
        .map(|&task| -> Result<Vec<(String, Figure)>, RankingError> {
            let ti = table.task_index(task)?;
            let columns: Vec<_> = (0..teams.len()).map(|team| table.column(team, ti)).collect();
            let mut out = vec![(
                format!("box_{}", task.id()),
                box_panel(&task.id(), axis_label(task.metric), &teams, &columns),
            )];
            if teams.len() >= 2 {
                let order = run_scheme(&table, task, opts.scheme, &opts.significance)?.ranking.order();
                let map = significance_map(&table, task, &opts.significance)?;
                out.push((format!("significance_{}", task.id()), significance_heatmap(&map, &teams, &order)));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();

    if let Some(boot) = &opts.bootstrap {
        let boot = BootstrapOptions {
            scheme: opts.scheme,
            significance: opts.significance,
            ..*boot
        };
        let report = bootstrap_rankings(&table, &boot)?.summary(&teams)?;
        put("stability.json".into(), json_bytes(&stability_json(&report, boot.seed)));
        figures.extend(
            report
                .tasks
                .par_iter()
                .map(|ts| (format!("blob_{}", ts.task.id()), blob_plot(ts, report.samples)))
                .collect::<Vec<_>>(),
        );
        figures.push(("tau".into(), tau_strips(&report)));
    }
    if !biometry.is_empty() {
        figures.push(("delta_aop".into(), delta_aop_panel(biometry)));
    }
    for (name, fig) in figures {
        put(format!("figures/{name}.svg"), fig.svg.into_bytes());
        put(format!("figures/{name}.json"), json_bytes(&fig.data));
    }

    files.sort_by(|a, b| a.0.cmp(&b.0));
    for (path, bytes) in &files {
        write_output(path, bytes)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{CaseMeta, Institution, Scanner, Split};
    use crate::mask::Structure;
    use crate::metrics::MetricValue;

    fn records(teams: &[&str]) -> Vec<MetricRecord> {
        let mut out = Vec::new();
        for c in 0..4 {
            let meta = CaseMeta::new(format!("c{c}"), Split::Test2, Institution::Smu, Scanner::EsaoteMyLab);
            for (t, team) in teams.iter().enumerate() {
                for s in Structure::ALL {
                    out.push(MetricRecord {
                        meta: meta.clone(),
                        team: team.to_string(),
                        structure: s,
                        dsc: 0.9 - 0.01 * (c + t) as f64,
                        hd: MetricValue::Finite(2.0 + (c * t) as f64),
                        asd: MetricValue::Finite(0.5 + t as f64),
                    });
                }
            }
        }
        out
    }

    #[test]
    fn nothing_to_report() {
        let dir = tempfile::tempdir().unwrap();
        let err = emit_report(&[], &[], &ReportOptions::default(), dir.path()).unwrap_err();
        assert_eq!(err.to_string(), "nothing to report");
    }

    #[test]
    fn single_team_report() {
        let dir = tempfile::tempdir().unwrap();
        let opts = ReportOptions {
            bootstrap: Some(BootstrapOptions {
                samples: 20,
                ..Default::default()
            }),
            ..Default::default()
        };
        let files = emit_report(&records(&["solo"]), &[], &opts, dir.path()).unwrap();
        let names: Vec<String> = files
            .iter()
            .map(|p| p.strip_prefix(dir.path()).unwrap().display().to_string())
            .collect();
        assert!(names.contains(&"leaderboard.json".to_string()));
        assert!(!names.iter().any(|n| n.starts_with("figures/significance_")));
        let lb: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("leaderboard.json")).unwrap()).unwrap();
        assert_eq!(lb["overall"]["order"], serde_json::json!(["solo"]));
        let blob: serde_json::Value =
            serde_json::from_slice(&std::fs::read(dir.path().join("figures/blob_DSC_PS.json")).unwrap()).unwrap();
        assert_eq!(blob["teams"][0]["frequencies"], serde_json::json!([{ "rank": 1.0, "count": 20 }]));
    }

    #[test]
    fn output_is_byte_stable() {
        let recs = records(&["a", "b", "c"]);
        let opts = ReportOptions {
            bootstrap: Some(BootstrapOptions {
                samples: 30,
                seed: 9,
                ..Default::default()
            }),
            ..Default::default()
        };
        let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let f1 = emit_report(&recs, &[], &opts, d1.path()).unwrap();
        let f2 = emit_report(&recs, &[], &opts, d2.path()).unwrap();
        assert_eq!(f1.len(), f2.len());
        for (a, b) in f1.iter().zip(&f2) {
            assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap(), "{}", a.display());
        }
    }

    #[test]
    fn rounding() {
        assert_eq!(round_to(0.1234565, 6), 0.123457);
        assert_eq!(round_to(-2.5, 0), -3.0);
    }
}
