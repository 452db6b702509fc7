//! Whole-dataset evaluation: loads every ground truth and prediction, scores
//! them, and collects biometry rows, in parallel over cases.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::biometry::{label_aop, BiometryError, BiometryRow, DeltaAop, DeltaAopError, Side};
use crate::ingest::{load_mask, CaseMeta, IngestError, ManifestEntry, Palette};
use crate::mask::LabelMask;
use crate::metrics::{evaluate_case, MetricOptions, MetricRecord};
use crate::synth::MockChallenge;

/// Image extensions tried, in order, when looking for a prediction.
pub const PREDICTION_EXTENSIONS: [&str; 2] = ["png", "bmp"];

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("no team directories under `{0}`")]
    NoTeams(PathBuf),
    #[error("cannot list `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluateOptions {
    pub metrics: MetricOptions,
    pub palette: Palette,
    /// Worker threads; 0 lets the pool decide.
    pub jobs: usize,
    /// Also compute AoP for ground truth and every prediction.
    pub biometry: bool,
}

impl Default for EvaluateOptions {
    fn default() -> Self {
        Self {
            metrics: MetricOptions::default(),
            palette: Palette::default(),
            jobs: 0,
            biometry: true,
        }
    }
}

/// A case or (case, team) pair that could not be scored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseFailure {
    pub case_id: String,
    /// `None` when the ground truth itself failed.
    pub team: Option<String>,
    pub message: String,
}

/// Everything a dataset run produces. Records are sorted by case, team and
/// structure; biometry rows by case and team.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Evaluation {
    pub records: Vec<MetricRecord>,
    pub biometry: Vec<BiometryRow>,
    pub failures: Vec<CaseFailure>,
    /// Number of (case, team) pairs whose prediction file was absent.
    pub missing_predictions: usize,
}

/// Where a team's prediction for a case is expected:
/// `<root>/<team>/<case_id>.png` or `.bmp`.
pub fn prediction_path(root: &Path, team: &str, case_id: &str) -> Option<PathBuf> {
    PREDICTION_EXTENSIONS
        .iter()
        .map(|ext| root.join(team).join(format!("{case_id}.{ext}")))
        .find(|p| p.is_file())
}

/// Team names are the subdirectory names of `root`, sorted.
pub fn discover_teams(root: &Path) -> Result<Vec<String>, PipelineError> {
    let io = |source| PipelineError::Io {
        path: root.to_owned(),
        source,
    };
    let mut teams = Vec::new();
    for entry in std::fs::read_dir(root).map_err(io)? {
        let entry = entry.map_err(io)?;
        if entry.file_type().map_err(io)?.is_dir() {
            teams.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    if teams.is_empty() {
        return Err(PipelineError::NoTeams(root.to_owned()));
    }
    teams.sort();
    Ok(teams)
}

struct CaseOutput {
    records: Vec<MetricRecord>,
    biometry: Vec<BiometryRow>,
    failures: Vec<CaseFailure>,
    missing: usize,
}

fn evaluate_one<G, P>(meta: &CaseMeta, teams: &[String], opts: &EvaluateOptions, load_gt: G, load_pred: P) -> CaseOutput
where
    G: FnOnce() -> Result<LabelMask, String>,
    P: Fn(&str) -> Result<Option<LabelMask>, String>,
{
    let mut out = CaseOutput {
        records: Vec::new(),
        biometry: Vec::new(),
        failures: Vec::new(),
        missing: 0,
    };
    let fail = |team: Option<&str>, message: String| CaseFailure {
        case_id: meta.case_id.clone(),
        team: team.map(str::to_string),
        message,
    };
    let gt = match load_gt() {
        Ok(m) => m,
        Err(message) => {
            out.failures.push(fail(None, message));
            return out;
        }
    };
    let mut meta = meta.clone();
    let gt_aop: Option<Result<f64, BiometryError>> = opts.biometry.then(|| label_aop::<f64>(&gt).map(|r| r.aop));
    if let Some(Ok(aop)) = gt_aop {
        meta.reconcile_aop_stratum(aop);
    }
    for team in teams {
        let pred = match load_pred(team) {
            Ok(Some(m)) => m,
            Ok(None) => {
                log::warn!("case {}: no prediction from team {team}; scoring as empty", meta.case_id);
                out.missing += 1;
                match LabelMask::empty(gt.width(), gt.height()) {
                    Ok(m) => m,
                    Err(e) => {
                        out.failures.push(fail(Some(team), e.to_string()));
                        continue;
                    }
                }
            }
            Err(message) => {
                out.failures.push(fail(Some(team), message));
                continue;
            }
        };
        match evaluate_case(&gt, &pred, &meta, team, &opts.metrics) {
            Ok(recs) => out.records.extend(recs),
            Err(e) => {
                out.failures.push(fail(Some(team), e.to_string()));
                continue;
            }
        }
        if let Some(gt_aop) = &gt_aop {
            let outcome = match gt_aop {
                Err(source) => Err(DeltaAopError {
                    side: Side::GroundTruth,
                    source: source.clone(),
                }),
                Ok(aop_gt) => match label_aop::<f64>(&pred) {
                    Ok(r) => Ok(DeltaAop {
                        aop_gt: *aop_gt,
                        aop_pred: r.aop,
                        delta: (aop_gt - r.aop).abs(),
                    }),
                    Err(source) => Err(DeltaAopError {
                        side: Side::Prediction,
                        source,
                    }),
                },
            };
            let known = gt_aop.as_ref().ok().copied();
            out.biometry.push(BiometryRow::from_outcome(&meta.case_id, team, known, &outcome));
        }
    }
    out
}

fn run_parallel<F>(n: usize, jobs: usize, per_case: F) -> Result<Evaluation, PipelineError>
where
    F: Fn(usize) -> CaseOutput + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| PipelineError::ThreadPool(e.to_string()))?;
    let outputs: Vec<CaseOutput> = pool.install(|| (0..n).into_par_iter().map(per_case).collect());
    let mut eval = Evaluation::default();
    for o in outputs {
        eval.records.extend(o.records);
        eval.biometry.extend(o.biometry);
        eval.failures.extend(o.failures);
        eval.missing_predictions += o.missing;
    }
    eval.records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    eval.biometry
        .sort_by(|a, b| (&a.case_id, &a.team).cmp(&(&b.case_id, &b.team)));
    Ok(eval)
}

/// Scores every manifest case against each team's prediction under
/// `pred_root`. A missing prediction file is scored as an all-background
/// mask; unreadable or mismatched files are reported as failures.
pub fn evaluate_dataset(
    entries: &[ManifestEntry],
    pred_root: &Path,
    teams: &[String],
    opts: &EvaluateOptions,
) -> Result<Evaluation, PipelineError> {
    let load = |path: &Path| load_mask(path, &opts.palette).map_err(|e: IngestError| e.to_string());
    run_parallel(entries.len(), opts.jobs, |i| {
        let e = &entries[i];
        evaluate_one(
            &e.meta,
            teams,
            opts,
            || load(&e.gt_path),
            |team| match prediction_path(pred_root, team, &e.meta.case_id) {
                Some(p) => load(&p).map(Some),
                None => Ok(None),
            },
        )
    })
}

/// Same as [`evaluate_dataset`] for an in-memory synthetic challenge.
pub fn evaluate_mock(challenge: &MockChallenge, opts: &EvaluateOptions) -> Result<Evaluation, PipelineError> {
    run_parallel(challenge.cases.len(), opts.jobs, |i| {
        let case = &challenge.cases[i];
        evaluate_one(
            &case.meta,
            &challenge.teams,
            opts,
            || Ok(case.gt.clone()),
            |team| {
                let t = challenge.teams.iter().position(|x| x == team).expect("team from challenge");
                Ok(Some(case.predictions[t].clone()))
            },
        )
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{save_mask, Institution, Scanner, Split};
    use crate::mask::Structure;
    use crate::metrics::MetricValue;
    use crate::synth::{mock_challenge, MockOptions};

    #[test]
    fn mock_run_is_sorted_and_complete() {
        let ch = mock_challenge(&MockOptions::new(2, 2, 5)).unwrap();
        let ev = evaluate_mock(&ch, &EvaluateOptions::default()).unwrap();
        assert_eq!(ev.records.len(), 5 * 2 * 3);
        assert_eq!(ev.biometry.len(), 5 * 2);
        assert!(ev.failures.is_empty());
        assert!(ev.records.windows(2).all(|w| w[0].sort_key() < w[1].sort_key()));
        assert!(ev.records.iter().all(|r| r.meta.aop_stratum.is_some()));
        let one = evaluate_mock(&ch, &EvaluateOptions { jobs: 1, ..Default::default() }).unwrap();
        assert_eq!(ev, one);
    }

    #[test]
    fn files_with_missing_and_broken_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let ch = mock_challenge(&MockOptions::new(7, 1, 3)).unwrap();
        let palette = Palette::default();
        std::fs::create_dir_all(dir.path().join("pred/alpha")).unwrap();
        std::fs::create_dir_all(dir.path().join("pred/beta")).unwrap();
        let mut entries = Vec::new();
        for (i, c) in ch.cases.iter().enumerate() {
            let gt_path = dir.path().join(format!("{}.png", c.meta.case_id));
            save_mask(&c.gt, &gt_path, &palette).unwrap();
            entries.push(ManifestEntry {
                meta: c.meta.clone(),
                gt_path,
            });
            if i != 1 {
                save_mask(&c.predictions[0], dir.path().join(format!("pred/alpha/{}.png", c.meta.case_id)), &palette).unwrap();
            }
        }
        std::fs::write(dir.path().join(format!("pred/beta/{}.bmp", ch.cases[0].meta.case_id)), b"junk").unwrap();

        let root = dir.path().join("pred");
        let teams = discover_teams(&root).unwrap();
        assert_eq!(teams, vec!["alpha", "beta"]);
        let ev = evaluate_dataset(&entries, &root, &teams, &EvaluateOptions::default()).unwrap();
        assert_eq!(ev.failures.len(), 1);
        assert_eq!(ev.failures[0].team.as_deref(), Some("beta"));
        // alpha misses case 1; beta misses cases 1 and 2.
        assert_eq!(ev.missing_predictions, 3);
        let missing = ev
            .records
            .iter()
            .find(|r| r.team == "alpha" && r.case_id() == ch.cases[1].meta.case_id && r.structure == Structure::Fh)
            .unwrap();
        assert_eq!((missing.dsc, missing.hd, missing.asd), (0.0, MetricValue::Unbounded, MetricValue::Unbounded));
        let row = ev.biometry.iter().find(|r| r.team == "alpha" && r.case_id == ch.cases[1].meta.case_id).unwrap();
        assert_eq!(row.status, "undefined-pred-missing-PS");
        assert!(row.aop_gt.is_some());
    }

    #[test]
    fn unreadable_ground_truth_is_a_case_failure() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("t")).unwrap();
        let entries = vec![ManifestEntry {
            meta: CaseMeta::new("c1", Split::Test2, Institution::Jnu, Scanner::ObEye),
            gt_path: dir.path().join("absent.png"),
        }];
        let ev = evaluate_dataset(&entries, dir.path(), &["t".to_string()], &EvaluateOptions::default()).unwrap();
        assert!(ev.records.is_empty());
        assert_eq!(ev.failures.len(), 1);
        assert_eq!(ev.failures[0].team, None);
        assert!(discover_teams(&dir.path().join("t")).is_err());
    }
}
