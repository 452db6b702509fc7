use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{gen_case, perturb, Perturbation, SceneSampler, SceneSpec, SynthError};
use crate::ingest::{AopStratum, CaseMeta, Institution, Scanner, Split};
use crate::mask::{LabelMask, Structure};

#[derive(Debug, Clone, PartialEq)]
pub struct MockOptions {
    pub seed: u64,
    pub cases: usize,
    pub teams: Vec<String>,
    pub size: usize,
    /// Range of analytic AoP targets in degrees.
    pub aop_range: (f64, f64),
}

impl MockOptions {
    /// `n_teams` teams named `team_a`, `team_b`, ...
    pub fn new(seed: u64, n_teams: usize, cases: usize) -> Self {
        Self {
            seed,
            cases,
            teams: (0..n_teams)
                .map(|i| format!("team_{}", char::from(b'a' + (i % 26) as u8)))
                .collect(),
            size: 128,
            aop_range: (70.0, 150.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockCase {
    pub meta: CaseMeta,
    pub spec: SceneSpec,
    pub gt: LabelMask,
    pub aop: f64,
    /// One prediction per team, in team order.
    pub predictions: Vec<LabelMask>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockChallenge {
    pub teams: Vec<String>,
    pub cases: Vec<MockCase>,
}

/// A seeded synthetic challenge. Team `i` predicts with errors that grow
/// with `i`: random shifts up to `i + 1` pixels, dilation or erosion up to
/// `i` steps, and an occasional missing structure.
pub fn mock_challenge(opts: &MockOptions) -> Result<MockChallenge, SynthError> {
    let sampler = SceneSampler::new(opts.size);
    let mut cases = Vec::with_capacity(opts.cases);
    for c in 0..opts.cases {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(c as u64);
        let target = rng.random_range(opts.aop_range.0..opts.aop_range.1);
        let spec = sampler.sample(&mut rng, target)?;
        let case = gen_case(&spec)?;
        let smu = rng.random_bool(0.7);
        let mut meta = CaseMeta::new(
            format!("case_{c:04}"),
            Split::Test2,
            if smu { Institution::Smu } else { Institution::Jnu },
            if smu { Scanner::EsaoteMyLab } else { Scanner::ObEye },
        );
        meta.aop_stratum = Some(AopStratum::from_aop(case.aop));
        let predictions = (0..opts.teams.len())
            .map(|t| {
                let q = t as i32;
                let mut m = perturb(
                    &case.mask,
                    Perturbation::Translate {
                        dx: rng.random_range(-(q + 1)..=q + 1),
                        dy: rng.random_range(-(q + 1)..=q + 1),
                    },
                );
                let k = rng.random_range(0..=q as u32);
                m = perturb(&m, if rng.random_bool(0.5) { Perturbation::Dilate(k) } else { Perturbation::Erode(k) });
                if rng.random_bool(0.02 * (t + 1) as f64) {
                    let s = if rng.random_bool(0.5) { Structure::Ps } else { Structure::Fh };
                    m = perturb(&m, Perturbation::Drop(s));
                }
                m
            })
            .collect();
        cases.push(MockCase {
            meta,
            spec,
            gt: case.mask,
            aop: case.aop,
            predictions,
        });
    }
    Ok(MockChallenge {
        teams: opts.teams.clone(),
        cases,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_shaped() {
        let opts = MockOptions::new(5, 3, 4);
        let a = mock_challenge(&opts).unwrap();
        assert_eq!(a, mock_challenge(&opts).unwrap());
        assert_eq!(a.teams, vec!["team_a", "team_b", "team_c"]);
        assert_eq!(a.cases.len(), 4);
        for c in &a.cases {
            assert_eq!(c.predictions.len(), 3);
            assert!(c.aop >= 70.0 && c.aop < 150.0);
            assert_eq!(c.gt.dims(), (128, 128));
        }
        assert_ne!(a, mock_challenge(&MockOptions::new(6, 3, 4)).unwrap());
    }
}
