//! Synthetic PS/FH scenes with analytically known AoP, mask perturbations,
//! and brute-force oracles for the metric and tangent computations.

mod mock;
mod oracle;
mod perturb;
mod sampler;

pub use mock::{mock_challenge, MockCase, MockChallenge, MockOptions};
pub use oracle::{oracle_aop, oracle_metrics, oracle_tangent, OracleError};
pub use perturb::{perturb, Perturbation};
pub use sampler::{sample_scene, SceneSampler};

use crate::biometry::{aop_from_ellipses, long_axis_endpoints, AopResult, BiometryError, Ellipse};
use crate::mask::{LabelMask, FH, PS};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("image size must be positive")]
    EmptyImage,
    #[error("{0} ellipse does not fit inside the image")]
    OutOfFrame(&'static str),
    #[error("PS inferior endpoint lies inside the FH ellipse")]
    EndpointInsideHead,
    #[error("PS and FH rasters overlap")]
    Overlap,
    #[error("analytic AoP undefined: {0}")]
    Aop(#[from] BiometryError),
    #[error("analytic AoP {0}° outside (0, 180)")]
    AopOutOfRange(f64),
    #[error("no valid scene after {0} attempts")]
    SamplerExhausted(usize),
}

/// A two-ellipse scene on a `width × height` pixel grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub ps: Ellipse<f64>,
    pub fh: Ellipse<f64>,
}

/// Half-extents of the axis-aligned bounding box.
pub(crate) fn half_extents(e: &Ellipse<f64>) -> (f64, f64) {
    let (c, s) = (e.orientation.cos(), e.orientation.sin());
    let (a2, b2) = (e.semi_major * e.semi_major, e.semi_minor * e.semi_minor);
    ((a2 * c * c + b2 * s * s).sqrt(), (a2 * s * s + b2 * c * c).sqrt())
}

impl SceneSpec {
    /// Analytic AoP from the exact ellipse parameters.
    pub fn analytic_aop(&self) -> Result<AopResult<f64>, SynthError> {
        Ok(aop_from_ellipses(&self.ps, &self.fh)?)
    }

    /// Same scene with every length multiplied by `k` (image size rounded up).
    pub fn scaled(&self, k: f64) -> Result<SceneSpec, SynthError> {
        let scale = |e: &Ellipse<f64>| {
            Ellipse::new(
                [e.center[0] * k, e.center[1] * k],
                e.semi_major * k,
                e.semi_minor * k,
                e.orientation,
            )
        };
        Ok(SceneSpec {
            width: (self.width as f64 * k).ceil() as usize,
            height: (self.height as f64 * k).ceil() as usize,
            ps: scale(&self.ps)?,
            fh: scale(&self.fh)?,
        })
    }

    /// Checks every scene invariant and returns the analytic AoP.
    pub fn validate(&self) -> Result<f64, SynthError> {
        if self.width == 0 || self.height == 0 {
            return Err(SynthError::EmptyImage);
        }
        for (name, e) in [("PS", &self.ps), ("FH", &self.fh)] {
            let (ex, ey) = half_extents(e);
            let [cx, cy] = e.center;
            // Keep one pixel of background around each structure.
            if cx - ex < 1.0 || cy - ey < 1.0 || cx + ex > self.width as f64 - 2.0 || cy + ey > self.height as f64 - 2.0 {
                return Err(SynthError::OutOfFrame(name));
            }
        }
        let (_, p_inf) = long_axis_endpoints(&self.ps);
        if self.fh.level(p_inf) <= 0.0 {
            return Err(SynthError::EndpointInsideHead);
        }
        let aop = self.analytic_aop()?.aop;
        if !(aop > 0.0 && aop < 180.0) {
            return Err(SynthError::AopOutOfRange(aop));
        }
        let (ps, fh) = (rasterize(&self.ps, self.width, self.height), rasterize(&self.fh, self.width, self.height));
        if ps.iter().zip(&fh).any(|(a, b)| *a && *b) {
            return Err(SynthError::Overlap);
        }
        Ok(aop)
    }
}

/// Pixels whose centers satisfy the ellipse inequality, row-major.
pub fn rasterize(e: &Ellipse<f64>, width: usize, height: usize) -> Vec<bool> {
    let mut out = vec![false; width * height];
    let (ex, ey) = half_extents(e);
    let clamp = |v: f64, hi: usize| v.max(0.0).min(hi as f64) as usize;
    let (x0, x1) = (clamp((e.center[0] - ex).floor(), width), clamp((e.center[0] + ex).ceil() + 1.0, width));
    let (y0, y1) = (clamp((e.center[1] - ey).floor(), height), clamp((e.center[1] + ey).ceil() + 1.0, height));
    for y in y0..y1 {
        for x in x0..x1 {
            if e.level([x as f64, y as f64]) <= 0.0 {
                out[y * width + x] = true;
            }
        }
    }
    out
}

/// A generated ground-truth mask and its analytic AoP.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCase {
    pub spec: SceneSpec,
    pub mask: LabelMask,
    pub aop: f64,
}

/// Rasterizes PS as label 1 and FH as label 2.
pub fn gen_case(spec: &SceneSpec) -> Result<SynthCase, SynthError> {
    let aop = spec.validate()?;
    let ps = rasterize(&spec.ps, spec.width, spec.height);
    let fh = rasterize(&spec.fh, spec.width, spec.height);
    let labels = ps
        .iter()
        .zip(&fh)
        .map(|(&p, &f)| if p { PS } else if f { FH } else { 0 })
        .collect();
    let mask = LabelMask::new(spec.width, spec.height, labels).expect("dimensions match by construction");
    Ok(SynthCase { spec: *spec, mask, aop })
}
