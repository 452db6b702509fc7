use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{half_extents, SceneSpec, SynthError};
use crate::biometry::{long_axis_endpoints, Ellipse};

/// Randomized scene generator. Sizes are given for a 256-pixel frame and
/// scale linearly with `size`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneSampler {
    pub size: usize,
    /// PS semi-axes ranges at 256 px.
    pub ps_major: (f64, f64),
    pub ps_minor: (f64, f64),
    /// FH semi-axes ranges at 256 px.
    pub fh_major: (f64, f64),
    pub fh_minor: (f64, f64),
    /// Distance from the PS inferior endpoint to the tangent point at 256 px.
    pub tangent_distance: (f64, f64),
    /// Direction of the PS axis (superior to inferior), degrees from +x.
    pub axis_angle_deg: (f64, f64),
    pub max_attempts: usize,
}

impl SceneSampler {
    pub fn new(size: usize) -> Self {
        Self {
            size,
            ps_major: (18.0, 26.0),
            ps_minor: (5.0, 9.0),
            fh_major: (44.0, 56.0),
            fh_minor: (36.0, 44.0),
            tangent_distance: (30.0, 60.0),
            axis_angle_deg: (5.0, 35.0),
            max_attempts: 2000,
        }
    }

    /// A scene whose analytic AoP equals `target_deg` (within 1e-6°).
    ///
    /// The tangent line is laid first: it leaves the PS inferior endpoint at
    /// `target_deg` from the axis, and the FH ellipse is placed so that it
    /// touches the line at a sampled distance on the side facing the axis.
    pub fn sample(&self, rng: &mut impl Rng, target_deg: f64) -> Result<SceneSpec, SynthError> {
        let s = self.size as f64 / 256.0;
        let mut draw = |(lo, hi): (f64, f64)| rng.random_range(lo..=hi);
        for _ in 0..self.max_attempts {
            let (a_ps, b_ps) = (draw(self.ps_major) * s, draw(self.ps_minor) * s);
            let (a_fh, b_fh) = (draw(self.fh_major) * s, draw(self.fh_minor) * s);
            let phi = draw(self.axis_angle_deg).to_radians();
            let fh_theta = draw((0.0, 180.0)).to_radians();
            let mut dist = draw(self.tangent_distance) * s;
            if target_deg > 140.0 {
                // Near-straight angles put the tangent point behind the PS.
                dist += 2.0 * a_ps;
            }

            let d = [phi.cos(), phi.sin()];
            let psi = target_deg.to_radians();
            let u = [d[0] * psi.cos() - d[1] * psi.sin(), d[0] * psi.sin() + d[1] * psi.cos()];
            // Normal pointing back toward the axis side of the line.
            let n = [u[1], -u[0]];

            let ps = Ellipse::new([0.0, 0.0], a_ps, b_ps, phi)?;
            let (_, p_inf) = long_axis_endpoints(&ps);
            let t = [p_inf[0] + dist * u[0], p_inf[1] + dist * u[1]];
            // The FH point with outward normal −n is c − A n / √(nᵀAn); pin it to T.
            let (c, sn) = (fh_theta.cos(), fh_theta.sin());
            let (a2, b2) = (a_fh * a_fh, b_fh * b_fh);
            let m = [
                [a2 * c * c + b2 * sn * sn, (a2 - b2) * c * sn],
                [(a2 - b2) * c * sn, a2 * sn * sn + b2 * c * c],
            ];
            let an = [m[0][0] * n[0] + m[0][1] * n[1], m[1][0] * n[0] + m[1][1] * n[1]];
            let norm = (n[0] * an[0] + n[1] * an[1]).sqrt();
            let fh_center = [t[0] + an[0] / norm, t[1] + an[1] / norm];
            let fh = Ellipse::new(fh_center, a_fh, b_fh, fh_theta)?;

            // Center the union of both bounding boxes in the frame.
            let (px, py) = half_extents(&ps);
            let (fx, fy) = half_extents(&fh);
            let lo = [(-px).min(fh_center[0] - fx), (-py).min(fh_center[1] - fy)];
            let hi = [px.max(fh_center[0] + fx), py.max(fh_center[1] + fy)];
            let size = self.size as f64;
            if hi[0] - lo[0] > size - 6.0 || hi[1] - lo[1] > size - 6.0 {
                continue;
            }
            let shift = [
                ((size - 1.0) - (hi[0] + lo[0])) / 2.0,
                ((size - 1.0) - (hi[1] + lo[1])) / 2.0,
            ];
            let moved = |e: &Ellipse<f64>| {
                Ellipse::new(
                    [e.center[0] + shift[0], e.center[1] + shift[1]],
                    e.semi_major,
                    e.semi_minor,
                    e.orientation,
                )
            };
            let spec = SceneSpec {
                width: self.size,
                height: self.size,
                ps: moved(&ps)?,
                fh: moved(&fh)?,
            };
            match spec.validate() {
                Ok(aop) if (aop - target_deg).abs() < 1e-6 => return Ok(spec),
                _ => continue,
            }
        }
        Err(SynthError::SamplerExhausted(self.max_attempts))
    }
}

/// Scene `index` of a seeded family: the seed keys a ChaCha8 generator and
/// the index selects its stream, so any scene can be replayed on its own.
pub fn sample_scene(sampler: &SceneSampler, seed: u64, index: u64, target_deg: f64) -> Result<SceneSpec, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    sampler.sample(&mut rng, target_deg)
}
