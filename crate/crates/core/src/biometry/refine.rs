//! Raster-consistent refinement of a direct ellipse fit.
//!
//! Every pixel next to the region boundary tells us on which side of the
//! true contour its center lies. Starting from the algebraic fit, the
//! ellipse is moved to maximise a soft minimum of those signed margins,
//! which removes most of the staircase bias the edge-midpoint fit keeps on
//! small, nearly circular regions.

use crate::mask::BinaryMask;
use crate::scalar::Scalar;

use super::Ellipse;

/// Sharpness of the soft minimum, per pixel of margin.
const SHARPNESS: f64 = 20.0;
const MAX_ITERATIONS: usize = 100;

type Params = [f64; 5];

/// Pixel centers adjacent to the boundary, with `+1` for background and `-1`
/// for foreground.
fn labelled_samples(mask: &BinaryMask) -> Vec<([f64; 2], f64)> {
    let (w, h) = (mask.width() as i32, mask.height() as i32);
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let here = mask.contains(x, y);
            let edge = [(1, 0), (-1, 0), (0, 1), (0, -1)].iter().any(|&(dx, dy)| {
                let (nx, ny) = (x + dx, y + dy);
                nx >= 0 && ny >= 0 && nx < w && ny < h && mask.contains(nx, ny) != here
            });
            if edge {
                out.push(([x as f64, y as f64], if here { -1.0 } else { 1.0 }));
            }
        }
    }
    out
}

/// First-order (Sampson) signed distance to the ellipse, positive outside.
fn signed_distance(p: &Params, q: [f64; 2]) -> f64 {
    let (c, s) = (p[4].cos(), p[4].sin());
    let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
    let (u, v) = (c * dx + s * dy, -s * dx + c * dy);
    let (a2, b2) = (p[2] * p[2], p[3] * p[3]);
    let f = u * u / a2 + v * v / b2 - 1.0;
    let g = 2.0 * ((u / a2).powi(2) + (v / b2).powi(2)).sqrt();
    if g > 0.0 {
        f / g
    } else {
        -p[3]
    }
}

fn residuals(p: &Params, samples: &[([f64; 2], f64)]) -> Vec<f64> {
    samples
        .iter()
        .map(|&(q, side)| (-0.5 * SHARPNESS * side * signed_distance(p, q)).exp())
        .collect()
}

fn cost(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn solve5(mut m: [[f64; 5]; 5], mut g: Params) -> Option<Params> {
    for i in 0..5 {
        let pivot = (i..5).max_by(|&a, &b| m[a][i].abs().total_cmp(&m[b][i].abs()))?;
        m.swap(i, pivot);
        g.swap(i, pivot);
        if m[i][i].abs() < 1e-300 {
            return None;
        }
        for j in i + 1..5 {
            let f = m[j][i] / m[i][i];
            for k in i..5 {
                m[j][k] -= f * m[i][k];
            }
            g[j] -= f * g[i];
        }
    }
    let mut x = [0.0; 5];
    for i in (0..5).rev() {
        x[i] = (g[i] - (i + 1..5).map(|k| m[i][k] * x[k]).sum::<f64>()) / m[i][i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Levenberg–Marquardt on the soft-margin residuals with a central-difference
/// Jacobian. Returns `None` when the result is not a usable ellipse.
pub(super) fn refine_to_raster<T: Scalar>(start: &Ellipse<T>, mask: &BinaryMask) -> Option<Ellipse<T>> {
    let samples = labelled_samples(mask);
    if samples.len() < 8 {
        return None;
    }
    let mut p: Params = [
        start.center[0].to_f64_lossy(),
        start.center[1].to_f64_lossy(),
        start.semi_major.to_f64_lossy(),
        start.semi_minor.to_f64_lossy(),
        start.orientation.to_f64_lossy(),
    ];
    let mut r = residuals(&p, &samples);
    let mut c = cost(&r);
    if !c.is_finite() {
        return None;
    }
    let mut lambda = 1e-3;
    for _ in 0..MAX_ITERATIONS {
        let mut jac = vec![[0.0; 5]; samples.len()];
        for k in 0..5 {
            let h = 1e-6 * p[k].abs().max(1.0);
            let (mut hi, mut lo) = (p, p);
            hi[k] += h;
            lo[k] -= h;
            let (rh, rl) = (residuals(&hi, &samples), residuals(&lo, &samples));
            for (row, (a, b)) in jac.iter_mut().zip(rh.iter().zip(&rl)) {
                row[k] = (a - b) / (2.0 * h);
            }
        }
        let mut normal = [[0.0; 5]; 5];
        let mut grad = [0.0; 5];
        for (row, ri) in jac.iter().zip(&r) {
            for a in 0..5 {
                grad[a] -= row[a] * ri;
                for b in 0..5 {
                    normal[a][b] += row[a] * row[b];
                }
            }
        }
        let mut improved = false;
        while lambda < 1e12 {
            let mut damped = normal;
            for (i, row) in damped.iter_mut().enumerate() {
                row[i] *= 1.0 + lambda;
            }
            let Some(step) = solve5(damped, grad) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = p;
            for k in 0..5 {
                trial[k] += step[k];
            }
            if trial[2] > 0.0 && trial[3] > 0.0 {
                let rt = residuals(&trial, &samples);
                let ct = cost(&rt);
                if ct < c {
                    let done = step.iter().fold(0.0f64, |m, v| m.max(v.abs())) < 1e-9;
                    p = trial;
                    r = rt;
                    c = ct;
                    lambda = (lambda * 0.3).max(1e-12);
                    improved = !done;
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    Ellipse::new([T::lit(p[0]), T::lit(p[1])], T::lit(p[2]), T::lit(p[3]), T::lit(p[4])).ok()
}
