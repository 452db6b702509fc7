//! Brute-force reference implementations. They share no code with the
//! production metric and biometry paths beyond the mask containers.

use std::f64::consts::{PI, TAU};

use crate::biometry::{Ellipse, Point};
use crate::mask::BinaryMask;
use crate::metrics::{MetricOptions, MetricValue};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("mask sizes differ")]
    DimensionMismatch,
    #[error("contour needs at least 16 points, got {0}")]
    TooFewPoints(usize),
    #[error("point lies inside the contour's hull")]
    InsideHull,
}

fn foreground(m: &BinaryMask) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for y in 0..m.height() {
        for x in 0..m.width() {
            if m.get(x, y) {
                out.push((x as f64, y as f64));
            }
        }
    }
    out
}

/// Foreground pixels with a background or off-image 4-neighbor.
fn boundary(m: &BinaryMask) -> Vec<(f64, f64)> {
    let (w, h) = (m.width() as i64, m.height() as i64);
    let on = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && m.get(x as usize, y as usize);
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if on(x, y) && !(on(x + 1, y) && on(x - 1, y) && on(x, y + 1) && on(x, y - 1)) {
                out.push((x as f64, y as f64));
            }
        }
    }
    out
}

fn nearest(p: (f64, f64), set: &[(f64, f64)]) -> f64 {
    set.iter()
        .map(|q| ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt())
        .fold(f64::INFINITY, f64::min)
}

fn directed_max(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    a.iter().map(|&p| nearest(p, b)).fold(0.0, f64::max)
}

fn directed_mean(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    a.iter().map(|&p| nearest(p, b)).sum::<f64>() / a.len() as f64
}

/// `(DSC, HD, ASD)` by exhaustive pairwise distances.
pub fn oracle_metrics(
    gt: &BinaryMask,
    pred: &BinaryMask,
    opts: &MetricOptions,
) -> Result<(f64, MetricValue, MetricValue), OracleError> {
    if gt.dims() != pred.dims() {
        return Err(OracleError::DimensionMismatch);
    }
    let (a, b) = (foreground(gt), foreground(pred));
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return Ok((1.0, MetricValue::Finite(0.0), MetricValue::Finite(0.0))),
        (true, false) | (false, true) => return Ok((0.0, MetricValue::Unbounded, MetricValue::Unbounded)),
        _ => {}
    }
    let inter = a.iter().filter(|&&(x, y)| pred.get(x as usize, y as usize)).count();
    let dsc = 2.0 * inter as f64 / (a.len() + b.len()) as f64;
    let (sa, sb) = (boundary(gt), boundary(pred));
    let (ha, hb) = if opts.hd_on_surface { (&sa, &sb) } else { (&a, &b) };
    let hd = directed_max(ha, hb).max(directed_max(hb, ha)) * opts.spacing;
    let asd = (directed_mean(&sa, &sb) + directed_mean(&sb, &sa)) / 2.0 * opts.spacing;
    Ok((dsc, MetricValue::Finite(hd), MetricValue::Finite(asd)))
}

/// The two contour points whose rays from `p` bound the contour's angular
/// extent; every contour point lies on one closed side of each line p–T.
pub fn oracle_tangent(contour: &[Point<f64>], p: Point<f64>) -> Result<[Point<f64>; 2], OracleError> {
    if contour.len() < 16 {
        return Err(OracleError::TooFewPoints(contour.len()));
    }
    let mut polar: Vec<(f64, usize)> = contour
        .iter()
        .enumerate()
        .map(|(i, q)| ((q[1] - p[1]).atan2(q[0] - p[0]), i))
        .collect();
    polar.sort_by(|a, b| a.0.total_cmp(&b.0));
    // The widest empty sector around p lies outside the contour's wedge.
    let n = polar.len();
    let (mut gap, mut after) = (polar[0].0 + TAU - polar[n - 1].0, 0);
    for i in 1..n {
        let g = polar[i].0 - polar[i - 1].0;
        if g > gap {
            gap = g;
            after = i;
        }
    }
    if gap <= PI {
        return Err(OracleError::InsideHull);
    }
    let first = polar[after].1;
    let last = polar[(after + n - 1) % n].1;
    Ok([contour[first], contour[last]])
}

/// AoP from exact PS parameters and a densely sampled FH contour, using only
/// elementary geometry: the inferior endpoint is the axis end with larger x
/// and the tangents come from [`oracle_tangent`].
pub fn oracle_aop(ps: &Ellipse<f64>, fh: &Ellipse<f64>, samples: usize) -> Result<f64, OracleError> {
    let (ux, uy) = (ps.orientation.cos(), ps.orientation.sin());
    let e1 = [ps.center[0] + ps.semi_major * ux, ps.center[1] + ps.semi_major * uy];
    let e2 = [ps.center[0] - ps.semi_major * ux, ps.center[1] - ps.semi_major * uy];
    let (sup, inf) = if (e1[0], e1[1]) > (e2[0], e2[1]) { (e2, e1) } else { (e1, e2) };
    let (fx, fy) = (fh.orientation.cos(), fh.orientation.sin());
    let contour: Vec<Point<f64>> = (0..samples)
        .map(|i| {
            let t = TAU * i as f64 / samples as f64;
            let (a, b) = (fh.semi_major * t.cos(), fh.semi_minor * t.sin());
            [fh.center[0] + a * fx - b * fy, fh.center[1] + a * fy + b * fx]
        })
        .collect();
    let axis = [inf[0] - sup[0], inf[1] - sup[1]];
    let tangents = oracle_tangent(&contour, inf)?;
    let angle = |t: Point<f64>| {
        let v = [t[0] - inf[0], t[1] - inf[1]];
        let cos = (axis[0] * v[0] + axis[1] * v[1]) / (axis[0].hypot(axis[1]) * v[0].hypot(v[1]));
        cos.clamp(-1.0, 1.0).acos().to_degrees()
    };
    Ok(angle(tangents[0]).max(angle(tangents[1])))
}
