//! Exact squared Euclidean distance transform (Felzenszwalb & Huttenlocher).
//!
//! Two separable passes of the 1-D lower-envelope-of-parabolas transform.
//! All intermediate values are integers held in `f64`, so results are exact.

use crate::mask::BinaryMask;

/// Stand-in for "no feature in this line" that keeps the envelope arithmetic finite.
const FAR: f64 = 1e20;

/// Squared distance from every pixel to the nearest foreground pixel of `mask`.
///
/// Returns `None` when the mask has no foreground.
pub fn squared_edt(mask: &BinaryMask) -> Option<Vec<f64>> {
    if mask.is_empty() {
        return None;
    }
    let (w, h) = mask.dims();
    let mut grid: Vec<f64> = mask
        .as_slice()
        .iter()
        .map(|&fg| if fg { 0.0 } else { FAR })
        .collect();

    let n = w.max(h);
    let mut f = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];

    for x in 0..w {
        for y in 0..h {
            f[y] = grid[y * w + x];
        }
        transform_1d(&f[..h], &mut d[..h], &mut v, &mut z);
        for y in 0..h {
            grid[y * w + x] = d[y];
        }
    }
    for y in 0..h {
        let row = &mut grid[y * w..(y + 1) * w];
        f[..w].copy_from_slice(row);
        transform_1d(&f[..w], &mut d[..w], &mut v, &mut z);
        row.copy_from_slice(&d[..w]);
    }
    Some(grid)
}

fn transform_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let intersect = |q: usize, p: usize| {
        let (qf, pf) = (q as f64, p as f64);
        ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * qf - 2.0 * pf)
    };
    for q in 1..n {
        let mut s = intersect(q, v[k]);
        // z[0] is -inf and s is finite, so k never underflows.
        while s <= z[k] {
            k -= 1;
            s = intersect(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let p = v[k] as f64;
        *out = (qf - p) * (qf - p) + f[v[k]];
    }
}
