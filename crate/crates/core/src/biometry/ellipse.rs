//! Ellipses in center/axes/orientation form, their conics, and the direct
//! ellipse-specific least-squares fit.

use crate::scalar::Scalar;

use super::BiometryError;

/// Planar point `[x, y]` in image coordinates (y grows downward).
pub type Point<T> = [T; 2];

/// Ellipse with `semi_major ≥ semi_minor > 0` and orientation of the major
/// axis measured from `+x` toward `+y`, in `[0, π)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse<T> {
    pub center: Point<T>,
    pub semi_major: T,
    pub semi_minor: T,
    pub orientation: T,
}

impl<T: Scalar> Ellipse<T> {
    /// Normalizes axis order and orientation range; rejects non-positive or
    /// non-finite parameters.
    pub fn new(center: Point<T>, a: T, b: T, orientation: T) -> Result<Self, BiometryError> {
        let finite = center[0].is_finite() && center[1].is_finite() && orientation.is_finite();
        if !finite || !(a > T::zero()) || !(b > T::zero()) || !a.is_finite() || !b.is_finite() {
            return Err(BiometryError::InvalidEllipse);
        }
        let (a, b, theta) = if a >= b {
            (a, b, orientation)
        } else {
            (b, a, orientation + T::FRAC_PI_2())
        };
        Ok(Self {
            center,
            semi_major: a,
            semi_minor: b,
            orientation: wrap_half_turn(theta),
        })
    }

    pub fn circle(center: Point<T>, radius: T) -> Result<Self, BiometryError> {
        Self::new(center, radius, radius, T::zero())
    }

    /// Unit vector along the major axis.
    pub fn major_dir(&self) -> Point<T> {
        [self.orientation.cos(), self.orientation.sin()]
    }

    /// Point at parameter `t` of `center + a·cos t·u + b·sin t·v`.
    pub fn point_at(&self, t: T) -> Point<T> {
        let [ux, uy] = self.major_dir();
        let (a, b) = (self.semi_major * t.cos(), self.semi_minor * t.sin());
        [self.center[0] + a * ux - b * uy, self.center[1] + a * uy + b * ux]
    }

    /// Coordinates in the frame where the ellipse is the unit circle.
    pub fn to_unit_frame(&self, p: Point<T>) -> Point<T> {
        let [ux, uy] = self.major_dir();
        let (dx, dy) = (p[0] - self.center[0], p[1] - self.center[1]);
        [(dx * ux + dy * uy) / self.semi_major, (-dx * uy + dy * ux) / self.semi_minor]
    }

    pub fn from_unit_frame(&self, q: Point<T>) -> Point<T> {
        let [ux, uy] = self.major_dir();
        let (a, b) = (q[0] * self.semi_major, q[1] * self.semi_minor);
        [self.center[0] + a * ux - b * uy, self.center[1] + a * uy + b * ux]
    }

    /// Normalized implicit value `(u/a)² + (v/b)² − 1`: negative inside,
    /// zero on the curve, positive outside.
    pub fn level(&self, p: Point<T>) -> T {
        let [u, v] = self.to_unit_frame(p);
        u * u + v * v - T::one()
    }

    /// General conic coefficients, scaled so that the constant term is `-1`
    /// at the center.
    pub fn conic(&self) -> Conic<T> {
        let two = T::lit(2.0);
        let [ux, uy] = self.major_dir();
        let (ia, ib) = (
            T::one() / (self.semi_major * self.semi_major),
            T::one() / (self.semi_minor * self.semi_minor),
        );
        let a = ux * ux * ia + uy * uy * ib;
        let b = two * ux * uy * (ia - ib);
        let c = uy * uy * ia + ux * ux * ib;
        let [cx, cy] = self.center;
        let d = -(two * a * cx + b * cy);
        let e = -(b * cx + two * c * cy);
        let f = a * cx * cx + b * cx * cy + c * cy * cy - T::one();
        Conic([a, b, c, d, e, f])
    }
}

fn wrap_half_turn<T: Scalar>(theta: T) -> T {
    let pi = T::PI();
    let mut t = theta % pi;
    if t < T::zero() {
        t = t + pi;
    }
    if t >= pi {
        t = t - pi;
    }
    t
}

/// `A x² + B xy + C y² + D x + E y + F = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conic<T>(pub [T; 6]);

impl<T: Scalar> Conic<T> {
    pub fn eval(&self, p: Point<T>) -> T {
        let [a, b, c, d, e, f] = self.0;
        let [x, y] = p;
        a * x * x + b * x * y + c * y * y + d * x + e * y + f
    }

    /// `B² − 4AC`; negative for ellipses.
    pub fn discriminant(&self) -> T {
        let [a, b, c, ..] = self.0;
        b * b - T::lit(4.0) * a * c
    }

    /// Geometric form of the conic, or an error when it is not a real ellipse.
    pub fn to_ellipse(&self) -> Result<Ellipse<T>, BiometryError> {
        let [a, b, c, d, e, f] = self.0;
        let two = T::lit(2.0);
        let disc = self.discriminant();
        let scale = a.abs() + b.abs() + c.abs();
        if !(disc < -T::tiny() * scale * scale) {
            return Err(BiometryError::NotAnEllipse);
        }
        // Center solves the gradient system [2A B; B 2C]·c = −[D; E].
        let det = T::lit(4.0) * a * c - b * b;
        let cx = (b * e - two * c * d) / det;
        let cy = (b * d - two * a * e) / det;
        let f0 = f + (d * cx + e * cy) / two;
        // Quadratic form value along a unit direction at angle phi.
        let q = |phi: T| {
            let (s, co) = phi.sin_cos();
            a * co * co + b * s * co + c * s * s
        };
        let phi = b.atan2(a - c) / two;
        let (l1, l2) = (q(phi), q(phi + T::FRAC_PI_2()));
        let (r1, r2) = (-f0 / l1, -f0 / l2);
        if !(r1 > T::zero() && r2 > T::zero()) || !r1.is_finite() || !r2.is_finite() {
            return Err(BiometryError::NotAnEllipse);
        }
        Ellipse::new([cx, cy], r1.sqrt(), r2.sqrt(), phi)
    }
}

type Mat3<T> = [[T; 3]; 3];

fn det3<T: Scalar>(m: &Mat3<T>) -> T {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn inverse3<T: Scalar>(m: &Mat3<T>) -> Option<Mat3<T>> {
    let det = det3(m);
    let norm = m.iter().flatten().fold(T::zero(), |acc, &v| acc.max(v.abs()));
    if !(det.abs() > T::tiny() * norm * norm * norm) {
        return None;
    }
    let mut inv = [[T::zero(); 3]; 3];
    for (i, row) in inv.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
            let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
            *cell = (m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]) / det;
        }
    }
    Some(inv)
}

fn mul3<T: Scalar>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut out = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).fold(T::zero(), |acc, k| acc + a[i][k] * b[k][j]);
        }
    }
    out
}

fn cross<T: Scalar>(a: &[T; 3], b: &[T; 3]) -> [T; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm3<T: Scalar>(v: &[T; 3]) -> T {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Real roots of `x³ + p2 x² + p1 x + p0`, polished with Newton steps.
fn real_cubic_roots<T: Scalar>(p2: T, p1: T, p0: T) -> Vec<T> {
    let three = T::lit(3.0);
    let two = T::lit(2.0);
    // Depressed cubic t³ + p t + q with x = t − p2/3.
    let shift = p2 / three;
    let p = p1 - p2 * p2 / three;
    let q = two * p2 * p2 * p2 / T::lit(27.0) - p2 * p1 / three + p0;
    let disc = (q / two).powi(2) + (p / three).powi(3);
    let mut roots = if disc > T::zero() {
        let s = disc.sqrt();
        vec![(-q / two + s).cbrt() + (-q / two - s).cbrt() - shift]
    } else if p == T::zero() {
        vec![-shift]
    } else {
        let r = (-p / three).sqrt();
        let arg = (-q / (two * r * r * r)).max(-T::one()).min(T::one());
        let phi = arg.acos() / three;
        (0..3)
            .map(|k| two * r * (phi - two * T::PI() * T::lit(k as f64) / three).cos() - shift)
            .collect()
    };
    for x in roots.iter_mut() {
        for _ in 0..4 {
            let f = ((*x + p2) * *x + p1) * *x + p0;
            let df = (three * *x + two * p2) * *x + p1;
            if df == T::zero() {
                break;
            }
            let step = f / df;
            if !step.is_finite() {
                break;
            }
            *x = *x - step;
        }
    }
    roots
}

/// Null vector of `m − λI` from the best-conditioned pair of rows.
fn eigenvector<T: Scalar>(m: &Mat3<T>, lambda: T) -> Option<[T; 3]> {
    let mut r = *m;
    for (i, row) in r.iter_mut().enumerate() {
        row[i] = row[i] - lambda;
    }
    let candidates = [cross(&r[0], &r[1]), cross(&r[0], &r[2]), cross(&r[1], &r[2])];
    let best = candidates
        .into_iter()
        .max_by(|a, b| norm3(a).partial_cmp(&norm3(b)).unwrap_or(std::cmp::Ordering::Equal))?;
    let n = norm3(&best);
    (n > T::zero() && n.is_finite()).then(|| [best[0] / n, best[1] / n, best[2] / n])
}

/// Minimum number of samples for a conic fit.
pub const MIN_FIT_POINTS: usize = 5;

/// Direct least-squares ellipse fit: minimizes the algebraic distance subject
/// to `4AC − B² = 1`, solved as a reduced 3×3 eigenproblem on centered and
/// scaled coordinates.
pub fn fit_ellipse<T: Scalar>(points: &[Point<T>]) -> Result<Ellipse<T>, BiometryError> {
    if points.len() < MIN_FIT_POINTS {
        return Err(BiometryError::TooFewPoints {
            needed: MIN_FIT_POINTS,
            got: points.len(),
        });
    }
    let n = T::from_usize(points.len()).expect("point count fits scalar");
    let mx = points.iter().fold(T::zero(), |s, p| s + p[0]) / n;
    let my = points.iter().fold(T::zero(), |s, p| s + p[1]) / n;
    let spread = (points
        .iter()
        .fold(T::zero(), |s, p| s + (p[0] - mx).powi(2) + (p[1] - my).powi(2))
        / n)
        .sqrt();
    if !(spread > T::zero()) || !spread.is_finite() {
        return Err(BiometryError::Unfittable("coincident points"));
    }

    // Scatter blocks of the design rows [x², xy, y² | x, y, 1].
    let mut s1 = [[T::zero(); 3]; 3];
    let mut s2 = [[T::zero(); 3]; 3];
    let mut s3 = [[T::zero(); 3]; 3];
    for p in points {
        let x = (p[0] - mx) / spread;
        let y = (p[1] - my) / spread;
        let quad = [x * x, x * y, y * y];
        let lin = [x, y, T::one()];
        for i in 0..3 {
            for j in 0..3 {
                s1[i][j] = s1[i][j] + quad[i] * quad[j];
                s2[i][j] = s2[i][j] + quad[i] * lin[j];
                s3[i][j] = s3[i][j] + lin[i] * lin[j];
            }
        }
    }
    let s3_inv = inverse3(&s3).ok_or(BiometryError::Unfittable("collinear points"))?;
    let s2_t = [
        [s2[0][0], s2[1][0], s2[2][0]],
        [s2[0][1], s2[1][1], s2[2][1]],
        [s2[0][2], s2[1][2], s2[2][2]],
    ];
    // Linear coefficients as a function of the quadratic ones.
    let mut lin_map = mul3(&s3_inv, &s2_t);
    for row in lin_map.iter_mut() {
        for v in row.iter_mut() {
            *v = -*v;
        }
    }
    let s2_lin = mul3(&s2, &lin_map);
    let mut reduced = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            reduced[i][j] = s1[i][j] + s2_lin[i][j];
        }
    }
    // Premultiply by the inverse of the constraint block [[0,0,2],[0,-1,0],[2,0,0]].
    let half = T::lit(0.5);
    let m = [
        [reduced[2][0] * half, reduced[2][1] * half, reduced[2][2] * half],
        [-reduced[1][0], -reduced[1][1], -reduced[1][2]],
        [reduced[0][0] * half, reduced[0][1] * half, reduced[0][2] * half],
    ];
    let trace = m[0][0] + m[1][1] + m[2][2];
    let minors = (m[0][0] * m[1][1] - m[0][1] * m[1][0])
        + (m[0][0] * m[2][2] - m[0][2] * m[2][0])
        + (m[1][1] * m[2][2] - m[1][2] * m[2][1]);
    let det = det3(&m);

    let mut best: Option<([T; 3], T)> = None;
    for lambda in real_cubic_roots(-trace, minors, -det) {
        let Some(v) = eigenvector(&m, lambda) else { continue };
        let constraint = T::lit(4.0) * v[0] * v[2] - v[1] * v[1];
        if !(constraint > T::zero()) {
            continue;
        }
        // Algebraic residual per unit constraint; the admissible eigenvector minimizes it.
        let residual = (0..3)
            .map(|i| (0..3).fold(T::zero(), |s, j| s + reduced[i][j] * v[j]) * v[i])
            .fold(T::zero(), |s, t| s + t)
            / constraint;
        if best.is_none_or(|(_, r)| residual < r) {
            best = Some((v, residual));
        }
    }
    let (quad, _) = best.ok_or(BiometryError::NotAnEllipse)?;
    let lin: Vec<T> = (0..3)
        .map(|i| (0..3).fold(T::zero(), |s, j| s + lin_map[i][j] * quad[j]))
        .collect();
    let normalized = Conic([quad[0], quad[1], quad[2], lin[0], lin[1], lin[2]]).to_ellipse()?;
    Ellipse::new(
        [
            normalized.center[0] * spread + mx,
            normalized.center[1] * spread + my,
        ],
        normalized.semi_major * spread,
        normalized.semi_minor * spread,
        normalized.orientation,
    )
}
