//! Angle-of-progression biometry.
//!
//! PS and FH regions are each summarised by a fitted ellipse. The AoP is the
//! angle at the inferior end of the PS long axis between the axis extension
//! and the line tangent to the FH ellipse. Of the two tangents, the one with
//! the larger angle is reported.

mod ellipse;
mod refine;

use std::fmt;
use std::io::{Read, Write};

use crate::mask::{BinaryMask, LabelMask, Structure};
use crate::metrics::extract_surface;
use crate::scalar::Scalar;

pub use ellipse::{fit_ellipse, Conic, Ellipse, Point, MIN_FIT_POINTS};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BiometryError {
    #[error("too few points for an ellipse fit: need {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("unfittable region ({0})")]
    Unfittable(&'static str),
    #[error("unfittable region (fitted conic is not an ellipse)")]
    NotAnEllipse,
    #[error("invalid ellipse parameters")]
    InvalidEllipse,
    #[error("tangent undefined (structures overlap)")]
    TangentUndefined,
    #[error("AoP undefined ({0} is empty)")]
    EmptyStructure(Structure),
}

impl BiometryError {
    /// Short machine-readable reason used in CSV status fields.
    pub fn slug(&self) -> &'static str {
        match self {
            BiometryError::TooFewPoints { .. } => "too-few-points",
            BiometryError::Unfittable(_) | BiometryError::NotAnEllipse => "unfittable",
            BiometryError::InvalidEllipse => "invalid-ellipse",
            BiometryError::TangentUndefined => "overlap",
            BiometryError::EmptyStructure(Structure::Ps) => "missing-PS",
            BiometryError::EmptyStructure(Structure::Fh) => "missing-FH",
            BiometryError::EmptyStructure(Structure::Psfh) => "missing-PSFH",
        }
    }
}

/// Long-axis endpoints `(P_sup, P_inf)`.
///
/// `P_inf` is the endpoint with the larger `x`; on a tie in `x` the one with
/// the larger `y` (lower in the image).
pub fn long_axis_endpoints<T: Scalar>(e: &Ellipse<T>) -> (Point<T>, Point<T>) {
    let [ux, uy] = e.major_dir();
    let a = e.semi_major;
    let p = [e.center[0] + a * ux, e.center[1] + a * uy];
    let q = [e.center[0] - a * ux, e.center[1] - a * uy];
    let tol = T::tiny() * a.max(T::one());
    let p_is_inf = if (p[0] - q[0]).abs() <= tol {
        p[1] > q[1]
    } else {
        p[0] > q[0]
    };
    if p_is_inf {
        (q, p)
    } else {
        (p, q)
    }
}

/// The two points where lines through the external point `p` touch `e`.
///
/// In the frame where `e` is the unit circle, the chord of contact is the
/// polar line `q·t = 1` of the pole `q`; its intersections with the circle
/// are mapped back to image coordinates.
pub fn tangent_points<T: Scalar>(e: &Ellipse<T>, p: Point<T>) -> Result<[Point<T>; 2], BiometryError> {
    let q = e.to_unit_frame(p);
    let rho2 = q[0] * q[0] + q[1] * q[1];
    if !(rho2 > T::one() + T::tiny()) {
        return Err(BiometryError::TangentUndefined);
    }
    let along = T::one() / rho2;
    let across = (rho2 - T::one()).sqrt() / rho2;
    let perp = [-q[1], q[0]];
    let t1 = [q[0] * along + perp[0] * across, q[1] * along + perp[1] * across];
    let t2 = [q[0] * along - perp[0] * across, q[1] * along - perp[1] * across];
    Ok([e.from_unit_frame(t1), e.from_unit_frame(t2)])
}

/// Unsigned angle between two vectors, in degrees.
pub fn angle_between_deg<T: Scalar>(u: Point<T>, v: Point<T>) -> T {
    let cross = u[0] * v[1] - u[1] * v[0];
    let dot = u[0] * v[0] + u[1] * v[1];
    cross.abs().atan2(dot).to_degrees()
}

/// AoP construction and its intermediate geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AopResult<T> {
    /// Degrees.
    pub aop: T,
    /// `(P_sup, P_inf)` of the PS long axis.
    pub ps_axis: (Point<T>, Point<T>),
    /// FH tangent point of the selected line.
    pub tangent_point: Point<T>,
    /// Angles of both tangent lines against the axis extension, degrees.
    pub candidate_angles: [T; 2],
    pub ps_ellipse: Ellipse<T>,
    pub fh_ellipse: Ellipse<T>,
}

/// AoP from already-fitted PS and FH ellipses.
pub fn aop_from_ellipses<T: Scalar>(ps: &Ellipse<T>, fh: &Ellipse<T>) -> Result<AopResult<T>, BiometryError> {
    let (p_sup, p_inf) = long_axis_endpoints(ps);
    let axis = [p_inf[0] - p_sup[0], p_inf[1] - p_sup[1]];
    let tangents = tangent_points(fh, p_inf)?;
    let angles = tangents.map(|t| angle_between_deg(axis, [t[0] - p_inf[0], t[1] - p_inf[1]]));
    let pick = if angles[1] > angles[0] { 1 } else { 0 };
    Ok(AopResult {
        aop: angles[pick],
        ps_axis: (p_sup, p_inf),
        tangent_point: tangents[pick],
        candidate_angles: angles,
        ps_ellipse: *ps,
        fh_ellipse: *fh,
    })
}

/// Ellipse-fit samples of a region.
///
/// For every boundary pixel and each of its 4-neighbors outside the region,
/// the midpoint of the shared pixel edge is emitted. Unlike the pixel centers
/// themselves, these points straddle the rasterized contour instead of lying
/// half a pixel inside it.
pub fn boundary_points<T: Scalar>(mask: &BinaryMask) -> Vec<Point<T>> {
    const STEPS: [(i32, i32); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];
    let half = T::lit(0.5);
    let mut out = Vec::new();
    for (x, y) in extract_surface(mask).points {
        for (dx, dy) in STEPS {
            if !mask.contains(x + dx, y + dy) {
                out.push([
                    T::lit(x as f64) + half * T::lit(dx as f64),
                    T::lit(y as f64) + half * T::lit(dy as f64),
                ]);
            }
        }
    }
    out
}

/// Fits an ellipse to the boundary of a region: a direct fit to
/// [`boundary_points`], then refined so that the pixel centers next to the
/// boundary fall on their correct sides with the widest soft margin. The
/// direct fit is returned if refinement does not produce a valid ellipse.
///
/// The fit runs on a one-pixel-padded crop around the region, so translating
/// the region changes only the returned center.
pub fn fit_region<T: Scalar>(mask: &BinaryMask) -> Result<Ellipse<T>, BiometryError> {
    let (local, origin) = crop_to_region(mask);
    let direct = fit_ellipse(&boundary_points::<T>(&local))?;
    let mut e = refine::refine_to_raster(&direct, &local).unwrap_or(direct);
    e.center = [e.center[0] + T::lit(origin.0 as f64), e.center[1] + T::lit(origin.1 as f64)];
    Ok(e)
}

/// The bounding box of the foreground grown by one pixel and clipped to the
/// frame, with its origin in the original frame.
fn crop_to_region(mask: &BinaryMask) -> (BinaryMask, (i32, i32)) {
    let (mut x0, mut y0, mut x1, mut y1) = (i32::MAX, i32::MAX, i32::MIN, i32::MIN);
    for (x, y) in mask.pixels() {
        (x0, y0, x1, y1) = (x0.min(x), y0.min(y), x1.max(x), y1.max(y));
    }
    if x0 > x1 {
        return (mask.clone(), (0, 0));
    }
    let (x0, y0) = ((x0 - 1).max(0), (y0 - 1).max(0));
    let (x1, y1) = ((x1 + 1).min(mask.width() as i32 - 1), (y1 + 1).min(mask.height() as i32 - 1));
    let crop = BinaryMask::from_fn((x1 - x0 + 1) as usize, (y1 - y0 + 1) as usize, |x, y| {
        mask.contains(x as i32 + x0, y as i32 + y0)
    });
    (crop, (x0, y0))
}

/// AoP of a PS/FH mask pair.
pub fn compute_aop<T: Scalar>(ps: &BinaryMask, fh: &BinaryMask) -> Result<AopResult<T>, BiometryError> {
    if ps.is_empty() {
        return Err(BiometryError::EmptyStructure(Structure::Ps));
    }
    if fh.is_empty() {
        return Err(BiometryError::EmptyStructure(Structure::Fh));
    }
    let ps_e = fit_region::<T>(ps)?;
    let fh_e = fit_region::<T>(fh)?;
    aop_from_ellipses(&ps_e, &fh_e)
}

/// AoP of a label mask.
pub fn label_aop<T: Scalar>(mask: &LabelMask) -> Result<AopResult<T>, BiometryError> {
    compute_aop(&mask.select(Structure::Ps), &mask.select(Structure::Fh))
}

/// Which mask of a pair an error came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    GroundTruth,
    Prediction,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::GroundTruth => "ground truth",
            Side::Prediction => "prediction",
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("ΔAoP undefined ({side}: {source})")]
pub struct DeltaAopError {
    pub side: Side,
    #[source]
    pub source: BiometryError,
}

impl DeltaAopError {
    pub fn status(&self) -> String {
        let side = match self.side {
            Side::GroundTruth => "gt",
            Side::Prediction => "pred",
        };
        format!("undefined-{side}-{}", self.source.slug())
    }
}

/// Ground-truth and predicted AoP plus their absolute difference, degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaAop {
    pub aop_gt: f64,
    pub aop_pred: f64,
    pub delta: f64,
}

/// `|AoP(gt) − AoP(pred)|` with both sides run through the same pipeline.
pub fn delta_aop(gt: &LabelMask, pred: &LabelMask) -> Result<DeltaAop, DeltaAopError> {
    let side_aop = |mask: &LabelMask, side: Side| {
        label_aop::<f64>(mask)
            .map(|r| r.aop)
            .map_err(|source| DeltaAopError { side, source })
    };
    let aop_gt = side_aop(gt, Side::GroundTruth)?;
    let aop_pred = side_aop(pred, Side::Prediction)?;
    Ok(DeltaAop {
        aop_gt,
        aop_pred,
        delta: (aop_gt - aop_pred).abs(),
    })
}

/// One line of the biometry CSV.
#[derive(Debug, Clone, PartialEq, serde::Deserialize)]
pub struct BiometryRow {
    pub case_id: String,
    pub team: String,
    pub aop_gt: Option<f64>,
    pub aop_pred: Option<f64>,
    pub delta_aop: Option<f64>,
    pub status: String,
}

impl BiometryRow {
    pub fn from_outcome(case_id: &str, team: &str, gt_aop: Option<f64>, outcome: &Result<DeltaAop, DeltaAopError>) -> Self {
        match outcome {
            Ok(d) => Self {
                case_id: case_id.into(),
                team: team.into(),
                aop_gt: Some(d.aop_gt),
                aop_pred: Some(d.aop_pred),
                delta_aop: Some(d.delta),
                status: "ok".into(),
            },
            Err(e) => Self {
                case_id: case_id.into(),
                team: team.into(),
                aop_gt: gt_aop,
                aop_pred: None,
                delta_aop: None,
                status: e.status(),
            },
        }
    }
}

pub const BIOMETRY_COLUMNS: [&str; 6] = ["case_id", "team", "aop_gt", "aop_pred", "delta_aop", "status"];

/// Degrees with four decimals; undefined values are left empty.
pub fn write_biometry_csv(writer: impl Write, rows: &[BiometryRow]) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(BIOMETRY_COLUMNS)?;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.case_id.as_str(),
            r.team.as_str(),
            &fmt(r.aop_gt),
            &fmt(r.aop_pred),
            &fmt(r.delta_aop),
            r.status.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a table written by [`write_biometry_csv`]. Empty angle fields are
/// undefined values.
pub fn read_biometry_csv(reader: impl Read) -> Result<Vec<BiometryRow>, csv::Error> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader).deserialize().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::{FH, PS};
    use std::f64::consts::PI;

    fn close(a: Point<f64>, b: Point<f64>, tol: f64) -> bool {
        (a[0] - b[0]).abs() < tol && (a[1] - b[1]).abs() < tol
    }

    #[test]
    fn axis_endpoints() {
        let e = Ellipse::new([0.0, 0.0], 5.0, 2.0, 0.0).unwrap();
        let (sup, inf) = long_axis_endpoints(&e);
        assert!(close(inf, [5.0, 0.0], 1e-12) && close(sup, [-5.0, 0.0], 1e-12));

        let e = Ellipse::new([0.0, 0.0], 5.0, 2.0, PI / 2.0).unwrap();
        let (sup, inf) = long_axis_endpoints(&e);
        assert!(close(inf, [0.0, 5.0], 1e-12) && close(sup, [0.0, -5.0], 1e-12));

        let e = Ellipse::new([3.0, 4.0], 2.0, 1.0, PI / 4.0).unwrap();
        let (_, inf) = long_axis_endpoints(&e);
        let r2 = 2f64.sqrt();
        assert!(close(inf, [3.0 + r2, 4.0 + r2], 1e-12));
    }

    #[test]
    fn circle_tangents() {
        let c = Ellipse::circle([0.0, 0.0], 1.0).unwrap();
        let [t1, t2] = tangent_points(&c, [2.0, 0.0]).unwrap();
        let h = 3f64.sqrt() / 2.0;
        assert!(close(t1, [0.5, h], 1e-12) || close(t1, [0.5, -h], 1e-12));
        assert!(close([t1[0], -t1[1]], t2, 1e-12));
        assert_eq!(tangent_points(&c, [0.0, 0.0]), Err(BiometryError::TangentUndefined));
        assert_eq!(tangent_points(&c, [1.0, 0.0]), Err(BiometryError::TangentUndefined));
    }

    #[test]
    fn far_point_tangents_stay_on_conic() {
        let e = Ellipse::new([4.0f64, -2.0], 6.0, 3.0, 0.3).unwrap();
        let [ux, uy] = e.major_dir();
        for dist in [10.0, 1e3, 1e6] {
            let p = [4.0 + dist * ux, -2.0 + dist * uy];
            for t in tangent_points(&e, p).unwrap() {
                assert!(e.level(t).abs() < 1e-9, "residual at distance {dist}");
            }
        }
    }

    #[test]
    fn tangent_lines_support_the_ellipse() {
        let e = Ellipse::new([10.0, 5.0], 7.0, 3.0, 1.0).unwrap();
        let p = [25.0, 18.0];
        for t in tangent_points(&e, p).unwrap() {
            let dir = [t[0] - p[0], t[1] - p[1]];
            let sides: Vec<f64> = (0..360)
                .map(|i| {
                    let s = e.point_at(i as f64 * PI / 180.0);
                    dir[0] * (s[1] - p[1]) - dir[1] * (s[0] - p[0])
                })
                .collect();
            let scale = 1e-9 * (dir[0].hypot(dir[1]) * 30.0);
            assert!(sides.iter().all(|&s| s >= -scale) || sides.iter().all(|&s| s <= scale));
        }
    }

    #[test]
    fn aop_circle_below_endpoint() {
        // PS axis from (-10,0) to (0,0); FH unit circle centered at (0,2).
        let ps = Ellipse::new([-5.0, 0.0], 5.0, 1.0, 0.0).unwrap();
        let fh = Ellipse::circle([0.0, 2.0], 1.0).unwrap();
        let r = aop_from_ellipses(&ps, &fh).unwrap();
        let mut c = r.candidate_angles;
        c.sort_by(f64::total_cmp);
        assert!((c[0] - 60.0).abs() < 1e-9 && (c[1] - 120.0).abs() < 1e-9);
        assert!((r.aop - 120.0).abs() < 1e-9);
        assert!(fh.level(r.tangent_point).abs() < 1e-9);
    }

    #[test]
    fn aop_circle_on_axis() {
        let ps = Ellipse::new([-5.0, 0.0], 5.0, 1.0, 0.0).unwrap();
        let fh = Ellipse::circle([4.0, 0.0], 1.0).unwrap();
        let r = aop_from_ellipses(&ps, &fh).unwrap();
        let expected = 0.25f64.asin().to_degrees();
        assert!((r.candidate_angles[0] - expected).abs() < 1e-9);
        assert!((r.candidate_angles[1] - expected).abs() < 1e-9);
        assert!((r.aop - 14.4775).abs() < 1e-4);
    }

    #[test]
    fn aop_rejects_overlap() {
        let ps = Ellipse::new([-5.0, 0.0], 5.0, 1.0, 0.0).unwrap();
        let fh = Ellipse::circle([0.5, 0.0], 2.0).unwrap();
        assert_eq!(aop_from_ellipses(&ps, &fh), Err(BiometryError::TangentUndefined));
    }

    fn scene() -> LabelMask {
        let ps = Ellipse::new([60.0, 50.0], 20.0, 7.0, 0.2).unwrap();
        let fh = Ellipse::new([95.0, 95.0], 35.0, 30.0, 0.4).unwrap();
        LabelMask::from_fn(160, 160, |x, y| {
            let p = [x as f64, y as f64];
            if ps.level(p) <= 0.0 {
                PS
            } else if fh.level(p) <= 0.0 {
                FH
            } else {
                0
            }
        })
    }

    #[test]
    fn compute_aop_is_deterministic_and_translation_invariant() {
        let m = scene();
        let a = label_aop::<f64>(&m).unwrap();
        let b = label_aop::<f64>(&m.clone()).unwrap();
        assert_eq!(a, b);
        let shifted = LabelMask::from_fn(160, 160, |x, y| if x >= 7 && y >= 3 { m.get(x - 7, y - 3) } else { 0 });
        let c = label_aop::<f64>(&shifted).unwrap();
        assert!((a.aop - c.aop).abs() < 1e-6);
        // Single precision follows the same pipeline.
        let d = label_aop::<f32>(&m).unwrap();
        assert!((d.aop as f64 - a.aop).abs() < 1e-2);
    }

    #[test]
    fn delta_aop_cases() {
        let m = scene();
        let d = delta_aop(&m, &m).unwrap();
        assert_eq!(d.delta, 0.0);
        let no_fh = LabelMask::from_fn(160, 160, |x, y| if m.get(x, y) == FH { 0 } else { m.get(x, y) });
        let err = delta_aop(&m, &no_fh).unwrap_err();
        assert_eq!(err.side, Side::Prediction);
        assert_eq!(err.source, BiometryError::EmptyStructure(Structure::Fh));
        assert_eq!(err.status(), "undefined-pred-missing-FH");
        assert!(err.to_string().contains("prediction"));
        let err = delta_aop(&no_fh, &m).unwrap_err();
        assert_eq!(err.side, Side::GroundTruth);
    }

    #[test]
    fn boundary_samples_sit_on_pixel_edges() {
        let single = BinaryMask::from_pixels(4, 4, [(1, 2)]);
        let pts = boundary_points::<f64>(&single);
        assert_eq!(pts, vec![[1.5, 2.0], [1.0, 2.5], [0.5, 2.0], [1.0, 1.5]]);
        // A 3x3 block exposes 12 unit edges.
        let block = BinaryMask::from_fn(6, 6, |x, y| (1..4).contains(&x) && (1..4).contains(&y));
        assert_eq!(boundary_points::<f32>(&block).len(), 12);
    }

    #[test]
    fn biometry_csv_layout() {
        let ok = BiometryRow::from_outcome(
            "c1",
            "t",
            None,
            &Ok(DeltaAop {
                aop_gt: 100.0,
                aop_pred: 112.123456,
                delta: 12.123456,
            }),
        );
        let bad = BiometryRow::from_outcome(
            "c2",
            "t",
            Some(101.5),
            &Err(DeltaAopError {
                side: Side::Prediction,
                source: BiometryError::EmptyStructure(Structure::Fh),
            }),
        );
        let mut buf = Vec::new();
        write_biometry_csv(&mut buf, &[ok, bad]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "case_id,team,aop_gt,aop_pred,delta_aop,status\n\
             c1,t,100.0000,112.1235,12.1235,ok\n\
             c2,t,101.5000,,,undefined-pred-missing-FH\n"
        );
    }

    #[test]
    fn biometry_csv_round_trip() {
        let rows = vec![
            BiometryRow {
                case_id: "c1".into(),
                team: "t".into(),
                aop_gt: Some(120.5),
                aop_pred: Some(118.25),
                delta_aop: Some(2.25),
                status: "ok".into(),
            },
            BiometryRow {
                case_id: "c2".into(),
                team: "t".into(),
                aop_gt: Some(101.0),
                aop_pred: None,
                delta_aop: None,
                status: "undefined-pred-missing-PS".into(),
            },
        ];
        let mut buf = Vec::new();
        write_biometry_csv(&mut buf, &rows).unwrap();
        assert_eq!(read_biometry_csv(buf.as_slice()).unwrap(), rows);
    }
}
