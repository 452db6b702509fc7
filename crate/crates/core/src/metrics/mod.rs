//! Overlap and surface-distance metrics: DSC, Hausdorff distance and ASD.
//!
//! Distances are measured between pixel centers and scaled by the case's
//! pixel spacing (1.0 unless the manifest says otherwise). When exactly one of
//! the two foregrounds is empty the case is a missing prediction and scores
//! `(0, inf, inf)`; two empty foregrounds agree perfectly and score `(1, 0, 0)`.

pub mod edt;
mod records;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ingest::{validate_pair, CaseMeta, IngestError};
use crate::mask::{BinaryMask, LabelMask, Pixel, Structure};

pub use records::{read_records_csv, write_records_csv, RecordsCsvError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("dimension mismatch: {a_width}x{a_height} vs {b_width}x{b_height}")]
    DimensionMismatch {
        a_width: usize,
        a_height: usize,
        b_width: usize,
        b_height: usize,
    },
    #[error("directed distance undefined for an empty point set")]
    EmptySet,
}

impl From<IngestError> for MetricError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::DimensionMismatch {
                gt_width,
                gt_height,
                pred_width,
                pred_height,
            } => MetricError::DimensionMismatch {
                a_width: gt_width,
                a_height: gt_height,
                b_width: pred_width,
                b_height: pred_height,
            },
            other => unreachable!("validate_pair only reports dimension mismatches: {other}"),
        }
    }
}

/// A distance that may be unbounded (missing prediction).
///
/// Unbounded values print as `inf` and compare greater than every finite value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricValue {
    Finite(f64),
    Unbounded,
}

impl MetricValue {
    /// `+inf` maps to [`MetricValue::Unbounded`].
    pub fn from_f64(x: f64) -> Self {
        if x == f64::INFINITY {
            MetricValue::Unbounded
        } else {
            MetricValue::Finite(x)
        }
    }

    pub fn to_f64(self) -> f64 {
        match self {
            MetricValue::Finite(x) => x,
            MetricValue::Unbounded => f64::INFINITY,
        }
    }

    pub fn is_unbounded(self) -> bool {
        matches!(self, MetricValue::Unbounded)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            MetricValue::Finite(x) => Some(x),
            MetricValue::Unbounded => None,
        }
    }

    /// Total order with `Unbounded` after every finite value.
    pub fn total_cmp(&self, other: &Self) -> Ordering {
        self.to_f64().total_cmp(&other.to_f64())
    }
}

impl PartialOrd for MetricValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.to_f64().partial_cmp(&other.to_f64())
    }
}

impl From<f64> for MetricValue {
    fn from(x: f64) -> Self {
        Self::from_f64(x)
    }
}

impl fmt::Display for MetricValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricValue::Finite(x) => write!(f, "{x:.6}"),
            MetricValue::Unbounded => f.write_str("inf"),
        }
    }
}

impl FromStr for MetricValue {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("+inf") {
            return Ok(MetricValue::Unbounded);
        }
        match t.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(MetricValue::Finite(x)),
            _ => Err(format!("invalid metric value `{t}`")),
        }
    }
}

impl Serialize for MetricValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            MetricValue::Finite(x) => s.serialize_f64(crate::report::round_to(*x, 6)),
            MetricValue::Unbounded => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for MetricValue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(MetricValue::from_f64(x)),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Which metric a value measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MetricKind {
    #[serde(rename = "DSC")]
    Dsc,
    #[serde(rename = "HD")]
    Hd,
    #[serde(rename = "ASD")]
    Asd,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [MetricKind::Dsc, MetricKind::Hd, MetricKind::Asd];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Dsc => "DSC",
            MetricKind::Hd => "HD",
            MetricKind::Asd => "ASD",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Switches that change how metrics are computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricOptions {
    /// Compute HD between boundary sets instead of full foregrounds.
    pub hd_on_surface: bool,
    /// Physical length of one pixel.
    pub spacing: f64,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            hd_on_surface: false,
            spacing: 1.0,
        }
    }
}

fn check_dims(a: &BinaryMask, b: &BinaryMask) -> Result<(), MetricError> {
    if a.dims() != b.dims() {
        return Err(MetricError::DimensionMismatch {
            a_width: a.width(),
            a_height: a.height(),
            b_width: b.width(),
            b_height: b.height(),
        });
    }
    Ok(())
}

/// Dice similarity coefficient `2|A∩B| / (|A|+|B|)`.
pub fn dice(gt: &BinaryMask, pred: &BinaryMask) -> Result<f64, MetricError> {
    check_dims(gt, pred)?;
    let (na, nb) = (gt.count(), pred.count());
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * gt.intersection_count(pred) as f64 / (na + nb) as f64)
}

/// Boundary pixels: foreground pixels with at least one 4-neighbor in the
/// background or outside the image.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SurfacePointSet {
    pub points: Vec<Pixel>,
}

impl SurfacePointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn extract_surface(mask: &BinaryMask) -> SurfacePointSet {
    let points = mask
        .pixels()
        .filter(|&(x, y)| {
            !(mask.contains(x - 1, y)
                && mask.contains(x + 1, y)
                && mask.contains(x, y - 1)
                && mask.contains(x, y + 1))
        })
        .collect();
    SurfacePointSet { points }
}

fn surface_mask(mask: &BinaryMask) -> BinaryMask {
    BinaryMask::from_pixels(mask.width(), mask.height(), extract_surface(mask).points)
}

/// Directed Hausdorff term `max_{a∈A} min_{b∈B} ‖a − b‖` between arbitrary point sets.
pub fn directed_max_min(a: &[Pixel], b: &[Pixel]) -> Result<f64, MetricError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::EmptySet);
    }
    let mut worst = 0i64;
    for &(ax, ay) in a {
        let mut best = i64::MAX;
        for &(bx, by) in b {
            let (dx, dy) = ((ax - bx) as i64, (ay - by) as i64);
            best = best.min(dx * dx + dy * dy);
            if best <= worst {
                // This point cannot raise the maximum any further.
                break;
            }
        }
        worst = worst.max(best);
    }
    Ok((worst as f64).sqrt())
}

/// `max` over pixels of `from` of the distance to the foreground summarised by `dt`.
fn directed_max_with_transform(from: &BinaryMask, dt: &[f64]) -> f64 {
    from.as_slice()
        .iter()
        .zip(dt)
        .filter(|(&fg, _)| fg)
        .map(|(_, &d)| d)
        .fold(0.0, f64::max)
        .sqrt()
}

fn directed_mean_with_transform(from: &BinaryMask, dt: &[f64]) -> f64 {
    let (sum, n) = from
        .as_slice()
        .iter()
        .zip(dt)
        .filter(|(&fg, _)| fg)
        .fold((0.0, 0usize), |(s, n), (_, &d)| (s + d.sqrt(), n + 1));
    sum / n as f64
}

/// Hausdorff distance between the two foregrounds (or their boundaries when
/// `opts.hd_on_surface` is set).
pub fn hausdorff(gt: &BinaryMask, pred: &BinaryMask, opts: &MetricOptions) -> Result<MetricValue, MetricError> {
    check_dims(gt, pred)?;
    let (a, b) = if opts.hd_on_surface {
        (surface_mask(gt), surface_mask(pred))
    } else {
        (gt.clone(), pred.clone())
    };
    let (dt_a, dt_b) = match (edt::squared_edt(&a), edt::squared_edt(&b)) {
        (None, None) => return Ok(MetricValue::Finite(0.0)),
        (Some(x), Some(y)) => (x, y),
        _ => return Ok(MetricValue::Unbounded),
    };
    let h_ab = directed_max_with_transform(&a, &dt_b);
    let h_ba = directed_max_with_transform(&b, &dt_a);
    Ok(MetricValue::Finite(h_ab.max(h_ba) * opts.spacing))
}

/// Average surface distance: mean of the two directed mean boundary distances.
pub fn asd(gt: &BinaryMask, pred: &BinaryMask, opts: &MetricOptions) -> Result<MetricValue, MetricError> {
    check_dims(gt, pred)?;
    let (s1, s2) = (surface_mask(gt), surface_mask(pred));
    let (dt1, dt2) = match (edt::squared_edt(&s1), edt::squared_edt(&s2)) {
        (None, None) => return Ok(MetricValue::Finite(0.0)),
        (Some(x), Some(y)) => (x, y),
        _ => return Ok(MetricValue::Unbounded),
    };
    let d12 = directed_mean_with_transform(&s1, &dt2);
    let d21 = directed_mean_with_transform(&s2, &dt1);
    Ok(MetricValue::Finite((d12 + d21) / 2.0 * opts.spacing))
}

/// Metrics of one structure of one case for one team.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub meta: CaseMeta,
    pub team: String,
    pub structure: Structure,
    pub dsc: f64,
    pub hd: MetricValue,
    pub asd: MetricValue,
}

impl MetricRecord {
    pub fn case_id(&self) -> &str {
        &self.meta.case_id
    }

    pub fn value(&self, kind: MetricKind) -> MetricValue {
        match kind {
            MetricKind::Dsc => MetricValue::Finite(self.dsc),
            MetricKind::Hd => self.hd,
            MetricKind::Asd => self.asd,
        }
    }

    /// Canonical output order: case, team, structure.
    pub fn sort_key(&self) -> (&str, &str, Structure) {
        (self.case_id(), &self.team, self.structure)
    }
}

/// Scores one structure.
pub fn evaluate_structure(
    gt: &BinaryMask,
    pred: &BinaryMask,
    opts: &MetricOptions,
) -> Result<(f64, MetricValue, MetricValue), MetricError> {
    Ok((dice(gt, pred)?, hausdorff(gt, pred, opts)?, asd(gt, pred, opts)?))
}

/// PS, FH and PSFH records for one case.
pub fn evaluate_case(
    gt: &LabelMask,
    pred: &LabelMask,
    meta: &CaseMeta,
    team: &str,
    opts: &MetricOptions,
) -> Result<[MetricRecord; 3], MetricError> {
    validate_pair(gt, pred)?;
    let opts = MetricOptions {
        spacing: meta.spacing * opts.spacing,
        ..*opts
    };
    let record = |structure: Structure| -> Result<MetricRecord, MetricError> {
        let (dsc, hd, asd) = evaluate_structure(&gt.select(structure), &pred.select(structure), &opts)?;
        Ok(MetricRecord {
            meta: meta.clone(),
            team: team.to_string(),
            structure,
            dsc,
            hd,
            asd,
        })
    };
    Ok([record(Structure::Ps)?, record(Structure::Fh)?, record(Structure::Psfh)?])
}
