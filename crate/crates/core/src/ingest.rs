//! Mask decoding, cohort metadata and dataset manifests.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::{DynamicImage, ImageReader, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::mask::{BinaryMask, LabelMask, MaskError, Structure, BACKGROUND, FH, PS};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot decode `{path}`: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("`{path}`: unsupported pixel format {format}; expected 8-bit RGB(A) or single-channel")]
    UnsupportedFormat { path: PathBuf, format: String },
    #[error("`{path}`: color {color:?} at ({x}, {y}) matches no palette entry")]
    UnmappedColor {
        path: PathBuf,
        color: [u8; 3],
        x: u32,
        y: u32,
    },
    #[error("`{path}`: index value {value} at ({x}, {y}) is not a label (0, 1 or 2)")]
    UnmappedIndex {
        path: PathBuf,
        value: u8,
        x: u32,
        y: u32,
    },
    #[error("`{path}`: {source}")]
    Mask {
        path: PathBuf,
        #[source]
        source: MaskError,
    },
    #[error("dimension mismatch: ground truth is {gt_width}x{gt_height}, prediction is {pred_width}x{pred_height}")]
    DimensionMismatch {
        gt_width: usize,
        gt_height: usize,
        pred_width: usize,
        pred_height: usize,
    },
    #[error("cannot encode `{path}`: {message}")]
    Encode { path: PathBuf, message: String },
    #[error("manifest `{path}` line {line}: {message}")]
    Manifest {
        path: PathBuf,
        line: u64,
        message: String,
    },
}

/// Maps RGB colors to labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Palette {
    pub entries: Vec<([u8; 3], u8)>,
    /// Maximum per-channel deviation accepted when matching an entry.
    pub tolerance: u8,
}

impl Default for Palette {
    /// Black background, red PS, green FH, exact matching.
    fn default() -> Self {
        Self {
            entries: vec![([0, 0, 0], BACKGROUND), ([255, 0, 0], PS), ([0, 255, 0], FH)],
            tolerance: 0,
        }
    }
}

impl Palette {
    pub fn with_tolerance(mut self, tolerance: u8) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn lookup(&self, color: [u8; 3]) -> Option<u8> {
        self.entries.iter().find_map(|&(c, label)| {
            let close = c
                .iter()
                .zip(color.iter())
                .all(|(&a, &b)| a.abs_diff(b) <= self.tolerance);
            close.then_some(label)
        })
    }

    /// Canonical color of a label (first palette entry carrying it).
    pub fn color_of(&self, label: u8) -> Option<[u8; 3]> {
        self.entries
            .iter()
            .find(|&&(_, l)| l == label)
            .map(|&(c, _)| c)
    }
}

/// Decodes a BMP/PNG mask into a label grid.
///
/// RGB(A) images go through `palette`; single-channel images are read as
/// index maps whose values must already be 0, 1 or 2.
pub fn load_mask(path: impl AsRef<Path>, palette: &Palette) -> Result<LabelMask, IngestError> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)
        .map_err(|source| IngestError::Io {
            path: path.to_owned(),
            source,
        })?
        .with_guessed_format()
        .map_err(|source| IngestError::Io {
            path: path.to_owned(),
            source,
        })?;
    let image = reader.decode().map_err(|e| IngestError::Decode {
        path: path.to_owned(),
        message: e.to_string(),
    })?;
    decode_image(path, &image, palette)
}

fn decode_image(path: &Path, image: &DynamicImage, palette: &Palette) -> Result<LabelMask, IngestError> {
    let (w, h) = (image.width(), image.height());
    let mut labels = Vec::with_capacity(w as usize * h as usize);
    match image {
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) => {
            let luma = image.to_luma8();
            for (x, y, px) in luma.enumerate_pixels() {
                let value = px.0[0];
                if value > FH {
                    return Err(IngestError::UnmappedIndex {
                        path: path.to_owned(),
                        value,
                        x,
                        y,
                    });
                }
                labels.push(value);
            }
        }
        DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) => {
            let rgb = image.to_rgb8();
            for (x, y, px) in rgb.enumerate_pixels() {
                match palette.lookup(px.0) {
                    Some(label) => labels.push(label),
                    None => {
                        return Err(IngestError::UnmappedColor {
                            path: path.to_owned(),
                            color: px.0,
                            x,
                            y,
                        })
                    }
                }
            }
        }
        other => {
            return Err(IngestError::UnsupportedFormat {
                path: path.to_owned(),
                format: format!("{:?}", other.color()),
            })
        }
    }
    LabelMask::new(w as usize, h as usize, labels).map_err(|source| IngestError::Mask {
        path: path.to_owned(),
        source,
    })
}

/// Writes a label grid as an RGB image using the palette's canonical colors.
/// The container format follows the file extension (`.png` or `.bmp`).
/// Missing parent directories are created.
pub fn save_mask(mask: &LabelMask, path: impl AsRef<Path>, palette: &Palette) -> Result<(), IngestError> {
    let path = path.as_ref();
    let encode_err = |message: String| IngestError::Encode {
        path: path.to_owned(),
        message,
    };
    let mut colors = [[0u8; 3]; 3];
    for (label, slot) in colors.iter_mut().enumerate() {
        *slot = palette
            .color_of(label as u8)
            .ok_or_else(|| encode_err(format!("palette has no color for label {label}")))?;
    }
    let img = RgbImage::from_fn(mask.width() as u32, mask.height() as u32, |x, y| {
        Rgb(colors[mask.get(x as usize, y as usize) as usize])
    });
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| encode_err(e.to_string()))?;
    }
    img.save(path).map_err(|e| encode_err(e.to_string()))
}

/// Binary foreground of one structure.
pub fn select_structure(mask: &LabelMask, sel: Structure) -> BinaryMask {
    mask.select(sel)
}

/// Ground truth and prediction must share a raster; nothing is resampled.
pub fn validate_pair(gt: &LabelMask, pred: &LabelMask) -> Result<(), IngestError> {
    if gt.dims() != pred.dims() {
        return Err(IngestError::DimensionMismatch {
            gt_width: gt.width(),
            gt_height: gt.height(),
            pred_width: pred.width(),
            pred_height: pred.height(),
        });
    }
    Ok(())
}

macro_rules! meta_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $text:literal $(| $alias:literal)*),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let t = s.trim();
                $(
                    if t.eq_ignore_ascii_case($text) $(|| t.eq_ignore_ascii_case($alias))* {
                        return Ok($name::$variant);
                    }
                )+
                Err(format!("unknown {} `{}`", stringify!($name), t))
            }
        }
    };
}

meta_enum!(
    /// Dataset partition.
    Split { Train => "Train" | "Training", Test1 => "Test1", Test2 => "Test2" }
);
meta_enum!(Institution { Smu => "SMU", Jnu => "JNU" });
meta_enum!(Scanner { EsaoteMyLab => "EsaoteMyLab" | "Esaote My Lab" | "Esaote", ObEye => "ObEye" });
meta_enum!(
    /// Clinical AoP stratum around the 120° threshold.
    AopStratum { Below120 => "Below120", AtLeast120 => "AtLeast120" }
);

impl AopStratum {
    /// AoP threshold in degrees separating the two strata.
    pub const THRESHOLD_DEG: f64 = 120.0;

    pub fn from_aop(aop_deg: f64) -> Self {
        if aop_deg >= Self::THRESHOLD_DEG {
            AopStratum::AtLeast120
        } else {
            AopStratum::Below120
        }
    }
}

/// Per-case cohort metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseMeta {
    pub case_id: String,
    pub split: Split,
    pub institution: Institution,
    pub scanner: Scanner,
    pub aop_stratum: Option<AopStratum>,
    /// Physical size of one pixel; distances are multiplied by it.
    pub spacing: f64,
    /// Extra manifest columns, usable as custom stratification keys.
    pub tags: BTreeMap<String, String>,
}

impl CaseMeta {
    pub fn new(case_id: impl Into<String>, split: Split, institution: Institution, scanner: Scanner) -> Self {
        Self {
            case_id: case_id.into(),
            split,
            institution,
            scanner,
            aop_stratum: None,
            spacing: 1.0,
            tags: BTreeMap::new(),
        }
    }

    /// Fills in or checks the AoP stratum against a ground-truth AoP.
    ///
    /// A manifest value is kept when it disagrees; the conflict is logged.
    pub fn reconcile_aop_stratum(&mut self, gt_aop_deg: f64) {
        let derived = AopStratum::from_aop(gt_aop_deg);
        match self.aop_stratum {
            None => self.aop_stratum = Some(derived),
            Some(given) if given != derived => log::warn!(
                "case {}: manifest AoP stratum {} disagrees with ground-truth AoP {:.4}°; keeping manifest value",
                self.case_id,
                given,
                gt_aop_deg
            ),
            Some(_) => {}
        }
    }
}

/// One manifest row.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub meta: CaseMeta,
    pub gt_path: PathBuf,
}

const REQUIRED_COLUMNS: [&str; 5] = ["case_id", "gt_path", "split", "institution", "scanner"];

/// Reads a manifest CSV. Relative `gt_path` values are resolved against the
/// manifest's directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>, IngestError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.to_owned(),
        source,
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest(file, path, &base)
}

/// Parses manifest CSV text from any reader; `origin` is only used in errors.
pub fn parse_manifest(
    reader: impl std::io::Read,
    origin: &Path,
    base_dir: &Path,
) -> Result<Vec<ManifestEntry>, IngestError> {
    let err = |line: u64, message: String| IngestError::Manifest {
        path: origin.to_owned(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| err(1, e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mut required = [0usize; 5];
    for (slot, name) in required.iter_mut().zip(REQUIRED_COLUMNS) {
        *slot = col(name).ok_or_else(|| err(1, format!("missing required column `{name}`")))?;
    }
    let aop_col = col("aop_stratum");
    let spacing_col = col("spacing");
    let tag_cols: Vec<usize> = (0..headers.len())
        .filter(|i| !required.contains(i) && Some(*i) != aop_col && Some(*i) != spacing_col)
        .collect();

    let mut entries = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if let Some(field) = record.iter().find(|f| f.contains(',')) {
            return Err(err(line, format!("field `{field}` contains a comma")));
        }
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let case_id = field(required[0]);
        if case_id.is_empty() {
            return Err(err(line, "empty case_id".into()));
        }
        if !seen.insert(case_id.to_string()) {
            return Err(err(line, format!("duplicate case_id `{case_id}`")));
        }
        let split = field(required[2]).parse().map_err(|m| err(line, m))?;
        let institution = field(required[3]).parse().map_err(|m| err(line, m))?;
        let scanner = field(required[4]).parse().map_err(|m| err(line, m))?;
        let mut meta = CaseMeta::new(case_id, split, institution, scanner);
        if let Some(c) = aop_col {
            let v = field(c);
            if !v.is_empty() && !v.eq_ignore_ascii_case("unknown") {
                meta.aop_stratum = Some(v.parse().map_err(|m| err(line, m))?);
            }
        }
        if let Some(c) = spacing_col {
            let v = field(c);
            if !v.is_empty() {
                let s: f64 = v
                    .parse()
                    .map_err(|_| err(line, format!("invalid spacing `{v}`")))?;
                if !(s.is_finite() && s > 0.0) {
                    return Err(err(line, format!("spacing must be positive, got {v}")));
                }
                meta.spacing = s;
            }
        }
        for &c in &tag_cols {
            meta.tags.insert(headers[c].clone(), field(c).to_string());
        }
        let gt = PathBuf::from(field(required[1]));
        let gt_path = if gt.is_absolute() { gt } else { base_dir.join(gt) };
        entries.push(ManifestEntry { meta, gt_path });
    }
    Ok(entries)
}

/// Serializes entries back to manifest CSV (paths written as given).
pub fn write_manifest(
    writer: impl std::io::Write,
    entries: &[ManifestEntry],
    extra_columns: &[(&str, Vec<String>)],
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = REQUIRED_COLUMNS.to_vec();
    header.push("aop_stratum");
    header.extend(extra_columns.iter().map(|(n, _)| *n));
    w.write_record(&header)?;
    for (i, e) in entries.iter().enumerate() {
        let mut row = vec![
            e.meta.case_id.clone(),
            e.gt_path.display().to_string(),
            e.meta.split.to_string(),
            e.meta.institution.to_string(),
            e.meta.scanner.to_string(),
            e.meta
                .aop_stratum
                .map(|s| s.to_string())
                .unwrap_or_else(|| "unknown".into()),
        ];
        row.extend(extra_columns.iter().map(|(_, vals)| vals[i].clone()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{GrayImage, Luma};

    fn write_rgb(dir: &Path, name: &str, w: u32, h: u32, f: impl Fn(u32, u32) -> [u8; 3]) -> PathBuf {
        let p = dir.join(name);
        RgbImage::from_fn(w, h, |x, y| Rgb(f(x, y))).save(&p).unwrap();
        p
    }

    #[test]
    fn all_black_is_background() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_rgb(dir.path(), "black.bmp", 256, 256, |_, _| [0, 0, 0]);
        let m = load_mask(&p, &Palette::default()).unwrap();
        assert_eq!(m.dims(), (256, 256));
        assert!(m.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn red_is_ps_green_is_fh() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_rgb(dir.path(), "three.png", 8, 4, |x, _| match x {
            0..=2 => [255, 0, 0],
            3..=5 => [0, 255, 0],
            _ => [0, 0, 0],
        });
        let m = load_mask(&p, &Palette::default()).unwrap();
        assert_eq!(m.get(1, 2), PS);
        assert_eq!(m.get(4, 0), FH);
        assert_eq!(m.get(7, 3), BACKGROUND);
        assert_eq!(m.count(PS), 12);
    }

    #[test]
    fn unmapped_color_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_rgb(dir.path(), "blue.png", 4, 4, |x, y| {
            if (x, y) == (2, 3) {
                [0, 0, 255]
            } else {
                [0, 0, 0]
            }
        });
        match load_mask(&p, &Palette::default()) {
            Err(IngestError::UnmappedColor { color, x, y, .. }) => {
                assert_eq!((color, x, y), ([0, 0, 255], 2, 3));
            }
            other => panic!("expected palette error, got {other:?}"),
        }
    }

    #[test]
    fn tolerance_accepts_antialiased_colors() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_rgb(dir.path(), "aa.png", 2, 1, |x, _| if x == 0 { [250, 3, 2] } else { [4, 4, 4] });
        assert!(load_mask(&p, &Palette::default()).is_err());
        let m = load_mask(&p, &Palette::default().with_tolerance(5)).unwrap();
        assert_eq!(m.labels(), &[PS, BACKGROUND]);
    }

    #[test]
    fn index_maps_are_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("idx.png");
        GrayImage::from_fn(3, 1, |x, _| Luma([x as u8])).save(&p).unwrap();
        let m = load_mask(&p, &Palette::default()).unwrap();
        assert_eq!(m.labels(), &[0, 1, 2]);

        let bad = dir.path().join("bad.png");
        GrayImage::from_fn(2, 1, |x, _| Luma([x as u8 * 200])).save(&bad).unwrap();
        assert!(matches!(
            load_mask(&bad, &Palette::default()),
            Err(IngestError::UnmappedIndex { value: 200, .. })
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_mask("/nonexistent/mask.png", &Palette::default()),
            Err(IngestError::Io { .. })
        ));
    }

    #[test]
    fn save_then_load_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let m = LabelMask::from_fn(7, 5, |x, y| ((x * 3 + y) % 3) as u8);
        for name in ["rt.png", "rt.bmp"] {
            let p = dir.path().join(name);
            save_mask(&m, &p, &Palette::default()).unwrap();
            assert_eq!(load_mask(&p, &Palette::default()).unwrap(), m);
        }
    }

    #[test]
    fn psfh_selection_counts() {
        // 8x8 grid with a 2x3 PS block and a 3x3 FH block.
        let m = LabelMask::from_fn(8, 8, |x, y| {
            if x < 2 && y < 3 {
                PS
            } else if (4..7).contains(&x) && (4..7).contains(&y) {
                FH
            } else {
                BACKGROUND
            }
        });
        assert_eq!(select_structure(&m, Structure::Ps).count(), 6);
        assert_eq!(select_structure(&m, Structure::Fh).count(), 9);
        assert_eq!(select_structure(&m, Structure::Psfh).count(), 15);
        let only_fh = LabelMask::from_fn(4, 4, |x, _| if x == 1 { FH } else { 0 });
        assert_eq!(
            select_structure(&only_fh, Structure::Psfh),
            select_structure(&only_fh, Structure::Fh)
        );
        assert!(select_structure(&LabelMask::empty(4, 4).unwrap(), Structure::Ps).is_empty());
    }

    #[test]
    fn pair_validation() {
        let a = LabelMask::empty(256, 256).unwrap();
        assert!(validate_pair(&a, &LabelMask::empty(256, 256).unwrap()).is_ok());
        for (w, h) in [(512, 512), (256, 255)] {
            let err = validate_pair(&a, &LabelMask::empty(w, h).unwrap()).unwrap_err();
            let msg = err.to_string();
            assert!(msg.contains("256x256") && msg.contains(&format!("{w}x{h}")), "{msg}");
        }
    }

    #[test]
    fn manifest_parsing() {
        let text = "case_id,gt_path,split,institution,scanner,aop_stratum,site_note\n\
                    c1,gt/c1.png,Test2,SMU,EsaoteMyLab,Below120,a\n\
                    c2,/abs/c2.png,Test2,JNU,ObEye,,b\n";
        let entries = parse_manifest(text.as_bytes(), Path::new("m.csv"), Path::new("/data")).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].gt_path, PathBuf::from("/data/gt/c1.png"));
        assert_eq!(entries[0].meta.aop_stratum, Some(AopStratum::Below120));
        assert_eq!(entries[1].gt_path, PathBuf::from("/abs/c2.png"));
        assert_eq!(entries[1].meta.aop_stratum, None);
        assert_eq!(entries[1].meta.tags["site_note"], "b");
    }

    #[test]
    fn manifest_rejections() {
        let cases = [
            "case_id,gt_path,split,institution\nc1,a.png,Test2,SMU\n",
            "case_id,gt_path,split,institution,scanner\nc1,\"a,b.png\",Test2,SMU,ObEye\n",
            "case_id,gt_path,split,institution,scanner\nc1,a.png,Test2,SMU,ObEye\nc1,b.png,Test2,SMU,ObEye\n",
            "case_id,gt_path,split,institution,scanner\nc1,a.png,Test9,SMU,ObEye\n",
            "case_id,gt_path,split,institution,scanner\nc1,a.png,Test2,SMU\n",
        ];
        for text in cases {
            assert!(
                matches!(
                    parse_manifest(text.as_bytes(), Path::new("m.csv"), Path::new(".")),
                    Err(IngestError::Manifest { .. })
                ),
                "accepted: {text}"
            );
        }
    }

    #[test]
    fn aop_stratum_reconciliation() {
        let mut m = CaseMeta::new("c", Split::Test2, Institution::Smu, Scanner::EsaoteMyLab);
        m.reconcile_aop_stratum(125.0);
        assert_eq!(m.aop_stratum, Some(AopStratum::AtLeast120));
        m.reconcile_aop_stratum(100.0);
        assert_eq!(m.aop_stratum, Some(AopStratum::AtLeast120));
        assert_eq!(AopStratum::from_aop(120.0), AopStratum::AtLeast120);
        assert_eq!(AopStratum::from_aop(119.999), AopStratum::Below120);
    }
}
