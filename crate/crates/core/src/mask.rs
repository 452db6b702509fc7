//! Label grids and binary foreground masks.
//!
//! Coordinates follow raster storage: `x` is the column index growing to the
//! right, `y` is the row index growing downward.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Integer pixel coordinate `(x, y)`.
pub type Pixel = (i32, i32);

/// Background label.
pub const BACKGROUND: u8 = 0;
/// Pubic symphysis label.
pub const PS: u8 = 1;
/// Fetal head label.
pub const FH: u8 = 2;

/// Which anatomical structure a binary mask is taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Structure {
    #[serde(rename = "PS")]
    Ps,
    #[serde(rename = "FH")]
    Fh,
    /// Union of PS and FH.
    #[serde(rename = "PSFH")]
    Psfh,
}

impl Structure {
    pub const ALL: [Structure; 3] = [Structure::Ps, Structure::Fh, Structure::Psfh];

    pub fn as_str(self) -> &'static str {
        match self {
            Structure::Ps => "PS",
            Structure::Fh => "FH",
            Structure::Psfh => "PSFH",
        }
    }

    /// True when a cell carrying `label` belongs to this structure.
    pub fn matches(self, label: u8) -> bool {
        match self {
            Structure::Ps => label == PS,
            Structure::Fh => label == FH,
            Structure::Psfh => label == PS || label == FH,
        }
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Structure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "PS" => Ok(Structure::Ps),
            "FH" => Ok(Structure::Fh),
            "PSFH" => Ok(Structure::Psfh),
            other => Err(format!("unknown structure `{other}`")),
        }
    }
}

/// Error raised when constructing a [`LabelMask`] from raw parts.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MaskError {
    #[error("mask dimensions must be positive, got {width}x{height}")]
    ZeroDimension { width: usize, height: usize },
    #[error("label buffer holds {got} cells, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid label {label} at ({x}, {y}); labels must be 0, 1 or 2")]
    InvalidLabel { label: u8, x: usize, y: usize },
}

/// A `width × height` grid of structure labels stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelMask {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl LabelMask {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self, MaskError> {
        if width == 0 || height == 0 {
            return Err(MaskError::ZeroDimension { width, height });
        }
        if labels.len() != width * height {
            return Err(MaskError::LengthMismatch {
                expected: width * height,
                got: labels.len(),
            });
        }
        if let Some(i) = labels.iter().position(|&l| l > FH) {
            return Err(MaskError::InvalidLabel {
                label: labels[i],
                x: i % width,
                y: i / width,
            });
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    /// All-background mask.
    pub fn empty(width: usize, height: usize) -> Result<Self, MaskError> {
        Self::new(width, height, vec![BACKGROUND; width * height])
    }

    /// Builds a mask by evaluating `f(x, y)` for every cell.
    ///
    /// Panics if `f` returns a label outside `{0, 1, 2}` or a dimension is zero.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut labels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                labels.push(f(x, y));
            }
        }
        Self::new(width, height, labels).expect("from_fn produced an invalid mask")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    /// Number of cells carrying `label`.
    pub fn count(&self, label: u8) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Binary foreground of one structure.
    pub fn select(&self, structure: Structure) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            data: self.labels.iter().map(|&l| structure.matches(l)).collect(),
        }
    }
}

/// Foreground set of a single structure on a fixed raster.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    /// Empty foreground.
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Builds a mask from foreground pixel coordinates; out-of-frame pixels are ignored.
    pub fn from_pixels(width: usize, height: usize, pixels: impl IntoIterator<Item = Pixel>) -> Self {
        let mut mask = Self::new(width, height);
        for (x, y) in pixels {
            if mask.in_bounds(x, y) {
                mask.set(x as usize, y as usize, true);
            }
        }
        mask
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    pub fn in_bounds(&self, x: i32, y: i32) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    /// Foreground test that treats out-of-frame coordinates as background.
    pub fn contains(&self, x: i32, y: i32) -> bool {
        self.in_bounds(x, y) && self.get(x as usize, y as usize)
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    /// Foreground pixels in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = Pixel> + '_ {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| ((i % w) as i32, (i / w) as i32))
    }

    pub fn intersection_count(&self, other: &BinaryMask) -> usize {
        self.data
            .iter()
            .zip(&other.data)
            .filter(|(&a, &b)| a && b)
            .count()
    }

    pub fn union(&self, other: &BinaryMask) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a || b).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_buffers() {
        assert!(matches!(
            LabelMask::new(0, 4, vec![]),
            Err(MaskError::ZeroDimension { .. })
        ));
        assert!(matches!(
            LabelMask::new(2, 2, vec![0; 3]),
            Err(MaskError::LengthMismatch { expected: 4, got: 3 })
        ));
        assert_eq!(
            LabelMask::new(2, 2, vec![0, 0, 3, 0]),
            Err(MaskError::InvalidLabel { label: 3, x: 0, y: 1 })
        );
    }

    #[test]
    fn binary_mask_bounds() {
        let m = BinaryMask::from_pixels(3, 2, [(0, 0), (2, 1), (5, 5), (-1, 0)]);
        assert_eq!(m.count(), 2);
        assert!(m.contains(2, 1));
        assert!(!m.contains(-1, 0));
        assert_eq!(m.pixels().collect::<Vec<_>>(), vec![(0, 0), (2, 1)]);
    }

    #[test]
    fn structure_parsing() {
        assert_eq!("psfh".parse::<Structure>().unwrap(), Structure::Psfh);
        assert!("xx".parse::<Structure>().is_err());
    }
}
