use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::RasterImage;

/// Normalized cross-correlation in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct SimilarityScore(f64);

impl SimilarityScore {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Binarized panel packed into 64-bit words, for fast repeated correlation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    words: Vec<u64>,
    ink: u64,
}

impl BinaryMask {
    pub fn from_raster(img: &RasterImage) -> Self {
        let n = img.pixels().len();
        let mut words = vec![0u64; n.div_ceil(64)];
        let mut ink = 0;
        for (i, &p) in img.pixels().iter().enumerate() {
            if p < crate::model::INK_THRESHOLD {
                words[i / 64] |= 1 << (i % 64);
                ink += 1;
            }
        }
        BinaryMask {
            width: img.width(),
            height: img.height(),
            words,
            ink,
        }
    }

    pub fn ink(&self) -> u64 {
        self.ink
    }

    fn len(&self) -> u64 {
        self.width as u64 * self.height as u64
    }

    /// NCC of the two masks; constant masks compare as 1 when equal and 0 otherwise.
    pub fn ncc(&self, other: &BinaryMask) -> Result<SimilarityScore> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::Structural(format!(
                "similarity of {}x{} and {}x{} panels",
                self.width, self.height, other.width, other.height
            )));
        }
        let n = self.len() as i128;
        let (sa, sb) = (self.ink as i128, other.ink as i128);
        let var_a = n * sa - sa * sa;
        let var_b = n * sb - sb * sb;
        if var_a == 0 || var_b == 0 {
            let same = var_a == 0 && var_b == 0 && sa == sb;
            return Ok(SimilarityScore(if same { 1.0 } else { 0.0 }));
        }
        let overlap: u64 = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as u64)
            .sum();
        let cov = n * overlap as i128 - sa * sb;
        let denom2 = var_a * var_b;
        if cov * cov == denom2 {
            return Ok(SimilarityScore(if cov > 0 { 1.0 } else { -1.0 }));
        }
        let v = cov as f64 / ((var_a as f64).sqrt() * (var_b as f64).sqrt());
        Ok(SimilarityScore(v.clamp(-1.0, 1.0)))
    }
}

/// Normalized cross-correlation of the mean-centered binarized panels.
///
/// Blank against blank is 1, blank against anything with ink is 0.
pub fn similarity(a: &RasterImage, b: &RasterImage) -> Result<SimilarityScore> {
    if !a.same_dims(b) {
        return Err(Error::Structural(format!(
            "similarity of {}x{} and {}x{} panels",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    BinaryMask::from_raster(a).ncc(&BinaryMask::from_raster(b))
}
