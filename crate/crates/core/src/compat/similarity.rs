//! GUI image similarity.

use serde::{Deserialize, Serialize};

use super::CompatError;
use crate::image::Image;
use crate::vision::gaussian_blur;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub value: f64,
    pub metric: String,
}

/// A symmetric image similarity in [0, 1], 1 for identical images.
pub trait SimilarityMetric {
    fn id(&self) -> &'static str;
    /// Scores two grayscale images of equal size.
    fn score(&self, a: &Image, b: &Image) -> f64;
}

/// Mean structural similarity over square blocks of Gaussian-smoothed
/// images. Negative block scores (anti-correlated structure) count as 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockSsim {
    pub block: u32,
    /// Pre-smoothing; absorbs resampling blur between a render and a photo
    /// of it.
    pub sigma: f64,
}

impl Default for BlockSsim {
    fn default() -> Self {
        BlockSsim { block: 16, sigma: 1.0 }
    }
}

const C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

impl SimilarityMetric for BlockSsim {
    fn id(&self) -> &'static str {
        "block_ssim16"
    }

    fn score(&self, a: &Image, b: &Image) -> f64 {
        let (w, h) = (a.width(), a.height());
        let smooth = |img: &Image| -> Vec<f32> {
            if self.sigma > 0.0 {
                gaussian_blur(img, self.sigma)
            } else {
                img.to_gray().data().iter().map(|&v| v as f32).collect()
            }
        };
        let (pa, pb) = (smooth(a), smooth(b));
        let k = self.block.max(1);
        let (mut total, mut blocks) = (0.0, 0usize);
        for by in (0..h).step_by(k as usize) {
            for bx in (0..w).step_by(k as usize) {
                let (x1, y1) = ((bx + k).min(w), (by + k).min(h));
                let n = ((x1 - bx) * (y1 - by)) as f64;
                let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for y in by..y1 {
                    for x in bx..x1 {
                        let i = (y * w + x) as usize;
                        let (p, q) = (pa[i] as f64, pb[i] as f64);
                        sa += p;
                        sb += q;
                        saa += p * p;
                        sbb += q * q;
                        sab += p * q;
                    }
                }
                let (ma, mb) = (sa / n, sb / n);
                let va = (saa / n - ma * ma).max(0.0);
                let vb = (sbb / n - mb * mb).max(0.0);
                let cov = sab / n - ma * mb;
                let s = (2.0 * ma * mb + C1) * (2.0 * cov + C2) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
                total += s.clamp(0.0, 1.0);
                blocks += 1;
            }
        }
        total / blocks as f64
    }
}

/// Similarity under `metric`; the larger image is area-resampled to the
/// smaller one's size first.
pub fn similarity_with(metric: &dyn SimilarityMetric, a: &Image, b: &Image) -> Result<SimilarityScore, CompatError> {
    if a.width() == 0 || a.height() == 0 || b.width() == 0 || b.height() == 0 {
        return Err(CompatError::EmptyImage);
    }
    let (a, b) = (a.to_gray(), b.to_gray());
    let (w, h) = (a.width().min(b.width()), a.height().min(b.height()));
    let fit = |img: Image| if (img.width(), img.height()) == (w, h) { img } else { img.resize_area(w, h) };
    let (a, b) = (fit(a), fit(b));
    Ok(SimilarityScore {
        value: metric.score(&a, &b),
        metric: metric.id().to_string(),
    })
}

/// Block-structural similarity, the default metric.
pub fn gui_similarity(a: &Image, b: &Image) -> Result<SimilarityScore, CompatError> {
    similarity_with(&BlockSsim::default(), a, b)
}
