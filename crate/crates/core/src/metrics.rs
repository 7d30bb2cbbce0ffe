//! Image-quality metrics for reconstructions: PSNR, RMSE, a box-window
//! SSIM, and the line-artifact score, plus a small report type for the CLI.
//!
//! All metrics assume images on a nominal [0, 1] scale (peak = 1).

use std::fmt;

use ndarray::{Array3, ArrayView2};

use crate::error::{Error, Result};
use crate::recon::ReconImage;
use crate::scene::SceneImage;

/// Box window side for [`ssim`].
pub const SSIM_WINDOW: usize = 8;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn check_shapes(a: &Array3<f64>, b: &Array3<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch(format!(
            "images are {:?} and {:?}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Root-mean-square error over all samples and channels.
pub fn rmse(a: &Array3<f64>, b: &Array3<f64>) -> Result<f64> {
    check_shapes(a, b)?;
    let n = a.len() as f64;
    let sq: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sq / n).sqrt())
}

/// Peak signal-to-noise ratio in dB against peak 1.0. Identical images
/// yield `+inf`.
pub fn psnr(a: &Array3<f64>, b: &Array3<f64>) -> Result<f64> {
    check_shapes(a, b)?;
    let n = a.len() as f64;
    let mse: f64 = a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-10.0 * mse.log10())
}

/// Mean structural similarity over all 8x8 box windows (stride 1) and
/// channels, with k1 = 0.01, k2 = 0.03 on a unit dynamic range.
pub fn ssim(a: &Array3<f64>, b: &Array3<f64>) -> Result<f64> {
    check_shapes(a, b)?;
    let (h, w, channels) = a.dim();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::param(
            "image",
            format!("ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"),
        ));
    }
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let count = ((h - SSIM_WINDOW + 1) * (w - SSIM_WINDOW + 1) * channels) as f64;
    let samples = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let mut total = 0.0;
    for c in 0..channels {
        for y in 0..=h - SSIM_WINDOW {
            for x in 0..=w - SSIM_WINDOW {
                let mut mean_a = 0.0;
                let mut mean_b = 0.0;
                for j in y..y + SSIM_WINDOW {
                    for i in x..x + SSIM_WINDOW {
                        mean_a += a[[j, i, c]];
                        mean_b += b[[j, i, c]];
                    }
                }
                mean_a /= samples;
                mean_b /= samples;
                let mut var_a = 0.0;
                let mut var_b = 0.0;
                let mut cov = 0.0;
                for j in y..y + SSIM_WINDOW {
                    for i in x..x + SSIM_WINDOW {
                        let da = a[[j, i, c]] - mean_a;
                        let db = b[[j, i, c]] - mean_b;
                        var_a += da * da;
                        var_b += db * db;
                        cov += da * db;
                    }
                }
                var_a /= samples;
                var_b /= samples;
                cov /= samples;
                total += ((2.0 * mean_a * mean_b + c1) * (2.0 * cov + c2))
                    / ((mean_a * mean_a + mean_b * mean_b + c1) * (var_a + var_b + c2));
            }
        }
    }
    Ok(total / count)
}

/// Largest relative deviation of any column mean from the global mean:
/// `max_i |mean(col_i) - mean| / mean`, or 0 when the global mean is zero.
pub fn line_artifact_score(image: ArrayView2<'_, f64>) -> f64 {
    let (h, w) = image.dim();
    if h == 0 || w == 0 {
        return 0.0;
    }
    let global = image.sum() / (h * w) as f64;
    if global == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0f64;
    for i in 0..w {
        let mean = image.column(i).sum() / h as f64;
        worst = worst.max((mean - global).abs());
    }
    worst / global.abs()
}

/// Quality summary of one reconstruction against a ground-truth scene.
#[derive(Clone, Debug, PartialEq)]
pub struct QualityReport {
    pub label: String,
    pub psnr_db: f64,
    pub rmse: f64,
    pub ssim: f64,
    pub line_artifact_score: f64,
    pub pattern_digest: String,
    pub config_digest: String,
}

impl QualityReport {
    /// Measures a reconstruction against the truth (same shape; line score
    /// is the worst channel).
    pub fn measure(label: &str, recon: &ReconImage, truth: &SceneImage) -> Result<Self> {
        let a = recon.data();
        let b = truth.data();
        let line = (0..recon.channels())
            .map(|c| line_artifact_score(a.index_axis(ndarray::Axis(2), c)))
            .fold(0.0f64, f64::max);
        Ok(Self {
            label: label.to_string(),
            psnr_db: psnr(a, b)?,
            rmse: rmse(a, b)?,
            ssim: ssim(a, b)?,
            line_artifact_score: line,
            pattern_digest: recon.pattern_digest().to_string(),
            config_digest: recon.config_digest().to_string(),
        })
    }

    pub fn csv_header() -> &'static str {
        "label,psnr_db,rmse,ssim,line_artifact_score,pattern_digest,config_digest"
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.label,
            self.psnr_db,
            self.rmse,
            self.ssim,
            self.line_artifact_score,
            self.pattern_digest,
            self.config_digest
        )
    }
}

impl fmt::Display for QualityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[{}]", self.label)?;
        writeln!(f, "psnr_db             = {:.4}", self.psnr_db)?;
        writeln!(f, "rmse                = {:.6}", self.rmse)?;
        writeln!(f, "ssim                = {:.6}", self.ssim)?;
        writeln!(f, "line_artifact_score = {:.6}", self.line_artifact_score)?;
        writeln!(f, "pattern_digest      = {}", self.pattern_digest)?;
        write!(f, "config_digest       = {}", self.config_digest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::Array2;

    fn gradient(h: usize, w: usize) -> Array3<f64> {
        Array3::from_shape_fn((h, w, 1), |(j, i, _)| {
            0.2 + 0.5 * (j as f64 / h as f64) * (i as f64 / w as f64)
        })
    }

    #[test]
    fn psnr_of_uniform_offsets() {
        let a = gradient(16, 16);
        let b = &a + 0.1;
        assert_relative_eq!(psnr(&a, &b).unwrap(), 20.0, max_relative = 1e-9);
        let b = &a + 0.01;
        assert_relative_eq!(psnr(&a, &b).unwrap(), 40.0, max_relative = 1e-9);
        assert_relative_eq!(rmse(&a, &(&a + 0.1)).unwrap(), 0.1, max_relative = 1e-12);
    }

    #[test]
    fn identical_images_hit_the_sentinels() {
        let a = gradient(12, 20);
        let p = psnr(&a, &a).unwrap();
        assert!(p.is_infinite() && p > 0.0);
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = gradient(8, 8);
        let b = gradient(8, 9);
        assert!(psnr(&a, &b).is_err());
        assert!(rmse(&a, &b).is_err());
        assert!(ssim(&a, &b).is_err());
    }

    #[test]
    fn ssim_is_symmetric_and_penalizes_structure_loss() {
        let a = gradient(16, 24);
        let wobble = |scale: f64| {
            let mut b = a.clone();
            for (idx, v) in b.iter_mut().enumerate() {
                *v += scale * ((idx * 37 % 17) as f64 / 17.0 - 0.5);
            }
            b
        };
        let mild = wobble(0.02);
        let harsh = wobble(0.3);
        assert_eq!(ssim(&a, &mild).unwrap(), ssim(&mild, &a).unwrap());
        let s_mild = ssim(&a, &mild).unwrap();
        let s_harsh = ssim(&a, &harsh).unwrap();
        assert!(s_mild < 1.0);
        assert!(s_harsh < s_mild, "{s_harsh} vs {s_mild}");

        assert!(ssim(&gradient(4, 4), &gradient(4, 4)).is_err());
    }

    #[test]
    fn line_score_flags_a_dead_column() {
        let mut img = Array2::from_elem((8, 10), 1.0);
        img.column_mut(4).fill(0.0);
        assert_eq!(line_artifact_score(img.view()), 1.0);

        assert_eq!(line_artifact_score(Array2::from_elem((8, 10), 0.7).view()), 0.0);
        assert_eq!(line_artifact_score(Array2::zeros((8, 10)).view()), 0.0);

        // Columns [1, 2, 3]: mean 2, worst deviation 1.
        let cols = Array2::from_shape_fn((4, 3), |(_, i)| (i + 1) as f64);
        assert_relative_eq!(line_artifact_score(cols.view()), 0.5, max_relative = 1e-12);
    }

    #[test]
    fn quality_report_serializes() {
        use crate::forward::{simulate, OpticsConfig};
        use crate::pattern::{HadamardMatrix, PatternSpec};
        use crate::recon::{reconstruct, Synthesis};
        use crate::scene::{SceneImage, SyntheticKind};

        let n = 8;
        let p = PatternSpec::identity(HadamardMatrix::sylvester(n).unwrap());
        // Dyadic scene values keep the round trip bit-exact, so the PSNR
        // sentinel is reachable.
        let scene = SceneImage::synthetic(SyntheticKind::Checkerboard { period: 2 }, n, 12, 1).unwrap();
        let (stream, _) = simulate(&scene, &p, &OpticsConfig::ideal(), false).unwrap();
        let img = reconstruct(&stream, &p, None, Synthesis::Debiased, false).unwrap();
        let report = QualityReport::measure("ideal", &img, &scene).unwrap();
        assert!(report.psnr_db.is_infinite());
        assert_eq!(report.ssim, 1.0);
        assert_eq!(report.pattern_digest, p.digest());

        let row = report.to_csv_row();
        assert!(row.starts_with("ideal,inf,0,1,"));
        assert_eq!(
            QualityReport::csv_header().split(',').count(),
            row.split(',').count()
        );
        let text = report.to_string();
        assert!(text.contains("psnr_db"));
        assert!(text.contains(&p.digest()));
    }
}
