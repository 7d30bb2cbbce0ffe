//! Scene images: the multi-channel pictures that translate across the mask.
//!
//! Values are linear radiance, nominally in `[0, 1]`. Positions outside a
//! scene's extent read as zero — the scene enters from and leaves into
//! darkness.

use std::path::Path;

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::netpbm::Raster;

/// A scene of shape `(height, width, channels)` with non-negative values.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneImage {
    data: Array3<f64>,
}

/// Built-in analytic test scenes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SyntheticKind {
    /// Constant level everywhere.
    Uniform { level: f64 },
    /// 0 at the left edge rising linearly to 1 at the right edge.
    HorizontalGradient,
    /// 0 at the top edge rising linearly to 1 at the bottom edge.
    VerticalGradient,
    /// Alternating 0/1 cells of the given side length.
    Checkerboard { period: usize },
    /// A single 1.0 pixel on a black field.
    Delta { row: usize, col: usize },
}

impl SceneImage {
    pub fn new(data: Array3<f64>) -> Result<Self> {
        let (h, w, c) = data.dim();
        if h == 0 || w == 0 {
            return Err(Error::ShapeMismatch(format!(
                "scene must be non-empty, got {h}x{w}"
            )));
        }
        if c != 1 && c != 3 {
            return Err(Error::ShapeMismatch(format!(
                "scene must have 1 or 3 channels, got {c}"
            )));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::param("scene", "values must be finite and non-negative"));
        }
        Ok(Self { data })
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn height(&self) -> usize {
        self.data.dim().0
    }

    pub fn width(&self) -> usize {
        self.data.dim().1
    }

    pub fn channels(&self) -> usize {
        self.data.dim().2
    }

    pub fn synthetic(kind: SyntheticKind, height: usize, width: usize, channels: usize) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::param(
                "channels",
                format!("must be 1 or 3, got {channels}"),
            ));
        }
        if height == 0 || width == 0 {
            return Err(Error::param("size", "height and width must be positive"));
        }
        match kind {
            SyntheticKind::Uniform { level } if !(level.is_finite() && level >= 0.0) => {
                return Err(Error::param("level", "must be finite and non-negative"));
            }
            SyntheticKind::Checkerboard { period: 0 } => {
                return Err(Error::param("period", "must be positive"));
            }
            SyntheticKind::Delta { row, col } if row >= height || col >= width => {
                return Err(Error::param(
                    "delta",
                    format!("pixel ({row}, {col}) outside {height}x{width}"),
                ));
            }
            _ => {}
        }
        let value = |r: usize, c: usize| -> f64 {
            match kind {
                SyntheticKind::Uniform { level } => level,
                SyntheticKind::HorizontalGradient => {
                    if width == 1 {
                        0.0
                    } else {
                        c as f64 / (width - 1) as f64
                    }
                }
                SyntheticKind::VerticalGradient => {
                    if height == 1 {
                        0.0
                    } else {
                        r as f64 / (height - 1) as f64
                    }
                }
                SyntheticKind::Checkerboard { period } => {
                    f64::from((r / period + c / period) % 2 == 0)
                }
                SyntheticKind::Delta { row, col } => f64::from(r == row && c == col),
            }
        };
        let data = Array3::from_shape_fn((height, width, channels), |(r, c, _)| value(r, c));
        Self::new(data)
    }

    /// Resamples to the given height with edge-aligned linear interpolation;
    /// width and channels are unchanged.
    pub fn resample_height(&self, new_height: usize) -> Result<Self> {
        if new_height < 2 {
            return Err(Error::param(
                "height",
                format!("resample target must be at least 2, got {new_height}"),
            ));
        }
        let (h, w, c) = self.data.dim();
        if new_height == h {
            return Ok(self.clone());
        }
        let mut out = Array3::zeros((new_height, w, c));
        for r_new in 0..new_height {
            // Edge-aligned: first and last output rows coincide with the
            // first and last input rows.
            let pos = r_new as f64 * (h - 1) as f64 / (new_height - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(h - 1);
            let frac = pos - lo as f64;
            for x in 0..w {
                for ch in 0..c {
                    out[[r_new, x, ch]] =
                        self.data[[lo, x, ch]] * (1.0 - frac) + self.data[[hi, x, ch]] * frac;
                }
            }
        }
        Self::new(out)
    }

    /// The scene column at real-valued position `x`: linear interpolation
    /// between the two neighboring integer columns, with positions outside
    /// `[0, width)` reading as zero. Returns shape `(height, channels)`.
    pub fn column_at(&self, x: f64) -> Array2<f64> {
        let (h, w, c) = self.data.dim();
        let mut out = Array2::zeros((h, c));
        let lo = x.floor();
        let frac = x - lo;
        let lo = lo as isize;
        for (col, weight) in [(lo, 1.0 - frac), (lo + 1, frac)] {
            if weight == 0.0 || col < 0 || col >= w as isize {
                continue;
            }
            let col = col as usize;
            for r in 0..h {
                for ch in 0..c {
                    out[[r, ch]] += weight * self.data[[r, col, ch]];
                }
            }
        }
        out
    }

    /// Loads an 8- or 16-bit PGM/PPM, scaling samples to `[0, 1]` by maxval.
    pub fn load(path: &Path) -> Result<Self> {
        let raster = Raster::load(path)?;
        Self::from_raster(&raster)
    }

    pub fn from_raster(raster: &Raster) -> Result<Self> {
        let scale = f64::from(raster.maxval);
        let data = Array3::from_shape_fn(
            (raster.height, raster.width, raster.channels),
            |(r, c, ch)| f64::from(raster.sample(r, c, ch)) / scale,
        );
        Self::new(data)
    }

    /// Saves as 16-bit PGM/PPM; values are clamped to `[0, 1]` and quantized
    /// to the 65535-step code.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_raster().save(path)
    }

    pub fn to_raster(&self) -> Raster {
        let (h, w, c) = self.data.dim();
        let mut raster = Raster::new(w, h, c, u16::MAX).expect("1 or 3 channels");
        for r in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    let q = (self.data[[r, x, ch]].clamp(0.0, 1.0) * 65535.0).round();
                    raster.set(r, x, ch, q as u16);
                }
            }
        }
        raster
    }
}

/// Shifts the rows of an `(n, channels)` column down by `shift` rows with
/// linear interpolation, zero fill: `out[j] = col[j - shift]`. Shared by the
/// forward shear and its post-reconstruction correction.
pub(crate) fn shift_rows(col: &Array2<f64>, shift: f64) -> Array2<f64> {
    let (h, c) = col.dim();
    let mut out = Array2::zeros((h, c));
    for j in 0..h {
        let src = j as f64 - shift;
        let lo = src.floor();
        let frac = src - lo;
        let lo = lo as isize;
        for (row, weight) in [(lo, 1.0 - frac), (lo + 1, frac)] {
            if weight == 0.0 || row < 0 || row >= h as isize {
                continue;
            }
            for ch in 0..c {
                out[[j, ch]] += weight * col[[row as usize, ch]];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn gray(rows: Vec<Vec<f64>>) -> SceneImage {
        let h = rows.len();
        let w = rows[0].len();
        let data = Array3::from_shape_fn((h, w, 1), |(r, c, _)| rows[r][c]);
        SceneImage::new(data).unwrap()
    }

    #[test]
    fn constructor_validates_shape_and_values() {
        assert!(SceneImage::new(Array3::zeros((0, 4, 1))).is_err());
        assert!(SceneImage::new(Array3::zeros((4, 4, 2))).is_err());
        assert!(SceneImage::new(Array3::from_elem((2, 2, 1), -0.1)).is_err());
        assert!(SceneImage::new(Array3::from_elem((2, 2, 1), f64::NAN)).is_err());
        assert!(SceneImage::new(Array3::from_elem((2, 2, 3), 0.5)).is_ok());
    }

    #[test]
    fn resample_midpoint_and_identity() {
        let s = gray(vec![vec![0.0], vec![1.0]]);
        let r = s.resample_height(3).unwrap();
        assert_eq!(r.data().as_slice().unwrap(), &[0.0, 0.5, 1.0]);

        let same = s.resample_height(2).unwrap();
        assert_eq!(same, s);

        let constant = SceneImage::synthetic(SyntheticKind::Uniform { level: 0.5 }, 5, 3, 1).unwrap();
        let up = constant.resample_height(17).unwrap();
        assert!(up.data().iter().all(|&v| (v - 0.5).abs() < 1e-15));
        assert_eq!(up.width(), 3);
    }

    #[test]
    fn resample_preserves_endpoints() {
        let s = gray(vec![vec![0.2], vec![0.9], vec![0.4]]);
        let r = s.resample_height(7).unwrap();
        assert!((r.data()[[0, 0, 0]] - 0.2).abs() < 1e-15);
        assert!((r.data()[[6, 0, 0]] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn column_at_interpolates_and_zero_pads() {
        let s = gray(vec![vec![0.2, 0.8, 0.4], vec![1.0, 0.0, 0.6]]);

        let exact = s.column_at(1.0);
        assert_eq!(exact, array![[0.8], [0.0]]);

        let mid = s.column_at(1.5);
        assert_eq!(mid, array![[0.6000000000000001], [0.3]]);

        let left = s.column_at(-0.5);
        assert_eq!(left, array![[0.1], [0.5]]);

        let right = s.column_at(2.5);
        assert_eq!(right, array![[0.2], [0.3]]);

        let outside = s.column_at(5.0);
        assert!(outside.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn column_at_is_linear_in_the_image() {
        let a = gray(vec![vec![0.1, 0.7], vec![0.3, 0.2]]);
        let b = gray(vec![vec![0.5, 0.0], vec![0.9, 0.4]]);
        let blend = SceneImage::new(a.data() * 0.25 + b.data() * 0.75).unwrap();
        for &x in &[-0.5, 0.0, 0.25, 1.0, 1.75] {
            let direct = blend.column_at(x);
            let combined = a.column_at(x) * 0.25 + b.column_at(x) * 0.75;
            for (d, c) in direct.iter().zip(combined.iter()) {
                assert!((d - c).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn synthetic_kinds() {
        let u = SceneImage::synthetic(SyntheticKind::Uniform { level: 1.0 }, 4, 4, 1).unwrap();
        assert!(u.data().iter().all(|&v| v == 1.0));

        let d = SceneImage::synthetic(SyntheticKind::Delta { row: 0, col: 0 }, 4, 4, 1).unwrap();
        assert_eq!(d.data().iter().filter(|&&v| v != 0.0).count(), 1);
        assert_eq!(d.data()[[0, 0, 0]], 1.0);

        let c = SceneImage::synthetic(SyntheticKind::Checkerboard { period: 2 }, 8, 8, 1).unwrap();
        let mean = c.data().iter().sum::<f64>() / 64.0;
        assert_eq!(mean, 0.5);

        let hg = SceneImage::synthetic(SyntheticKind::HorizontalGradient, 2, 5, 1).unwrap();
        assert_eq!(hg.data()[[0, 0, 0]], 0.0);
        assert_eq!(hg.data()[[1, 4, 0]], 1.0);
        assert_eq!(hg.data()[[0, 2, 0]], 0.5);

        let vg = SceneImage::synthetic(SyntheticKind::VerticalGradient, 5, 2, 3).unwrap();
        assert_eq!(vg.data()[[4, 0, 2]], 1.0);
        assert_eq!(vg.data()[[0, 1, 1]], 0.0);

        assert!(SceneImage::synthetic(SyntheticKind::Delta { row: 4, col: 0 }, 4, 4, 1).is_err());
        assert!(SceneImage::synthetic(SyntheticKind::Checkerboard { period: 0 }, 4, 4, 1).is_err());
    }

    #[test]
    fn shift_rows_interpolates_and_zero_fills() {
        let col = array![[1.0], [2.0], [4.0], [8.0]];

        let down1 = shift_rows(&col, 1.0);
        assert_eq!(down1, array![[0.0], [1.0], [2.0], [4.0]]);

        let up_half = shift_rows(&col, -0.5);
        assert_eq!(up_half, array![[1.5], [3.0], [6.0], [4.0]]);

        let zero = shift_rows(&col, 0.0);
        assert_eq!(zero, col);

        let gone = shift_rows(&col, 10.0);
        assert!(gone.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn file_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.ppm");
        let s = SceneImage::synthetic(SyntheticKind::HorizontalGradient, 6, 9, 3).unwrap();
        s.save(&path).unwrap();
        let back = SceneImage::load(&path).unwrap();
        assert_eq!(back.data().dim(), s.data().dim());
        for (a, b) in back.data().iter().zip(s.data().iter()) {
            assert!((a - b).abs() <= 1.0 / 65535.0);
        }
    }

    #[test]
    fn load_scales_by_maxval() {
        let mut eight = Raster::new(2, 1, 1, 255).unwrap();
        eight.samples = vec![255, 0];
        let s = SceneImage::from_raster(&eight).unwrap();
        assert_eq!(s.data()[[0, 0, 0]], 1.0);
        assert_eq!(s.data()[[0, 1, 0]], 0.0);

        let mut wide = Raster::new(1, 1, 3, 65535).unwrap();
        wide.samples = vec![0, 65535, 13107];
        let s = SceneImage::from_raster(&wide).unwrap();
        assert_eq!(s.data()[[0, 0, 1]], 1.0);
        assert!((s.data()[[0, 0, 2]] - 0.2).abs() < 1e-4);
    }
}
