//! The optical forward model: render the masked, degraded scene at each time
//! step and integrate columns into the measurement stream a linear detector
//! would record.
//!
//! Geometry: at step `t`, pattern column `i` sees scene column
//! `(t - i)·(1 + step_error)`, sheared vertically by
//! `shear_rows_per_column·i`. A capture runs for `T = W + n - 1` steps, from
//! the scene entering the first pattern column to leaving the last.

use std::fmt::Write as _;

use ndarray::{Array2, Array3};

use crate::digest::digest_bytes;
use crate::error::{Error, Result};
use crate::noise;
use crate::par;
use crate::pattern::PatternSpec;
use crate::recon::CalibrationData;
use crate::scene::{self, SceneImage, SyntheticKind};
use crate::stream::{FrameStack, MeasurementStream};

/// How column sums are read out.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Readout {
    /// One capture per step with the 0/1 physical mask ("off" reflects the
    /// contrast floor).
    Binary,
    /// Two captures per step, pattern and complement, subtracted: the
    /// effective code is ±(1 - contrast_floor) and stray light cancels.
    Differential,
}

impl Readout {
    pub fn name(self) -> &'static str {
        match self {
            Readout::Binary => "binary",
            Readout::Differential => "differential",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "binary" => Some(Readout::Binary),
            "differential" => Some(Readout::Differential),
            _ => None,
        }
    }
}

/// Illumination gain over the mask plane. Strictly positive everywhere.
#[derive(Clone, Debug, PartialEq)]
pub enum IlluminationField {
    Uniform,
    /// One gain per pattern column.
    ColumnGains(Vec<f64>),
    /// Row profile × column profile, one entry per pattern row/column.
    Separable { rows: Vec<f64>, cols: Vec<f64> },
    /// `floor + (1 - floor)·exp(-d²/2σ²)` with `d` the distance to `center`
    /// in pattern-pixel units.
    Vignette { center: (f64, f64), sigma: f64, floor: f64 },
}

impl IlluminationField {
    fn validate(&self, order: usize) -> Result<()> {
        let positive = |vals: &[f64], field: &str| -> Result<()> {
            if vals.len() != order {
                return Err(Error::param(
                    field,
                    format!("needs {order} entries, got {}", vals.len()),
                ));
            }
            if vals.iter().any(|v| !v.is_finite() || *v <= 0.0) {
                return Err(Error::param(field, "gains must be finite and positive"));
            }
            Ok(())
        };
        match self {
            IlluminationField::Uniform => Ok(()),
            IlluminationField::ColumnGains(g) => positive(g, "illumination.column_gains"),
            IlluminationField::Separable { rows, cols } => {
                positive(rows, "illumination.rows")?;
                positive(cols, "illumination.cols")
            }
            IlluminationField::Vignette { center, sigma, floor } => {
                if !center.0.is_finite() || !center.1.is_finite() {
                    return Err(Error::param("illumination.center", "must be finite"));
                }
                if !sigma.is_finite() || *sigma <= 0.0 {
                    return Err(Error::param("illumination.sigma", "must be finite and positive"));
                }
                if !floor.is_finite() || *floor <= 0.0 || *floor > 1.0 {
                    return Err(Error::param("illumination.floor", "must be in (0, 1]"));
                }
                Ok(())
            }
        }
    }

    /// Gain sampled on the supersampled grid. Profile modes are constant
    /// within a pattern pixel; the vignette varies smoothly across it.
    fn table(&self, order: usize, supersample: usize) -> Array2<f64> {
        let side = order * supersample;
        match self {
            IlluminationField::Uniform => Array2::ones((side, side)),
            IlluminationField::ColumnGains(g) => {
                Array2::from_shape_fn((side, side), |(_, ii)| g[ii / supersample])
            }
            IlluminationField::Separable { rows, cols } => {
                Array2::from_shape_fn((side, side), |(jj, ii)| {
                    rows[jj / supersample] * cols[ii / supersample]
                })
            }
            IlluminationField::Vignette { center, sigma, floor } => {
                let s = supersample as f64;
                Array2::from_shape_fn((side, side), |(jj, ii)| {
                    let y = (jj as f64 + 0.5) / s - 0.5 - center.0;
                    let x = (ii as f64 + 0.5) / s - 0.5 - center.1;
                    floor + (1.0 - floor) * (-(x * x + y * y) / (2.0 * sigma * sigma)).exp()
                })
            }
        }
    }

    fn canonical(&self) -> String {
        match self {
            IlluminationField::Uniform => "uniform".to_string(),
            IlluminationField::ColumnGains(g) => {
                let items: Vec<String> = g.iter().map(|v| v.to_string()).collect();
                format!("column-gains:{}", items.join(","))
            }
            IlluminationField::Separable { rows, cols } => {
                let r: Vec<String> = rows.iter().map(|v| v.to_string()).collect();
                let c: Vec<String> = cols.iter().map(|v| v.to_string()).collect();
                format!("separable:{};{}", r.join(","), c.join(","))
            }
            IlluminationField::Vignette { center, sigma, floor } => {
                format!("vignette:{},{},{sigma},{floor}", center.0, center.1)
            }
        }
    }
}

/// Full description of the simulated optics and readout chain.
#[derive(Clone, Debug, PartialEq)]
pub struct OpticsConfig {
    /// Reflectance of an "off" mask pixel, in `[0, 0.5)`.
    pub contrast_floor: f64,
    /// Gaussian PSF std in pattern-pixel units, applied to the masked image.
    pub blur_sigma: f64,
    pub illumination: IlluminationField,
    /// Fractional step miscalibration: the scene advances `1 + step_error`
    /// pattern columns per step.
    pub step_error: f64,
    /// Additive pedestal per supersampled pixel.
    pub stray_light: f64,
    /// Std of the Gaussian noise added to each recorded column sum.
    pub read_noise: f64,
    pub shot_noise: bool,
    /// Photon count corresponding to one radiance unit on one column sum.
    pub photons_per_unit: f64,
    /// Device pixels per pattern pixel and axis.
    pub supersample: u32,
    /// Vertical shear of the scene, in rows per pattern column.
    pub shear_rows_per_column: f64,
    pub readout: Readout,
    pub seed: u64,
}

impl Default for OpticsConfig {
    /// Desk-scale defaults: 4x supersampling, shot noise off, everything
    /// else ideal.
    fn default() -> Self {
        Self {
            contrast_floor: 0.0,
            blur_sigma: 0.0,
            illumination: IlluminationField::Uniform,
            step_error: 0.0,
            stray_light: 0.0,
            read_noise: 0.0,
            shot_noise: false,
            photons_per_unit: 1e4,
            supersample: 4,
            shear_rows_per_column: 0.0,
            readout: Readout::Binary,
            seed: 0,
        }
    }
}

impl OpticsConfig {
    /// Ideal noiseless optics at supersample 1: the exact-inversion regime.
    pub fn ideal() -> Self {
        Self {
            supersample: 1,
            ..Self::default()
        }
    }

    pub fn validate(&self, order: usize) -> Result<()> {
        let finite = |v: f64, field: &str| -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(field, "must be finite"))
            }
        };
        finite(self.contrast_floor, "contrast_floor")?;
        if !(0.0..0.5).contains(&self.contrast_floor) {
            return Err(Error::param(
                "contrast_floor",
                format!("must be in [0, 0.5), got {}", self.contrast_floor),
            ));
        }
        finite(self.blur_sigma, "blur_sigma")?;
        if self.blur_sigma < 0.0 {
            return Err(Error::param("blur_sigma", "must be non-negative"));
        }
        self.illumination.validate(order)?;
        finite(self.step_error, "step_error")?;
        if self.step_error <= -1.0 {
            return Err(Error::param("step_error", "must be greater than -1"));
        }
        finite(self.stray_light, "stray_light")?;
        if self.stray_light < 0.0 {
            return Err(Error::param("stray_light", "must be non-negative"));
        }
        finite(self.read_noise, "read_noise")?;
        if self.read_noise < 0.0 {
            return Err(Error::param("read_noise", "must be non-negative"));
        }
        finite(self.photons_per_unit, "photons_per_unit")?;
        if self.photons_per_unit <= 0.0 {
            return Err(Error::param("photons_per_unit", "must be positive"));
        }
        if !(1..=64).contains(&self.supersample) {
            return Err(Error::param(
                "supersample",
                format!("must be in 1..=64, got {}", self.supersample),
            ));
        }
        finite(self.shear_rows_per_column, "shear_rows_per_column")?;
        Ok(())
    }

    /// Canonical serialization; its digest is stamped into streams, frame
    /// stacks and calibration data.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut s = String::new();
        s.push_str("pushframe-optics 1\n");
        let _ = writeln!(s, "contrast_floor = {}", self.contrast_floor);
        let _ = writeln!(s, "blur_sigma = {}", self.blur_sigma);
        let _ = writeln!(s, "illumination = {}", self.illumination.canonical());
        let _ = writeln!(s, "step_error = {}", self.step_error);
        let _ = writeln!(s, "stray_light = {}", self.stray_light);
        let _ = writeln!(s, "read_noise = {}", self.read_noise);
        let _ = writeln!(s, "shot_noise = {}", self.shot_noise);
        let _ = writeln!(s, "photons_per_unit = {}", self.photons_per_unit);
        let _ = writeln!(s, "supersample = {}", self.supersample);
        let _ = writeln!(s, "shear_rows_per_column = {}", self.shear_rows_per_column);
        let _ = writeln!(s, "readout = {}", self.readout.name());
        let _ = writeln!(s, "seed = {}", self.seed);
        s.into_bytes()
    }

    pub fn digest(&self) -> String {
        digest_bytes(&self.canonical_bytes())
    }
}

/// Precomputed per-run state shared by every frame render.
struct RenderContext<'a> {
    scene: &'a SceneImage,
    pattern: &'a PatternSpec,
    cfg: &'a OpticsConfig,
    illum: Array2<f64>,
    kernel: Option<Vec<f64>>,
    steps: usize,
}

impl<'a> RenderContext<'a> {
    fn new(scene: &'a SceneImage, pattern: &'a PatternSpec, cfg: &'a OpticsConfig) -> Result<Self> {
        let n = pattern.order();
        cfg.validate(n)?;
        if scene.height() != n {
            return Err(Error::ShapeMismatch(format!(
                "scene height {} does not match pattern order {n}; resample first",
                scene.height()
            )));
        }
        let s = cfg.supersample as usize;
        Ok(Self {
            scene,
            pattern,
            cfg,
            illum: cfg.illumination.table(n, s),
            kernel: gaussian_kernel(cfg.blur_sigma * s as f64),
            steps: scene.width() + n - 1,
        })
    }

    /// Renders the supersampled frame at step `t`. `invert` renders the
    /// complement-mask arm of a differential capture.
    fn render(&self, t: usize, invert: bool) -> Array3<f64> {
        let n = self.pattern.order();
        let s = self.cfg.supersample as usize;
        let channels = self.scene.channels();
        let eps = self.cfg.contrast_floor;
        let b = self.cfg.stray_light;
        let mut frame = Array3::zeros((n * s, n * s, channels));

        for i in 0..n {
            let x = (t as f64 - i as f64) * (1.0 + self.cfg.step_error);
            let column = self.scene.column_at(x);
            let shift = self.cfg.shear_rows_per_column * i as f64;
            let column = if shift == 0.0 {
                column
            } else {
                scene::shift_rows(&column, shift)
            };
            for j in 0..n {
                let on = (self.pattern.displayed(j, i) > 0) != invert;
                let refl = if on { 1.0 } else { eps };
                for c in 0..channels {
                    let value = column[[j, c]] * refl;
                    for sub_j in 0..s {
                        let jj = j * s + sub_j;
                        for sub_i in 0..s {
                            let ii = i * s + sub_i;
                            frame[[jj, ii, c]] = value * self.illum[[jj, ii]] + b;
                        }
                    }
                }
            }
        }

        if let Some(kernel) = &self.kernel {
            blur_separable(&mut frame, kernel);
        }
        frame
    }
}

/// Truncated (4σ), renormalized Gaussian kernel; `None` when σ = 0.
fn gaussian_kernel(sigma: f64) -> Option<Vec<f64>> {
    if sigma <= 0.0 {
        return None;
    }
    let radius = (4.0 * sigma).ceil() as usize;
    let mut kernel: Vec<f64> = (0..=2 * radius)
        .map(|k| {
            let d = k as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = kernel.iter().sum();
    for v in &mut kernel {
        *v /= total;
    }
    Some(kernel)
}

/// Separable convolution with zero padding outside the frame.
fn blur_separable(frame: &mut Array3<f64>, kernel: &[f64]) {
    let (h, w, channels) = frame.dim();
    let radius = kernel.len() / 2;
    let mut temp = Array3::zeros((h, w, channels));
    // Rows (vertical pass).
    for x in 0..w {
        for c in 0..channels {
            for j in 0..h {
                let mut acc = 0.0;
                for (k, &kv) in kernel.iter().enumerate() {
                    let src = j as isize + k as isize - radius as isize;
                    if src >= 0 && (src as usize) < h {
                        acc += kv * frame[[src as usize, x, c]];
                    }
                }
                temp[[j, x, c]] = acc;
            }
        }
    }
    // Columns (horizontal pass).
    for j in 0..h {
        for c in 0..channels {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, &kv) in kernel.iter().enumerate() {
                    let src = x as isize + k as isize - radius as isize;
                    if src >= 0 && (src as usize) < w {
                        acc += kv * temp[[j, src as usize, c]];
                    }
                }
                frame[[j, x, c]] = acc;
            }
        }
    }
}

/// Renders the supersampled frame a camera would capture at step `t`.
pub fn render_frame(
    scene: &SceneImage,
    pattern: &PatternSpec,
    cfg: &OpticsConfig,
    t: usize,
) -> Result<Array3<f64>> {
    let ctx = RenderContext::new(scene, pattern, cfg)?;
    if t >= ctx.steps {
        return Err(Error::param(
            "t",
            format!("step {t} outside 0..{}", ctx.steps),
        ));
    }
    Ok(ctx.render(t, false))
}

/// Sums the supersampled frame within each pattern-column band, divided by
/// supersample² so results are in pattern-pixel units.
pub fn integrate_columns(frame: &Array3<f64>, supersample: u32) -> Result<Array2<f64>> {
    let s = supersample as usize;
    let (h, w, channels) = frame.dim();
    if s == 0 || h % s != 0 || w % s != 0 {
        return Err(Error::ShapeMismatch(format!(
            "frame {h}x{w} is not a multiple of supersample {s}"
        )));
    }
    let n = w / s;
    let norm = (s * s) as f64;
    let mut sums = Array2::zeros((n, channels));
    for i in 0..n {
        for c in 0..channels {
            let mut acc = 0.0;
            for jj in 0..h {
                for sub_i in 0..s {
                    acc += frame[[jj, i * s + sub_i, c]];
                }
            }
            sums[[i, c]] = acc / norm;
        }
    }
    Ok(sums)
}

/// Lane indices for the keyed noise streams, per channel.
fn lanes(channels: usize, c: usize) -> (u64, u64, u64) {
    (c as u64, (channels + c) as u64, (2 * channels + c) as u64)
}

/// Runs the full capture: renders every step, integrates columns, and
/// applies shot then read noise to each recorded sum. Randomness is keyed by
/// `(seed, step, column, lane)`, so results are independent of evaluation
/// order and worker count. `keep_frames` also returns the pre-integration
/// frames (binary readout only).
pub fn simulate(
    scene: &SceneImage,
    pattern: &PatternSpec,
    cfg: &OpticsConfig,
    keep_frames: bool,
) -> Result<(MeasurementStream, Option<FrameStack>)> {
    let ctx = RenderContext::new(scene, pattern, cfg)?;
    if keep_frames && cfg.readout == Readout::Differential {
        return Err(Error::param(
            "keep_frames",
            "frame diagnostics require binary readout",
        ));
    }
    let n = pattern.order();
    let channels = scene.channels();
    let steps = ctx.steps;

    let per_step: Vec<(Array2<f64>, Option<Array3<f64>>)> = par::map_indexed(steps, |t| {
        let frame = ctx.render(t, false);
        let mut sums = integrate_columns(&frame, cfg.supersample).expect("render shape");
        let arm_b = match cfg.readout {
            Readout::Binary => None,
            Readout::Differential => Some(
                integrate_columns(&ctx.render(t, true), cfg.supersample).expect("render shape"),
            ),
        };
        for i in 0..n {
            for c in 0..channels {
                let (lane_a, lane_b, lane_read) = lanes(channels, c);
                let key = (cfg.seed, t as u64, i as u64);
                let mut value = sums[[i, c]];
                if cfg.shot_noise {
                    let mut rng = noise::stream(key.0, key.1, key.2, lane_a);
                    value = noise::shot(&mut rng, value, cfg.photons_per_unit);
                }
                if let Some(arm_b) = &arm_b {
                    let mut other = arm_b[[i, c]];
                    if cfg.shot_noise {
                        let mut rng = noise::stream(key.0, key.1, key.2, lane_b);
                        other = noise::shot(&mut rng, other, cfg.photons_per_unit);
                    }
                    value -= other;
                }
                if cfg.read_noise > 0.0 {
                    let mut rng = noise::stream(key.0, key.1, key.2, lane_read);
                    value = noise::read(&mut rng, value, cfg.read_noise);
                }
                sums[[i, c]] = value;
            }
        }
        (sums, keep_frames.then_some(frame))
    });

    let mut data = Array3::zeros((steps, n, channels));
    let mut frames = Vec::new();
    for (t, (sums, frame)) in per_step.into_iter().enumerate() {
        for i in 0..n {
            for c in 0..channels {
                data[[t, i, c]] = sums[[i, c]];
            }
        }
        if let Some(frame) = frame {
            frames.push(frame);
        }
    }

    let stream = MeasurementStream::new(
        data,
        scene.width(),
        cfg.readout,
        pattern.digest(),
        cfg.digest(),
    )?;
    let stack = keep_frames.then(|| FrameStack {
        frames,
        supersample: cfg.supersample,
        pattern_digest: pattern.digest(),
        config_digest: cfg.digest(),
    });
    Ok((stream, stack))
}

/// Captures a uniform unit scene through the same optics, noiselessly, and
/// records the per-column white levels plus the 2D white frame at the
/// full-overlap step.
pub fn white_calibration(
    pattern: &PatternSpec,
    cfg: &OpticsConfig,
    channels: usize,
) -> Result<CalibrationData> {
    let n = pattern.order();
    let mut quiet = cfg.clone();
    quiet.read_noise = 0.0;
    quiet.shot_noise = false;
    quiet.readout = Readout::Binary;
    let white = SceneImage::synthetic(SyntheticKind::Uniform { level: 1.0 }, n, n, channels)?;
    let ctx = RenderContext::new(&white, pattern, &quiet)?;
    // With scene width n, step n-1 is the unique full-overlap step.
    let frame = ctx.render(n - 1, false);
    let weights = integrate_columns(&frame, quiet.supersample)?;
    CalibrationData::new(
        weights,
        Some(frame),
        quiet.supersample,
        pattern.white_column(),
        pattern.digest(),
        cfg.digest(),
    )
}
