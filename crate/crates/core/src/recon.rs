//! Scene reconstruction from measurement streams: per-column Hadamard
//! synthesis (naive and debiased), flat-field weighting, the fast
//! Walsh-Hadamard route, the 2D diagnostic correction, and shear
//! rectification.
//!
//! The synthesis convention normalizes by 1/n, so a noiseless ideal capture
//! reconstructs the scene at its own scale.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Array3, ArrayView1};

use crate::error::{Error, Result};
use crate::forward::{integrate_columns, Readout};
use crate::par;
use crate::pattern::PatternSpec;
use crate::scene;
use crate::stream::{FrameStack, MeasurementStream};

const RECON_MAGIC: &str = "pushframe-recon 1";
const RAW_MAGIC: &str = "pushframe-raw 1";
const CALIB_MAGIC: &str = "pushframe-calib 1";

/// Per-column synthesis mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Synthesis {
    /// `C = (1/n) Σ_i H_{π(i)} s_i` on the raw sums.
    Naive,
    /// Re-centers 0/1-mask sums to ±1-code estimates, `2·s_i - s_white`,
    /// before the same synthesis; removes DC leakage.
    Debiased,
}

impl Synthesis {
    pub fn name(self) -> &'static str {
        match self {
            Synthesis::Naive => "naive",
            Synthesis::Debiased => "debiased",
        }
    }
}

/// White-calibration products: per-column white levels and, when kept, the
/// full 2D white frame for the diagnostic correction.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationData {
    weights: Array2<f64>,
    white_frame: Option<Array3<f64>>,
    supersample: u32,
    white_column: usize,
    pattern_digest: String,
    config_digest: String,
}

impl CalibrationData {
    pub fn new(
        weights: Array2<f64>,
        white_frame: Option<Array3<f64>>,
        supersample: u32,
        white_column: usize,
        pattern_digest: String,
        config_digest: String,
    ) -> Result<Self> {
        let (n, channels) = weights.dim();
        if n == 0 || channels == 0 {
            return Err(Error::ShapeMismatch("empty calibration weights".into()));
        }
        if white_column >= n {
            return Err(Error::param(
                "white_column",
                format!("index {white_column} outside 0..{n}"),
            ));
        }
        if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::param("weights", "white levels must be positive"));
        }
        if let Some(frame) = &white_frame {
            let s = supersample as usize;
            if frame.dim() != (n * s, n * s, channels) {
                return Err(Error::ShapeMismatch(format!(
                    "white frame is {:?}, expected ({}, {}, {channels})",
                    frame.dim(),
                    n * s,
                    n * s
                )));
            }
        }
        Ok(Self {
            weights,
            white_frame,
            supersample,
            white_column,
            pattern_digest,
            config_digest,
        })
    }

    pub fn columns(&self) -> usize {
        self.weights.dim().0
    }

    pub fn channels(&self) -> usize {
        self.weights.dim().1
    }

    /// Per-column white levels, shape (columns, channels).
    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    /// Mean white level for one channel.
    pub fn reference(&self, channel: usize) -> f64 {
        let n = self.columns() as f64;
        self.weights.column(channel).sum() / n
    }

    pub fn white_frame(&self) -> Option<&Array3<f64>> {
        self.white_frame.as_ref()
    }

    pub fn white_column(&self) -> usize {
        self.white_column
    }

    pub fn pattern_digest(&self) -> &str {
        &self.pattern_digest
    }

    pub fn config_digest(&self) -> &str {
        &self.config_digest
    }

    /// Writes the calibration: a text file with the weights, plus a 16-bit
    /// image next to it when a white frame is present.
    pub fn save(&self, path: &Path) -> Result<()> {
        let (n, channels) = self.weights.dim();
        let mut out = String::new();
        out.push_str(CALIB_MAGIC);
        out.push('\n');
        let _ = writeln!(out, "order = {n}");
        let _ = writeln!(out, "channels = {channels}");
        let _ = writeln!(out, "supersample = {}", self.supersample);
        let _ = writeln!(out, "white_column = {}", self.white_column);
        let _ = writeln!(out, "pattern_digest = {}", self.pattern_digest);
        let _ = writeln!(out, "config_digest = {}", self.config_digest);
        match &self.white_frame {
            Some(frame) => {
                let name = white_frame_name(path, channels);
                let (lo, hi) = crate::stream::write_frame(
                    frame,
                    &path.with_file_name(&name),
                )?;
                let _ = writeln!(out, "white_frame = {name} {lo} {hi}");
            }
            None => {
                let _ = writeln!(out, "white_frame = none");
            }
        }
        for i in 0..n {
            for c in 0..channels {
                if c > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}", self.weights[[i, c]]);
            }
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        if lines.next() != Some(CALIB_MAGIC) {
            return Err(Error::format(0, format!("expected `{CALIB_MAGIC}` header")));
        }
        let mut keyed = |key: &str| -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| Error::format(text.len(), "calibration file truncated"))?;
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(0, format!("expected `{key} = ...`")))?;
            if k.trim() != key {
                return Err(Error::format(
                    0,
                    format!("expected key `{key}`, found `{}`", k.trim()),
                ));
            }
            Ok(v.trim().to_string())
        };
        let n: usize = keyed("order")?.parse().map_err(|_| Error::format(0, "bad order"))?;
        let channels: usize =
            keyed("channels")?.parse().map_err(|_| Error::format(0, "bad channels"))?;
        let supersample: u32 =
            keyed("supersample")?.parse().map_err(|_| Error::format(0, "bad supersample"))?;
        let white_column: usize =
            keyed("white_column")?.parse().map_err(|_| Error::format(0, "bad white_column"))?;
        let pattern_digest = keyed("pattern_digest")?;
        let config_digest = keyed("config_digest")?;
        let frame_spec = keyed("white_frame")?;
        let white_frame = if frame_spec == "none" {
            None
        } else {
            let mut parts = frame_spec.split_whitespace();
            let (name, lo, hi) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
                (Some(name), Some(lo), Some(hi), None) => (name, lo, hi),
                _ => return Err(Error::format(0, format!("bad white_frame entry `{frame_spec}`"))),
            };
            let lo: f64 = lo.parse().map_err(|_| Error::format(0, "bad white frame min"))?;
            let hi: f64 = hi.parse().map_err(|_| Error::format(0, "bad white frame max"))?;
            Some(crate::stream::read_frame(&path.with_file_name(name), lo, hi)?)
        };
        let mut weights = Array2::zeros((n, channels));
        for i in 0..n {
            let line = lines
                .next()
                .ok_or_else(|| Error::format(text.len(), "calibration weights truncated"))?;
            let mut count = 0;
            for tok in line.split(',') {
                if count >= channels {
                    return Err(Error::format(0, format!("weight row {i} too long")));
                }
                weights[[i, count]] = tok
                    .parse()
                    .map_err(|_| Error::format(0, format!("bad weight `{tok}`")))?;
                count += 1;
            }
            if count != channels {
                return Err(Error::format(0, format!("weight row {i} too short")));
            }
        }
        if lines.next().is_some() {
            return Err(Error::format(text.len(), "trailing data in calibration file"));
        }
        Self::new(
            weights,
            white_frame,
            supersample,
            white_column,
            pattern_digest,
            config_digest,
        )
    }
}

fn white_frame_name(path: &Path, channels: usize) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "calib".to_string());
    format!("{stem}.white.{}", if channels == 1 { "pgm" } else { "ppm" })
}

/// A reconstructed image with its provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct ReconImage {
    data: Array3<f64>,
    synthesis: Synthesis,
    correction: String,
    pattern_digest: String,
    config_digest: String,
}

impl ReconImage {
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

    pub fn synthesis(&self) -> Synthesis {
        self.synthesis
    }

    /// Correction label: `none`, `flatfield`, or `2d-corrected`.
    pub fn correction(&self) -> &str {
        &self.correction
    }

    pub fn with_correction(mut self, label: &str) -> Self {
        self.correction = label.to_string();
        self
    }

    pub fn pattern_digest(&self) -> &str {
        &self.pattern_digest
    }

    pub fn config_digest(&self) -> &str {
        &self.config_digest
    }

    /// Scene columns reconstructed from steps at which the scene was
    /// partially outside the pattern; their values are well-defined under
    /// the zero-padded scene semantics but mix in the dark surround.
    pub fn is_edge_column(&self, k: usize) -> bool {
        let (n, w, _) = self.data.dim();
        k < n - 1 || k + n > w
    }

    /// Saves as a windowed 16-bit netpbm image plus a `.meta` sidecar
    /// recording the window, provenance, and edge-column ranges.
    pub fn save(&self, path: &Path) -> Result<()> {
        let (n, w, _) = self.data.dim();
        let (lo, hi) = crate::stream::write_frame(&self.data, path)?;
        let mut meta = String::new();
        meta.push_str(RECON_MAGIC);
        meta.push('\n');
        let _ = writeln!(meta, "height = {n}");
        let _ = writeln!(meta, "width = {w}");
        let _ = writeln!(meta, "channels = {}", self.channels());
        let _ = writeln!(meta, "synthesis = {}", self.synthesis.name());
        let _ = writeln!(meta, "correction = {}", self.correction);
        let _ = writeln!(meta, "normalized = true");
        let _ = writeln!(meta, "pattern_digest = {}", self.pattern_digest);
        let _ = writeln!(meta, "config_digest = {}", self.config_digest);
        let _ = writeln!(meta, "window = {lo} {hi}");
        let _ = writeln!(
            meta,
            "edge_columns = below {} and above {}",
            (n - 1).min(w),
            w.saturating_sub(n)
        );
        std::fs::write(sidecar_path(path), meta)?;
        Ok(())
    }

    /// Raw dump: exact little-endian f64s with a small header, for
    /// bit-exact comparisons.
    pub fn save_raw(&self, path: &Path) -> Result<()> {
        let (n, w, c) = self.data.dim();
        let mut bytes = format!("{RAW_MAGIC}\n{n} {w} {c}\n").into_bytes();
        bytes.reserve(n * w * c * 8);
        for v in self.data.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load_raw(path: &Path) -> Result<Array3<f64>> {
        let bytes = std::fs::read(path)?;
        let header_end = bytes
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == b'\n')
            .nth(1)
            .map(|(i, _)| i + 1)
            .ok_or_else(|| Error::format(bytes.len(), "missing raw header"))?;
        let header = std::str::from_utf8(&bytes[..header_end])
            .map_err(|e| Error::format(e.valid_up_to(), "invalid UTF-8 in raw header"))?;
        let mut lines = header.lines();
        if lines.next() != Some(RAW_MAGIC) {
            return Err(Error::format(0, format!("expected `{RAW_MAGIC}` header")));
        }
        let dims: Vec<usize> = lines
            .next()
            .unwrap_or("")
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::format(0, "bad raw dimensions")))
            .collect::<Result<_>>()?;
        let [n, w, c] = dims[..] else {
            return Err(Error::format(0, "raw header needs 3 dimensions"));
        };
        let payload = &bytes[header_end..];
        if payload.len() != n * w * c * 8 {
            return Err(Error::format(
                bytes.len(),
                format!("raw payload is {} bytes, expected {}", payload.len(), n * w * c * 8),
            ));
        }
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|ch| f64::from_le_bytes(ch.try_into().unwrap()))
            .collect();
        Array3::from_shape_vec((n, w, c), values)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))
    }
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".meta");
    PathBuf::from(os)
}

/// Applies the per-column flat-field weighting `S'_i = S_i · w̄ / W_i`.
pub fn flat_field(stream: &MeasurementStream, calib: &CalibrationData) -> Result<MeasurementStream> {
    if calib.pattern_digest() != stream.pattern_digest() {
        return Err(Error::DigestMismatch(format!(
            "calibration pattern {} vs stream pattern {}",
            calib.pattern_digest(),
            stream.pattern_digest()
        )));
    }
    if calib.channels() != stream.channels() || calib.columns() != stream.columns() {
        return Err(Error::ShapeMismatch(format!(
            "calibration is {}x{}, stream is {}x{}",
            calib.columns(),
            calib.channels(),
            stream.columns(),
            stream.channels()
        )));
    }
    let mut data = stream.data().clone();
    for c in 0..stream.channels() {
        let reference = calib.reference(c);
        for i in 0..stream.columns() {
            let scale = reference / calib.weights()[[i, c]];
            for t in 0..stream.steps() {
                data[[t, i, c]] *= scale;
            }
        }
    }
    MeasurementStream::new(
        data,
        stream.scene_width(),
        stream.readout(),
        stream.pattern_digest().to_string(),
        stream.config_digest().to_string(),
    )
}

/// Reconstructs one scene column from its gathered sums.
pub fn reconstruct_column(
    sums: ArrayView1<'_, f64>,
    pattern: &PatternSpec,
    mode: Synthesis,
) -> Result<Array1<f64>> {
    let n = pattern.order();
    if sums.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "got {} sums for order {n}",
            sums.len()
        )));
    }
    let estimates = code_estimates(sums, pattern, mode);
    Ok(Array1::from_vec(synthesize_naive(&estimates, pattern)))
}

/// Converts raw sums into ±1-code estimates per the synthesis mode.
fn code_estimates(sums: ArrayView1<'_, f64>, pattern: &PatternSpec, mode: Synthesis) -> Vec<f64> {
    match mode {
        Synthesis::Naive => sums.to_vec(),
        Synthesis::Debiased => {
            let white = sums[pattern.white_column()];
            sums.iter().map(|&s| 2.0 * s - white).collect()
        }
    }
}

/// Direct `O(n²)` synthesis: `C = (1/n) Σ_i H_{π(i)} est_i`.
fn synthesize_naive(estimates: &[f64], pattern: &PatternSpec) -> Vec<f64> {
    let n = pattern.order();
    let base = pattern.base();
    let mut out = vec![0.0; n];
    for (i, &e) in estimates.iter().enumerate() {
        let q = pattern.permutation()[i];
        for (j, o) in out.iter_mut().enumerate() {
            *o += f64::from(base.entry(j, q)) * e;
        }
    }
    let norm = n as f64;
    for o in &mut out {
        *o /= norm;
    }
    out
}

/// Fast synthesis: scatter the estimates by the permutation, transform,
/// normalize. Equals [`synthesize_naive`] to 1e-9 relative.
fn synthesize_fast(estimates: &[f64], pattern: &PatternSpec) -> Vec<f64> {
    let n = pattern.order();
    let mut buf = vec![0.0; n];
    for (i, &e) in estimates.iter().enumerate() {
        buf[pattern.permutation()[i]] = e;
    }
    fwht(&mut buf).expect("order is a power of two");
    let norm = n as f64;
    for v in &mut buf {
        *v /= norm;
    }
    buf
}

/// In-place unnormalized Walsh-Hadamard transform in natural (Hadamard)
/// order: the butterfly equivalent of multiplying by the Sylvester matrix.
pub fn fwht(values: &mut [f64]) -> Result<()> {
    let n = values.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::InvalidOrder(n));
    }
    let mut half = 1;
    while half < n {
        for block in (0..n).step_by(2 * half) {
            for k in block..block + half {
                let a = values[k];
                let b = values[k + half];
                values[k] = a + b;
                values[k + half] = a - b;
            }
        }
        half *= 2;
    }
    Ok(())
}

/// Reconstructs the full image: for scene column `k`, gathers
/// `s_i = S[t = k + i, i]`, applies calibration weighting when given, and
/// synthesizes via the direct or fast route.
pub fn reconstruct(
    stream: &MeasurementStream,
    pattern: &PatternSpec,
    calib: Option<&CalibrationData>,
    mode: Synthesis,
    use_fast: bool,
) -> Result<ReconImage> {
    let n = pattern.order();
    if stream.columns() != n {
        return Err(Error::ShapeMismatch(format!(
            "stream has {} columns, pattern order is {n}",
            stream.columns()
        )));
    }
    if stream.pattern_digest() != pattern.digest() {
        return Err(Error::DigestMismatch(format!(
            "stream pattern {} vs pattern {}",
            stream.pattern_digest(),
            pattern.digest()
        )));
    }
    if mode == Synthesis::Debiased && stream.readout() == Readout::Differential {
        return Err(Error::param(
            "mode",
            "debiased synthesis expects binary (0/1 mask) sums; differential sums are already ±1-coded",
        ));
    }
    if let Some(calib) = calib {
        if calib.pattern_digest() != pattern.digest() {
            return Err(Error::DigestMismatch(format!(
                "calibration pattern {} vs pattern {}",
                calib.pattern_digest(),
                pattern.digest()
            )));
        }
        if calib.channels() != stream.channels() || calib.columns() != n {
            return Err(Error::ShapeMismatch(format!(
                "calibration is {}x{}, stream is {n}x{}",
                calib.columns(),
                calib.channels(),
                stream.channels()
            )));
        }
        if stream.readout() == Readout::Differential {
            return Err(Error::param(
                "calib",
                "flat-field calibration expects binary (0/1 mask) sums",
            ));
        }
    }

    let width = stream.scene_width();
    let channels = stream.channels();
    let white_column = pattern.white_column();

    // Calibration divides each column's sums by its estimated gain: the
    // measured white level over the ideal mask transmission (n for the
    // all-on column, n/2 for balanced ones). A pure per-column flat-field
    // scale would distort the white/balanced ratio the synthesis relies on.
    let gains: Option<Array2<f64>> = calib.map(|calib| {
        Array2::from_shape_fn((n, channels), |(i, c)| {
            let ideal = if i == white_column { n as f64 } else { n as f64 / 2.0 };
            calib.weights()[[i, c]] / ideal
        })
    });

    let columns: Vec<Array2<f64>> = par::map_indexed(width, |k| {
        let mut out = Array2::zeros((n, channels));
        let mut sums = vec![0.0; n];
        for c in 0..channels {
            for i in 0..n {
                let mut v = stream.data()[[k + i, i, c]];
                if let Some(gains) = &gains {
                    v /= gains[[i, c]];
                }
                sums[i] = v;
            }
            let estimates = code_estimates(ArrayView1::from(&sums), pattern, mode);
            let column = if use_fast {
                synthesize_fast(&estimates, pattern)
            } else {
                synthesize_naive(&estimates, pattern)
            };
            for (j, &v) in column.iter().enumerate() {
                out[[j, c]] = v;
            }
        }
        out
    });

    let mut data = Array3::zeros((n, width, channels));
    for (k, column) in columns.iter().enumerate() {
        for j in 0..n {
            for c in 0..channels {
                data[[j, k, c]] = column[[j, c]];
            }
        }
    }

    Ok(ReconImage {
        data,
        synthesis: mode,
        correction: if calib.is_some() { "flatfield" } else { "none" }.to_string(),
        pattern_digest: stream.pattern_digest().to_string(),
        config_digest: stream.config_digest().to_string(),
    })
}

/// The software-only 2D diagnostic: divides every kept frame pixelwise by
/// the white frame over the mask-on regions, zeroes mask-off pixels, and
/// re-integrates into a corrected stream.
pub fn correct_2d(
    stack: &FrameStack,
    pattern: &PatternSpec,
    calib: &CalibrationData,
) -> Result<MeasurementStream> {
    let white = calib
        .white_frame()
        .ok_or_else(|| Error::param("calib", "2D correction needs the white frame"))?;
    if stack.pattern_digest != pattern.digest() || calib.pattern_digest() != pattern.digest() {
        return Err(Error::DigestMismatch(
            "frame stack, calibration, and pattern must share a pattern digest".into(),
        ));
    }
    if stack.supersample != calib.supersample {
        return Err(Error::ShapeMismatch(format!(
            "stack supersample {} vs calibration supersample {}",
            stack.supersample, calib.supersample
        )));
    }
    let n = pattern.order();
    let s = stack.supersample as usize;
    let side = n * s;
    let steps = stack.frames.len();
    if steps < n {
        return Err(Error::ShapeMismatch(format!(
            "stack has {steps} frames; at least {n} needed for one scene column"
        )));
    }
    let channels = white.dim().2;

    // Mask-on lookup at supersampled resolution, and the gain check.
    let mask = pattern.to_binary_mask();
    let on = |jj: usize, ii: usize| mask[[jj / s, ii / s]] == 1;
    for jj in 0..side {
        for ii in 0..side {
            if on(jj, ii) {
                for c in 0..channels {
                    if white[[jj, ii, c]] <= 0.0 {
                        return Err(Error::param(
                            "calib",
                            format!("white frame is not positive at on-pixel ({jj}, {ii})"),
                        ));
                    }
                }
            }
        }
    }

    let rows: Vec<Array2<f64>> = par::map_indexed(steps, |t| {
        let frame = &stack.frames[t];
        let mut corrected = Array3::zeros((side, side, channels));
        for jj in 0..side {
            for ii in 0..side {
                if !on(jj, ii) {
                    continue;
                }
                for c in 0..channels {
                    corrected[[jj, ii, c]] = frame[[jj, ii, c]] / white[[jj, ii, c]];
                }
            }
        }
        integrate_columns(&corrected, stack.supersample).expect("stack shape")
    });

    let mut data = Array3::zeros((steps, n, channels));
    for (t, row) in rows.iter().enumerate() {
        for i in 0..n {
            for c in 0..channels {
                data[[t, i, c]] = row[[i, c]];
            }
        }
    }
    MeasurementStream::new(
        data,
        steps + 1 - n,
        Readout::Binary,
        stack.pattern_digest.clone(),
        stack.config_digest.clone(),
    )
}

/// Undoes the capture shear: shifts image column `k` vertically by
/// `-shear_rows_per_column · k` with linear interpolation and zero fill.
/// Content sheared past the image edge is clipped.
pub fn shear_correct(img: &ReconImage, shear_rows_per_column: f64) -> ReconImage {
    if shear_rows_per_column == 0.0 {
        return img.clone();
    }
    let (n, w, channels) = img.data.dim();
    let mut data = Array3::zeros((n, w, channels));
    for k in 0..w {
        let column = img.data.slice(ndarray::s![.., k, ..]).to_owned();
        let shifted = scene::shift_rows(&column, -shear_rows_per_column * k as f64);
        for j in 0..n {
            for c in 0..channels {
                data[[j, k, c]] = shifted[[j, c]];
            }
        }
    }
    ReconImage {
        data,
        synthesis: img.synthesis,
        correction: img.correction.clone(),
        pattern_digest: img.pattern_digest.clone(),
        config_digest: img.config_digest.clone(),
    }
}
