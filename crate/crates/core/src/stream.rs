//! Measurement streams and diagnostic frame stacks, with their file formats.
//!
//! A stream holds one column-sum vector per time step and channel. Stream
//! CSV files carry full decimal round-trip precision, so save/load is
//! bit-exact. Frame stacks quantize to 16-bit netpbm files with a per-frame
//! min/max window recorded in the manifest.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array3;

use crate::error::{Error, Result};
use crate::forward::Readout;
use crate::netpbm::Raster;

const STREAM_MAGIC: &str = "pushframe-stream 1";
const FRAMES_MAGIC: &str = "pushframe-frames 1";

/// Column sums over time: shape `(steps, columns, channels)` with
/// `steps = scene_width + columns - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementStream {
    data: Array3<f64>,
    scene_width: usize,
    readout: Readout,
    pattern_digest: String,
    config_digest: String,
}

impl MeasurementStream {
    pub fn new(
        data: Array3<f64>,
        scene_width: usize,
        readout: Readout,
        pattern_digest: String,
        config_digest: String,
    ) -> Result<Self> {
        let (t, n, c) = data.dim();
        if n == 0 || c == 0 || scene_width == 0 {
            return Err(Error::ShapeMismatch(format!(
                "stream must be non-empty, got {t}x{n}x{c}, scene width {scene_width}"
            )));
        }
        if t != scene_width + n - 1 {
            return Err(Error::ShapeMismatch(format!(
                "stream has {t} steps; scene width {scene_width} and {n} columns require {}",
                scene_width + n - 1
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("stream", "column sums must be finite"));
        }
        Ok(Self {
            data,
            scene_width,
            readout,
            pattern_digest,
            config_digest,
        })
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn steps(&self) -> usize {
        self.data.dim().0
    }

    pub fn columns(&self) -> usize {
        self.data.dim().1
    }

    pub fn channels(&self) -> usize {
        self.data.dim().2
    }

    pub fn scene_width(&self) -> usize {
        self.scene_width
    }

    pub fn readout(&self) -> Readout {
        self.readout
    }

    pub fn pattern_digest(&self) -> &str {
        &self.pattern_digest
    }

    pub fn config_digest(&self) -> &str {
        &self.config_digest
    }

    /// Serializes as CSV: a magic line, one metadata line, then one
    /// `t,channel,sums...` row per (step, channel), t-major. Floats use the
    /// shortest representation that parses back to the identical bits.
    pub fn to_csv(&self) -> String {
        let (steps, n, channels) = self.data.dim();
        let mut out = String::new();
        out.push_str(STREAM_MAGIC);
        out.push('\n');
        let _ = writeln!(
            out,
            "{n},{},{steps},{channels},{},{},{}",
            self.scene_width,
            self.readout.name(),
            self.pattern_digest,
            self.config_digest
        );
        for t in 0..steps {
            for c in 0..channels {
                let _ = write!(out, "{t},{c}");
                for i in 0..n {
                    let _ = write!(out, ",{}", self.data[[t, i, c]]);
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut offset = 0usize;
        let mut lines = text.split_inclusive('\n');
        let mut next_line = |offset: &mut usize| -> Result<&str> {
            let raw = lines
                .next()
                .ok_or_else(|| Error::format(text.len(), "unexpected end of stream file"))?;
            let at = *offset;
            *offset += raw.len();
            let line = raw.strip_suffix('\n').ok_or_else(|| {
                Error::format(at + raw.len(), "missing final newline")
            })?;
            Ok(line)
        };

        if next_line(&mut offset)? != STREAM_MAGIC {
            return Err(Error::format(0, format!("expected `{STREAM_MAGIC}` header")));
        }

        let meta_at = offset;
        let meta = next_line(&mut offset)?;
        let fields: Vec<&str> = meta.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::format(
                meta_at,
                format!("metadata line has {} fields, expected 7", fields.len()),
            ));
        }
        let parse_usize = |s: &str, what: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::format(meta_at, format!("bad {what}: `{s}`")))
        };
        let n = parse_usize(fields[0], "column count")?;
        let scene_width = parse_usize(fields[1], "scene width")?;
        let steps = parse_usize(fields[2], "step count")?;
        let channels = parse_usize(fields[3], "channel count")?;
        let readout = Readout::from_name(fields[4])
            .ok_or_else(|| Error::format(meta_at, format!("unknown readout `{}`", fields[4])))?;
        let pattern_digest = fields[5].to_string();
        let config_digest = fields[6].to_string();

        let mut data = Array3::zeros((steps, n, channels));
        for t in 0..steps {
            for c in 0..channels {
                let at = offset;
                let line = next_line(&mut offset)?;
                let mut parts = line.split(',');
                let (row_t, row_c) = match (parts.next(), parts.next()) {
                    (Some(a), Some(b)) => (
                        parse_usize(a, "row step").map_err(|_| {
                            Error::format(at, format!("bad row step `{a}`"))
                        })?,
                        parse_usize(b, "row channel").map_err(|_| {
                            Error::format(at, format!("bad row channel `{b}`"))
                        })?,
                    ),
                    _ => return Err(Error::format(at, "short data row")),
                };
                if row_t != t || row_c != c {
                    return Err(Error::format(
                        at,
                        format!("expected row ({t},{c}), found ({row_t},{row_c})"),
                    ));
                }
                let mut count = 0usize;
                for tok in parts {
                    if count >= n {
                        return Err(Error::format(at, format!("row ({t},{c}) has more than {n} sums")));
                    }
                    let v: f64 = tok.parse().map_err(|_| {
                        Error::format(at, format!("bad column sum `{tok}`"))
                    })?;
                    data[[t, count, c]] = v;
                    count += 1;
                }
                if count != n {
                    return Err(Error::format(
                        at,
                        format!("row ({t},{c}) has {count} sums, expected {n}"),
                    ));
                }
            }
        }
        if lines.next().is_some() {
            return Err(Error::format(offset, "trailing data after stream rows"));
        }
        Self::new(data, scene_width, readout, pattern_digest, config_digest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv(&text)
    }
}

/// Pre-integration frames kept for the 2D diagnostic corrections: one
/// supersampled image per time step.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameStack {
    pub frames: Vec<Array3<f64>>,
    pub supersample: u32,
    pub pattern_digest: String,
    pub config_digest: String,
}

impl FrameStack {
    /// Writes one 16-bit netpbm file per frame plus `manifest.txt` into
    /// `dir`. Each frame is windowed to its own min/max, recorded in the
    /// manifest for dequantization.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut manifest = String::new();
        manifest.push_str(FRAMES_MAGIC);
        manifest.push('\n');
        let (h, w, c) = self
            .frames
            .first()
            .map(|f| f.dim())
            .ok_or_else(|| Error::param("frames", "stack is empty"))?;
        let _ = writeln!(manifest, "frames = {}", self.frames.len());
        let _ = writeln!(manifest, "height = {h}");
        let _ = writeln!(manifest, "width = {w}");
        let _ = writeln!(manifest, "channels = {c}");
        let _ = writeln!(manifest, "supersample = {}", self.supersample);
        let _ = writeln!(manifest, "pattern_digest = {}", self.pattern_digest);
        let _ = writeln!(manifest, "config_digest = {}", self.config_digest);
        for (t, frame) in self.frames.iter().enumerate() {
            let name = format!("frame_{t:05}.{}", if c == 1 { "pgm" } else { "ppm" });
            let (lo, hi) = write_frame(frame, &dir.join(&name))?;
            let _ = writeln!(manifest, "frame = {name} {lo} {hi}");
        }
        std::fs::write(dir.join("manifest.txt"), manifest)?;
        Ok(())
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join("manifest.txt"))?;
        let mut lines = text.lines();
        if lines.next() != Some(FRAMES_MAGIC) {
            return Err(Error::format(0, format!("expected `{FRAMES_MAGIC}` manifest header")));
        }
        let mut keyed = |key: &str| -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| Error::format(text.len(), "manifest truncated"))?;
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(0, format!("expected `{key} = ...` in manifest")))?;
            if k.trim() != key {
                return Err(Error::format(
                    0,
                    format!("expected manifest key `{key}`, found `{}`", k.trim()),
                ));
            }
            Ok(v.trim().to_string())
        };
        let count: usize = keyed("frames")?
            .parse()
            .map_err(|_| Error::format(0, "bad frame count"))?;
        let height: usize = keyed("height")?.parse().map_err(|_| Error::format(0, "bad height"))?;
        let width: usize = keyed("width")?.parse().map_err(|_| Error::format(0, "bad width"))?;
        let channels: usize =
            keyed("channels")?.parse().map_err(|_| Error::format(0, "bad channels"))?;
        let supersample: u32 =
            keyed("supersample")?.parse().map_err(|_| Error::format(0, "bad supersample"))?;
        let pattern_digest = keyed("pattern_digest")?;
        let config_digest = keyed("config_digest")?;

        let mut frames = Vec::with_capacity(count);
        for line in lines {
            let rest = line
                .strip_prefix("frame =")
                .ok_or_else(|| Error::format(0, format!("unexpected manifest line `{line}`")))?
                .trim();
            let mut parts = rest.split_whitespace();
            let (name, lo, hi) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
                (Some(name), Some(lo), Some(hi), None) => (name, lo, hi),
                _ => return Err(Error::format(0, format!("bad frame entry `{rest}`"))),
            };
            let lo: f64 = lo.parse().map_err(|_| Error::format(0, "bad frame min"))?;
            let hi: f64 = hi.parse().map_err(|_| Error::format(0, "bad frame max"))?;
            let frame = read_frame(&dir.join(name), lo, hi)?;
            if frame.dim() != (height, width, channels) {
                return Err(Error::ShapeMismatch(format!(
                    "frame {name} is {:?}, manifest says ({height}, {width}, {channels})",
                    frame.dim()
                )));
            }
            frames.push(frame);
        }
        if frames.len() != count {
            return Err(Error::format(
                text.len(),
                format!("manifest lists {} frames, header says {count}", frames.len()),
            ));
        }
        Ok(Self {
            frames,
            supersample,
            pattern_digest,
            config_digest,
        })
    }
}

/// Writes one frame windowed to its min/max; returns the window.
pub(crate) fn write_frame(frame: &Array3<f64>, path: &Path) -> Result<(f64, f64)> {
    let (h, w, c) = frame.dim();
    let lo = frame.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = frame.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut raster = Raster::new(w, h, c, u16::MAX)?;
    for r in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let q = ((frame[[r, x, ch]] - lo) / span * 65535.0).round();
                raster.set(r, x, ch, q.clamp(0.0, 65535.0) as u16);
            }
        }
    }
    raster.save(path)?;
    Ok((lo, hi))
}

pub(crate) fn read_frame(path: &Path, lo: f64, hi: f64) -> Result<Array3<f64>> {
    let raster = Raster::load(path)?;
    let span = if hi > lo { hi - lo } else { 1.0 };
    let scale = f64::from(raster.maxval);
    Ok(Array3::from_shape_fn(
        (raster.height, raster.width, raster.channels),
        |(r, x, ch)| lo + f64::from(raster.sample(r, x, ch)) / scale * span,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};

    fn sample_stream() -> MeasurementStream {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let data = Array3::from_shape_fn((6, 4, 2), |_| {
            // Awkward values: negatives, tiny magnitudes, many digits.
            (rng.random::<f64>() - 0.5) * 1e3 * rng.random::<f64>().powi(8)
        });
        MeasurementStream::new(data, 3, Readout::Binary, "p".repeat(16), "c".repeat(16)).unwrap()
    }

    #[test]
    fn shape_contract_is_enforced() {
        let ok = MeasurementStream::new(
            Array3::zeros((12, 8, 1)),
            5,
            Readout::Binary,
            String::new(),
            String::new(),
        );
        assert!(ok.is_ok());

        let bad = MeasurementStream::new(
            Array3::zeros((11, 8, 1)),
            5,
            Readout::Binary,
            String::new(),
            String::new(),
        );
        assert!(matches!(bad, Err(Error::ShapeMismatch(_))));

        let nan = MeasurementStream::new(
            Array3::from_elem((12, 8, 1), f64::NAN),
            5,
            Readout::Binary,
            String::new(),
            String::new(),
        );
        assert!(nan.is_err());
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let s = sample_stream();
        let text = s.to_csv();
        let back = MeasurementStream::from_csv(&text).unwrap();
        assert_eq!(back, s);
        for (a, b) in back.data().iter().zip(s.data().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.to_csv(), text);
    }

    #[test]
    fn csv_rejects_corruption() {
        let s = sample_stream();
        let text = s.to_csv();

        assert!(matches!(
            MeasurementStream::from_csv(&text.replace(STREAM_MAGIC, "bogus 9")),
            Err(Error::Format { offset: 0, .. })
        ));

        let truncated = &text[..text.len() - 20];
        assert!(MeasurementStream::from_csv(truncated).is_err());

        let mut extra = text.clone();
        extra.push_str("6,0,1,2,3,4\n");
        assert!(MeasurementStream::from_csv(&extra).is_err());

        let garbled = text.replacen(",binary,", ",ternary,", 1);
        assert!(matches!(
            MeasurementStream::from_csv(&garbled),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stream.csv");
        let s = sample_stream();
        s.save(&path).unwrap();
        assert_eq!(MeasurementStream::load(&path).unwrap(), s);
    }

    #[test]
    fn frame_stack_round_trips_within_window_quantization() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let frames: Vec<Array3<f64>> = (0..3)
            .map(|_| Array3::from_shape_fn((8, 8, 1), |_| rng.random::<f64>() * 4.0 - 1.0))
            .collect();
        let stack = FrameStack {
            frames,
            supersample: 2,
            pattern_digest: "p".repeat(16),
            config_digest: "c".repeat(16),
        };
        let dir = tempfile::tempdir().unwrap();
        stack.save_dir(dir.path()).unwrap();
        let back = FrameStack::load_dir(dir.path()).unwrap();
        assert_eq!(back.frames.len(), 3);
        assert_eq!(back.supersample, 2);
        assert_eq!(back.pattern_digest, stack.pattern_digest);
        for (a, b) in back.frames.iter().zip(stack.frames.iter()) {
            let lo = b.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = b.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let tol = (hi - lo) / 65535.0;
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() <= tol * 0.5 + 1e-12);
            }
        }
    }

    #[test]
    fn constant_frame_survives_windowing() {
        let stack = FrameStack {
            frames: vec![Array3::from_elem((4, 4, 3), 2.5)],
            supersample: 1,
            pattern_digest: String::new(),
            config_digest: String::new(),
        };
        let dir = tempfile::tempdir().unwrap();
        stack.save_dir(dir.path()).unwrap();
        let back = FrameStack::load_dir(dir.path()).unwrap();
        assert!(back.frames[0].iter().all(|&v| (v - 2.5).abs() < 1e-12));
    }
}
