//! Experiment configuration: a flat `key = value` store with typed
//! accessors that build the library-level parameter structs.
//!
//! The on-disk form is a versioned text file, `#` comments allowed;
//! command-line `--set key=value` pairs override file values. The digest
//! of the canonical serialization identifies an experiment.

use std::collections::BTreeMap;
use std::path::Path;

use pushframe::digest::digest_bytes;
use pushframe::error::{Error, Result};
use pushframe::forward::{IlluminationField, OpticsConfig, Readout};
use pushframe::pattern::{HadamardMatrix, PatternSpec};
use pushframe::recon::Synthesis;
use pushframe::scene::{SceneImage, SyntheticKind};

const CONFIG_MAGIC: &str = "pushframe-config 1";

/// Correction path selected by `recon.mode` / `--mode`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReconMode {
    Naive,
    Debiased,
    FlatField,
    TwoD,
}

impl ReconMode {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "naive" => Ok(ReconMode::Naive),
            "debiased" => Ok(ReconMode::Debiased),
            "flatfield" => Ok(ReconMode::FlatField),
            "2d" => Ok(ReconMode::TwoD),
            other => Err(Error::param(
                "recon.mode",
                format!("unknown mode `{other}` (naive|debiased|flatfield|2d)"),
            )),
        }
    }

    pub fn synthesis(self) -> Synthesis {
        match self {
            ReconMode::Naive => Synthesis::Naive,
            _ => Synthesis::Debiased,
        }
    }
}

/// Keys understood by the configuration, with their defaults.
const DEFAULTS: &[(&str, &str)] = &[
    ("pattern.n", "128"),
    ("pattern.seed", ""),
    ("pattern.max_run", ""),
    ("pattern.scale", "4"),
    ("scene.source", "checkerboard:8"),
    ("scene.width", "192"),
    ("scene.channels", "1"),
    ("optics.contrast_floor", "0"),
    ("optics.blur_sigma", "0"),
    ("optics.illumination", "uniform"),
    ("optics.step_error", "0"),
    ("optics.stray_light", "0"),
    ("optics.read_noise", "0"),
    ("optics.shot_noise", "false"),
    ("optics.photons_per_unit", "10000"),
    ("optics.supersample", "4"),
    ("optics.shear", "0"),
    ("optics.readout", "binary"),
    ("recon.mode", "debiased"),
    ("recon.fast", "true"),
    ("seed", "0"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    entries: BTreeMap<String, String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            entries: DEFAULTS
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::default();
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, line)) if line.trim() == CONFIG_MAGIC => {}
            _ => return Err(Error::format(0, format!("expected `{CONFIG_MAGIC}` header"))),
        }
        for (idx, line) in lines {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::format(0, format!("line {}: expected `key = value`", idx + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    /// Sets one key, rejecting names the configuration does not know.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !DEFAULTS.iter().any(|(k, _)| *k == key) {
            return Err(Error::param("config", format!("unknown key `{key}`")));
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies `key=value` override strings (from `--set`).
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for pair in overrides {
            let (key, value) = pair.split_once('=').ok_or_else(|| {
                Error::param("--set", format!("expected KEY=VALUE, got `{pair}`"))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn canonical(&self) -> String {
        let mut out = String::from(CONFIG_MAGIC);
        out.push('\n');
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn digest(&self) -> String {
        digest_bytes(self.canonical().as_bytes())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.canonical())?;
        Ok(())
    }

    fn get(&self, key: &str) -> &str {
        self.entries.get(key).map(String::as_str).unwrap_or("")
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)
            .parse()
            .map_err(|_| Error::param("config", format!("bad value for `{key}`: `{}`", self.get(key))))
    }

    fn parse_opt<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        if self.get(key).is_empty() {
            return Ok(None);
        }
        self.parse(key).map(Some)
    }

    pub fn order(&self) -> Result<usize> {
        self.parse("pattern.n")
    }

    /// Builds the pattern: identity when `pattern.seed` is unset, a
    /// scrambled one otherwise.
    pub fn pattern(&self) -> Result<PatternSpec> {
        let base = HadamardMatrix::sylvester(self.order()?)?;
        let scale: u32 = self.parse("pattern.scale")?;
        let pattern = match self.parse_opt::<u64>("pattern.seed")? {
            None => PatternSpec::identity(base),
            Some(seed) => {
                let limit = match self.parse_opt::<usize>("pattern.max_run")? {
                    Some(limit) => limit,
                    None => PatternSpec::default_run_limit(base.order()),
                };
                PatternSpec::scramble(base, seed, limit)?
            }
        };
        Ok(pattern.with_scale(scale))
    }

    pub fn scene(&self) -> Result<SceneImage> {
        let n = self.order()?;
        let width: usize = self.parse("scene.width")?;
        let channels: usize = self.parse("scene.channels")?;
        load_scene(self.get("scene.source"), n, width, channels)
    }

    pub fn optics(&self) -> Result<OpticsConfig> {
        let n = self.order()?;
        let cfg = OpticsConfig {
            contrast_floor: self.parse("optics.contrast_floor")?,
            blur_sigma: self.parse("optics.blur_sigma")?,
            illumination: parse_illumination(self.get("optics.illumination"), n)?,
            step_error: self.parse("optics.step_error")?,
            stray_light: self.parse("optics.stray_light")?,
            read_noise: self.parse("optics.read_noise")?,
            shot_noise: self.parse("optics.shot_noise")?,
            photons_per_unit: self.parse("optics.photons_per_unit")?,
            supersample: self.parse("optics.supersample")?,
            shear_rows_per_column: self.parse("optics.shear")?,
            readout: Readout::from_name(self.get("optics.readout")).ok_or_else(|| {
                Error::param(
                    "optics.readout",
                    format!("unknown readout `{}`", self.get("optics.readout")),
                )
            })?,
            seed: self.parse("seed")?,
        };
        cfg.validate(n)?;
        Ok(cfg)
    }

    pub fn mode(&self) -> Result<ReconMode> {
        ReconMode::from_name(self.get("recon.mode"))
    }

    pub fn fast(&self) -> Result<bool> {
        self.parse("recon.fast")
    }
}

/// Parses the illumination encodings:
/// `uniform`, `column-gains:v,v,...`, `column-ramp:lo,hi`,
/// `row-ramp:lo,hi`, `vignette:cy,cx,sigma,floor`.
pub fn parse_illumination(spec: &str, n: usize) -> Result<IlluminationField> {
    let bad = |reason: String| Error::param("optics.illumination", reason);
    if spec == "uniform" {
        return Ok(IlluminationField::Uniform);
    }
    let (kind, rest) = spec
        .split_once(':')
        .ok_or_else(|| bad(format!("unknown field `{spec}`")))?;
    let numbers = |s: &str| -> Result<Vec<f64>> {
        s.split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| bad(format!("bad number `{t}`")))
            })
            .collect()
    };
    let ramp = |lo: f64, hi: f64| -> Vec<f64> {
        (0..n)
            .map(|i| {
                if n == 1 {
                    lo
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect()
    };
    match kind {
        "column-gains" => Ok(IlluminationField::ColumnGains(numbers(rest)?)),
        "column-ramp" => match numbers(rest)?[..] {
            [lo, hi] => Ok(IlluminationField::ColumnGains(ramp(lo, hi))),
            _ => Err(bad("column-ramp needs `lo,hi`".into())),
        },
        "row-ramp" => match numbers(rest)?[..] {
            [lo, hi] => Ok(IlluminationField::Separable {
                rows: ramp(lo, hi),
                cols: vec![1.0; n],
            }),
            _ => Err(bad("row-ramp needs `lo,hi`".into())),
        },
        "vignette" => match numbers(rest)?[..] {
            [cy, cx, sigma, floor] => Ok(IlluminationField::Vignette {
                center: (cy, cx),
                sigma,
                floor,
            }),
            _ => Err(bad("vignette needs `cy,cx,sigma,floor`".into())),
        },
        other => Err(bad(format!("unknown field kind `{other}`"))),
    }
}

/// Resolves a scene source: a synthetic spec (`uniform:level`, `hgrad`,
/// `vgrad`, `checkerboard:period`, `delta:row,col`) or an image path.
/// Images are resampled to `n` rows when needed.
pub fn load_scene(source: &str, n: usize, width: usize, channels: usize) -> Result<SceneImage> {
    let bad = |reason: String| Error::param("scene.source", reason);
    let kind = match source.split_once(':') {
        Some(("uniform", level)) => Some(SyntheticKind::Uniform {
            level: level
                .parse()
                .map_err(|_| bad(format!("bad level `{level}`")))?,
        }),
        Some(("checkerboard", period)) => Some(SyntheticKind::Checkerboard {
            period: period
                .parse()
                .map_err(|_| bad(format!("bad period `{period}`")))?,
        }),
        Some(("delta", pos)) => {
            let (row, col) = pos
                .split_once(',')
                .ok_or_else(|| bad("delta needs `row,col`".into()))?;
            Some(SyntheticKind::Delta {
                row: row.parse().map_err(|_| bad(format!("bad row `{row}`")))?,
                col: col.parse().map_err(|_| bad(format!("bad col `{col}`")))?,
            })
        }
        None if source == "hgrad" => Some(SyntheticKind::HorizontalGradient),
        None if source == "vgrad" => Some(SyntheticKind::VerticalGradient),
        _ => None,
    };
    match kind {
        Some(kind) => SceneImage::synthetic(kind, n, width, channels),
        None => {
            let scene = SceneImage::load(Path::new(source))?;
            if scene.height() == n {
                Ok(scene)
            } else {
                scene.resample_height(n)
            }
        }
    }
}
