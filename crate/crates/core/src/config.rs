//! Plain `key = value` configuration files and the resolved run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::gating::{DEFAULT_BINARIZE_THRESHOLD, DEFAULT_HORIZON};
use crate::sim::labels::CubeMapping;
use crate::sim::{PixelModelParams, DEFAULT_RESOLUTION, DEFAULT_SIGMA_CELLS};
use crate::tore::{DEFAULT_DEPTH, DEFAULT_TAU_US};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("duplicate key `{0}`")]
    Duplicate(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {reason}")]
    BadValue { key: String, reason: String },
    #[error("missing required setting `{0}`")]
    Missing(String),
    #[error("path for `{key}` does not exist: {path}")]
    MissingPath { key: String, path: String },
    #[error("io: {0}")]
    Io(String),
}

/// Ordered key/value pairs. Blank lines and `#` comments are skipped.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = split_pair(line).map_err(|reason| ConfigError::Syntax {
                line: i + 1,
                reason,
            })?;
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(ConfigError::Duplicate(k.to_string()));
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

/// Splits `key=value`, trimming both sides.
pub fn split_pair(s: &str) -> Result<(&str, &str), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    let k = k.trim();
    if k.is_empty() {
        return Err("empty key".into());
    }
    Ok((k, v.trim()))
}

/// Which mask source the filter stage uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskSource {
    Reference,
    External,
}

impl MaskSource {
    fn as_str(self) -> &'static str {
        match self {
            MaskSource::Reference => "reference",
            MaskSource::External => "external",
        }
    }
}

/// Every tunable the subcommands read. Unset paths are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub masks: Option<PathBuf>,
    pub background: Option<PathBuf>,
    pub skeleton: Option<PathBuf>,
    pub camera: Option<PathBuf>,

    pub width: u16,
    pub height: u16,

    pub tore_depth: usize,
    pub tau_us: u64,
    pub window_us: u64,
    pub emit_empty: bool,
    pub span_us: Option<u64>,

    pub theta_pos: f64,
    pub theta_neg: f64,
    pub leak_rate_hz: f64,
    pub shot_noise_scale: f64,
    pub log_eps: f64,
    pub hot_pixels: Vec<(u16, u16)>,
    pub hot_rate_hz: f64,
    pub interpolate: usize,
    pub heatmap_resolution: usize,
    pub heatmap_sigma: f64,
    pub half_depth_mm: f64,
    pub seed: u64,

    pub beta: f64,
    pub horizon: usize,
    pub mask_source: MaskSource,
    pub binarize_threshold: f64,
    pub activity_percentile: f64,
    pub score_decay: f64,
    pub score_floor: f64,

    pub alpha_mm: f64,
    pub occlusion_prob: f64,
    pub occlusion_max: u16,
    pub group_by: Vec<String>,
    pub betas: Vec<f64>,

    pub bench_events: usize,
    pub bench_windows: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let px = PixelModelParams::default();
        Self {
            input: None,
            output: None,
            masks: None,
            background: None,
            skeleton: None,
            camera: None,
            width: 346,
            height: 260,
            tore_depth: DEFAULT_DEPTH,
            tau_us: DEFAULT_TAU_US,
            window_us: 20_000,
            emit_empty: true,
            span_us: None,
            theta_pos: px.theta_pos,
            theta_neg: px.theta_neg,
            leak_rate_hz: px.leak_rate_hz,
            shot_noise_scale: px.shot_noise_scale,
            log_eps: px.eps,
            hot_pixels: Vec::new(),
            hot_rate_hz: px.hot_rate_hz,
            interpolate: 1,
            heatmap_resolution: DEFAULT_RESOLUTION,
            heatmap_sigma: DEFAULT_SIGMA_CELLS,
            half_depth_mm: CubeMapping::DEFAULT_HALF_DEPTH_MM,
            seed: 0,
            beta: 0.5,
            horizon: DEFAULT_HORIZON,
            mask_source: MaskSource::Reference,
            binarize_threshold: DEFAULT_BINARIZE_THRESHOLD,
            activity_percentile: 0.5,
            score_decay: 0.9,
            score_floor: 0.0,
            alpha_mm: 150.0,
            occlusion_prob: 0.0,
            occlusion_max: 80,
            group_by: Vec::new(),
            betas: vec![0.0, 0.25, 0.5, 0.75, 0.9, 1.0],
            bench_events: 2_000_000,
            bench_windows: 50,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.into(),
        reason: e.to_string(),
    })
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| num(key, s))
        .collect()
}

fn path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn join<T: std::fmt::Debug>(items: &[T]) -> String {
    items
        .iter()
        .map(|v| format!("{v:?}"))
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let kv = KeyValues::parse(text)?;
        let mut c = Self::default();
        for (k, v) in kv.iter() {
            c.set(k, v)?;
        }
        Ok(c)
    }

    pub fn load(file: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(file)
            .map_err(|e| ConfigError::Io(format!("{}: {e}", file.display())))?;
        Self::parse(&text)
    }

    /// Applies one `key=value` override.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        match key {
            "input" => self.input = path(v),
            "output" => self.output = path(v),
            "masks" => self.masks = path(v),
            "background" => self.background = path(v),
            "skeleton" => self.skeleton = path(v),
            "camera" => self.camera = path(v),
            "width" => self.width = num(key, v)?,
            "height" => self.height = num(key, v)?,
            "tore_depth" => self.tore_depth = num(key, v)?,
            "tau_us" => self.tau_us = num(key, v)?,
            "window_us" => self.window_us = num(key, v)?,
            "emit_empty" => self.emit_empty = num(key, v)?,
            "span_us" => {
                self.span_us = if v.is_empty() {
                    None
                } else {
                    Some(num(key, v)?)
                }
            }
            "theta_pos" => self.theta_pos = num(key, v)?,
            "theta_neg" => self.theta_neg = num(key, v)?,
            "leak_rate_hz" => self.leak_rate_hz = num(key, v)?,
            "shot_noise_scale" => self.shot_noise_scale = num(key, v)?,
            "log_eps" => self.log_eps = num(key, v)?,
            "hot_pixels" => {
                self.hot_pixels = v
                    .split(';')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        let xy: Vec<u16> = list(key, s)?;
                        match xy[..] {
                            [x, y] => Ok((x, y)),
                            _ => Err(ConfigError::BadValue {
                                key: key.into(),
                                reason: format!("expected x,y pairs, got `{s}`"),
                            }),
                        }
                    })
                    .collect::<Result<_, _>>()?
            }
            "hot_rate_hz" => self.hot_rate_hz = num(key, v)?,
            "interpolate" => self.interpolate = num(key, v)?,
            "heatmap_resolution" => self.heatmap_resolution = num(key, v)?,
            "heatmap_sigma" => self.heatmap_sigma = num(key, v)?,
            "half_depth_mm" => self.half_depth_mm = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "beta" => self.beta = num(key, v)?,
            "horizon" => self.horizon = num(key, v)?,
            "mask_source" => {
                self.mask_source = match v {
                    "reference" => MaskSource::Reference,
                    "external" => MaskSource::External,
                    _ => {
                        return Err(ConfigError::BadValue {
                            key: key.into(),
                            reason: format!("`{v}` is not reference|external"),
                        })
                    }
                }
            }
            "binarize_threshold" => self.binarize_threshold = num(key, v)?,
            "activity_percentile" => self.activity_percentile = num(key, v)?,
            "score_decay" => self.score_decay = num(key, v)?,
            "score_floor" => self.score_floor = num(key, v)?,
            "alpha_mm" => self.alpha_mm = num(key, v)?,
            "occlusion_prob" => self.occlusion_prob = num(key, v)?,
            "occlusion_max" => self.occlusion_max = num(key, v)?,
            "group_by" => self.group_by = list(key, v)?,
            "betas" => self.betas = list(key, v)?,
            "bench_events" => self.bench_events = num(key, v)?,
            "bench_windows" => self.bench_windows = num(key, v)?,
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// Renders every setting; `parse(render(c)) == c`.
    pub fn render(&self) -> String {
        let p = |o: &Option<PathBuf>| {
            o.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        };
        let hot = self
            .hot_pixels
            .iter()
            .map(|(x, y)| format!("{x},{y}"))
            .collect::<Vec<_>>()
            .join(";");
        let rows: Vec<(&str, String)> = vec![
            ("input", p(&self.input)),
            ("output", p(&self.output)),
            ("masks", p(&self.masks)),
            ("background", p(&self.background)),
            ("skeleton", p(&self.skeleton)),
            ("camera", p(&self.camera)),
            ("width", self.width.to_string()),
            ("height", self.height.to_string()),
            ("tore_depth", self.tore_depth.to_string()),
            ("tau_us", self.tau_us.to_string()),
            ("window_us", self.window_us.to_string()),
            ("emit_empty", self.emit_empty.to_string()),
            (
                "span_us",
                self.span_us.map(|v| v.to_string()).unwrap_or_default(),
            ),
            ("theta_pos", format!("{:?}", self.theta_pos)),
            ("theta_neg", format!("{:?}", self.theta_neg)),
            ("leak_rate_hz", format!("{:?}", self.leak_rate_hz)),
            ("shot_noise_scale", format!("{:?}", self.shot_noise_scale)),
            ("log_eps", format!("{:?}", self.log_eps)),
            ("hot_pixels", hot),
            ("hot_rate_hz", format!("{:?}", self.hot_rate_hz)),
            ("interpolate", self.interpolate.to_string()),
            ("heatmap_resolution", self.heatmap_resolution.to_string()),
            ("heatmap_sigma", format!("{:?}", self.heatmap_sigma)),
            ("half_depth_mm", format!("{:?}", self.half_depth_mm)),
            ("seed", self.seed.to_string()),
            ("beta", format!("{:?}", self.beta)),
            ("horizon", self.horizon.to_string()),
            ("mask_source", self.mask_source.as_str().to_string()),
            (
                "binarize_threshold",
                format!("{:?}", self.binarize_threshold),
            ),
            (
                "activity_percentile",
                format!("{:?}", self.activity_percentile),
            ),
            ("score_decay", format!("{:?}", self.score_decay)),
            ("score_floor", format!("{:?}", self.score_floor)),
            ("alpha_mm", format!("{:?}", self.alpha_mm)),
            ("occlusion_prob", format!("{:?}", self.occlusion_prob)),
            ("occlusion_max", self.occlusion_max.to_string()),
            ("group_by", self.group_by.join(",")),
            ("betas", join(&self.betas)),
            ("bench_events", self.bench_events.to_string()),
            ("bench_windows", self.bench_windows.to_string()),
        ];
        let mut out = String::new();
        for (k, v) in rows {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        }
        out
    }

    pub fn pixel_params(&self) -> PixelModelParams {
        PixelModelParams {
            theta_pos: self.theta_pos,
            theta_neg: self.theta_neg,
            leak_rate_hz: self.leak_rate_hz,
            shot_noise_scale: self.shot_noise_scale,
            eps: self.log_eps,
            seed: self.seed,
            hot_pixels: self.hot_pixels.clone(),
            hot_rate_hz: self.hot_rate_hz,
        }
    }

    /// Checks numeric ranges shared by all subcommands.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, reason: String| {
            Err(ConfigError::BadValue {
                key: key.into(),
                reason,
            })
        };
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if self.width == 0 || self.height == 0 {
            return bad("width", format!("{}x{} sensor", self.width, self.height));
        }
        if !(1..=255).contains(&self.tore_depth) {
            return bad("tore_depth", format!("{} not in 1..=255", self.tore_depth));
        }
        if self.tau_us < 2 {
            return bad("tau_us", format!("{} must exceed 1", self.tau_us));
        }
        if self.window_us == 0 {
            return bad("window_us", "must be positive".into());
        }
        if let Err(e) = self.pixel_params().validate() {
            return bad("theta_pos", e.to_string());
        }
        if self.interpolate == 0 {
            return bad("interpolate", "must be at least 1".into());
        }
        if self.heatmap_resolution < 8 {
            return bad(
                "heatmap_resolution",
                format!("{} < 8", self.heatmap_resolution),
            );
        }
        if !(self.heatmap_sigma > 0.0) {
            return bad("heatmap_sigma", "must be positive".into());
        }
        if !(self.half_depth_mm > 0.0) {
            return bad("half_depth_mm", "must be positive".into());
        }
        if !unit(self.beta) {
            return bad("beta", format!("{} outside [0, 1]", self.beta));
        }
        if let Some(b) = self.betas.iter().find(|b| !unit(**b)) {
            return bad("betas", format!("{b} outside [0, 1]"));
        }
        if self.horizon == 0 {
            return bad("horizon", "must be at least 1".into());
        }
        for (key, v) in [
            ("binarize_threshold", self.binarize_threshold),
            ("activity_percentile", self.activity_percentile),
            ("score_decay", self.score_decay),
            ("score_floor", self.score_floor),
            ("occlusion_prob", self.occlusion_prob),
        ] {
            if !unit(v) {
                return bad(key, format!("{v} outside [0, 1]"));
            }
        }
        if !(self.alpha_mm >= 0.0) {
            return bad("alpha_mm", "must be non-negative".into());
        }
        if self.occlusion_max == 0 {
            return bad("occlusion_max", "must be at least 1".into());
        }
        for g in &self.group_by {
            if !matches!(g.as_str(), "lighting" | "background" | "view") {
                return bad("group_by", format!("unknown axis `{g}`"));
            }
        }
        Ok(())
    }

    /// Fails if a set input path is absent on disk.
    pub fn check_paths(&self, keys: &[&str]) -> Result<(), ConfigError> {
        for &key in keys {
            let p = match key {
                "input" => &self.input,
                "masks" => &self.masks,
                "background" => &self.background,
                "skeleton" => &self.skeleton,
                "camera" => &self.camera,
                _ => continue,
            };
            if let Some(p) = p {
                if !p.exists() {
                    return Err(ConfigError::MissingPath {
                        key: key.into(),
                        path: p.display().to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn require<'a>(&self, key: &str, v: &'a Option<PathBuf>) -> Result<&'a Path, ConfigError> {
        v.as_deref().ok_or_else(|| ConfigError::Missing(key.into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_values_skip_comments() {
        let kv = KeyValues::parse("# hi\n a = 1 \n\nb=x=y\n").unwrap();
        assert_eq!(kv.get("a"), Some("1"));
        assert_eq!(kv.get("b"), Some("x=y"));
        assert_eq!(
            KeyValues::parse("a=1\na=2"),
            Err(ConfigError::Duplicate("a".into()))
        );
        assert!(matches!(
            KeyValues::parse("oops"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
    }

    #[test]
    fn default_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::parse(&c.render()).unwrap(), c);
    }

    #[test]
    fn edited_round_trip() {
        let mut c = RunConfig::default();
        c.set("input", "a/b.evt").unwrap();
        c.set("hot_pixels", "1,2;3,4").unwrap();
        c.set("beta", "0.1").unwrap();
        c.set("betas", "0.3, 0.7").unwrap();
        c.set("group_by", "view,lighting").unwrap();
        c.set("span_us", "1000000").unwrap();
        c.set("mask_source", "external").unwrap();
        c.theta_pos = 0.1 + 0.2;
        let back = RunConfig::parse(&c.render()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hot_pixels, vec![(1, 2), (3, 4)]);
    }

    #[test]
    fn rejects_unknown_and_bad() {
        let mut c = RunConfig::default();
        assert_eq!(
            c.set("nope", "1"),
            Err(ConfigError::UnknownKey("nope".into()))
        );
        assert!(matches!(
            c.set("seed", "-1"),
            Err(ConfigError::BadValue { .. })
        ));
        c.beta = 1.5;
        assert!(c.validate().is_err());
    }
}
