//! Run configuration: strict TOML schema, validation, and located diagnostics.

use std::ops::Range;
use std::path::{Path, PathBuf};

use crossfield::{ContourSpec, Error, ModelParams, SolverOptions, StepControl, Window};
use crossfield::vortex::{TrackOptions, VortexOptions};
use serde::{Deserialize, Serialize};

/// Problem with a configuration file, already rendered with its location.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Output directory; `--out` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Seed for randomized audit contours.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub contour: ContourSpec,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub state: StateConfig,
    #[serde(default)]
    pub resonance: ResonanceConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub wavefunction: WavefunctionConfig,
    #[serde(default)]
    pub vortices: VorticesConfig,
    #[serde(default)]
    pub phase_map: GridConfig,
    #[serde(default = "GridConfig::quiver_default")]
    pub quiver: GridConfig,
    #[serde(default)]
    pub circulation: CirculationConfig,
}

fn default_seed() -> u64 {
    20_240_607
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output: None,
            seed: default_seed(),
            model: ModelConfig::default(),
            contour: ContourSpec::default(),
            solver: SolverOptions::default(),
            state: StateConfig::default(),
            resonance: ResonanceConfig::default(),
            sweep: SweepConfig::default(),
            wavefunction: WavefunctionConfig::default(),
            vortices: VorticesConfig::default(),
            phase_map: GridConfig::default(),
            quiver: GridConfig::quiver_default(),
            circulation: CirculationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub field: f64,
    pub binding_energy: f64,
    /// Landau level the resonance branch emerges from.
    pub level: u32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { field: 0.1555, binding_energy: -6.4, level: 3 }
    }
}

impl ModelConfig {
    pub fn params(&self) -> ModelParams {
        ModelParams { field: self.field, binding_energy: self.binding_energy }
    }
}

/// How the working resonance is obtained for wavefunction-based tasks.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StateConfig {
    /// Use this energy `[re, im]` directly, skipping root refinement.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy: Option<[f64; 2]>,
    /// Starting guess `[re, im]` for root refinement; defaults to the central
    /// perturbative seed of `model.level`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResonanceConfig {
    /// Starting guesses `[re, im]`; all perturbative seeds of `model.level` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<[f64; 2]>>,
    /// Fields to solve at; `[model.field]` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fields: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Bracket {
    /// `false` skips the search.
    pub enabled: bool,
    pub lo: f64,
    pub hi: f64,
    pub tol: f64,
}

impl Default for Bracket {
    fn default() -> Self {
        Self { enabled: true, lo: 0.12, hi: 0.19, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
    pub min_step: f64,
    pub max_jump: f64,
    /// Starting guess `[re, im]` at `start`; the central seed of `model.level` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<[f64; 2]>,
    /// Search this bracket for the field minimizing `|Im E|`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stabilization: Option<Bracket>,
    pub render: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let c = StepControl::default();
        Self {
            start: 0.02,
            stop: 0.30,
            step: c.step,
            min_step: c.min_step,
            max_jump: c.max_jump,
            seed: None,
            stabilization: Some(Bracket::default()),
            render: false,
        }
    }
}

impl SweepConfig {
    pub fn control(&self) -> StepControl {
        StepControl { step: self.step, min_step: self.min_step, max_jump: self.max_jump }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WavefunctionConfig {
    pub x_min: f64,
    pub x_max: f64,
    /// Height of the slice.
    pub y: f64,
    pub points: usize,
}

impl Default for WavefunctionConfig {
    fn default() -> Self {
        Self { x_min: -5.0, x_max: 5.0, y: 0.0, points: 1001 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VorticesConfig {
    pub window: Window,
    pub nx: usize,
    pub ny: usize,
    pub options: VortexOptions,
    /// Follow the vortices along a field sweep.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub track: Option<TrackConfig>,
}

impl Default for VorticesConfig {
    fn default() -> Self {
        Self {
            window: Window::square(5.0),
            nx: 101,
            ny: 101,
            options: VortexOptions::default(),
            track: Some(TrackConfig::default()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackConfig {
    /// `false` skips the tracking.
    pub enabled: bool,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
    /// Window the tracks must stay inside.
    pub window: Window,
    pub options: TrackOptions,
    pub render: bool,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            start: 0.13,
            stop: 0.18,
            step: 0.0025,
            window: Window::square(6.0),
            options: TrackOptions::default(),
            render: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub window: Window,
    pub nx: usize,
    pub ny: usize,
    pub render: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { window: Window::square(5.0), nx: 201, ny: 201, render: false }
    }
}

impl GridConfig {
    fn quiver_default() -> Self {
        Self { nx: 41, ny: 41, ..Self::default() }
    }
}

/// Randomized circulation audit around the located vortices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CirculationConfig {
    pub contours: usize,
}

impl Default for CirculationConfig {
    fn default() -> Self {
        Self { contours: 20 }
    }
}

/// Dotted key path plus message for a failed range check.
struct Invalid {
    path: String,
    message: String,
}

fn bad(path: impl Into<String>, message: impl Into<String>) -> Invalid {
    Invalid { path: path.into(), message: message.into() }
}

fn from_core(section: &str, e: Error) -> Invalid {
    match e {
        Error::InvalidParameter { name, reason } => bad(format!("{section}.{name}"), reason),
        other => bad(section, other.to_string()),
    }
}

fn positive(path: &str, v: f64) -> Result<(), Invalid> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(bad(path, format!("must be finite and > 0, got {v}")))
    }
}

fn finite(path: &str, v: f64) -> Result<(), Invalid> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(bad(path, format!("must be finite, got {v}")))
    }
}

fn at_least(path: &str, v: usize, min: usize) -> Result<(), Invalid> {
    if v >= min {
        Ok(())
    } else {
        Err(bad(path, format!("must be at least {min}, got {v}")))
    }
}

fn check_window(path: &str, w: &Window) -> Result<(), Invalid> {
    w.validate().map_err(|e| match e {
        Error::InvalidParameter { reason, .. } => bad(path, reason),
        other => bad(path, other.to_string()),
    })
}

impl RunConfig {
    fn check(&self) -> Result<(), Invalid> {
        self.model.params().validate().map_err(|e| from_core("model", e))?;
        if !(1..=40).contains(&self.model.level) {
            return Err(bad("model.level", format!("must be within 1..=40, got {}", self.model.level)));
        }
        self.contour.validate().map_err(|e| from_core("contour", e))?;
        self.solver.validate().map_err(|e| from_core("solver", e))?;
        for (k, v) in [self.state.energy, self.state.seed].iter().enumerate() {
            if let Some([re, im]) = v {
                let key = if k == 0 { "state.energy" } else { "state.seed" };
                finite(key, *re)?;
                finite(key, *im)?;
            }
        }
        if let Some(seeds) = &self.resonance.seeds {
            if seeds.is_empty() {
                return Err(bad("resonance.seeds", "seed list is empty"));
            }
            for s in seeds {
                finite("resonance.seeds", s[0])?;
                finite("resonance.seeds", s[1])?;
            }
        }
        if let Some(fields) = &self.resonance.fields {
            if fields.is_empty() {
                return Err(bad("resonance.fields", "field list is empty"));
            }
            for &f in fields {
                if !(f.is_finite() && f >= 0.0) {
                    return Err(bad("resonance.fields", format!("fields must be finite and >= 0, got {f}")));
                }
            }
        }
        let s = &self.sweep;
        for (k, v) in [("sweep.start", s.start), ("sweep.stop", s.stop)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(bad(k, format!("must be finite and >= 0, got {v}")));
            }
        }
        if s.start == s.stop {
            return Err(bad("sweep.stop", "must differ from sweep.start"));
        }
        s.control().validate().map_err(|e| from_core("sweep", e))?;
        if let Some([re, im]) = s.seed {
            finite("sweep.seed", re)?;
            finite("sweep.seed", im)?;
        }
        if let Some(b) = &s.stabilization {
            if !(b.lo.is_finite() && b.hi.is_finite() && b.lo >= 0.0 && b.lo < b.hi) {
                return Err(bad("sweep.stabilization.hi", format!("need 0 <= lo < hi, got [{}, {}]", b.lo, b.hi)));
            }
            positive("sweep.stabilization.tol", b.tol)?;
        }
        let w = &self.wavefunction;
        finite("wavefunction.x_min", w.x_min)?;
        finite("wavefunction.x_max", w.x_max)?;
        finite("wavefunction.y", w.y)?;
        if w.x_min >= w.x_max {
            return Err(bad("wavefunction.x_max", "must exceed x_min"));
        }
        at_least("wavefunction.points", w.points, 2)?;
        let v = &self.vortices;
        check_window("vortices.window", &v.window)?;
        at_least("vortices.nx", v.nx, 2)?;
        at_least("vortices.ny", v.ny, 2)?;
        positive("vortices.options.zero_tol", v.options.zero_tol)?;
        positive("vortices.options.charge_radius", v.options.charge_radius)?;
        positive("vortices.options.merge_radius", v.options.merge_radius)?;
        at_least("vortices.options.max_newton", v.options.max_newton, 1)?;
        if let Some(t) = &v.track {
            for (k, x) in [("vortices.track.start", t.start), ("vortices.track.stop", t.stop)] {
                if !(x.is_finite() && x >= 0.0) {
                    return Err(bad(k, format!("must be finite and >= 0, got {x}")));
                }
            }
            if t.start >= t.stop {
                return Err(bad("vortices.track.stop", "must exceed start"));
            }
            positive("vortices.track.step", t.step)?;
            check_window("vortices.track.window", &t.window)?;
            positive("vortices.track.options.max_move", t.options.max_move)?;
        }
        for (name, g) in [("phase_map", &self.phase_map), ("quiver", &self.quiver)] {
            check_window(&format!("{name}.window"), &g.window)?;
            at_least(&format!("{name}.nx"), g.nx, 2)?;
            at_least(&format!("{name}.ny"), g.ny, 2)?;
        }
        Ok(())
    }

    /// Parses and validates `src`; `origin` names the file in diagnostics.
    pub fn parse(src: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(src).map_err(|e| ConfigError {
            message: match e.span() {
                Some(span) => format!("{origin}:{}: {}", line_col(src, span.start), e.message()),
                None => format!("{origin}: {}", e.message()),
            },
        })?;
        cfg.validate_located(src, origin)?;
        Ok(cfg)
    }

    /// Range checks with the offending key located in `src` when possible.
    pub fn validate_located(&self, src: &str, origin: &str) -> Result<(), ConfigError> {
        self.check().map_err(|inv| {
            let place = locate(src, &inv.path)
                .map(|span| format!("{origin}:{}", line_col(src, span.start)))
                .unwrap_or_else(|| origin.to_string());
            ConfigError { message: format!("{place}: `{}` {}", inv.path, inv.message) }
        })
    }

    /// Loads a TOML config, or the config echoed inside a run manifest.
    pub fn load(path: &Path) -> Result<(Self, String), LoadError> {
        let text = std::fs::read_to_string(path).map_err(|e| LoadError::Io(format!("{}: {e}", path.display())))?;
        let origin = path.display().to_string();
        let src = if path.extension().is_some_and(|x| x == "json") {
            let v: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| LoadError::Config(ConfigError { message: format!("{origin}: {e}") }))?;
            v.get("config_toml").and_then(|c| c.as_str()).map(str::to_owned).ok_or_else(|| {
                LoadError::Config(ConfigError { message: format!("{origin}: manifest has no `config_toml` entry") })
            })?
        } else {
            text
        };
        let cfg = Self::parse(&src, &origin).map_err(LoadError::Config)?;
        Ok((cfg, src))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[derive(Debug)]
pub enum LoadError {
    Io(String),
    Config(ConfigError),
}

/// 1-based `line:column` of byte offset `at`.
pub fn line_col(src: &str, at: usize) -> String {
    let before = &src[..at.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    format!("{line}:{col}")
}

/// Span of the value at dotted `path`, falling back to the deepest present key.
fn locate(src: &str, path: &str) -> Option<Range<usize>> {
    let doc = toml::de::DeTable::parse(src).ok()?;
    let mut table = doc.get_ref();
    let mut found = None;
    for key in path.split('.') {
        let Some((k, v)) = table.get_key_value(key) else { break };
        found = Some(if matches!(v.get_ref(), toml::de::DeValue::Table(_)) { k.span() } else { v.span() });
        match v.get_ref() {
            toml::de::DeValue::Table(t) => table = t,
            _ => break,
        }
    }
    found
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_configs_are_valid() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let mut n = 0;
        for e in std::fs::read_dir(&dir).unwrap() {
            let path = e.unwrap().path();
            if path.extension().is_some_and(|x| x == "toml") {
                RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e:?}", path.display()));
                n += 1;
            }
        }
        assert!(n >= 8);
    }

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate_located("", "t").unwrap();
    }

    #[test]
    fn empty_document_is_default() {
        assert_eq!(RunConfig::parse("", "t").unwrap(), RunConfig::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig::default();
        let again = RunConfig::parse(&cfg.to_toml(), "echo").unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn unknown_key_reports_position() {
        let src = "[model]\nfield = 0.1\nbogus = 2\n";
        let err = RunConfig::parse(src, "cfg.toml").unwrap_err();
        assert!(err.message.starts_with("cfg.toml:3:1"), "{}", err.message);
        assert!(err.message.contains("bogus"), "{}", err.message);
    }

    #[test]
    fn out_of_range_value_reports_position() {
        let src = "seed = 1\n\n[contour]\ndepth = 0.5\nrel_tol = -1.0\n";
        let err = RunConfig::parse(src, "cfg.toml").unwrap_err();
        assert!(err.message.starts_with("cfg.toml:5:11"), "{}", err.message);
        assert!(err.message.contains("contour.rel_tol"), "{}", err.message);
    }

    #[test]
    fn empty_seed_list_is_rejected() {
        let err = RunConfig::parse("[resonance]\nseeds = []\n", "c").unwrap_err();
        assert!(err.message.contains("resonance.seeds"), "{}", err.message);
        assert!(err.message.starts_with("c:2:9"), "{}", err.message);
    }

    #[test]
    fn nested_window_error_is_located() {
        let src = "[vortices.window]\nx_min = 1.0\nx_max = -1.0\ny_min = -1.0\ny_max = 1.0\n";
        let err = RunConfig::parse(src, "c").unwrap_err();
        assert!(err.message.contains("vortices.window"), "{}", err.message);
        assert!(err.message.starts_with("c:"), "{}", err.message);
    }

    #[test]
    fn line_col_counts_from_one() {
        assert_eq!(line_col("ab\ncd", 0), "1:1");
        assert_eq!(line_col("ab\ncd", 4), "2:2");
    }
}
