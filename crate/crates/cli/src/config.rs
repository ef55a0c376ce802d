//! Experiment configuration: `key = value` lines grouped under `[section]`
//! headers. `#` starts a comment. Unknown sections and keys are rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chaoskit_core::model::ModelParams;
use chaoskit_core::particles::CouplingMode;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.line, &self.key) {
            (Some(l), Some(k)) => write!(f, "line {l}, key '{k}': {}", self.message),
            (Some(l), None) => write!(f, "line {l}: {}", self.message),
            (None, Some(k)) => write!(f, "key '{k}': {}", self.message),
            (None, None) => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    MomentDecay,
    ChaosScaling,
    UniformInTime,
    WjAudit,
    Prop23Audit,
    ConstantsFrontier,
    TraceAudit,
    SuperadditivityAudit,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::MomentDecay,
        ExperimentKind::ChaosScaling,
        ExperimentKind::UniformInTime,
        ExperimentKind::WjAudit,
        ExperimentKind::Prop23Audit,
        ExperimentKind::ConstantsFrontier,
        ExperimentKind::TraceAudit,
        ExperimentKind::SuperadditivityAudit,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::MomentDecay => "moment_decay",
            ExperimentKind::ChaosScaling => "chaos_scaling",
            ExperimentKind::UniformInTime => "uniform_in_time",
            ExperimentKind::WjAudit => "wj_audit",
            ExperimentKind::Prop23Audit => "prop23_audit",
            ExperimentKind::ConstantsFrontier => "constants_frontier",
            ExperimentKind::TraceAudit => "trace_audit",
            ExperimentKind::SuperadditivityAudit => "superadditivity_audit",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .iter()
            .find(|k| k.name() == s)
            .copied()
            .ok_or_else(|| format!("unknown experiment '{s}'"))
    }
}

/// Law of the initial particles and of the initial limit density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitKind {
    /// The stationary solution of the limit equation.
    Stationary,
    Gaussian,
    /// Centered Gaussian rescaled to a prescribed second moment.
    SecondMoment,
    Uniform,
}

impl FromStr for InitKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "stationary" => Ok(InitKind::Stationary),
            "gaussian" => Ok(InitKind::Gaussian),
            "second_moment" => Ok(InitKind::SecondMoment),
            "uniform" => Ok(InitKind::Uniform),
            _ => Err(format!("unknown init kind '{s}' (stationary, gaussian, second_moment, uniform)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    pub dt: f64,
    pub seed: u64,
    pub replicas: usize,
    pub t_end: f64,
    pub record_interval: f64,
    pub coupling: CouplingMode,
    /// `None` means `sqrt(dt)`.
    pub merge_radius: Option<f64>,
    pub n_particles: Vec<usize>,
    /// Repeat the smallest system with `dt / 2`.
    pub halve_dt: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSettings {
    pub n_cells: usize,
    /// `None` means `3 + 2 max(1, a)`.
    pub half_width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditSettings {
    pub eta: f64,
    pub trials: usize,
    pub d_max: usize,
    pub n_max: usize,
    pub pairs: usize,
    pub atoms_max: usize,
    pub tensor_pairs: usize,
    pub tensor_n_max: usize,
    pub mc_samples: usize,
    pub fn_sizes: Vec<usize>,
    pub fn_eps: Vec<f64>,
    pub perturbations: usize,
    pub a_min: f64,
    pub a_max: f64,
    pub points: usize,
    /// Switch-over constant of `T_N = delta ln N`; `None` uses the measured rate.
    pub corollary_delta: Option<f64>,
    pub damping: f64,
    pub tol: f64,
    pub fe_steps: usize,
    pub deltas: Vec<f64>,
    pub stationary_horizon: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitSettings {
    pub kind: InitKind,
    pub mean: f64,
    pub variance: f64,
    pub m2: f64,
    pub lo: f64,
    pub hi: f64,
    /// Gaussian-copula correlation of the initial particles (0 = i.i.d.).
    pub correlation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub output_dir: PathBuf,
    pub model: ModelParams,
    pub sim: SimSettings,
    pub grid: GridSettings,
    pub audit: AuditSettings,
    pub init: InitSettings,
}

const KEYS: &[(&str, &[&str])] = &[
    ("experiment", &["name", "output_dir"]),
    ("model", &["a", "eps", "dim"]),
    (
        "sim",
        &[
            "dt",
            "seed",
            "replicas",
            "t_end",
            "record_interval",
            "scheme",
            "coupling",
            "merge_radius",
            "n_particles",
            "halve_dt",
        ],
    ),
    ("grid", &["n_cells", "half_width"]),
    (
        "audit",
        &[
            "eta",
            "trials",
            "d_max",
            "n_max",
            "pairs",
            "atoms_max",
            "tensor_pairs",
            "tensor_n_max",
            "mc_samples",
            "fn_sizes",
            "fn_eps",
            "perturbations",
            "a_min",
            "a_max",
            "points",
            "corollary_delta",
            "damping",
            "tol",
            "fe_steps",
            "deltas",
            "stationary_horizon",
            "margin",
        ],
    ),
    ("init", &["kind", "mean", "variance", "m2", "lo", "hi", "correlation"]),
];

impl ExperimentConfig {
    /// Defaults for an experiment before any file overrides.
    pub fn defaults(experiment: ExperimentKind) -> Self {
        use ExperimentKind::*;
        let (a, eps) = match experiment {
            UniformInTime | WjAudit => (5e-4, 1e-4),
            ChaosScaling => (0.1, 0.02),
            Prop23Audit => (0.1, 0.05),
            ConstantsFrontier => (0.05, 0.0),
            _ => (0.1, 0.01),
        };
        let model = ModelParams { a, eps, dim: 1, drift: chaoskit_core::model::DriftMode::Full };
        let sim = SimSettings {
            dt: 1e-3,
            seed: 20240601,
            replicas: match experiment {
                Prop23Audit => 512,
                _ => 64,
            },
            t_end: match experiment {
                UniformInTime => 50.0,
                ChaosScaling => 5.0,
                Prop23Audit => 2.0,
                _ => 5.0,
            },
            record_interval: match experiment {
                UniformInTime => 0.5,
                ChaosScaling => 0.25,
                Prop23Audit => 0.1,
                _ => 0.05,
            },
            coupling: CouplingMode::Synchronous,
            merge_radius: None,
            n_particles: match experiment {
                Prop23Audit => vec![2],
                _ => vec![16, 64, 256],
            },
            halve_dt: experiment == UniformInTime,
        };
        let grid = GridSettings {
            n_cells: match experiment {
                UniformInTime | ChaosScaling => 256,
                Prop23Audit => 512,
                _ => 2048,
            },
            half_width: None,
        };
        let audit = AuditSettings {
            eta: 1.0,
            trials: 1000,
            d_max: 3,
            n_max: 4,
            pairs: 200,
            atoms_max: 5,
            tensor_pairs: 50,
            tensor_n_max: 3,
            mc_samples: 1_000_000,
            fn_sizes: vec![2, 8, 64],
            fn_eps: vec![0.05, 0.1],
            perturbations: match experiment {
                WjAudit => 12,
                _ => 20,
            },
            a_min: 1e-5,
            a_max: 1e-1,
            points: 41,
            corollary_delta: None,
            damping: 0.5,
            tol: 1e-12,
            fe_steps: 10_000,
            deltas: vec![0.25, 0.5, 1.0],
            stationary_horizon: 10.0,
            margin: 0.05,
        };
        let init = InitSettings {
            kind: match experiment {
                MomentDecay => InitKind::SecondMoment,
                Prop23Audit => InitKind::Gaussian,
                _ => InitKind::Stationary,
            },
            mean: 0.0,
            variance: 1.0,
            m2: 4.0,
            lo: -1.0,
            hi: 1.0,
            correlation: 0.0,
        };
        Self { experiment, output_dir: PathBuf::from("out").join(experiment.name()), model, sim, grid, audit, init }
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            line: None,
            key: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let entries = tokenize(text)?;
        let name = entries.get(&("experiment".into(), "name".into())).ok_or(ConfigError {
            line: None,
            key: Some("experiment.name".into()),
            message: "missing experiment name".into(),
        })?;
        let kind = name.value.parse::<ExperimentKind>().map_err(|m| name.error(m))?;
        let mut cfg = Self::defaults(kind);
        for ((section, key), entry) in &entries {
            cfg.apply(section, key, entry)?;
        }
        cfg.validate().map_err(|(key, message)| {
            let line = key
                .split_once('.')
                .and_then(|(s, k)| entries.get(&(s.to_string(), k.to_string())))
                .map(|e| e.line);
            ConfigError { line, key: Some(key), message }
        })?;
        Ok(cfg)
    }

    fn apply(&mut self, section: &str, key: &str, e: &Entry) -> Result<(), ConfigError> {
        match (section, key) {
            ("experiment", "name") => {}
            ("experiment", "output_dir") => self.output_dir = PathBuf::from(&e.value),
            ("model", "a") => self.model.a = e.parse()?,
            ("model", "eps") => self.model.eps = e.parse()?,
            ("model", "dim") => self.model.dim = e.parse()?,
            ("sim", "dt") => self.sim.dt = e.parse()?,
            ("sim", "seed") => self.sim.seed = e.parse()?,
            ("sim", "replicas") => self.sim.replicas = e.parse()?,
            ("sim", "t_end") => self.sim.t_end = e.parse()?,
            ("sim", "record_interval") => self.sim.record_interval = e.parse()?,
            ("sim", "scheme") => {
                if e.value != "euler_maruyama" {
                    return Err(e.error(format!("unsupported scheme '{}' (euler_maruyama)", e.value)));
                }
            }
            ("sim", "coupling") => {
                self.sim.coupling = match e.value.as_str() {
                    "synchronous" => CouplingMode::Synchronous,
                    "reflection" => CouplingMode::Reflection,
                    other => return Err(e.error(format!("unknown coupling '{other}' (synchronous, reflection)"))),
                }
            }
            ("sim", "merge_radius") => self.sim.merge_radius = Some(e.parse()?),
            ("sim", "n_particles") => self.sim.n_particles = e.parse_list()?,
            ("sim", "halve_dt") => self.sim.halve_dt = e.parse()?,
            ("grid", "n_cells") => self.grid.n_cells = e.parse()?,
            ("grid", "half_width") => self.grid.half_width = Some(e.parse()?),
            ("audit", "eta") => self.audit.eta = e.parse()?,
            ("audit", "trials") => self.audit.trials = e.parse()?,
            ("audit", "d_max") => self.audit.d_max = e.parse()?,
            ("audit", "n_max") => self.audit.n_max = e.parse()?,
            ("audit", "pairs") => self.audit.pairs = e.parse()?,
            ("audit", "atoms_max") => self.audit.atoms_max = e.parse()?,
            ("audit", "tensor_pairs") => self.audit.tensor_pairs = e.parse()?,
            ("audit", "tensor_n_max") => self.audit.tensor_n_max = e.parse()?,
            ("audit", "mc_samples") => self.audit.mc_samples = e.parse()?,
            ("audit", "fn_sizes") => self.audit.fn_sizes = e.parse_list()?,
            ("audit", "fn_eps") => self.audit.fn_eps = e.parse_list()?,
            ("audit", "perturbations") => self.audit.perturbations = e.parse()?,
            ("audit", "a_min") => self.audit.a_min = e.parse()?,
            ("audit", "a_max") => self.audit.a_max = e.parse()?,
            ("audit", "points") => self.audit.points = e.parse()?,
            ("audit", "corollary_delta") => self.audit.corollary_delta = Some(e.parse()?),
            ("audit", "damping") => self.audit.damping = e.parse()?,
            ("audit", "tol") => self.audit.tol = e.parse()?,
            ("audit", "fe_steps") => self.audit.fe_steps = e.parse()?,
            ("audit", "deltas") => self.audit.deltas = e.parse_list()?,
            ("audit", "stationary_horizon") => self.audit.stationary_horizon = e.parse()?,
            ("audit", "margin") => self.audit.margin = e.parse()?,
            ("init", "kind") => self.init.kind = e.value.parse().map_err(|m: String| e.error(m))?,
            ("init", "mean") => self.init.mean = e.parse()?,
            ("init", "variance") => self.init.variance = e.parse()?,
            ("init", "m2") => self.init.m2 = e.parse()?,
            ("init", "lo") => self.init.lo = e.parse()?,
            ("init", "hi") => self.init.hi = e.parse()?,
            ("init", "correlation") => self.init.correlation = e.parse()?,
            _ => return Err(e.error("unknown key".into())),
        }
        Ok(())
    }

    /// Range checks; the error names the offending `section.key`.
    pub fn validate(&self) -> Result<(), (String, String)> {
        let bad = |k: &str, m: String| Err((k.to_string(), m));
        let m = &self.model;
        if !(m.a > 0.0 && m.a.is_finite()) {
            return bad("model.a", format!("must be positive, got {}", m.a));
        }
        if !(m.eps >= 0.0 && m.eps.is_finite()) {
            return bad("model.eps", format!("must be nonnegative, got {}", m.eps));
        }
        if m.dim == 0 || m.dim > 3 {
            return bad("model.dim", format!("must lie in 1..=3, got {}", m.dim));
        }
        let needs_pde = !matches!(
            self.experiment,
            ExperimentKind::ConstantsFrontier | ExperimentKind::TraceAudit | ExperimentKind::SuperadditivityAudit
        );
        if needs_pde && m.dim != 1 {
            return bad("model.dim", "this experiment solves the one-dimensional limit equation; use dim = 1".into());
        }
        let s = &self.sim;
        if !(s.dt > 0.0 && s.dt <= 0.1) {
            return bad("sim.dt", format!("must lie in (0, 0.1], got {}", s.dt));
        }
        if s.replicas < 2 {
            return bad("sim.replicas", "need at least 2 replicas".into());
        }
        if !(s.t_end > 0.0 && s.t_end.is_finite()) {
            return bad("sim.t_end", format!("must be positive, got {}", s.t_end));
        }
        if !(s.record_interval >= s.dt) {
            return bad("sim.record_interval", "must be at least dt".into());
        }
        if let Some(r) = s.merge_radius {
            if !(r >= 0.0) {
                return bad("sim.merge_radius", "must be nonnegative".into());
            }
        }
        if s.n_particles.is_empty() || s.n_particles.contains(&0) {
            return bad("sim.n_particles", "need a nonempty list of positive sizes".into());
        }
        if self.experiment == ExperimentKind::Prop23Audit && s.n_particles.iter().any(|&n| n > 3) {
            return bad("sim.n_particles", "the exact transport audit supports N <= 3".into());
        }
        if !(4..=1 << 16).contains(&self.grid.n_cells) {
            return bad("grid.n_cells", format!("must lie in 4..=65536, got {}", self.grid.n_cells));
        }
        if let Some(l) = self.grid.half_width {
            if !(l > 0.0) {
                return bad("grid.half_width", "must be positive".into());
            }
        }
        let a = &self.audit;
        if !(a.eta > 0.0) {
            return bad("audit.eta", "must be positive".into());
        }
        if a.trials == 0 || a.pairs == 0 || a.tensor_pairs == 0 {
            return bad("audit.trials", "trial counts must be positive".into());
        }
        if !(1..=6).contains(&a.d_max) || !(1..=6).contains(&a.n_max) {
            return bad("audit.n_max", "d_max and n_max must lie in 1..=6".into());
        }
        if !(1..=3).contains(&a.tensor_n_max) {
            return bad("audit.tensor_n_max", "must lie in 1..=3".into());
        }
        if !(1..=8).contains(&a.atoms_max) {
            return bad("audit.atoms_max", "must lie in 1..=8".into());
        }
        if a.mc_samples < 100 {
            return bad("audit.mc_samples", "need at least 100 samples".into());
        }
        if a.fn_sizes.iter().any(|&n| n < 2) {
            return bad("audit.fn_sizes", "sizes must be at least 2".into());
        }
        if a.fn_eps.iter().any(|e| !(*e >= 0.0)) {
            return bad("audit.fn_eps", "must be nonnegative".into());
        }
        if !(a.a_min > 0.0 && a.a_max > a.a_min) {
            return bad("audit.a_max", "need 0 < a_min < a_max".into());
        }
        if a.points < 2 {
            return bad("audit.points", "need at least 2 points".into());
        }
        if !(a.damping > 0.0 && a.damping <= 1.0) {
            return bad("audit.damping", "must lie in (0, 1]".into());
        }
        if !(a.tol > 0.0) {
            return bad("audit.tol", "must be positive".into());
        }
        if a.deltas.iter().any(|d| !(*d > 0.0)) {
            return bad("audit.deltas", "must be positive".into());
        }
        if !(a.margin >= 0.0) {
            return bad("audit.margin", "must be nonnegative".into());
        }
        if let Some(d) = a.corollary_delta {
            if !(d > 0.0) {
                return bad("audit.corollary_delta", "must be positive".into());
            }
        }
        let i = &self.init;
        if !(i.variance > 0.0) {
            return bad("init.variance", "must be positive".into());
        }
        if !(i.m2 > 0.0) {
            return bad("init.m2", "must be positive".into());
        }
        if !(i.hi > i.lo) {
            return bad("init.hi", "need lo < hi".into());
        }
        if !(0.0..1.0).contains(&i.correlation) {
            return bad("init.correlation", "must lie in [0, 1)".into());
        }
        Ok(())
    }

    pub fn merge_radius(&self, dt: f64) -> f64 {
        self.sim.merge_radius.unwrap_or(dt.sqrt())
    }
}

#[derive(Debug, Clone)]
struct Entry {
    line: usize,
    key: String,
    value: String,
}

impl Entry {
    fn error(&self, message: String) -> ConfigError {
        ConfigError { line: Some(self.line), key: Some(self.key.clone()), message }
    }

    fn parse<T: FromStr>(&self) -> Result<T, ConfigError> {
        self.value
            .parse()
            .map_err(|_| self.error(format!("cannot parse '{}' as {}", self.value, std::any::type_name::<T>())))
    }

    fn parse_list<T: FromStr>(&self) -> Result<Vec<T>, ConfigError> {
        self.value
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| self.error(format!("cannot parse list item '{}'", s.trim())))
            })
            .collect()
    }
}

fn tokenize(text: &str) -> Result<BTreeMap<(String, String), Entry>, ConfigError> {
    let mut out = BTreeMap::new();
    let mut section: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError { line: Some(line), key: None, message: "unterminated section header".into() })?
                .trim();
            if !KEYS.iter().any(|(s, _)| *s == name) {
                return Err(ConfigError { line: Some(line), key: None, message: format!("unknown section [{name}]") });
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError {
            line: Some(line),
            key: None,
            message: format!("expected 'key = value', found '{content}'"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        let sec = section.clone().ok_or_else(|| ConfigError {
            line: Some(line),
            key: Some(key.into()),
            message: "key appears before any [section] header".into(),
        })?;
        let allowed = KEYS.iter().find(|(s, _)| *s == sec).map(|(_, k)| *k).unwrap_or(&[]);
        if !allowed.contains(&key) {
            return Err(ConfigError {
                line: Some(line),
                key: Some(format!("{sec}.{key}")),
                message: format!("unknown key; [{sec}] accepts {}", allowed.join(", ")),
            });
        }
        let entry = Entry { line, key: format!("{sec}.{key}"), value: value.to_string() };
        if out.insert((sec.clone(), key.to_string()), entry).is_some() {
            return Err(ConfigError { line: Some(line), key: Some(format!("{sec}.{key}")), message: "duplicate key".into() });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_overrides_and_defaults() {
        let cfg = ExperimentConfig::parse(
            "# comment\n[experiment]\nname = wj_audit\noutput_dir = /tmp/x\n\n[model]\na = 0.0004 # inline\n[sim]\nn_particles = 8, 32\n",
        )
        .unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::WjAudit);
        assert_eq!(cfg.model.a, 4e-4);
        assert_eq!(cfg.model.eps, 1e-4);
        assert_eq!(cfg.sim.n_particles, vec![8, 32]);
        assert_eq!(cfg.output_dir, PathBuf::from("/tmp/x"));
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = ExperimentConfig::parse("[experiment]\nname = trace_audit\n[model]\nbeta = 2\n").unwrap_err();
        assert_eq!(err.line, Some(4));
        assert_eq!(err.key.as_deref(), Some("model.beta"));
    }

    #[test]
    fn bad_values_are_rejected() {
        let err = ExperimentConfig::parse("[experiment]\nname = trace_audit\n[sim]\ndt = fast\n").unwrap_err();
        assert_eq!(err.line, Some(4));
        let err = ExperimentConfig::parse("[experiment]\nname = trace_audit\n[sim]\ndt = -1\n").unwrap_err();
        assert_eq!(err.key.as_deref(), Some("sim.dt"));
        assert_eq!(err.line, Some(4));
        assert!(ExperimentConfig::parse("[experiment]\nname = nope\n").is_err());
        assert!(ExperimentConfig::parse("[model]\na = 1\n").is_err());
        assert!(ExperimentConfig::parse("a = 1\n").is_err());
        assert!(ExperimentConfig::parse("[experiment]\nname = trace_audit\nname = wj_audit\n").is_err());
    }

    #[test]
    fn every_default_validates() {
        for k in ExperimentKind::ALL {
            ExperimentConfig::defaults(k).validate().unwrap();
        }
    }
}
