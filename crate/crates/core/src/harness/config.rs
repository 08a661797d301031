//! Scenario configuration: `key = value` TOML text, validated and defaulted.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{norm_weighted_x, ComplexField, GridSpec};
use crate::propagator::{NonlinearitySpec, StepControl};
use crate::C64;

use super::snapshot::read_snapshot;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitialData {
    /// `exp(-|x - center|²/2w²) · e^{i velocity·x/2}`, so the packet moves with
    /// group velocity `velocity`.
    Gaussian { width: f64, center: Vec<f64>, velocity: Vec<f64> },
    /// A snapshot file on the scenario grid.
    File { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub equation: NonlinearitySpec,
    pub d: usize,
    pub n: usize,
    #[serde(rename = "L")]
    pub l: f64,
    pub epsilon: f64,
    pub initial_data: InitialData,
    pub beta: f64,
    /// Physical-frame step, used until `t_switch`.
    pub dt: f64,
    /// Lens-frame step as a fraction of `t`.
    pub lens_ratio: f64,
    pub t_switch: f64,
    pub t_end: f64,
    pub checkpoints: Vec<f64>,
    /// Lower end of the exponent-fit window.
    pub fit_from: f64,
    pub v_max: f64,
    /// Sign of the phase in `G = e^{iσΦ}γ`.
    pub sigma: f64,
    pub seed: u64,
    pub boundary_limit: f64,
    /// Direct-quadrature `γ` nodes per axis at each checkpoint.
    pub direct_nodes: usize,
    pub output: PathBuf,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    kind: String,
    width: Option<f64>,
    center: Option<Vec<f64>>,
    velocity: Option<Vec<f64>>,
    path: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawCheckpoints {
    Named(String),
    List(Vec<f64>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    equation: String,
    d: usize,
    #[serde(alias = "ε")]
    epsilon: f64,
    n: Option<usize>,
    #[serde(rename = "L")]
    l: Option<f64>,
    #[serde(alias = "β")]
    beta: Option<f64>,
    dt: Option<f64>,
    lens_ratio: Option<f64>,
    t_switch: Option<f64>,
    t_end: Option<f64>,
    checkpoints: Option<RawCheckpoints>,
    fit_from: Option<f64>,
    v_max: Option<f64>,
    #[serde(alias = "σ")]
    sigma: Option<f64>,
    seed: Option<u64>,
    boundary_limit: Option<f64>,
    direct_nodes: Option<usize>,
    output: Option<PathBuf>,
    initial_data: Option<RawInitial>,
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line on which `key` is assigned, if it appears.
fn line_of_key(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let l = l.trim_start().trim_start_matches('"');
        l.strip_prefix(key).is_some_and(|rest| {
            let rest = rest.trim_start_matches('"').trim_start();
            rest.starts_with('=')
        })
    })
    .map(|i| i + 1)
}

fn config_err(text: &str, key: &str, msg: impl Into<String>) -> Error {
    Error::Config { line: line_of_key(text, key), msg: msg.into() }
}

pub fn parse_equation(name: &str) -> Option<NonlinearitySpec> {
    match name.to_ascii_lowercase().as_str() {
        "linear" | "free" => Some(NonlinearitySpec::Linear),
        "hartree" => Some(NonlinearitySpec::Hartree),
        "bopp_podolsky" | "sbp" => Some(NonlinearitySpec::BoppPodolsky),
        "power" => Some(NonlinearitySpec::Power),
        _ => None,
    }
}

/// Parses and validates a scenario. Relative file paths resolve against `base`.
pub fn parse_config_str(text: &str, base: &Path) -> Result<ScenarioConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config {
        line: e.span().map(|s| line_of_offset(text, s.start)),
        msg: e.message().to_string(),
    })?;
    let equation = parse_equation(&raw.equation)
        .ok_or_else(|| config_err(text, "equation", format!("unknown equation '{}'", raw.equation)))?;
    let d = raw.d;
    let (n0, l0, t_end0) = match d {
        2 => (256, 12.0, 32.0),
        3 => (64, 8.0, 16.0),
        _ => return Err(config_err(text, "d", format!("dimension {d} not in {{2, 3}}"))),
    };
    let n = raw.n.unwrap_or(n0);
    let l = raw.l.unwrap_or(l0);
    GridSpec::new(d, n, l).map_err(|e| config_err(text, if raw.n.is_some() { "n" } else { "L" }, e.to_string()))?;

    if !(raw.epsilon > 0.0 && raw.epsilon <= 0.5) {
        return Err(config_err(text, "epsilon", format!("ε = {} outside the small-data range (0, 0.5]", raw.epsilon))
            .with_alt_key(text, "ε"));
    }
    let beta = raw.beta.unwrap_or(d as f64 / 2.0 + 0.1);
    if !(beta > d as f64 / 2.0) {
        return Err(config_err(text, "beta", format!("β = {beta} must exceed d/2 = {}", d as f64 / 2.0)));
    }
    let positive = |key: &str, v: f64| -> Result<f64> {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(config_err(text, key, format!("{key} = {v} must be positive")))
        }
    };
    let dt = positive("dt", raw.dt.unwrap_or(0.005))?;
    let lens_ratio = positive("lens_ratio", raw.lens_ratio.unwrap_or(0.02))?;
    let t_switch = positive("t_switch", raw.t_switch.unwrap_or(0.5))?;
    if t_switch > 1.0 {
        return Err(config_err(text, "t_switch", "analysis starts at t = 1, so t_switch must be <= 1"));
    }
    let t_end = positive("t_end", raw.t_end.unwrap_or(t_end0))?;
    if t_end < 1.0 {
        return Err(config_err(text, "t_end", "t_end must be >= 1"));
    }
    let checkpoints = match raw.checkpoints {
        None => StepControl::dyadic(t_end),
        Some(RawCheckpoints::Named(s)) if s == "dyadic" => StepControl::dyadic(t_end),
        Some(RawCheckpoints::Named(s)) => {
            return Err(config_err(text, "checkpoints", format!("unknown schedule '{s}'")));
        }
        Some(RawCheckpoints::List(v)) => v,
    };
    if checkpoints.windows(2).any(|w| w[1] <= w[0]) || checkpoints.iter().any(|&c| !(1.0..=t_end).contains(&c)) {
        return Err(config_err(text, "checkpoints", "checkpoints must increase within [1, t_end]"));
    }
    let fit_from = positive("fit_from", raw.fit_from.unwrap_or(4.0_f64.min(t_end)))?;
    let v_max = positive("v_max", raw.v_max.unwrap_or(l / (4.0 * t_switch)))?;
    let sigma = raw.sigma.unwrap_or(1.0);
    if sigma != 1.0 && sigma != -1.0 {
        return Err(config_err(text, "sigma", "σ must be +1 or -1").with_alt_key(text, "σ"));
    }
    let boundary_limit = positive("boundary_limit", raw.boundary_limit.unwrap_or(1e-6))?;
    let direct_nodes = raw.direct_nodes.unwrap_or(9);
    if direct_nodes == 0 {
        return Err(config_err(text, "direct_nodes", "direct_nodes must be positive"));
    }

    let initial_data = match raw.initial_data {
        None => InitialData::Gaussian { width: 1.0, center: vec![0.0; d], velocity: vec![0.0; d] },
        Some(r) => match r.kind.as_str() {
            "gaussian" => {
                let width = positive("width", r.width.unwrap_or(1.0))?;
                let center = r.center.unwrap_or_else(|| vec![0.0; d]);
                let velocity = r.velocity.unwrap_or_else(|| vec![0.0; d]);
                if center.len() != d {
                    return Err(config_err(text, "center", format!("center has {} components, expected {d}", center.len())));
                }
                if velocity.len() != d {
                    return Err(config_err(text, "velocity", format!("velocity has {} components, expected {d}", velocity.len())));
                }
                InitialData::Gaussian { width, center, velocity }
            }
            "file" => {
                let path = r.path.ok_or_else(|| config_err(text, "kind", "file initial data needs a path"))?;
                InitialData::File { path: if path.is_absolute() { path } else { base.join(path) } }
            }
            other => return Err(config_err(text, "kind", format!("unknown initial data kind '{other}'"))),
        },
    };

    let cfg = ScenarioConfig {
        equation,
        d,
        n,
        l,
        epsilon: raw.epsilon,
        initial_data,
        beta,
        dt,
        lens_ratio,
        t_switch,
        t_end,
        checkpoints,
        fit_from,
        v_max,
        sigma,
        seed: raw.seed.unwrap_or(0),
        boundary_limit,
        direct_nodes,
        output: raw.output.map(|p| if p.is_absolute() { p } else { base.join(p) }).unwrap_or_else(|| base.join("out")),
    };
    if let InitialData::File { path } = &cfg.initial_data {
        check_initial_file(&cfg, path).map_err(|e| match e {
            Error::Config { msg, .. } => config_err(text, "path", msg),
            other => config_err(text, "path", other.to_string()),
        })?;
    }
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config { line: None, msg: format!("cannot read {}: {e}", path.display()) })?;
    parse_config_str(&text, path.parent().unwrap_or(Path::new(".")))
}

impl Error {
    fn with_alt_key(self, text: &str, key: &str) -> Error {
        match self {
            Error::Config { line: None, msg } => Error::Config { line: line_of_key(text, key), msg },
            other => other,
        }
    }
}

fn check_initial_file(cfg: &ScenarioConfig, path: &Path) -> Result<()> {
    let (field, _) = read_snapshot(path)?;
    let g = field.grid;
    if g.d != cfg.d || g.n != cfg.n {
        return Err(Error::Config {
            line: None,
            msg: format!(
                "initial data {} has d = {}, n = {}; the scenario needs d = {}, n = {}",
                path.display(),
                g.d,
                g.n,
                cfg.d,
                cfg.n
            ),
        });
    }
    if (g.l - cfg.l).abs() > 1e-12 * cfg.l {
        return Err(Error::Config {
            line: None,
            msg: format!("initial data {} has L = {}; the scenario needs L = {}", path.display(), g.l, cfg.l),
        });
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn grid(&self) -> GridSpec {
        GridSpec { d: self.d, n: self.n, l: self.l }
    }

    /// Initial data scaled so that `‖u₀‖₂ + ‖|x|^β u₀‖₂ = ε`.
    pub fn initial_field(&self) -> Result<ComplexField> {
        let g = self.grid();
        let shape = match &self.initial_data {
            InitialData::Gaussian { width, center, velocity } => ComplexField::from_fn(g, 0.0, |x| {
                let r2: f64 = x[..g.d].iter().zip(center).map(|(a, c)| (a - c).powi(2)).sum();
                let phase: f64 = x[..g.d].iter().zip(velocity).map(|(a, v)| 0.5 * a * v).sum();
                C64::from_polar((-r2 / (2.0 * width * width)).exp(), phase)
            }),
            InitialData::File { path } => {
                check_initial_file(self, path)?;
                let (mut f, _) = read_snapshot(path)?;
                f.grid = g;
                f.t = 0.0;
                f
            }
        };
        let norm = shape.l2() + norm_weighted_x(&shape, self.beta)?;
        if !(norm > 0.0) {
            return Err(Error::Config { line: None, msg: "initial data vanishes".into() });
        }
        let s = self.epsilon / norm;
        let values = shape.values.iter().map(|v| v * s).collect();
        ComplexField::new(g, shape.space, 0.0, values)
    }
}
