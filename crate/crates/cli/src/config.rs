//! Experiment configuration: one TOML file with `[profile]`, `[kernel]`,
//! `[simulation]`, `[geometry]`, `[pipeline]` and `[plan]` sections.
//! Every field has a default, so an empty file is a valid (stable, d = 1)
//! experiment with an empty plan.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use exitlab_core::geometry::{Dim, Point};
use exitlab_core::kernel::{KernelMode, KernelSpec, TailPolicy};
use exitlab_core::pipeline::LedgerInputs;
use exitlab_core::scaling::ScalingProfile;
use exitlab_core::simulate::{Cutoff, ExitRule, SimConfig, SmallJumpMode, TimeCap};

use crate::table::read_profile_table;

/// Built-in experiment presets, addressable by name wherever a config path
/// is expected.
pub const PRESETS: &[(&str, &str)] = &[("stable-1d", include_str!("../configs/stable-1d.toml"))];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub profile: ProfileSection,
    pub kernel: KernelSection,
    pub simulation: SimulationSection,
    pub geometry: GeometrySection,
    pub pipeline: PipelineSection,
    pub plan: PlanSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileSection {
    /// `stable`, `geometric-like`, `log-counterexample` or `table:<csv path>`.
    pub family: String,
    /// Index of the power part of `l`.
    pub alpha: f64,
    /// Exponent `p` of the `(ln 1/u)^p` factor (geometric-like only).
    pub log_power: f64,
    /// Domain end `R0`; `inf` is allowed.
    pub r0: f64,
    /// Working scale `R < R0`.
    pub r: f64,
    /// Optional lower scaling constants `(c_L, γ)`.
    pub c_l: Option<f64>,
    pub gamma: Option<f64>,
}

impl Default for ProfileSection {
    fn default() -> Self {
        Self {
            family: "stable".into(),
            alpha: 1.0,
            log_power: 0.0,
            r0: f64::INFINITY,
            r: 2.0,
            c_l: None,
            gamma: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSection {
    pub d: u8,
    pub c0: f64,
    #[serde(rename = "K0")]
    pub k0: f64,
    /// `levy` or `perturbed`.
    pub mode: String,
    /// Frequency of the perturbed mode.
    pub omega: f64,
    /// Rate of the exponential tail beyond `R0`; truncation when absent.
    pub tail_lambda: Option<f64>,
}

impl Default for KernelSection {
    fn default() -> Self {
        Self {
            d: 1,
            c0: 1.1,
            k0: 5.0,
            mode: "levy".into(),
            omega: 1.0,
            tail_lambda: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub seed: u64,
    pub paths: usize,
    /// Cutoff `ε` as a fraction of each ball's radius.
    pub cutoff: f64,
    /// `drop` or `gaussian`.
    pub small_jumps: String,
    /// Time cap in units of `C1/L(r)`.
    pub t_max_factor: f64,
    /// `keep-overshoot` or `project` (diffusion-like sanity toggle).
    pub exit_rule: String,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            seed: 0,
            paths: 10_000,
            cutoff: 1e-3,
            small_jumps: "drop".into(),
            t_max_factor: 1e3,
            exit_rule: "keep-overshoot".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    pub x0: Vec<f64>,
    /// Outer radius `r` of every check.
    pub r: f64,
    /// Inner ball of the composition check.
    pub inner_r: f64,
    /// Scale factor of the Harnack check.
    pub hi_alpha: f64,
    pub j2_levels: u32,
    pub oscillation_levels: u32,
    pub holder_distances: Vec<f64>,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self {
            x0: vec![0.0],
            r: 1.0,
            inner_r: 0.5,
            hi_alpha: 0.5,
            j2_levels: 4,
            oscillation_levels: 6,
            holder_distances: vec![0.01, 0.02, 0.04, 0.08, 0.16, 0.32],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSection {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self {
            c1: 2.0,
            c2: 1.1,
            c3: 12.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PlanSection {
    pub steps: Vec<String>,
    /// Subset of `J0`, `J1`, `J2`, `HI`; all four when empty.
    pub conditions: Vec<String>,
}

/// A parsed configuration together with the directory relative paths are
/// resolved against.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: Config,
    pub base_dir: PathBuf,
    pub source: String,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.kernel;
        let p = &self.pipeline;
        for (name, v) in [("c0", k.c0), ("c1", p.c1), ("c2", p.c2), ("c3", p.c3), ("K0", k.k0)] {
            if !(v > 1.0 && v.is_finite()) {
                bail!("{name} must lie in (1, inf), got {v}");
            }
        }
        Dim::new(k.d)?;
        if !matches!(k.mode.as_str(), "levy" | "perturbed") {
            bail!("kernel.mode must be levy or perturbed, got {:?}", k.mode);
        }
        let s = &self.simulation;
        if !(s.cutoff > 0.0 && s.cutoff < 1.0) {
            bail!("simulation.cutoff must lie in (0, 1), got {}", s.cutoff);
        }
        if !matches!(s.small_jumps.as_str(), "drop" | "gaussian") {
            bail!("simulation.small_jumps must be drop or gaussian");
        }
        if !matches!(s.exit_rule.as_str(), "keep-overshoot" | "project") {
            bail!("simulation.exit_rule must be keep-overshoot or project");
        }
        if s.t_max_factor.is_nan() || s.t_max_factor <= 0.0 {
            bail!("simulation.t_max_factor must be positive");
        }
        let g = &self.geometry;
        if g.x0.is_empty() || g.x0.len() > 3 {
            bail!("geometry.x0 needs 1 to 3 coordinates");
        }
        if !(g.r > 0.0 && g.r < self.profile.r) {
            bail!("geometry.r must lie in (0, R) = (0, {}), got {}", self.profile.r, g.r);
        }
        if !(g.inner_r > 0.0 && g.inner_r < g.r) {
            bail!("geometry.inner_r must lie in (0, r)");
        }
        if !(g.hi_alpha > 0.0 && g.hi_alpha < 1.0) {
            bail!("geometry.hi_alpha must lie in (0, 1)");
        }
        if g.holder_distances.iter().any(|d| !(*d > 0.0 && *d < g.r)) {
            bail!("geometry.holder_distances must lie in (0, r)");
        }
        for step in &self.plan.steps {
            crate::run::Step::parse(step)?;
        }
        for c in &self.plan.conditions {
            if !matches!(c.as_str(), "J0" | "J1" | "J2" | "HI") {
                bail!("unknown condition {c:?}; expected J0, J1, J2 or HI");
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> Dim {
        Dim::new(self.kernel.d).expect("validated")
    }

    pub fn x0(&self) -> Result<Point> {
        Ok(Point::from_slice(&self.geometry.x0)?)
    }

    pub fn profile(&self, base_dir: &Path) -> Result<ScalingProfile> {
        let p = &self.profile;
        let mut prof = match p.family.as_str() {
            "stable" => ScalingProfile::stable(p.alpha, p.r0, p.r)?,
            "geometric-like" => ScalingProfile::regularly_varying(p.alpha, p.log_power, p.r0, p.r)?,
            "log-counterexample" => ScalingProfile::log_counterexample(p.r0, p.r)?,
            other => match other.strip_prefix("table:") {
                Some(path) => {
                    let knots = read_profile_table(&base_dir.join(path))?;
                    ScalingProfile::table(knots, p.r0, p.r)?
                }
                None => bail!("unknown profile family {other:?}"),
            },
        };
        if let (Some(c_l), Some(gamma)) = (p.c_l, p.gamma) {
            prof = prof.with_lower_scaling(c_l, gamma);
        }
        Ok(prof)
    }

    pub fn kernel(&self, base_dir: &Path) -> Result<KernelSpec> {
        let k = &self.kernel;
        let mut spec = KernelSpec::new(self.dim(), self.profile(base_dir)?, k.c0, k.k0)?;
        if let Some(lambda) = k.tail_lambda {
            spec = spec.with_tail(TailPolicy::ExponentialTail { lambda })?;
        }
        if k.mode == "perturbed" {
            spec = spec.with_mode(KernelMode::Perturbed { omega: k.omega });
        }
        Ok(spec)
    }

    pub fn ledger_inputs(&self) -> Result<LedgerInputs> {
        let p = &self.pipeline;
        Ok(LedgerInputs::new(self.dim(), self.kernel.c0, p.c1, p.c2, p.c3, self.kernel.k0)?)
    }

    /// Simulation settings; the time cap is `t_max_factor · C1 / L(radius)`.
    pub fn sim_config(&self, big_c1: f64) -> SimConfig {
        let s = &self.simulation;
        SimConfig {
            cutoff: Cutoff::Relative(s.cutoff),
            small_jump_mode: if s.small_jumps == "gaussian" {
                SmallJumpMode::GaussianSubstitute
            } else {
                SmallJumpMode::Drop
            },
            t_max: TimeCap::ExitScale(s.t_max_factor * big_c1),
            master_seed: s.seed,
            n_paths: s.paths,
            exit_rule: if s.exit_rule == "project" {
                ExitRule::ProjectToBoundary
            } else {
                ExitRule::KeepOvershoot
            },
        }
    }

    pub fn conditions(&self) -> Vec<String> {
        if self.plan.conditions.is_empty() {
            ["J0", "J1", "J2", "HI"].iter().map(|s| s.to_string()).collect()
        } else {
            self.plan.conditions.clone()
        }
    }
}

/// Loads a config file, or a preset when `spec` names one and no such file
/// exists.
pub fn load(spec: &str) -> Result<LoadedConfig> {
    let path = Path::new(spec);
    if !path.exists() {
        if let Some(text) = preset(spec) {
            return Ok(LoadedConfig {
                config: Config::parse(text)?,
                base_dir: PathBuf::from("."),
                source: format!("preset:{spec}"),
            });
        }
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(LoadedConfig {
        config: Config::parse(&text).with_context(|| format!("in {}", path.display()))?,
        base_dir: base_dir_of(path),
        source: path.display().to_string(),
    })
}

fn base_dir_of(path: &Path) -> PathBuf {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::canonicalize(parent).unwrap_or_else(|_| parent.to_path_buf())
}
