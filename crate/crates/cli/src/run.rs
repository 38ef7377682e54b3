//! Plan execution: each step writes its artifacts into the output
//! directory and reports a verdict; the manifest records what ran.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use log::info;
use serde::{Deserialize, Serialize};

use exitlab_core::conditions::{
    check_hi, check_j0, check_j1, check_j2, default_grid, default_payoff_family, ConditionReport, SetFamily,
};
use exitlab_core::exit::{check_composition, estimate_exit_measure, HistogramSpec, Payoff};
use exitlab_core::geometry::{AnnularSector, Ball, DirectionCap, Point, SectorUnion};
use exitlab_core::kernel::{K0Check, KernelSpec};
use exitlab_core::pipeline::holder::{measure_holder, verify_oscillation, LevelVerdict};
use exitlab_core::pipeline::ConstantLedger;
use exitlab_core::scaling::{check_l_conditions, doubling_constant, worst_doubling_ratio, LConditionWitness};
use exitlab_core::simulate::{estimate_exit_time_mean, simulate_batch, ExitTimeBounds, SimConfig};

use crate::config::{Config, LoadedConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Step {
    Derive,
    CheckL,
    Simulate,
    Exit,
    Conditions,
    Holder,
    Oscillation,
}

impl Step {
    pub const ALL: [Step; 7] = [
        Step::Derive,
        Step::CheckL,
        Step::Simulate,
        Step::Exit,
        Step::Conditions,
        Step::Holder,
        Step::Oscillation,
    ];

    pub fn parse(s: &str) -> Result<Step> {
        Ok(match s {
            "derive" => Step::Derive,
            "check-l" | "check-L" => Step::CheckL,
            "simulate" => Step::Simulate,
            "exit" | "exit-measure" => Step::Exit,
            "conditions" => Step::Conditions,
            "holder" => Step::Holder,
            "oscillation" => Step::Oscillation,
            other => bail!("unknown step {other:?}"),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Step::Derive => "derive",
            Step::CheckL => "check-l",
            Step::Simulate => "simulate",
            Step::Exit => "exit",
            Step::Conditions => "conditions",
            Step::Holder => "holder",
            Step::Oscillation => "oscillation",
        }
    }

    fn needs_ledger(self) -> bool {
        !matches!(self, Step::Derive | Step::CheckL)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
    /// Deterministic output with nothing to verify.
    Info,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Inconclusive => "INCONCLUSIVE",
            Verdict::Info => "INFO",
        })
    }
}

fn pass_fail(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: Step,
    pub outputs: Vec<String>,
    pub verdict: Verdict,
    pub summary: String,
    pub seconds: f64,
}

/// Everything needed to reproduce a run. Timings make the manifest itself
/// differ between runs; every other output is bit-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub core_version: String,
    pub config_source: String,
    pub base_dir: String,
    pub master_seed: u64,
    /// Configuration snapshot (TOML, after command-line overrides).
    pub config: String,
    pub plan: Vec<Step>,
    pub steps: Vec<StepRecord>,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }

    /// Configuration and plan to re-execute this manifest.
    pub fn replay(&self) -> Result<(LoadedConfig, Vec<Step>)> {
        Ok((
            LoadedConfig {
                config: Config::parse(&self.config)?,
                base_dir: PathBuf::from(&self.base_dir),
                source: self.config_source.clone(),
            },
            self.plan.clone(),
        ))
    }

    pub fn ok(&self) -> bool {
        self.steps.iter().all(|s| s.verdict != Verdict::Fail)
    }
}

/// `l_conditions.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LReport {
    pub witness: LConditionWitness,
    pub k0: K0Check,
    pub large_jump_ratio: f64,
    pub large_jump_ok: bool,
    pub worst_doubling: f64,
    pub doubling_constant: f64,
    pub doubling_ok: bool,
}

struct Ctx<'a> {
    cfg: &'a Config,
    spec: KernelSpec,
    x0: Point,
    ledger: Option<ConstantLedger>,
    out: &'a Path,
}

impl Ctx<'_> {
    fn ledger(&self) -> Result<&ConstantLedger> {
        self.ledger.as_ref().context("this step needs the derive step earlier in the plan")
    }

    fn sim(&self) -> Result<SimConfig> {
        Ok(self.cfg.sim_config(self.ledger()?.stage1.big_c1))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<String> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        std::fs::write(self.out.join(name), text).with_context(|| format!("writing {name}"))?;
        Ok(name.to_string())
    }

    /// Indicator of `{|z - x0| ≥ r}` on the positive side of `e1`.
    fn indicator_payoff(&self) -> Result<Payoff> {
        Ok(Payoff::indicator(SectorUnion(vec![AnnularSector::new(
            self.x0,
            self.cfg.geometry.r,
            f64::INFINITY,
            DirectionCap::positive(),
        )?])))
    }
}

/// Checks that every step that needs the ledger comes after `derive`.
pub fn validate_plan(steps: &[Step]) -> Result<()> {
    let mut derived = false;
    for s in steps {
        if s.needs_ledger() && !derived {
            bail!("step {} needs derive earlier in the plan", s.name());
        }
        derived |= *s == Step::Derive;
    }
    Ok(())
}

pub fn run_plan(loaded: &LoadedConfig, steps: &[Step], out: &Path) -> Result<RunManifest> {
    validate_plan(steps)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let cfg = &loaded.config;
    let mut ctx = Ctx {
        cfg,
        spec: cfg.kernel(&loaded.base_dir)?,
        x0: cfg.x0()?,
        ledger: None,
        out,
    };
    let mut records = Vec::new();
    for &step in steps {
        info!("step {}", step.name());
        let t0 = Instant::now();
        let (outputs, verdict, summary) = run_step(&mut ctx, step)?;
        info!("step {} -> {verdict}: {summary}", step.name());
        records.push(StepRecord {
            step,
            outputs,
            verdict,
            summary,
            seconds: t0.elapsed().as_secs_f64(),
        });
    }
    let mut summary = String::new();
    for r in &records {
        summary.push_str(&format!("{:<12} {:<13} {}\n", r.step.name(), r.verdict.to_string(), r.summary));
    }
    if !steps.is_empty() {
        std::fs::write(out.join("summary.txt"), &summary)?;
    }
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        core_version: exitlab_core::VERSION.into(),
        config_source: loaded.source.clone(),
        base_dir: loaded.base_dir.display().to_string(),
        master_seed: cfg.simulation.seed,
        config: cfg.to_toml()?,
        plan: steps.to_vec(),
        steps: records,
    };
    ctx.write_json("manifest.json", &manifest)?;
    Ok(manifest)
}

fn run_step(ctx: &mut Ctx, step: Step) -> Result<(Vec<String>, Verdict, String)> {
    match step {
        Step::Derive => {
            let ledger = ConstantLedger::derive(ctx.cfg.ledger_inputs()?)?;
            let s3 = ledger.stage3;
            ctx.ledger = Some(ledger);
            let f = ctx.write_json("ledger.json", &ledger)?;
            Ok((vec![f], Verdict::Info, format!("beta = {:.6e}, C = {:.6}", s3.beta, s3.big_c)))
        }
        Step::CheckL => {
            let p = &ctx.spec.profile;
            let grid = LConditionWitness::default_grid(p, 50);
            let pc = &ctx.cfg.pipeline;
            let witness = check_l_conditions(
                p,
                ctx.spec.dim,
                LConditionWitness::new(pc.c1, pc.c2, pc.c3, ctx.cfg.kernel.k0, grid.clone()),
            );
            let (large_jump_ratio, large_jump_ok) = ctx.spec.check_large_jump_bound(pc.c3, &grid)?;
            let worst_doubling = worst_doubling_ratio(p, &grid)?;
            let dc = doubling_constant(pc.c1, pc.c3);
            let rep = LReport {
                k0: ctx.spec.check_k0(),
                witness,
                large_jump_ratio,
                large_jump_ok,
                worst_doubling,
                doubling_constant: dc,
                doubling_ok: worst_doubling <= dc,
            };
            let ok = rep.witness.all_pass() && rep.k0.verdict && large_jump_ok;
            let f = ctx.write_json("l_conditions.json", &rep)?;
            let tag = |v: Option<bool>| match v {
                Some(true) => "ok",
                Some(false) => "violated",
                None => "n/a",
            };
            let s = format!(
                "L1 {}, L2 {}, L3 {}, K0 {}, large jumps {}",
                tag(rep.witness.verdict_l1),
                tag(rep.witness.verdict_l2),
                tag(rep.witness.verdict_l3),
                tag(Some(rep.k0.verdict)),
                tag(Some(large_jump_ok))
            );
            Ok((vec![f], pass_fail(ok), s))
        }
        Step::Simulate => {
            let sim = ctx.sim()?;
            let ledger = *ctx.ledger()?;
            let ball = Ball::new(ctx.x0, ctx.cfg.geometry.r)?;
            let bounds = ExitTimeBounds {
                c1: ledger.stage1.big_c1,
                c3: ledger.stage1.big_c3,
                slack: 0.0,
            };
            let rep = estimate_exit_time_mean(&ctx.spec, &ctx.x0, &ball, &sim, Some(bounds))?;
            let f1 = ctx.write_json("exit_time.json", &rep)?;
            let samples = simulate_batch(&ctx.spec, &ctx.x0, &ball, &sim)?;
            let d = ctx.spec.dim.get();
            let mut w = csv::Writer::from_path(ctx.out.join("exit_samples.csv"))?;
            let mut header = vec!["path".to_string()];
            header.extend((1..=d).map(|i| format!("exit_x{i}")));
            header.extend(["exit_time", "n_jumps", "censored"].map(String::from));
            w.write_record(&header)?;
            for s in &samples {
                let mut row = vec![s.path_index.to_string()];
                row.extend(s.exit_position.0[..d].iter().map(|v| v.to_string()));
                row.push(s.exit_time.to_string());
                row.push(s.n_jumps.to_string());
                row.push(s.censored.to_string());
                w.write_record(&row)?;
            }
            w.flush()?;
            let ok = rep.valid && rep.bounds_check == Some(true);
            let s = format!(
                "E tau = {:.6} in [{:.6}, {:.6}], bounds [{:.6}, {:.6}]",
                rep.estimate.mean,
                rep.estimate.ci.0,
                rep.estimate.ci.1,
                rep.lower_bound.unwrap_or(f64::NAN),
                rep.upper_bound.unwrap_or(f64::NAN)
            );
            Ok((vec![f1, "exit_samples.csv".into()], pass_fail(ok), s))
        }
        Step::Exit => {
            let sim = ctx.sim()?;
            let ledger = ctx.ledger()?;
            let g = &ctx.cfg.geometry;
            let outer = Ball::new(ctx.x0, g.r)?;
            let inner = Ball::new(ctx.x0, g.inner_r)?;
            let hist = HistogramSpec::aligned(ledger.stage2.alpha_j1, 8);
            let mu = estimate_exit_measure(&ctx.spec, &ctx.x0, &outer, &sim, hist)?;
            let f1 = ctx.write_json("exit_measure.json", &mu)?;
            let comp = check_composition(&ctx.spec, &inner, &outer, &ctx.x0, &sim)?;
            let f2 = ctx.write_json("composition.json", &comp)?;
            let ok = mu.valid && comp.ks_pass && comp.tv_pass;
            let s = format!(
                "mass {:.3}, KS {:.4} <= {:.4}, TV {:.4} <= {:.4}",
                mu.total_mass(),
                comp.ks,
                comp.ks_allowance,
                comp.tv,
                comp.tv_allowance
            );
            Ok((vec![f1, f2], pass_fail(ok), s))
        }
        Step::Conditions => {
            let sim = ctx.sim()?;
            let l = *ctx.ledger()?;
            let g = &ctx.cfg.geometry;
            let (r, x0, spec) = (g.r, ctx.x0, &ctx.spec);
            let alpha = l.stage2.alpha_j1;
            let delta0 = l.stage2.delta0;
            let mut reports: Vec<ConditionReport> = Vec::new();
            for c in ctx.cfg.conditions() {
                let rep = match c.as_str() {
                    "J0" => check_j0(spec, &x0, r, alpha, Some(delta0), &sim)?,
                    "J1" => {
                        let fam = SetFamily::adversarial(spec, r, alpha, 4, 3, 100, sim.master_seed)?;
                        let grid = default_grid(spec, &x0, r, alpha * alpha)?;
                        check_j1(spec, &x0, r, alpha, &fam, &grid, Some(delta0), &sim)?
                    }
                    "J2" => check_j2(
                        spec,
                        &x0,
                        r,
                        l.stage2.alpha0_j2,
                        g.j2_levels,
                        Some((l.stage2.c0_j2, l.stage2.a0_j2)),
                        &sim,
                    )?,
                    "HI" => {
                        let grid = default_grid(spec, &x0, r, g.hi_alpha)?;
                        let fam = default_payoff_family(&x0, r)?;
                        check_hi(spec, &x0, r, g.hi_alpha, &fam, &grid, None, &sim)?
                    }
                    other => bail!("unknown condition {other}"),
                };
                reports.push(rep);
            }
            let ok = reports.iter().all(|r| r.verdict && r.valid);
            let s = reports
                .iter()
                .map(|r| format!("{:?} {:.4e} {}", r.condition, r.estimate, pass_fail(r.verdict && r.valid)))
                .collect::<Vec<_>>()
                .join(", ");
            let f = ctx.write_json("conditions.json", &reports)?;
            Ok((vec![f], pass_fail(ok), s))
        }
        Step::Holder => {
            let sim = ctx.sim()?;
            let l = ctx.ledger()?;
            let f = ctx.indicator_payoff()?;
            let g = &ctx.cfg.geometry;
            let rep = measure_holder(&ctx.spec, &f, &ctx.x0, g.r, l, &g.holder_distances, &sim)?;
            let mut w = csv::Writer::from_path(ctx.out.join("holder.csv"))?;
            w.write_record(["x1", "distance", "rho0", "h_x", "h_x0", "delta", "std_error", "bound", "within"])?;
            for p in &rep.points {
                w.write_record([
                    p.x.0[0].to_string(),
                    p.distance.to_string(),
                    p.rho0.to_string(),
                    p.h_x.to_string(),
                    p.h_x0.to_string(),
                    p.delta.to_string(),
                    p.std_error.to_string(),
                    p.bound.to_string(),
                    p.within.to_string(),
                ])?;
            }
            w.flush()?;
            let f2 = ctx.write_json("holder.json", &rep)?;
            let verdict = match rep.beta_check {
                Some(b) => pass_fail(rep.all_within && b),
                None if rep.all_within => Verdict::Inconclusive,
                None => Verdict::Fail,
            };
            let s = format!(
                "all within bound: {}, beta_hat = {:.4} +- {:.4} vs ledger {:.4e}",
                rep.all_within, rep.fit.beta, rep.fit.beta_std_error, rep.beta_ledger
            );
            Ok((vec!["holder.csv".into(), f2], verdict, s))
        }
        Step::Oscillation => {
            let sim = ctx.sim()?;
            let l = ctx.ledger()?;
            let f = ctx.indicator_payoff()?;
            let g = &ctx.cfg.geometry;
            let t = verify_oscillation(&ctx.spec, &f, &ctx.x0, g.r, l, g.oscillation_levels, &sim)?;
            let file = ctx.write_json("oscillation.json", &t)?;
            let n_inc = t.levels.iter().filter(|l| l.verdict == LevelVerdict::Inconclusive).count();
            let verdict = if !t.passed() {
                Verdict::Fail
            } else if n_inc == t.levels.len() {
                Verdict::Inconclusive
            } else {
                Verdict::Pass
            };
            let s = format!("{} levels, {} inconclusive, b = {:.6}", t.levels.len(), n_inc, t.b);
            Ok((vec![file], verdict, s))
        }
    }
}
