//! Config-driven experiments. A config is a TOML document with a `kind` and
//! the blocks that kind needs; [`run`] executes it and returns a [`Report`]
//! plus CSV artifacts.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::conditions::{
    admissible_gamma, check_conditions, check_lower_order, sample_box, QuadratureConfig,
};
use crate::drifted::{
    build_drifted_bm, default_lambda_scan, dual_dichotomy, negativity_witness, DriftedBMConfig,
};
use crate::ecf::{ecf_report, stable_cf, u_grid};
use crate::exit::{exit_identity_test, ExitIdentityConfig};
use crate::exponent::{ExponentField, ExponentProfile};
use crate::forms::{assemble_all, trial_vectors, verify_bounds, FormSpace, SmoothBump};
use crate::grid::Grid;
use crate::kernel::{stable_like_kernel, Normalization, SharedKernel, StableLike, SymmetricPower};
use crate::report::{config_hash, sig4, write_artifact, Check, Constants, Report};
use crate::resolvent::{discrete_generator, resolvent_report, semigroup, RowSumMode};
use crate::rng::derive_seed;
use crate::sampler::{sample_batch, StableSpec};
use crate::simulate::{
    conservativeness_sequence, coupling_check, martingale_test, scaled_endpoint_ecf,
    simulate_censored, simulate_free, simulate_part, standard_bumps, DeathCause, OpenSetSpec,
    RecordMode, Scheme, SimConfig,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    CheckKernel,
    AssembleForms,
    ResolventSuite,
    DualCounterexample,
    Simulate,
    CensoredSuite,
    ExitIdentity,
    SamplerCheck,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        Self::CheckKernel,
        Self::AssembleForms,
        Self::ResolventSuite,
        Self::DualCounterexample,
        Self::Simulate,
        Self::CensoredSuite,
        Self::ExitIdentity,
        Self::SamplerCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::CheckKernel => "check_kernel",
            Self::AssembleForms => "assemble_forms",
            Self::ResolventSuite => "resolvent_suite",
            Self::DualCounterexample => "dual_counterexample",
            Self::Simulate => "simulate",
            Self::CensoredSuite => "censored_suite",
            Self::ExitIdentity => "exit_identity",
            Self::SamplerCheck => "sampler_check",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Self::CheckKernel => {
                "[kernel conditions] moment and ratio constants C1..C4, beta0, gamma"
            }
            Self::AssembleForms => {
                "[form bounds] Gamma, B, eta matrices and the sector/comparison inequalities"
            }
            Self::ResolventSuite => {
                "[Markov resolvent] discrete generator, resolvent and semigroup checks"
            }
            Self::DualCounterexample => {
                "[nonsymmetric counterexample] drifted BM kernel, negative form, dual dichotomy"
            }
            Self::Simulate => {
                "[martingale problem] free, censored or part paths with martingale residuals"
            }
            Self::CensoredSuite => {
                "[censored process] boundary approach fractions across alpha, coupling"
            }
            Self::ExitIdentity => {
                "[exit identity] Monte Carlo exit functional against the killed resolvent"
            }
            Self::SamplerCheck => {
                "[stable sampling] isotropic stable draws against exp(-|u|^alpha)"
            }
        }
    }

    fn stochastic(self) -> bool {
        self != Self::CheckKernel
    }
}

/// Listing for `--list`: one line per kind.
pub fn list_experiments() -> String {
    ExperimentKind::ALL
        .iter()
        .map(|k| format!("{:<20} {}\n", k.name(), k.description()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelBlock {
    StableLike {
        dim: usize,
        alpha: ExponentProfile,
        #[serde(default)]
        normalization: Normalization,
        #[serde(default)]
        anchored_at_target: bool,
        /// Declared bounds, checked against the profile; read off it when absent.
        alpha_lower: Option<f64>,
        alpha_upper: Option<f64>,
        hoelder_const: Option<f64>,
        hoelder_exp: Option<f64>,
    },
    SymmetricPower {
        dim: usize,
        scale: f64,
        power: f64,
        cutoff: Option<f64>,
    },
}

impl KernelBlock {
    pub fn exponent_field(&self) -> Result<Option<ExponentField>> {
        match self {
            Self::StableLike {
                dim,
                alpha,
                alpha_lower,
                alpha_upper,
                hoelder_const,
                hoelder_exp,
                ..
            } => {
                let base = ExponentField::new(alpha.clone(), *dim)
                    .map_err(|e| prefix("kernel.alpha", e))?;
                if alpha_lower.is_none()
                    && alpha_upper.is_none()
                    && hoelder_const.is_none()
                    && hoelder_exp.is_none()
                {
                    return Ok(Some(base));
                }
                ExponentField::with_bounds(
                    alpha.clone(),
                    *dim,
                    alpha_lower.unwrap_or(base.lower),
                    alpha_upper.unwrap_or(base.upper),
                    hoelder_const.unwrap_or(base.hoelder_const),
                    hoelder_exp.unwrap_or(base.hoelder_exp),
                )
                .map(Some)
                .map_err(|e| prefix("kernel", e))
            }
            Self::SymmetricPower { .. } => Ok(None),
        }
    }

    pub fn stable_like(&self) -> Result<StableLike> {
        match self {
            Self::StableLike {
                normalization,
                anchored_at_target,
                ..
            } => {
                let ef = self.exponent_field()?.expect("stable-like field");
                let mut k =
                    stable_like_kernel(ef, *normalization).map_err(|e| prefix("kernel", e))?;
                k.anchored_at_target = *anchored_at_target;
                Ok(k)
            }
            Self::SymmetricPower { .. } => Err(Error::Config {
                field: "kernel.type".into(),
                message: "this experiment needs a stable_like kernel".into(),
            }),
        }
    }

    pub fn shared(&self) -> Result<SharedKernel> {
        match self {
            Self::StableLike { .. } => Ok(Arc::new(self.stable_like()?)),
            Self::SymmetricPower {
                dim,
                scale,
                power,
                cutoff,
            } => {
                if *dim == 0 || !(*scale > 0.0) || !(*power > 0.0) {
                    return Err(Error::Config {
                        field: "kernel".into(),
                        message: "need dim >= 1, scale > 0, power > 0".into(),
                    });
                }
                Ok(Arc::new(SymmetricPower {
                    dim: *dim,
                    scale: *scale,
                    power: *power,
                    cutoff: *cutoff,
                }))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub lower: f64,
    pub upper: f64,
    pub nodes: usize,
}

impl GridBlock {
    fn grid(&self, dim: usize) -> Result<Grid> {
        Grid::new(
            vec![self.lower; dim],
            vec![self.upper; dim],
            self.nodes,
            crate::grid::Placement::Vertex,
        )
        .map_err(|e| prefix("grid", e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConditionsBlock {
    pub gamma: Option<f64>,
    pub lower_order: bool,
    pub sample_lower: f64,
    pub sample_upper: f64,
    pub samples_per_axis: usize,
}

impl Default for ConditionsBlock {
    fn default() -> Self {
        Self {
            gamma: None,
            lower_order: false,
            sample_lower: -3.0,
            sample_upper: 3.0,
            samples_per_axis: 13,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FormsBlock {
    pub truncation: u32,
    pub subdivisions: usize,
    pub random_trials: usize,
    pub slack: f64,
    pub identity_tolerance: f64,
}

impl Default for FormsBlock {
    fn default() -> Self {
        Self {
            truncation: 16,
            subdivisions: 2,
            random_trials: 200,
            slack: 1e-10,
            identity_tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResolventBlock {
    pub truncation: u32,
    pub mode: RowSumMode,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub random_trials: usize,
    pub semigroup_times: Vec<f64>,
    pub tolerance: f64,
    pub mass_tolerance: f64,
}

impl Default for ResolventBlock {
    fn default() -> Self {
        Self {
            truncation: 16,
            mode: RowSumMode::ConservativeRestricted,
            alphas: vec![1.0, 2.0, 10.0],
            betas: vec![],
            random_trials: 100,
            semigroup_times: vec![0.1, 1.0, 10.0],
            tolerance: 1e-10,
            mass_tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DualBlock {
    pub model: DriftedBMConfig,
    pub lambda_scan: Vec<f64>,
    pub u0_center: f64,
    pub u0_radius: f64,
    pub alphas: Vec<f64>,
    pub random_trials: usize,
    pub row_sum_tolerance: f64,
}

impl Default for DualBlock {
    fn default() -> Self {
        let u0 = crate::drifted::default_u0();
        Self {
            model: DriftedBMConfig::default(),
            lambda_scan: default_lambda_scan(),
            u0_center: u0.center[0],
            u0_radius: u0.radius,
            alphas: vec![1.0, 2.0, 10.0, 100.0],
            random_trials: 100,
            row_sum_tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    #[default]
    Free,
    Censored,
    Part,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimBlock {
    #[serde(flatten)]
    pub config: SimConfig,
    pub start: Vec<f64>,
    pub mode: SimMode,
    pub domain: Option<OpenSetSpec>,
    pub martingale: bool,
    pub z_limit: f64,
    pub ecf_tolerance: f64,
    /// Paths written to the trajectory CSV.
    pub csv_paths: usize,
}

impl Default for SimBlock {
    fn default() -> Self {
        Self {
            config: SimConfig::default(),
            start: vec![0.0],
            mode: SimMode::Free,
            domain: None,
            martingale: true,
            z_limit: 3.0,
            ecf_tolerance: 0.02,
            csv_paths: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CensoredBlock {
    pub alphas: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
    pub start: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub polar_threshold: f64,
    pub coupling_paths: usize,
    pub boundary_tols: Vec<f64>,
    pub intensity_caps: Vec<f64>,
    pub small_jump_cutoff: f64,
    pub boundary_tol: f64,
    pub intensity_cap: f64,
}

impl Default for CensoredBlock {
    fn default() -> Self {
        Self {
            alphas: vec![0.8, 1.2, 1.5, 1.8],
            lower: 0.0,
            upper: 1.0,
            start: 0.5,
            horizon: 10.0,
            n_paths: 1000,
            polar_threshold: 0.02,
            coupling_paths: 200,
            boundary_tols: vec![1e-4, 1e-6],
            intensity_caps: vec![1e6, 1e8, 1e10],
            small_jump_cutoff: 1e-3,
            boundary_tol: 1e-4,
            intensity_cap: 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerBlock {
    pub alphas: Vec<f64>,
    pub dims: Vec<usize>,
    pub draws: usize,
    pub u_max: f64,
    pub u_points: usize,
    pub ecf_tolerance: f64,
    /// Draws per (alpha, dim) written to CSV.
    pub dump: usize,
}

impl Default for SamplerBlock {
    fn default() -> Self {
        Self {
            alphas: vec![0.5, 0.8, 1.0, 1.2, 1.5, 1.8, 2.0],
            dims: vec![1, 2],
            draws: 1_000_000,
            u_max: 5.0,
            u_points: 101,
            ecf_tolerance: 0.01,
            dump: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub kernel: Option<KernelBlock>,
    pub grid: Option<GridBlock>,
    pub quadrature: Option<QuadratureConfig>,
    pub conditions: Option<ConditionsBlock>,
    pub forms: Option<FormsBlock>,
    pub resolvent: Option<ResolventBlock>,
    pub dual: Option<DualBlock>,
    pub sim: Option<SimBlock>,
    pub censored: Option<CensoredBlock>,
    pub exit: Option<ExitIdentityConfig>,
    pub sampler: Option<SamplerBlock>,
}

fn prefix(block: &str, e: Error) -> Error {
    match e {
        Error::InvalidParameter { name, reason } => Error::Config {
            field: format!("{block}.{name}"),
            message: reason,
        },
        Error::Config { field, message } => Error::Config {
            field: format!("{block}.{field}"),
            message,
        },
        Error::Exponent(m) => Error::Config {
            field: block.to_string(),
            message: m,
        },
        other => other,
    }
}

fn missing(field: &str, kind: ExperimentKind) -> Error {
    Error::Config {
        field: field.into(),
        message: format!("block required by {}", kind.name()),
    }
}

/// Illegal field value naming the full path.
fn bad(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    /// Parses and validates TOML. Errors name the offending field by its
    /// dotted path.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg = Self::parse_unchecked(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses without the cross-block checks, so overrides can be applied
    /// before [`validate`](Self::validate).
    pub fn parse_unchecked(text: &str) -> Result<Self> {
        let value: toml::Value = text
            .parse::<toml::Table>()
            .map(toml::Value::Table)
            .map_err(|e| Error::Config {
                field: e
                    .span()
                    .map(|s| line_of(text, s.start))
                    .unwrap_or_else(|| "<document>".into()),
                message: e.message().to_string(),
            })?;
        let cfg: Self = serde_path_to_error::deserialize(value.clone()).map_err(|e| {
            let path = e.path().to_string();
            let message = e.inner().to_string();
            let field = match message.split('`').nth(1) {
                Some(name) if message.starts_with("missing field") => {
                    if path == "." || path.is_empty() {
                        name.to_string()
                    } else {
                        format!("{path}.{name}")
                    }
                }
                _ => path,
            };
            // tagged enums buffer their content and lose the inner path
            if let Some(alpha) = value.get("kernel").and_then(|k| k.get("alpha")) {
                if let Err(inner) = ExponentProfile::deserialize(alpha.clone()) {
                    let m = inner.to_string();
                    if let Some(name) = m
                        .split('`')
                        .nth(1)
                        .filter(|_| m.starts_with("missing field"))
                    {
                        return Error::Config {
                            field: format!("kernel.alpha.{name}"),
                            message: m,
                        };
                    }
                }
            }
            Error::Config { field, message }
        })?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        use ExperimentKind::*;
        let kind = self.kind;
        if kind.stochastic() && self.seed.is_none() {
            return Err(missing("seed", kind));
        }
        let needs_kernel = matches!(
            kind,
            CheckKernel | AssembleForms | ResolventSuite | Simulate | ExitIdentity
        );
        if needs_kernel {
            let k = self
                .kernel
                .as_ref()
                .ok_or_else(|| missing("kernel", kind))?;
            k.shared()?;
        }
        if matches!(kind, AssembleForms | ResolventSuite) && self.grid.is_none() {
            return Err(missing("grid", kind));
        }
        if let Some(g) = &self.grid {
            let dim = self.kernel.as_ref().map_or(1, kernel_dim);
            g.grid(dim)?;
        }
        match kind {
            Simulate => {
                let s = self.sim.as_ref().ok_or_else(|| missing("sim", kind))?;
                s.config.validate().map_err(|e| prefix("sim", e))?;
                if s.mode != SimMode::Free && s.domain.is_none() {
                    return Err(missing("sim.domain", kind));
                }
                if let Some(d) = &s.domain {
                    d.validate(s.start.len()).map_err(|e| prefix("sim", e))?;
                }
            }
            ExitIdentity => {
                self.exit
                    .as_ref()
                    .ok_or_else(|| missing("exit", kind))?
                    .validate()
                    .map_err(|e| prefix("exit", e))?;
            }
            DualCounterexample => {
                self.dual
                    .clone()
                    .unwrap_or_default()
                    .model
                    .validate()
                    .map_err(|e| prefix("dual.model", e))?;
            }
            CensoredSuite => {
                let c = self.censored.clone().unwrap_or_default();
                if c.alphas.is_empty() || c.alphas.iter().any(|&a| !(a > 0.0 && a < 2.0)) {
                    return Err(bad("censored.alphas", "need a nonempty list in (0, 2)"));
                }
                if !(c.lower < c.start && c.start < c.upper) {
                    return Err(bad("censored.start", "must lie inside (lower, upper)"));
                }
            }
            SamplerCheck => {
                let s = self.sampler.clone().unwrap_or_default();
                for &a in &s.alphas {
                    StableSpec {
                        alpha: a,
                        dim: 1,
                        seed: 0,
                    }
                    .validate()
                    .map_err(|e| prefix("sampler", e))?;
                }
                if s.draws < 2 || s.dims.is_empty() || s.dims.contains(&0) {
                    return Err(bad("sampler.draws", "need draws >= 2 and positive dims"));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

fn line_of(text: &str, offset: usize) -> String {
    let line = text[..offset.min(text.len())].matches('\n').count() + 1;
    format!("line {line}")
}

fn kernel_dim(k: &KernelBlock) -> usize {
    match k {
        KernelBlock::StableLike { dim, .. } | KernelBlock::SymmetricPower { dim, .. } => *dim,
    }
}

/// Report plus the artifacts written next to it.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Report,
    pub report_path: Option<PathBuf>,
    pub artifacts: Vec<PathBuf>,
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    seed: u64,
    out: Option<&'a Path>,
    artifacts: Vec<PathBuf>,
}

impl Ctx<'_> {
    fn artifact(&mut self, name: &str, content: &str) -> Result<()> {
        if let Some(dir) = self.out {
            self.artifacts.push(write_artifact(dir, name, content)?);
        }
        Ok(())
    }

    fn kernel(&self) -> Result<&KernelBlock> {
        self.cfg
            .kernel
            .as_ref()
            .ok_or_else(|| missing("kernel", self.cfg.kind))
    }

    fn quad(&self) -> QuadratureConfig {
        self.cfg.quadrature.clone().unwrap_or_default()
    }
}

/// Runs `cfg`; the config text is hashed into the report. With `out` set,
/// `report.json` and artifacts are written there.
pub fn run(cfg: &ExperimentConfig, config_text: &str, out: Option<&Path>) -> Result<Outcome> {
    cfg.validate()?;
    let mut ctx = Ctx {
        cfg,
        seed: cfg.seed.unwrap_or(0),
        out,
        artifacts: Vec::new(),
    };
    let (constants, checks, data) = match cfg.kind {
        ExperimentKind::CheckKernel => run_check_kernel(&mut ctx)?,
        ExperimentKind::AssembleForms => run_assemble_forms(&mut ctx)?,
        ExperimentKind::ResolventSuite => run_resolvent_suite(&mut ctx)?,
        ExperimentKind::DualCounterexample => run_dual(&mut ctx)?,
        ExperimentKind::Simulate => run_simulate(&mut ctx)?,
        ExperimentKind::CensoredSuite => run_censored(&mut ctx)?,
        ExperimentKind::ExitIdentity => run_exit(&mut ctx)?,
        ExperimentKind::SamplerCheck => run_sampler(&mut ctx)?,
    };
    let report = Report {
        kind: cfg.kind.name().into(),
        config_hash: config_hash(config_text),
        seed: cfg.seed,
        constants,
        checks,
        data,
    };
    let report_path = match out {
        Some(dir) => Some(report.write(dir)?),
        None => None,
    };
    Ok(Outcome {
        report,
        report_path,
        artifacts: ctx.artifacts,
    })
}

type Parts = (Constants, Vec<Check>, serde_json::Value);

fn constants_of(
    k: &SharedKernel,
    quad: &QuadratureConfig,
    pts: &[Vec<f64>],
    gamma: Option<f64>,
) -> Result<(Constants, crate::conditions::ConditionReport)> {
    let rep = check_conditions(k, quad, pts, gamma)?;
    Ok((
        Constants {
            beta0: Some(rep.beta0),
            c4: Some(rep.c4),
            gamma: Some(rep.gamma),
        },
        rep,
    ))
}

fn run_check_kernel(ctx: &mut Ctx) -> Result<Parts> {
    let kb = ctx.kernel()?;
    let k = kb.shared()?;
    let c = ctx.cfg.conditions.clone().unwrap_or_default();
    let pts = sample_box(k.dim(), c.sample_lower, c.sample_upper, c.samples_per_axis);
    let quad = ctx.quad();
    let (constants, rep) = constants_of(&k, &quad, &pts, c.gamma)?;
    let m = rep.c1.max(rep.c2 * rep.c3);
    let mut checks = vec![
        Check::flag("m_s", rep.pass_m_s),
        Check::flag("c1", rep.pass_c1).with_detail(format!("C1={}", sig4(rep.c1))),
        Check::flag("c2", rep.pass_c2).with_detail(format!("C2={}", sig4(rep.c2))),
        Check::flag("c3", rep.pass_c3).with_detail(format!(
            "C3={} gamma={}",
            sig4(rep.c3),
            sig4(rep.gamma)
        )),
        Check::flag("beta0_identity", rep.beta0 == 8.0 * m)
            .with_detail(format!("beta0={}", sig4(rep.beta0))),
        Check::flag("c4_identity", rep.c4 == 2f64.sqrt() * m.sqrt())
            .with_detail(format!("C4={}", sig4(rep.c4))),
    ];
    if let Some(ef) = kb.exponent_field()? {
        let gi = admissible_gamma(&ef);
        checks.push(Check::flag(
            "gamma_admissible",
            c.gamma.is_some() || gi.contains(rep.gamma),
        ));
    }
    let mut data = serde_json::json!({ "conditions": rep });
    if c.lower_order {
        let lo = check_lower_order(&k, &quad, &pts)?;
        checks.push(Check::flag(
            "lower_order",
            lo.pass_lower_order.unwrap_or(false),
        ));
        data["lower_order"] = serde_json::to_value(&lo)?;
    }
    Ok((constants, checks, data))
}

fn run_assemble_forms(ctx: &mut Ctx) -> Result<Parts> {
    let k = ctx.kernel()?.shared()?;
    let gb = ctx.cfg.grid.clone().expect("validated");
    let fb = ctx.cfg.forms.clone().unwrap_or_default();
    if k.dim() != 1 {
        return Err(bad("kernel.dim", "form assembly runs in one dimension"));
    }
    let space = FormSpace::tents_1d(gb.lower, gb.upper, gb.nodes, fb.subdivisions)
        .map_err(|e| prefix("grid", e))?;
    let c = ctx.cfg.conditions.clone().unwrap_or_default();
    let pts = sample_box(1, c.sample_lower, c.sample_upper, c.samples_per_axis);
    let (constants, rep) = constants_of(&k, &ctx.quad(), &pts, c.gamma)?;
    let forms = assemble_all(&k, &space, fb.truncation)?;
    let trials = trial_vectors(space.basis.len(), fb.random_trials, ctx.seed);
    let bounds = verify_bounds(&forms, &rep, &trials, fb.slack)?;
    let residual = forms.identity_residual();
    let mut checks: Vec<Check> = bounds
        .checks
        .iter()
        .map(|b| Check {
            pass: b.pass,
            ..Check::at_least(&b.name, b.worst_margin, -fb.slack)
        })
        .collect();
    checks.push(Check::at_most(
        "sector_ratio",
        bounds.sector_ratio,
        2.0 * 2f64.sqrt(),
    ));
    checks.push(Check::at_most(
        "identity_residual",
        residual,
        fb.identity_tolerance,
    ));
    if k.is_symmetric() {
        checks.push(Check::at_most(
            "b_norm_ratio",
            forms.b.norm() / forms.gamma.norm(),
            1e-12,
        ));
        checks.push(Check::flag("beta0_zero", rep.beta0 == 0.0));
    }
    ctx.artifact("gamma.txt", &forms.gamma.to_triplets())?;
    ctx.artifact("b.txt", &forms.b.to_triplets())?;
    ctx.artifact("eta.txt", &forms.eta.to_triplets())?;
    let data = serde_json::json!({
        "basis_size": space.basis.len(),
        "truncation": fb.truncation,
        "identity_residual": residual,
        "bounds": bounds,
        "conditions": rep,
    });
    Ok((constants, checks, data))
}

fn run_resolvent_suite(ctx: &mut Ctx) -> Result<Parts> {
    let k = ctx.kernel()?.shared()?;
    let rb = ctx.cfg.resolvent.clone().unwrap_or_default();
    let grid = ctx.cfg.grid.clone().expect("validated").grid(k.dim())?;
    let c = ctx.cfg.conditions.clone().unwrap_or_default();
    let pts = sample_box(k.dim(), c.sample_lower, c.sample_upper, c.samples_per_axis);
    let (constants, _) = constants_of(&k, &ctx.quad(), &pts, c.gamma)?;
    let l = discrete_generator(&k, &grid, rb.truncation, rb.mode)?;
    let rep = resolvent_report(&l, &rb.alphas, &rb.betas, None, rb.random_trials, ctx.seed)?;
    let scale = l.scale();
    let mut checks = Vec::new();
    for m in &rep.markov {
        checks.push(Check::flag(&format!("markov_alpha_{}", m.alpha), m.pass));
    }
    checks.push(Check::at_most(
        "resolvent_equation_residual",
        rep.resolvent_equation_residual,
        rb.tolerance * scale,
    ));
    let mut mass = Vec::new();
    if rb.mode == RowSumMode::ConservativeRestricted {
        let one_defect = rep
            .markov
            .iter()
            .map(|m| (m.max_row_applied_to_one - 1.0).abs())
            .fold(0.0, f64::max);
        checks.push(Check::at_most("alpha_g_one", one_defect, rb.tolerance));
        for &t in &rb.semigroup_times {
            let p = semigroup(&l, t)?;
            let d = p
                .row_iter()
                .map(|r| (r.sum() - 1.0).abs())
                .fold(0.0, f64::max);
            mass.push((t, d));
            checks.push(Check::at_most(
                &format!("semigroup_mass_t{t}"),
                d,
                rb.mass_tolerance,
            ));
        }
    }
    let data = serde_json::json!({ "generator_size": l.len(), "scale": scale, "resolvent": rep, "semigroup_mass_defect": mass });
    Ok((constants, checks, data))
}

fn run_dual(ctx: &mut Ctx) -> Result<Parts> {
    let db = ctx.cfg.dual.clone().unwrap_or_default();
    let u0 = SmoothBump::new(vec![db.u0_center], db.u0_radius);
    let neg = negativity_witness(&db.model, &u0, &db.lambda_scan).map_err(|e| prefix("dual", e))?;
    let mut checks = vec![Check::flag("lambda_star_found", !neg.inconclusive)];
    let mut data = serde_json::json!({ "negativity": neg });
    let mut constants = Constants::default();
    if let (Some(lambda), Some(eta)) = (neg.lambda_star, neg.value) {
        checks.push(Check::at_most("eta_u0_u0", eta, 0.0).with_detail(format!("lambda*={lambda}")));
        let bm = build_drifted_bm(&DriftedBMConfig {
            lambda,
            ..db.model.clone()
        })?;
        let rows: Vec<f64> = (0..bm.lattice.len)
            .map(|i| {
                (0..bm.lattice.len)
                    .map(|j| bm.transition[(i, j)])
                    .sum::<f64>()
            })
            .collect();
        let row_dev = rows.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
        checks.push(Check::at_most(
            "duality_residual",
            bm.duality_residual,
            db.model.duality_tolerance,
        ));
        checks.push(Check::at_most(
            "row_sum_deviation",
            row_dev,
            db.row_sum_tolerance,
        ));
        let dich = dual_dichotomy(&bm, &db.alphas, db.random_trials, ctx.seed)?;
        checks.push(Check::flag("primal_markov", dich.primal_passes));
        let witness = dich
            .witness
            .map(|(a, c, i, v)| format!("alpha={a} trial={c} node={i} max={v}"))
            .unwrap_or_default();
        checks.push(Check::flag("unshifted_dual_fails", dich.unshifted_fails).with_detail(witness));
        checks.push(
            Check::flag("shifted_dual_markov", dich.shifted_passes)
                .with_detail(format!("beta1={}", dich.beta1)),
        );
        constants.beta0 = None;
        let mut csv = String::from("x,density_row_sum\n");
        for (x, r) in bm.lattice.nodes().iter().zip(&rows) {
            csv.push_str(&format!("{x:?},{r:?}\n"));
        }
        ctx.artifact("row_sums.csv", &csv)?;
        data["dichotomy"] = serde_json::to_value(&dich)?;
        data["mass_defect"] = serde_json::json!(bm.mass_defect);
        data["duality_residual"] = serde_json::json!(bm.duality_residual);
    }
    let mut csv = String::from("lambda,eta,predictor\n");
    for p in &neg.scan {
        csv.push_str(&format!("{:?},{:?},{:?}\n", p.lambda, p.eta, p.predictor));
    }
    ctx.artifact("lambda_scan.csv", &csv)?;
    Ok((constants, checks, data))
}

fn run_simulate(ctx: &mut Ctx) -> Result<Parts> {
    let kb = ctx.kernel()?.clone();
    let k = kb.stable_like()?;
    let sb = ctx.cfg.sim.clone().expect("validated");
    let cfg = SimConfig {
        master_seed: ctx.seed,
        ..sb.config.clone()
    };
    let quad = ctx.quad();
    let batch = match sb.mode {
        SimMode::Free => simulate_free(&k.field, &sb.start, &cfg),
        SimMode::Censored => {
            simulate_censored(&k, sb.domain.as_ref().expect("validated"), &sb.start, &cfg)
        }
        SimMode::Part => simulate_part(&k, sb.domain.as_ref().expect("validated"), &sb.start, &cfg),
    }
    .map_err(|e| prefix("sim", e))?;
    let mut checks = Vec::new();
    let mut data = serde_json::json!({ "summary": batch.summary() });
    match sb.mode {
        SimMode::Free => {
            checks.push(Check::flag(
                "conservative",
                batch
                    .paths
                    .iter()
                    .all(|p| p.death_cause == DeathCause::Horizon),
            ));
            if k.field.is_constant() {
                let a = k.field.alpha(&sb.start);
                let ecf = scaled_endpoint_ecf(&batch, a)?;
                checks.push(Check::at_most(
                    "scaled_endpoint_ecf",
                    ecf.max_error,
                    sb.ecf_tolerance,
                ));
                data["ecf"] = serde_json::to_value(&ecf)?;
            }
        }
        SimMode::Censored => {
            let d = sb.domain.as_ref().expect("validated");
            let inside = batch
                .paths
                .iter()
                .all(|p| (0..p.times.len()).all(|i| d.contains(p.state(i, batch.dim))));
            checks.push(Check::flag("confined_to_domain", inside));
            checks.push(Check::at_most(
                "interior_to_boundary_jumps",
                batch.interior_to_boundary_jumps() as f64,
                0.0,
            ));
        }
        SimMode::Part => {}
    }
    if sb.martingale && batch.dim == 1 && cfg.record == RecordMode::Full {
        let fs = standard_bumps(sb.start[0]);
        let m = martingale_test(&batch, &fs, &k, &quad)?;
        for r in &m.rows {
            checks.push(Check::at_most(
                &format!("martingale_z[{}]", r.function),
                r.z.abs(),
                sb.z_limit,
            ));
        }
        if sb.mode == SimMode::Free {
            data["conservativeness"] = serde_json::to_value(conservativeness_sequence(
                &batch,
                &[1.0, 4.0, 16.0, 64.0, 256.0],
            ))?;
        }
        data["martingale"] = serde_json::to_value(&m)?;
    }
    let shown = TrajectorySlice(&batch, sb.csv_paths);
    ctx.artifact("trajectories.csv", &shown.csv())?;
    Ok((Constants::default(), checks, data))
}

struct TrajectorySlice<'a>(&'a crate::simulate::TrajectoryBatch, usize);

impl TrajectorySlice<'_> {
    fn csv(&self) -> String {
        let mut b = self.0.clone();
        b.paths.truncate(self.1);
        b.to_csv()
    }
}

/// Censored boundary-approach fractions over `alphas` on an interval, with
/// matched seeds, the part-process coupling and a tolerance/cap sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensoredSuiteResult {
    pub alphas: Vec<f64>,
    pub boundary_fraction: Vec<f64>,
    pub censored_survival: Vec<f64>,
    pub part_survival: Vec<f64>,
    pub interior_to_boundary_jumps: u64,
    pub coupling_mismatches: usize,
    pub coupling_events: u64,
    /// `(alpha, boundary_tol, intensity_cap, fraction)`
    pub sensitivity: Vec<(f64, f64, f64, f64)>,
    pub monotone: bool,
}

pub fn censored_suite(cb: &CensoredBlock, seed: u64) -> Result<CensoredSuiteResult> {
    let d = OpenSetSpec::interval(cb.lower, cb.upper);
    let base = SimConfig {
        scheme: Scheme::CompoundPoisson,
        horizon: cb.horizon,
        time_step: cb.horizon,
        n_paths: cb.n_paths,
        master_seed: seed,
        small_jump_cutoff: cb.small_jump_cutoff,
        boundary_tol: cb.boundary_tol,
        intensity_cap: cb.intensity_cap,
        record: RecordMode::FinalOnly,
        ..SimConfig::default()
    };
    let mut out = CensoredSuiteResult {
        alphas: cb.alphas.clone(),
        boundary_fraction: vec![],
        censored_survival: vec![],
        part_survival: vec![],
        interior_to_boundary_jumps: 0,
        coupling_mismatches: 0,
        coupling_events: 0,
        sensitivity: vec![],
        monotone: true,
    };
    for &a in &cb.alphas {
        let k = crate::simulate::simulation_kernel(&ExponentField::constant(a, 1)?)?;
        let c = simulate_censored(&k, &d, &[cb.start], &base)?;
        let p = simulate_part(&k, &d, &[cb.start], &base)?;
        out.boundary_fraction.push(c.boundary_fraction());
        out.censored_survival.push(c.fraction(DeathCause::Horizon));
        out.part_survival.push(p.fraction(DeathCause::Horizon));
        out.interior_to_boundary_jumps += c.interior_to_boundary_jumps();
        let full = SimConfig {
            n_paths: cb.coupling_paths.max(1),
            record: RecordMode::Full,
            ..base.clone()
        };
        let cc = simulate_censored(&k, &d, &[cb.start], &full)?;
        let pp = simulate_part(&k, &d, &[cb.start], &full)?;
        out.interior_to_boundary_jumps += cc.interior_to_boundary_jumps();
        let rep = coupling_check(&cc, &pp)?;
        out.coupling_mismatches += rep.mismatches;
        out.coupling_events += rep.compared_events;
        for &tol in &cb.boundary_tols {
            for &cap in &cb.intensity_caps {
                if tol == cb.boundary_tol && cap == cb.intensity_cap {
                    out.sensitivity.push((a, tol, cap, c.boundary_fraction()));
                    continue;
                }
                let s = simulate_censored(
                    &k,
                    &d,
                    &[cb.start],
                    &SimConfig {
                        boundary_tol: tol,
                        intensity_cap: cap,
                        ..base.clone()
                    },
                )?;
                out.sensitivity.push((a, tol, cap, s.boundary_fraction()));
            }
        }
    }
    out.monotone = out.boundary_fraction.windows(2).all(|w| w[1] >= w[0]);
    Ok(out)
}

fn run_censored(ctx: &mut Ctx) -> Result<Parts> {
    let cb = ctx.cfg.censored.clone().unwrap_or_default();
    let r = censored_suite(&cb, ctx.seed)?;
    let mut checks =
        vec![
            Check::at_most("polar_fraction", r.boundary_fraction[0], cb.polar_threshold)
                .with_detail(format!("alpha={}", cb.alphas[0])),
        ];
    for (a, f) in r.alphas.iter().zip(&r.boundary_fraction) {
        if *a > 1.0 {
            checks.push(Check::flag(
                &format!("approach_positive_alpha_{a}"),
                *f > 0.0,
            ));
        }
    }
    checks.push(Check::flag("monotone_in_alpha", r.monotone));
    checks.push(Check::at_most(
        "interior_to_boundary_jumps",
        r.interior_to_boundary_jumps as f64,
        0.0,
    ));
    checks.push(Check::at_most(
        "coupling_mismatches",
        r.coupling_mismatches as f64,
        0.0,
    ));
    let mut csv = String::from("alpha,boundary_tol,intensity_cap,fraction\n");
    for (a, t, c, f) in &r.sensitivity {
        csv.push_str(&format!("{a:?},{t:?},{c:?},{f:?}\n"));
    }
    ctx.artifact("sensitivity.csv", &csv)?;
    Ok((Constants::default(), checks, serde_json::to_value(&r)?))
}

fn run_exit(ctx: &mut Ctx) -> Result<Parts> {
    let k = ctx.kernel()?.stable_like()?;
    let mut cfg = ctx.cfg.exit.clone().expect("validated");
    cfg.sim.master_seed = ctx.seed;
    // the censored kernel is symmetric for constant alpha, so beta0 = 0
    let constants = Constants {
        beta0: k.field.is_constant().then_some(0.0),
        c4: k.field.is_constant().then_some(0.0),
        gamma: None,
    };
    if !k.field.is_constant() {
        return Err(bad(
            "kernel.alpha",
            "the exit identity runs with a constant exponent",
        ));
    }
    let rep = exit_identity_test(&k, &cfg).map_err(|e| prefix("exit", e))?;
    let mut checks: Vec<Check> = rep
        .rows
        .iter()
        .map(|r| Check::at_most(&format!("exit_identity_x{}", r.x), r.discrepancy, r.bound))
        .collect();
    checks.push(Check::flag(
        "grid_within_tolerance",
        rep.grid_within_tolerance,
    ));
    let mut csv = String::from("x,lhs,se,rhs,grid_error,discrepancy,bound\n");
    for r in &rep.rows {
        csv.push_str(&format!(
            "{:?},{:?},{:?},{:?},{:?},{:?},{:?}\n",
            r.x, r.lhs, r.standard_error, r.rhs, r.grid_error, r.discrepancy, r.bound
        ));
    }
    ctx.artifact("exit_identity.csv", &csv)?;
    Ok((constants, checks, serde_json::to_value(&rep)?))
}

fn run_sampler(ctx: &mut Ctx) -> Result<Parts> {
    let sb = ctx.cfg.sampler.clone().unwrap_or_default();
    let us = u_grid(sb.u_max, sb.u_points);
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    let mut draws_csv = String::from("alpha,dim,index,x0,x1\n");
    let mut ecf_csv = String::from("alpha,dim,u,re,im,target,error\n");
    for (ai, &a) in sb.alphas.iter().enumerate() {
        for &dim in &sb.dims {
            let spec = StableSpec {
                alpha: a,
                dim,
                seed: derive_seed(ctx.seed, (ai * 16 + dim) as u64),
            };
            let xs = sample_batch(&spec, sb.draws)?;
            let mut dir = vec![0.0; dim];
            dir[0] = 1.0;
            let rep = ecf_report(&xs, dim, &dir, &us, stable_cf(a, 1.0))?;
            checks.push(Check::at_most(
                &format!("ecf_alpha_{a}_d{dim}"),
                rep.max_error,
                sb.ecf_tolerance,
            ));
            if a == 2.0 {
                // sample variance of one coordinate: target 2, SE 2 sqrt(2 / n)
                let n = sb.draws as f64;
                let m = xs.iter().step_by(dim).sum::<f64>() / n;
                let v = xs.iter().step_by(dim).map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
                let se = 2.0 * (2.0 / n).sqrt();
                checks.push(Check::at_most(
                    &format!("gaussian_variance_d{dim}"),
                    (v - 2.0).abs() / se,
                    4.0,
                ));
            }
            for (i, p) in xs.chunks(dim).take(sb.dump).enumerate() {
                let x1 = p.get(1).map_or(String::new(), |v| format!("{v:?}"));
                draws_csv.push_str(&format!("{a:?},{dim},{i},{:?},{x1}\n", p[0]));
            }
            for r in &rep.rows {
                ecf_csv.push_str(&format!(
                    "{a:?},{dim},{:?},{:?},{:?},{:?},{:?}\n",
                    r.u, r.re, r.im, r.target, r.error
                ));
            }
            rows.push(serde_json::json!({ "alpha": a, "dim": dim, "max_error": rep.max_error, "at_u": rep.at_u }));
        }
    }
    ctx.artifact("draws.csv", &draws_csv)?;
    ctx.artifact("ecf.csv", &ecf_csv)?;
    Ok((
        Constants::default(),
        checks,
        serde_json::json!({ "ecf": rows }),
    ))
}
