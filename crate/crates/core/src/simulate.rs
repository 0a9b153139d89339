//! Monte-Carlo simulation of stable-like processes: free (frozen-exponent
//! Euler or compound Poisson), censored on an open set `D` (jumps leaving
//! `D` suppressed), and killed on leaving `D`.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditions::QuadratureConfig;
use crate::ecf::{ecf_report, stable_cf, u_grid, EcfReport};
use crate::exponent::ExponentField;
use crate::forms::{SmoothBump, TestFunction};
use crate::kernel::{stable_like_kernel, Normalization, StableLike};
use crate::operator::generator_apply;
use crate::quadrature::{sphere_area, GaussLegendre};
use crate::rng::{stream, StreamRng};
use crate::sampler::isotropic_unchecked;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    FrozenEuler,
    CompoundPoisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RecordMode {
    #[default]
    Full,
    /// Keep only the start and final states.
    FinalOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub time_step: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub scheme: Scheme,
    /// Jumps shorter than this are dropped by the compound Poisson scheme.
    pub small_jump_cutoff: f64,
    /// Near the boundary the cutoff shrinks to this fraction of the distance.
    pub cutoff_fraction: f64,
    pub master_seed: u64,
    pub boundary_tol: f64,
    /// A boundary approach needs distance below `boundary_tol` and local
    /// jump intensity above this cap.
    pub intensity_cap: f64,
    pub record: RecordMode,
    pub max_events: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            time_step: 1e-3,
            horizon: 1.0,
            n_paths: 1000,
            scheme: Scheme::FrozenEuler,
            small_jump_cutoff: 1e-3,
            cutoff_fraction: 0.5,
            master_seed: 0,
            boundary_tol: 1e-4,
            intensity_cap: 1e6,
            record: RecordMode::Full,
            max_events: 50_000_000,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: &str| Err(Error::param(name, reason.to_string()));
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad("horizon", "must be positive");
        }
        if !(self.time_step > 0.0 && self.time_step <= self.horizon) {
            return bad("time_step", "need 0 < time_step <= horizon");
        }
        if self.n_paths == 0 {
            return bad("n_paths", "must be positive");
        }
        if !(self.small_jump_cutoff > 0.0 && self.small_jump_cutoff < 1.0) {
            return bad("small_jump_cutoff", "need 0 < cutoff < 1");
        }
        if !(self.cutoff_fraction > 0.0 && self.cutoff_fraction < 1.0) {
            return bad("cutoff_fraction", "need 0 < fraction < 1");
        }
        if !(self.boundary_tol > 0.0) {
            return bad("boundary_tol", "must be positive");
        }
        if !(self.intensity_cap > 0.0) {
            return bad("intensity_cap", "must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Whole,
    Interval { lower: f64, upper: f64 },
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    ComplementOfPoints { points: Vec<Vec<f64>> },
}

/// An open set `D` with a declared boundary dimension `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenSetSpec {
    #[serde(flatten)]
    pub shape: Shape,
    #[serde(default)]
    pub boundary_dimension: f64,
}

impl OpenSetSpec {
    pub fn whole() -> Self {
        Self {
            shape: Shape::Whole,
            boundary_dimension: 0.0,
        }
    }

    pub fn interval(lower: f64, upper: f64) -> Self {
        Self {
            shape: Shape::Interval { lower, upper },
            boundary_dimension: 0.0,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let ok = match &self.shape {
            Shape::Whole => true,
            Shape::Interval { lower, upper } => dim == 1 && lower < upper,
            Shape::Box { lower, upper } => {
                lower.len() == dim
                    && upper.len() == dim
                    && lower.iter().zip(upper).all(|(a, b)| a < b)
            }
            Shape::Ball { center, radius } => center.len() == dim && *radius > 0.0,
            Shape::ComplementOfPoints { points } => points.iter().all(|p| p.len() == dim),
        };
        if !ok {
            return Err(Error::param(
                "domain",
                format!(
                    "{:?} is not a valid open set in dimension {dim}",
                    self.shape
                ),
            ));
        }
        if !(0.0..=dim as f64).contains(&self.boundary_dimension) {
            return Err(Error::param(
                "domain.boundary_dimension",
                "must lie in [0, d]",
            ));
        }
        Ok(())
    }

    pub fn dist_to_boundary(&self, x: &[f64]) -> f64 {
        match &self.shape {
            Shape::Whole => f64::INFINITY,
            Shape::Interval { lower, upper } => (x[0] - lower).min(upper - x[0]),
            Shape::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(v, (a, b))| (v - a).min(b - v))
                .fold(f64::INFINITY, f64::min),
            Shape::Ball { center, radius } => radius - crate::kernel::distance(x, center),
            Shape::ComplementOfPoints { points } => points
                .iter()
                .map(|p| crate::kernel::distance(x, p))
                .fold(f64::INFINITY, f64::min),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.dist_to_boundary(x) > 0.0
    }

    pub fn is_bounded(&self) -> bool {
        matches!(
            self.shape,
            Shape::Interval { .. } | Shape::Box { .. } | Shape::Ball { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    Free,
    Censored(OpenSetSpec),
    Part(OpenSetSpec),
}

impl Mode {
    fn domain(&self) -> Option<&OpenSetSpec> {
        match self {
            Mode::Free => None,
            Mode::Censored(d) | Mode::Part(d) => Some(d),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Mode::Free => "free",
            Mode::Censored(_) => "censored",
            Mode::Part(_) => "part",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeathCause {
    None,
    KilledJumpOut,
    BoundaryApproach,
    Horizon,
    /// Left the stopping set (exit-time experiments).
    Exit,
}

impl DeathCause {
    pub fn code(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::KilledJumpOut => "killed_jump_out",
            Self::BoundaryApproach => "boundary_approach",
            Self::Horizon => "horizon",
            Self::Exit => "exit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    /// Event times; for the Euler scheme these are the step times.
    pub times: Vec<f64>,
    /// Flat states, `dim` entries per recorded time.
    pub states: Vec<f64>,
    pub alive: bool,
    pub death_cause: DeathCause,
    pub death_time: f64,
    pub events: u64,
    pub suppressed: u64,
    /// Accepted jumps from `D` to a point outside `D`; zero by construction
    /// in censored mode.
    pub interior_to_boundary: u64,
    /// Local jump intensity when a boundary approach was flagged.
    pub approach_intensity: Option<f64>,
}

impl Path {
    pub fn state(&self, i: usize, dim: usize) -> &[f64] {
        &self.states[i * dim..(i + 1) * dim]
    }

    pub fn last_state(&self, dim: usize) -> &[f64] {
        let n = self.times.len();
        self.state(n - 1, dim)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryBatch {
    pub kernel: String,
    pub scheme: Scheme,
    pub mode: String,
    pub seed: u64,
    pub dim: usize,
    pub horizon: f64,
    pub start: Vec<f64>,
    pub small_jump_variance_rate: Option<f64>,
    pub paths: Vec<Path>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub kernel: String,
    pub mode: String,
    pub paths: usize,
    pub horizon: f64,
    pub survival_at_horizon: f64,
    pub boundary_fraction: f64,
    pub killed_fraction: f64,
    pub interior_to_boundary_jumps: u64,
    pub mean_events: f64,
    pub max_events: u64,
    /// `int_{|h| < eps} |h|^2 k(x0, x0 + h) dh` at the start, the variance
    /// rate of the dropped small jumps (compound Poisson only).
    pub small_jump_variance_rate: Option<f64>,
    pub death_causes: std::collections::BTreeMap<String, usize>,
    pub survival_curve: Vec<(f64, f64)>,
}

impl TrajectoryBatch {
    pub fn fraction(&self, cause: DeathCause) -> f64 {
        self.paths.iter().filter(|p| p.death_cause == cause).count() as f64
            / self.paths.len() as f64
    }

    pub fn boundary_fraction(&self) -> f64 {
        self.fraction(DeathCause::BoundaryApproach)
    }

    /// Fraction of paths alive at time `t`.
    pub fn survival(&self, t: f64) -> f64 {
        self.paths
            .iter()
            .filter(|p| p.death_cause == DeathCause::Horizon || p.death_time > t)
            .count() as f64
            / self.paths.len() as f64
    }

    pub fn death_causes(&self) -> std::collections::BTreeMap<String, usize> {
        let mut h = std::collections::BTreeMap::new();
        for p in &self.paths {
            *h.entry(p.death_cause.code().to_string()).or_insert(0) += 1;
        }
        h
    }

    pub fn interior_to_boundary_jumps(&self) -> u64 {
        self.paths.iter().map(|p| p.interior_to_boundary).sum()
    }

    pub fn final_states(&self) -> Vec<f64> {
        self.paths
            .iter()
            .flat_map(|p| p.last_state(self.dim).to_vec())
            .collect()
    }

    pub fn summary(&self) -> BatchSummary {
        let curve = (0..=20)
            .map(|i| {
                let t = self.horizon * i as f64 / 20.0;
                (t, self.survival(t))
            })
            .collect();
        BatchSummary {
            kernel: self.kernel.clone(),
            mode: self.mode.clone(),
            paths: self.paths.len(),
            horizon: self.horizon,
            survival_at_horizon: self.fraction(DeathCause::Horizon),
            boundary_fraction: self.boundary_fraction(),
            killed_fraction: self.fraction(DeathCause::KilledJumpOut),
            interior_to_boundary_jumps: self.interior_to_boundary_jumps(),
            mean_events: self.paths.iter().map(|p| p.events as f64).sum::<f64>()
                / self.paths.len() as f64,
            max_events: self.paths.iter().map(|p| p.events).max().unwrap_or(0),
            small_jump_variance_rate: self.small_jump_variance_rate,
            death_causes: self.death_causes(),
            survival_curve: curve,
        }
    }

    /// Columnar CSV: `path_id,t,x0[,x1..],event`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("path_id,t");
        for a in 0..self.dim {
            let _ = write!(s, ",x{a}");
        }
        s.push_str(",event\n");
        for (id, p) in self.paths.iter().enumerate() {
            let n = p.times.len();
            for i in 0..n {
                let _ = write!(s, "{id},{:?}", p.times[i]);
                for v in p.state(i, self.dim) {
                    let _ = write!(s, ",{v:?}");
                }
                let event = if i == 0 {
                    "start"
                } else if i + 1 == n {
                    p.death_cause.code()
                } else {
                    "step"
                };
                let _ = writeln!(s, ",{event}");
            }
        }
        s
    }
}

struct Recorder {
    mode: RecordMode,
    times: Vec<f64>,
    states: Vec<f64>,
}

impl Recorder {
    fn new(mode: RecordMode, x0: &[f64]) -> Self {
        Self {
            mode,
            times: vec![0.0],
            states: x0.to_vec(),
        }
    }

    fn push(&mut self, t: f64, x: &[f64]) {
        if self.mode == RecordMode::Full {
            self.times.push(t);
            self.states.extend_from_slice(x);
        }
    }

    fn finish(mut self, t: f64, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let dim = x.len();
        let n = self.times.len();
        let same = self.times[n - 1] == t && &self.states[(n - 1) * dim..] == x;
        if !same || n == 1 {
            self.times.push(t);
            self.states.extend_from_slice(x);
        }
        (self.times, self.states)
    }
}

fn direction(dim: usize, rng: &mut StreamRng) -> Vec<f64> {
    if dim == 1 {
        return vec![if rng.random::<bool>() { 1.0 } else { -1.0 }];
    }
    loop {
        let v: Vec<f64> = (0..dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-300 {
            return v.into_iter().map(|a| a / n).collect();
        }
    }
}

/// Intensity treated as overflow away from the boundary.
pub const OVERFLOW_INTENSITY: f64 = 1e15;

/// Total rate of jumps longer than `eps` from `x`:
/// `w(alpha(x)) |S^{d-1}| eps^{-alpha} / alpha`.
pub fn tail_intensity(k: &StableLike, x: &[f64], eps: f64) -> f64 {
    let a = k.field.alpha(x);
    k.weight_at(x) * sphere_area(k.field.dim) * eps.powf(-a) / a
}

fn check_kernel(k: &StableLike) -> Result<()> {
    if k.anchored_at_target {
        return Err(Error::Unsupported(
            "simulation needs a kernel whose exponent is evaluated at the source".into(),
        ));
    }
    if k.normalization != Normalization::LevyConstant {
        return Err(Error::Unsupported(
            "simulation needs the fractional Laplacian normalization".into(),
        ));
    }
    Ok(())
}

fn run_compound_poisson(
    k: &StableLike,
    mode: &Mode,
    stop: Option<&OpenSetSpec>,
    x0: &[f64],
    cfg: &SimConfig,
    index: u64,
) -> Result<Path> {
    let dim = x0.len();
    let mut rng = stream(cfg.master_seed, index);
    let domain = mode.domain();
    let mut x = x0.to_vec();
    let mut t = 0.0;
    let mut rec = Recorder::new(cfg.record, x0);
    let (mut events, mut suppressed, mut i2b) = (0u64, 0u64, 0u64);
    let mut approach_intensity = None;
    let cause;
    loop {
        let dist = domain.map_or(f64::INFINITY, |d| d.dist_to_boundary(&x));
        let eps = cfg.small_jump_cutoff.min(cfg.cutoff_fraction * dist);
        let a = k
            .field
            .alpha_checked(&x)
            .map_err(|e| Error::Simulation(format!("path {index}: {e}")))?;
        let rate = tail_intensity(k, &x, eps);
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::Simulation(format!(
                "path {index}: jump intensity {rate:e} at {x:?} (distance to boundary {dist:e})"
            )));
        }
        let wait: f64 = rng.sample::<f64, _>(Exp1) / rate;
        if t + wait >= cfg.horizon {
            t = cfg.horizon;
            cause = DeathCause::Horizon;
            break;
        }
        t += wait;
        events += 1;
        if events > cfg.max_events {
            return Err(Error::Simulation(format!(
                "path {index}: more than {} events before t = {t} at {x:?}",
                cfg.max_events
            )));
        }
        let u: f64 = 1.0 - rng.random::<f64>();
        let r = eps * u.powf(-1.0 / a);
        let theta = direction(dim, &mut rng);
        let y: Vec<f64> = x.iter().zip(&theta).map(|(a, b)| a + r * b).collect();
        if let Some(d) = domain {
            if !d.contains(&y) {
                match mode {
                    Mode::Censored(_) => {
                        suppressed += 1;
                        continue;
                    }
                    _ => {
                        x = y;
                        cause = DeathCause::KilledJumpOut;
                        break;
                    }
                }
            }
        }
        x = y;
        rec.push(t, &x);
        if let Some(d) = domain {
            if !d.contains(&x) {
                i2b += 1;
            }
            let dist = d.dist_to_boundary(&x);
            let eps = cfg
                .small_jump_cutoff
                .min(cfg.cutoff_fraction * dist.max(0.0));
            let intensity = tail_intensity(k, &x, eps);
            if dist < cfg.boundary_tol && intensity > cfg.intensity_cap {
                approach_intensity = Some(intensity);
                cause = DeathCause::BoundaryApproach;
                break;
            }
            if dist >= cfg.boundary_tol && intensity > OVERFLOW_INTENSITY {
                return Err(Error::Simulation(format!(
                    "path {index}: jump intensity {intensity:e} at distance {dist:e} >= boundary_tol; boundary_tol is misconfigured"
                )));
            }
        }
        if let Some(g) = stop {
            if !g.contains(&x) {
                cause = DeathCause::Exit;
                break;
            }
        }
    }
    let (times, states) = rec.finish(t, &x);
    Ok(Path {
        times,
        states,
        alive: cause == DeathCause::Horizon,
        death_cause: cause,
        death_time: t,
        events,
        suppressed,
        interior_to_boundary: i2b,
        approach_intensity,
    })
}

fn run_euler(k: &StableLike, x0: &[f64], cfg: &SimConfig, index: u64) -> Result<Path> {
    let dim = x0.len();
    let mut rng = stream(cfg.master_seed, index);
    let steps = (cfg.horizon / cfg.time_step).round().max(1.0) as usize;
    let dt = cfg.horizon / steps as f64;
    let mut x = x0.to_vec();
    let mut rec = Recorder::new(cfg.record, x0);
    for s in 1..=steps {
        let a = k
            .field
            .alpha_checked(&x)
            .map_err(|e| Error::Simulation(format!("path {index}: {e}")))?;
        let scale = dt.powf(1.0 / a);
        let xi = isotropic_unchecked(a, dim, &mut rng);
        for (v, z) in x.iter_mut().zip(&xi) {
            *v += scale * z;
        }
        rec.push(s as f64 * dt, &x);
    }
    let (times, states) = rec.finish(cfg.horizon, &x);
    Ok(Path {
        times,
        states,
        alive: true,
        death_cause: DeathCause::Horizon,
        death_time: cfg.horizon,
        events: steps as u64,
        suppressed: 0,
        interior_to_boundary: 0,
        approach_intensity: None,
    })
}

fn batch(
    k: &StableLike,
    mode: Mode,
    stop: Option<&OpenSetSpec>,
    x0: &[f64],
    cfg: &SimConfig,
) -> Result<TrajectoryBatch> {
    cfg.validate()?;
    check_kernel(k)?;
    let dim = k.field.dim;
    if x0.len() != dim {
        return Err(Error::Dimension {
            expected: dim,
            got: x0.len(),
        });
    }
    if let Some(d) = mode.domain() {
        d.validate(dim)?;
        let dist = d.dist_to_boundary(x0);
        if dist < 10.0 * cfg.boundary_tol {
            return Err(Error::param(
                "start",
                format!("start {x0:?} must lie in D at distance >= 10 boundary_tol (got {dist:e})"),
            ));
        }
    }
    let paths = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| match cfg.scheme {
            Scheme::FrozenEuler if mode == Mode::Free && stop.is_none() => run_euler(k, x0, cfg, i),
            Scheme::FrozenEuler => Err(Error::param(
                "scheme",
                "censored, part and exit-time runs need the compound_poisson scheme",
            )),
            Scheme::CompoundPoisson => run_compound_poisson(k, &mode, stop, x0, cfg, i),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrajectoryBatch {
        kernel: jump_label(k),
        scheme: cfg.scheme,
        mode: mode.name().into(),
        seed: cfg.master_seed,
        dim,
        horizon: cfg.horizon,
        start: x0.to_vec(),
        small_jump_variance_rate: (cfg.scheme == Scheme::CompoundPoisson).then(|| {
            let a = k.field.alpha(x0);
            k.weight_at(x0) * sphere_area(dim) * cfg.small_jump_cutoff.powf(2.0 - a) / (2.0 - a)
        }),
        paths,
    })
}

fn jump_label(k: &StableLike) -> String {
    use crate::kernel::JumpKernel;
    k.label()
}

pub fn simulation_kernel(ef: &ExponentField) -> Result<StableLike> {
    stable_like_kernel(ef.clone(), Normalization::LevyConstant)
}

pub fn simulate_free(ef: &ExponentField, x0: &[f64], cfg: &SimConfig) -> Result<TrajectoryBatch> {
    batch(&simulation_kernel(ef)?, Mode::Free, None, x0, cfg)
}

pub fn simulate_censored(
    k: &StableLike,
    domain: &OpenSetSpec,
    x0: &[f64],
    cfg: &SimConfig,
) -> Result<TrajectoryBatch> {
    batch(k, Mode::Censored(domain.clone()), None, x0, cfg)
}

pub fn simulate_part(
    k: &StableLike,
    domain: &OpenSetSpec,
    x0: &[f64],
    cfg: &SimConfig,
) -> Result<TrajectoryBatch> {
    batch(k, Mode::Part(domain.clone()), None, x0, cfg)
}

/// Censored paths in `domain` stopped when they leave `stop`.
pub fn simulate_censored_until_exit(
    k: &StableLike,
    domain: &OpenSetSpec,
    stop: &OpenSetSpec,
    x0: &[f64],
    cfg: &SimConfig,
) -> Result<TrajectoryBatch> {
    batch(k, Mode::Censored(domain.clone()), Some(stop), x0, cfg)
}

/// ECF distance of `X_T / T^{1/alpha}` to the standard stable law.
pub fn scaled_endpoint_ecf(batch: &TrajectoryBatch, alpha: f64) -> Result<EcfReport> {
    let s = batch.horizon.powf(-1.0 / alpha);
    let xs: Vec<f64> = batch
        .final_states()
        .chunks(batch.dim)
        .zip(batch.start.iter().cycle())
        .flat_map(|(p, _)| {
            p.iter()
                .zip(&batch.start)
                .map(|(v, x0)| (v - x0) * s)
                .collect::<Vec<_>>()
        })
        .collect();
    let mut dir = vec![0.0; batch.dim];
    dir[0] = 1.0;
    ecf_report(
        &xs,
        batch.dim,
        &dir,
        &u_grid(5.0, 101),
        stable_cf(alpha, 1.0),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub paths: usize,
    pub compared_events: u64,
    pub mismatches: usize,
    pub first_mismatch: Option<usize>,
}

/// Censored and part paths from the same streams agree event by event until
/// the part path is killed.
pub fn coupling_check(
    censored: &TrajectoryBatch,
    part: &TrajectoryBatch,
) -> Result<CouplingReport> {
    if censored.paths.len() != part.paths.len()
        || censored.seed != part.seed
        || censored.dim != part.dim
    {
        return Err(Error::param("batches", "coupling needs matched batches"));
    }
    let dim = censored.dim;
    let mut mismatches = 0;
    let mut first = None;
    let mut compared = 0u64;
    for (i, (c, p)) in censored.paths.iter().zip(&part.paths).enumerate() {
        let killed = p.death_cause == DeathCause::KilledJumpOut;
        // the part path's last record is the killing jump; compare what precedes it
        let n = if killed {
            p.times.len() - 1
        } else {
            p.times.len()
        };
        let mut ok = c.times.len() >= n;
        for j in 0..n.min(c.times.len()) {
            compared += 1;
            if c.times[j] != p.times[j] || c.state(j, dim) != p.state(j, dim) {
                ok = false;
                break;
            }
        }
        if !killed {
            ok &= c.death_cause == p.death_cause && c.times.len() == p.times.len();
        } else {
            ok &= c.death_time >= p.death_time;
        }
        if !ok {
            mismatches += 1;
            first.get_or_insert(i);
        }
    }
    Ok(CouplingReport {
        paths: censored.paths.len(),
        compared_events: compared,
        mismatches,
        first_mismatch: first,
    })
}

/// `Lf` tabulated on a uniform grid around the support of `f` and linearly
/// interpolated. Off the support `f` and its gradient vanish and
/// `Lf(x) = int f(y) k(x, y) dy`. One dimension only.
#[derive(Debug, Clone)]
pub struct GeneratorTable {
    pub lower: f64,
    pub spacing: f64,
    pub values: Vec<f64>,
    pub max_error: f64,
    pub all_converged: bool,
    f: SmoothBump,
    k: StableLike,
}

impl GeneratorTable {
    /// Nodes within `near` of the support use the principal-value
    /// quadrature; the rest of the table, out to `far`, and all points
    /// beyond it use the direct integral.
    pub fn new(
        k: &StableLike,
        f: &SmoothBump,
        quad: &QuadratureConfig,
        near: f64,
        far: f64,
        spacing: f64,
    ) -> Result<Self> {
        if k.field.dim != 1 || f.center.len() != 1 {
            return Err(Error::Unsupported(
                "generator tables are one-dimensional".into(),
            ));
        }
        let (c, r) = (f.center[0], f.radius);
        let lower = c - r - far;
        let n = ((2.0 * (r + far)) / spacing).ceil() as usize + 1;
        let mut table = Self {
            lower,
            spacing,
            values: Vec::new(),
            max_error: 0.0,
            all_converged: true,
            f: f.clone(),
            k: k.clone(),
        };
        let vals = (0..n)
            .into_par_iter()
            .map(|i| {
                let x = lower + i as f64 * spacing;
                if (x - c).abs() <= r + near {
                    generator_apply(k, f, &[x], quad).map(|v| (v.value, v.error, v.converged))
                } else {
                    Ok((table.direct(x), 0.0, true))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        table.max_error = vals.iter().map(|v| v.1).fold(0.0, f64::max);
        table.all_converged = vals.iter().all(|v| v.2);
        table.values = vals.iter().map(|v| v.0).collect();
        Ok(table)
    }

    /// `int f(y) k(x, y) dy`, equal to `Lf(x)` off the support of `f`.
    fn direct(&self, x: f64) -> f64 {
        let gl = GaussLegendre::new(8);
        let (c, r) = (self.f.center[0], self.f.radius);
        let panels = 8;
        let w = 2.0 * r / panels as f64;
        (0..panels)
            .map(|p| {
                let a = c - r + p as f64 * w;
                gl.integrate(a, a + w, |y| {
                    self.f.value(&[y]) * self.k.frozen(&[x], (y - x).abs())
                })
            })
            .sum()
    }

    pub fn eval(&self, x: f64) -> f64 {
        let s = (x - self.lower) / self.spacing;
        let last = (self.values.len() - 1) as f64;
        if (0.0..=last).contains(&s) {
            let i = (s.floor() as usize).min(self.values.len() - 2);
            let t = s - i as f64;
            return (1.0 - t) * self.values[i] + t * self.values[i + 1];
        }
        self.direct(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleRow {
    pub function: String,
    pub mean: f64,
    pub standard_error: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub paths: usize,
    pub rows: Vec<MartingaleRow>,
    pub max_abs_z: f64,
    pub table_max_error: f64,
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// `M_T = f(X_T) - f(X_0) - int_0^T Lf(X_s) ds` per path, summarized by mean,
/// standard error and `z = mean / SE`. Euler paths use the trapezoid rule on
/// the step grid; compound Poisson paths are piecewise constant and
/// integrate exactly between events.
pub fn martingale_test(
    batch: &TrajectoryBatch,
    fs: &[SmoothBump],
    k: &StableLike,
    quad: &QuadratureConfig,
) -> Result<MartingaleReport> {
    if batch.dim != 1 {
        return Err(Error::Unsupported(
            "martingale test is one-dimensional".into(),
        ));
    }
    if batch.paths.iter().any(|p| p.times.len() < 2) {
        return Err(Error::param("batch", "needs full path records"));
    }
    let mut rows = Vec::with_capacity(fs.len());
    let mut table_err: f64 = 0.0;
    for f in fs {
        let table = GeneratorTable::new(k, f, quad, 0.5, 6.0, 2e-3)?;
        if !table.all_converged {
            return Err(Error::Quadrature(format!(
                "Lf table for {} did not converge",
                f.descriptor()
            )));
        }
        table_err = table_err.max(table.max_error);
        let m: Vec<f64> = batch
            .paths
            .par_iter()
            .map(|p| {
                let n = p.times.len();
                let g: Vec<f64> = p.states.iter().map(|&x| table.eval(x)).collect();
                let mut integral = 0.0;
                for i in 0..n - 1 {
                    let dt = p.times[i + 1] - p.times[i];
                    integral += match batch.scheme {
                        Scheme::FrozenEuler => 0.5 * dt * (g[i] + g[i + 1]),
                        Scheme::CompoundPoisson => dt * g[i],
                    };
                }
                f.value(&[p.states[n - 1]]) - f.value(&[p.states[0]]) - integral
            })
            .collect();
        let (mean, se) = mean_se(&m);
        let z = if se > 0.0 { mean / se } else { 0.0 };
        rows.push(MartingaleRow {
            function: f.descriptor(),
            mean,
            standard_error: se,
            z,
        });
    }
    Ok(MartingaleReport {
        paths: batch.paths.len(),
        max_abs_z: rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max),
        rows,
        table_max_error: table_err,
    })
}

/// Standard suite of bumps around `x0`.
pub fn standard_bumps(x0: f64) -> Vec<SmoothBump> {
    [
        (0.0, 1.0),
        (0.3, 0.5),
        (-0.5, 0.8),
        (0.8, 1.5),
        (-0.2, 0.3),
        (0.0, 2.5),
    ]
    .iter()
    .map(|&(c, r)| SmoothBump::new(vec![x0 + c], r))
    .collect()
}

/// Mean of `f_n(X_T) - f_n(X_0)` for bumps of growing radius around the
/// start, which increase to `1`.
pub fn conservativeness_sequence(batch: &TrajectoryBatch, radii: &[f64]) -> Vec<(f64, f64, f64)> {
    radii
        .iter()
        .map(|&r| {
            let f = SmoothBump::new(batch.start.clone(), r);
            let d: Vec<f64> = batch
                .paths
                .iter()
                .map(|p| f.value(p.last_state(batch.dim)) - f.value(&batch.start))
                .collect();
            let (m, se) = mean_se(&d);
            (r, m, se)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(a: f64) -> StableLike {
        simulation_kernel(&ExponentField::constant(a, 1).unwrap()).unwrap()
    }

    fn cp(paths: usize, horizon: f64, seed: u64) -> SimConfig {
        SimConfig {
            scheme: Scheme::CompoundPoisson,
            n_paths: paths,
            horizon,
            time_step: horizon,
            master_seed: seed,
            ..Default::default()
        }
    }

    #[test]
    fn open_sets() {
        let d = OpenSetSpec::interval(0.0, 1.0);
        assert!(d.contains(&[0.5]) && !d.contains(&[1.0]) && !d.contains(&[-0.1]));
        assert_eq!(d.dist_to_boundary(&[0.25]), 0.25);
        let b = OpenSetSpec {
            shape: Shape::Ball {
                center: vec![0.0, 0.0],
                radius: 1.0,
            },
            boundary_dimension: 1.0,
        };
        assert!(b.validate(2).is_ok() && b.validate(1).is_err());
        assert!((b.dist_to_boundary(&[0.6, 0.0]) - 0.4).abs() < 1e-15);
        let c = OpenSetSpec {
            shape: Shape::ComplementOfPoints {
                points: vec![vec![0.0]],
            },
            boundary_dimension: 0.0,
        };
        assert!(!c.contains(&[0.0]) && c.contains(&[1e-9]));
    }

    #[test]
    fn free_paths_are_conservative() {
        let ef = ExponentField::constant(1.5, 1).unwrap();
        let cfg = SimConfig {
            n_paths: 50,
            time_step: 0.01,
            ..Default::default()
        };
        let b = simulate_free(&ef, &[0.0], &cfg).unwrap();
        assert!(b.paths.iter().all(|p| p.death_cause == DeathCause::Horizon));
        assert_eq!(b.paths[0].times.len(), 101);
        let c = simulate_free(
            &ef,
            &[0.0],
            &SimConfig {
                scheme: Scheme::CompoundPoisson,
                ..cfg
            },
        )
        .unwrap();
        assert!(c.paths.iter().all(|p| p.alive));
    }

    #[test]
    fn censored_paths_stay_inside() {
        let d = OpenSetSpec::interval(0.0, 1.0);
        let b = simulate_censored(&constant(1.2), &d, &[0.5], &cp(40, 1.0, 4)).unwrap();
        assert_eq!(b.interior_to_boundary_jumps(), 0);
        for p in &b.paths {
            for i in 0..p.times.len() {
                assert!(d.contains(p.state(i, 1)));
            }
            assert_ne!(p.death_cause, DeathCause::KilledJumpOut);
        }
    }

    #[test]
    fn part_process_is_coupled_to_censored() {
        let d = OpenSetSpec::interval(0.0, 1.0);
        let k = constant(0.8);
        let c = simulate_censored(&k, &d, &[0.5], &cp(40, 2.0, 9)).unwrap();
        let p = simulate_part(&k, &d, &[0.5], &cp(40, 2.0, 9)).unwrap();
        let rep = coupling_check(&c, &p).unwrap();
        assert_eq!(rep.mismatches, 0);
        assert!(p.survival(2.0) <= c.survival(2.0));
        assert!(p.fraction(DeathCause::KilledJumpOut) > 0.5);
    }

    #[test]
    fn euler_is_rejected_for_censored_runs() {
        let d = OpenSetSpec::interval(0.0, 1.0);
        let cfg = SimConfig {
            n_paths: 2,
            ..Default::default()
        };
        assert!(simulate_censored(&constant(1.0), &d, &[0.5], &cfg).is_err());
        assert!(simulate_censored(&constant(1.0), &d, &[1e-5], &cp(2, 1.0, 0)).is_err());
    }

    #[test]
    fn zero_function_has_zero_residual() {
        let ef = ExponentField::constant(1.5, 1).unwrap();
        let b = simulate_free(
            &ef,
            &[0.0],
            &SimConfig {
                n_paths: 20,
                time_step: 0.05,
                ..Default::default()
            },
        )
        .unwrap();
        let zero = SmoothBump {
            center: vec![0.0],
            radius: 1.0,
            height: 0.0,
        };
        let rep =
            martingale_test(&b, &[zero], &constant(1.5), &QuadratureConfig::default()).unwrap();
        assert_eq!(rep.rows[0].mean, 0.0);
    }

    #[test]
    fn table_matches_direct_evaluation() {
        let k = constant(1.5);
        let f = SmoothBump::new(vec![0.0], 1.0);
        let q = QuadratureConfig::default();
        let t = GeneratorTable::new(&k, &f, &q, 0.5, 4.0, 2e-3).unwrap();
        for x in [0.1234, -0.77, 1.3, 3.0] {
            let direct = generator_apply(&k, &f, &[x], &q).unwrap().value;
            assert!(
                (t.eval(x) - direct).abs() < 1e-5 * direct.abs().max(1e-3),
                "{x} {} {direct}",
                t.eval(x)
            );
        }
        // far field against composite Simpson on the support
        let n = 20_000;
        let h = 2.0 / n as f64;
        let g = |y: f64| f.value(&[y]) * k.frozen(&[-8.0], (y + 8.0).abs());
        let simpson: f64 = (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                w * g(-1.0 + i as f64 * h)
            })
            .sum::<f64>()
            * h
            / 3.0;
        assert!((t.eval(-8.0) - simpson).abs() < 1e-10);
    }
}
