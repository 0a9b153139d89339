//! Exit-time identity for the censored process on an interval `D`:
//! for `G` inside `D` and `v` supported in `D \ closure(G)`,
//! `E_x[exp(-a tau_G) v(X_tau)] = (a - L_G)^{-1} g_v (x)` with
//! `g_v(x) = int v(y) k(x, y) dy`.
//!
//! The right side is a collocation solve on nested vertex grids of `G`,
//! extrapolated in the grid size; the left side is Monte Carlo.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::forms::{SmoothBump, TestFunction};
use crate::kernel::StableLike;
use crate::quadrature::GaussLegendre;
use crate::resolvent::DENSE_LIMIT;
use crate::rng::derive_seed;
use crate::simulate::{simulate_censored_until_exit, DeathCause, OpenSetSpec, SimConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExitIdentityConfig {
    /// Discount rate in `exp(-rate tau)`.
    pub rate: f64,
    pub domain: (f64, f64),
    pub inner: (f64, f64),
    pub v_center: f64,
    pub v_radius: f64,
    pub v_height: f64,
    pub starts: Vec<f64>,
    /// Coarsest number of grid intervals on `G`; the solve also uses 2x and 4x.
    pub intervals: usize,
    pub paths_per_start: usize,
    pub grid_tolerance: f64,
    pub sim: SimConfig,
}

impl Default for ExitIdentityConfig {
    fn default() -> Self {
        Self {
            rate: 1.5,
            domain: (0.0, 1.0),
            inner: (0.3, 0.7),
            v_center: 0.85,
            v_radius: 0.1,
            v_height: 1.0,
            starts: vec![0.35, 0.42, 0.5, 0.58, 0.65],
            intervals: 200,
            paths_per_start: 2000,
            grid_tolerance: 5e-3,
            sim: SimConfig {
                scheme: crate::simulate::Scheme::CompoundPoisson,
                horizon: 10.0,
                time_step: 10.0,
                record: crate::simulate::RecordMode::FinalOnly,
                ..SimConfig::default()
            },
        }
    }
}

impl ExitIdentityConfig {
    pub fn v(&self) -> SmoothBump {
        SmoothBump {
            height: self.v_height,
            ..SmoothBump::new(vec![self.v_center], self.v_radius)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.domain;
        let (a, b) = self.inner;
        if !(lo < a && a < b && b < hi) {
            return Err(Error::param(
                "inner",
                "need domain.0 < inner.0 < inner.1 < domain.1",
            ));
        }
        let (vl, vh) = (self.v_center - self.v_radius, self.v_center + self.v_radius);
        let outside = (vl >= b || vh <= a) && vl >= lo && vh <= hi;
        if !(self.v_radius > 0.0 && outside) {
            return Err(Error::param(
                "v_center",
                "v must be supported in D minus the closure of G",
            ));
        }
        if !(self.rate > 0.0) {
            return Err(Error::param("rate", "must be positive"));
        }
        if self.starts.is_empty() || self.starts.iter().any(|&x| !(x > a && x < b)) {
            return Err(Error::param("starts", "need at least one start inside G"));
        }
        if self.intervals < 8 || 4 * self.intervals > DENSE_LIMIT {
            return Err(Error::param(
                "intervals",
                format!("need 8 <= intervals <= {}", DENSE_LIMIT / 4),
            ));
        }
        if self.paths_per_start < 2 {
            return Err(Error::param("paths_per_start", "need at least 2"));
        }
        if !(self.grid_tolerance > 0.0) {
            return Err(Error::param("grid_tolerance", "must be positive"));
        }
        self.sim.validate()
    }
}

/// `int_{r1}^{r2} w r^{-1-a} dr`
fn tail(w: f64, a: f64, r1: f64, r2: f64) -> f64 {
    w / a * (r1.powf(-a) - r2.powf(-a))
}

/// Collocation matrix of `L_G` on the interior vertices of `intervals`
/// equal pieces of `G`, with `u = 0` on `D \ G`. Hats are integrated
/// against the kernel except on the two cells around the collocation
/// point, where the quadratic interpolant is used so the principal value
/// is finite; jumps leaving `D` do not happen.
pub fn killed_generator(
    k: &StableLike,
    domain: (f64, f64),
    inner: (f64, f64),
    intervals: usize,
) -> DMatrix<f64> {
    let (lo, hi) = domain;
    let (a, b) = inner;
    let h = (b - a) / intervals as f64;
    let n = intervals - 1;
    let gl = GaussLegendre::new(8);
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = a + (i + 1) as f64 * h;
            let al = k.field.alpha(&[xi]);
            let w = k.weight_at(&[xi]);
            let kr = |r: f64| w * r.powf(-1.0 - al);
            let mut row = vec![0.0; n];
            let near = w * h.powf(-al) / (2.0 - al);
            for (j, e) in row.iter_mut().enumerate() {
                let m = (j as isize - i as isize).unsigned_abs();
                if m == 0 {
                    continue;
                }
                let d = m as f64 * h;
                // outer half of the hat, then the inner half when it is outside the window
                let mut v = gl.integrate(d, d + h, |r| (d + h - r) / h * kr(r));
                if m >= 2 {
                    v += gl.integrate(d - h, d, |r| (r - d + h) / h * kr(r));
                } else {
                    v += near;
                }
                *e = v;
            }
            row[i] = -2.0 * near - (tail(w, al, h, xi - lo) + tail(w, al, h, hi - xi));
            row
        })
        .collect();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

/// `g_v(x) = int v(y) k(x, y) dy`
pub fn jump_in_rate(k: &StableLike, v: &SmoothBump, x: f64) -> f64 {
    let gl = GaussLegendre::new(8);
    let (c, r) = (v.center[0], v.radius);
    let panels = 16;
    let step = 2.0 * r / panels as f64;
    (0..panels)
        .map(|p| {
            let lo = c - r + p as f64 * step;
            gl.integrate(lo, lo + step, |y| {
                v.value(&[y]) * k.frozen(&[x], (y - x).abs())
            })
        })
        .sum()
}

/// `(rate - L_G)^{-1} g_v` at the interior vertices, with their positions.
pub fn exit_resolvent(
    k: &StableLike,
    cfg: &ExitIdentityConfig,
    intervals: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if k.field.dim != 1 {
        return Err(Error::Unsupported(
            "exit identity is one-dimensional".into(),
        ));
    }
    let (a, b) = cfg.inner;
    let h = (b - a) / intervals as f64;
    let l = killed_generator(k, cfg.domain, cfg.inner, intervals);
    let n = l.nrows();
    let nodes: Vec<f64> = (1..=n).map(|i| a + i as f64 * h).collect();
    let v = cfg.v();
    let g = DVector::from_iterator(n, nodes.iter().map(|&x| jump_in_rate(k, &v, x)));
    let m = DMatrix::identity(n, n) * cfg.rate - l;
    let u = m
        .lu()
        .solve(&g)
        .ok_or(Error::Singular { alpha: cfg.rate })?;
    Ok((nodes, u.iter().copied().collect()))
}

/// Piecewise linear interpolation on `nodes` with zero at the ends of `G`.
fn interpolate(inner: (f64, f64), nodes: &[f64], values: &[f64], x: f64) -> f64 {
    let h = nodes[0] - inner.0;
    let s = (x - inner.0) / h;
    let i = s.floor() as usize;
    let at = |j: usize| {
        if j == 0 || j > values.len() {
            0.0
        } else {
            values[j - 1]
        }
    };
    let t = s - i as f64;
    (1.0 - t) * at(i) + t * at(i + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSolution {
    pub starts: Vec<f64>,
    /// Values on the three grids, coarse to fine.
    pub levels: [Vec<f64>; 3],
    pub extrapolated: Vec<f64>,
    pub observed_order: Vec<f64>,
    pub grid_error: Vec<f64>,
}

/// Right side at the starts: three nested grids, Richardson extrapolation
/// with the observed order (clamped to `[0.25, 2]`), and the distance
/// between the extrapolated and finest values as the grid error.
pub fn exit_rhs(k: &StableLike, cfg: &ExitIdentityConfig) -> Result<GridSolution> {
    let mut levels: [Vec<f64>; 3] = Default::default();
    for (l, level) in levels.iter_mut().enumerate() {
        let (nodes, vals) = exit_resolvent(k, cfg, cfg.intervals << l)?;
        *level = cfg
            .starts
            .iter()
            .map(|&x| interpolate(cfg.inner, &nodes, &vals, x))
            .collect();
    }
    let mut extrapolated = Vec::new();
    let mut order = Vec::new();
    let mut err = Vec::new();
    for i in 0..cfg.starts.len() {
        let (r1, r2, r3) = (levels[0][i], levels[1][i], levels[2][i]);
        let ratio = ((r2 - r1) / (r3 - r2)).abs();
        let p = if ratio.is_finite() && ratio > 0.0 {
            ratio.log2().clamp(0.25, 2.0)
        } else {
            2.0
        };
        let e = (r3 - r2) / (2f64.powf(p) - 1.0);
        extrapolated.push(r3 + e);
        order.push(p);
        err.push(e.abs());
    }
    Ok(GridSolution {
        starts: cfg.starts.clone(),
        levels,
        extrapolated,
        observed_order: order,
        grid_error: err,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitIdentityRow {
    pub x: f64,
    pub lhs: f64,
    pub standard_error: f64,
    pub rhs: f64,
    pub grid_error: f64,
    pub discrepancy: f64,
    pub bound: f64,
    pub unexited: usize,
    pub boundary_approaches: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitIdentityReport {
    pub rate: f64,
    pub grid: GridSolution,
    pub rows: Vec<ExitIdentityRow>,
    pub sup_discrepancy: f64,
    pub grid_tolerance: f64,
    pub grid_within_tolerance: bool,
    pub pass: bool,
}

pub fn exit_identity_test(k: &StableLike, cfg: &ExitIdentityConfig) -> Result<ExitIdentityReport> {
    cfg.validate()?;
    let grid = exit_rhs(k, cfg)?;
    let domain = OpenSetSpec::interval(cfg.domain.0, cfg.domain.1);
    let stop = OpenSetSpec::interval(cfg.inner.0, cfg.inner.1);
    let v = cfg.v();
    let mut rows = Vec::new();
    for (i, &x) in cfg.starts.iter().enumerate() {
        let sim = SimConfig {
            n_paths: cfg.paths_per_start,
            master_seed: derive_seed(cfg.sim.master_seed, i as u64),
            ..cfg.sim.clone()
        };
        let batch = simulate_censored_until_exit(k, &domain, &stop, &[x], &sim)?;
        let samples: Vec<f64> = batch
            .paths
            .iter()
            .map(|p| match p.death_cause {
                DeathCause::Exit => (-cfg.rate * p.death_time).exp() * v.value(p.last_state(1)),
                _ => 0.0,
            })
            .collect();
        let n = samples.len() as f64;
        let lhs = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - lhs).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        let rhs = grid.extrapolated[i];
        let bound = 5.0 * se + cfg.grid_tolerance;
        let discrepancy = (lhs - rhs).abs();
        rows.push(ExitIdentityRow {
            x,
            lhs,
            standard_error: se,
            rhs,
            grid_error: grid.grid_error[i],
            discrepancy,
            bound,
            unexited: batch
                .paths
                .iter()
                .filter(|p| p.death_cause == DeathCause::Horizon)
                .count(),
            boundary_approaches: batch
                .paths
                .iter()
                .filter(|p| p.death_cause == DeathCause::BoundaryApproach)
                .count(),
            pass: discrepancy <= bound,
        });
    }
    let grid_ok = grid.grid_error.iter().all(|&e| e <= cfg.grid_tolerance);
    Ok(ExitIdentityReport {
        rate: cfg.rate,
        sup_discrepancy: rows.iter().map(|r| r.discrepancy).fold(0.0, f64::max),
        pass: grid_ok && rows.iter().all(|r| r.pass),
        grid_within_tolerance: grid_ok,
        grid_tolerance: cfg.grid_tolerance,
        grid,
        rows,
    })
}
