//! One-dimensional Brownian motion with a localized drift `lambda b(x)`,
//! whose time-`t0` transition density serves as a nonsymmetric probability
//! kernel. The form built from it can fail to be nonnegative definite, and
//! its dual resolvent can fail to be Markovian.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use std::sync::Arc;

use crate::conditions::{check_lower_order, QuadratureConfig};
use crate::forms::{SmoothBump, TestFunction};
use crate::grid::Grid;
use crate::kernel::{Lattice, SharedKernel, Tabulated};
use crate::resolvent::{
    check_dual_markov, check_markov, discrete_generator, markov_trials, resolvent, DualMarkovCheck,
    MarkovCheck, RowSumMode,
};
use crate::{Error, Result};

/// `b(x) = amplitude * s (1 - s^2)^2` with `s = x / half_width` on `|s| <= 1`,
/// zero outside. `b'` is negative on `half_width * (1/sqrt 5, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DriftShape {
    pub amplitude: f64,
    pub half_width: f64,
}

impl Default for DriftShape {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            half_width: 1.0,
        }
    }
}

impl DriftShape {
    pub fn b(&self, x: f64) -> f64 {
        let s = x / self.half_width;
        if s.abs() >= 1.0 {
            0.0
        } else {
            self.amplitude * s * (1.0 - s * s).powi(2)
        }
    }

    pub fn b_prime(&self, x: f64) -> f64 {
        let s = x / self.half_width;
        if s.abs() >= 1.0 {
            0.0
        } else {
            self.amplitude / self.half_width * (1.0 - s * s) * (1.0 - 5.0 * s * s)
        }
    }

    /// `int_0^x b`
    pub fn potential(&self, x: f64) -> f64 {
        let s = (x / self.half_width).clamp(-1.0, 1.0);
        self.amplitude * self.half_width * (1.0 - (1.0 - s * s).powi(3)) / 6.0
    }

    /// Interval on which `b'` is strictly negative (right-hand copy).
    pub fn decreasing_interval(&self) -> (f64, f64) {
        (self.half_width / 5f64.sqrt(), self.half_width)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(Error::param("drift.amplitude", "must be positive"));
        }
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(Error::param("drift.half_width", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DriftedBMConfig {
    pub drift: DriftShape,
    pub lambda: f64,
    pub t0: f64,
    /// PDE domain is `[-half_length, half_length]` with reflecting ends.
    pub half_length: f64,
    pub spacing: f64,
    /// Time step is at most `dt_factor * spacing^2`.
    pub dt_factor: f64,
    pub mass_tolerance: f64,
    pub duality_tolerance: f64,
}

impl Default for DriftedBMConfig {
    fn default() -> Self {
        Self {
            drift: DriftShape::default(),
            lambda: 1.0,
            t0: 1e-3,
            half_length: 1.5,
            spacing: 0.004,
            dt_factor: 1.0,
            mass_tolerance: 1e-10,
            duality_tolerance: 1e-8,
        }
    }
}

impl DriftedBMConfig {
    pub fn validate(&self) -> Result<()> {
        self.drift.validate()?;
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::param("lambda", "must be nonnegative"));
        }
        if !(self.t0 > 0.0) {
            return Err(Error::param("t0", "must be positive"));
        }
        if !(self.half_length > self.drift.half_width) {
            return Err(Error::param(
                "half_length",
                "domain must contain the drift support",
            ));
        }
        if !(self.spacing > 0.0 && self.spacing < self.half_length / 4.0) {
            return Err(Error::param(
                "spacing",
                "must be positive and resolve the domain",
            ));
        }
        if !(self.dt_factor > 0.0) {
            return Err(Error::param("dt_factor", "must be positive"));
        }
        let nodes = self.nodes();
        if nodes > crate::resolvent::DENSE_LIMIT {
            return Err(Error::TooLarge {
                size: nodes,
                limit: crate::resolvent::DENSE_LIMIT,
            });
        }
        Ok(())
    }

    pub fn nodes(&self) -> usize {
        (2.0 * self.half_length / self.spacing).round() as usize + 1
    }

    pub fn lattice(&self) -> Lattice {
        let len = self.nodes();
        Lattice {
            origin: -self.half_length,
            spacing: 2.0 * self.half_length / (len - 1) as f64,
            len,
        }
    }

    /// `ln m(x)` with `m(x) = 2 exp(2 lambda int_0^x b)`.
    pub fn log_speed(&self, x: f64) -> f64 {
        2f64.ln() + 2.0 * self.lambda * self.drift.potential(x)
    }
}

/// Transition probabilities between lattice nodes at time `t0`.
#[derive(Debug, Clone)]
pub struct DriftedBM {
    pub config: DriftedBMConfig,
    pub lattice: Lattice,
    /// `transition[(i, j)]`: probability of moving from node `i` to node `j`.
    pub transition: DMatrix<f64>,
    pub mass_defect: f64,
    /// `max |q(y,x) - m(x) q(x,y) / m(y)| / max q`
    pub duality_residual: f64,
    /// Total magnitude of negative entries set to zero.
    pub clipped: f64,
    pub steps: usize,
}

impl DriftedBM {
    /// Density `q_{t0}(x_i, x_j) = transition[(i, j)] / h`.
    pub fn density(&self, i: usize, j: usize) -> f64 {
        self.transition[(i, j)] / self.lattice.spacing
    }

    pub fn kernel(&self) -> Result<Tabulated> {
        let n = self.lattice.len;
        let h = self.lattice.spacing;
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                values.push(self.transition[(i, j)] / h);
            }
        }
        Tabulated::new(
            self.lattice.clone(),
            values,
            format!(
                "drifted_bm[lambda={},t0={}]",
                self.config.lambda, self.config.t0
            ),
        )
    }

    /// `eta(u, u) = h sum_i u_i sum_j (u_i - u_j) P_ij` for node values `u`.
    pub fn form_value(&self, u: &[f64]) -> f64 {
        let h = self.lattice.spacing;
        let n = self.lattice.len;
        let mut total = 0.0;
        for i in 0..n {
            if u[i] == 0.0 {
                continue;
            }
            let row: f64 = (0..n)
                .map(|j| (u[i] - u[j]) * self.transition[(i, j)])
                .sum();
            total += u[i] * row;
        }
        h * total
    }

    /// Symmetric part of the matrix `h (diag(row sums) - P)`.
    pub fn symmetrized_form(&self) -> DMatrix<f64> {
        let h = self.lattice.spacing;
        let p = &self.transition;
        let mut a = -p.clone();
        for i in 0..p.nrows() {
            a[(i, i)] += p.row(i).sum();
        }
        ((&a + a.transpose()) * 0.5) * h
    }
}

/// Solves `u_t = u_xx / 2 + lambda b u_x` with reflecting ends by
/// Crank-Nicolson in the speed-measure-symmetric discretisation, starting
/// from each node indicator.
pub fn build_drifted_bm(cfg: &DriftedBMConfig) -> Result<DriftedBM> {
    cfg.validate()?;
    let lattice = cfg.lattice();
    let n = lattice.len;
    let h = lattice.spacing;
    let x = lattice.nodes();
    let logm: Vec<f64> = x.iter().map(|&v| cfg.log_speed(v)).collect();
    // G u_i = (1 / (2 h^2 m_i)) [m_{i+1/2} (u_{i+1} - u_i) - m_{i-1/2} (u_i - u_{i-1})]
    let mut up = vec![0.0; n];
    let mut dn = vec![0.0; n];
    for i in 0..n - 1 {
        let mh = cfg.log_speed(0.5 * (x[i] + x[i + 1]));
        up[i] = (mh - logm[i]).exp() / (2.0 * h * h);
        dn[i + 1] = (mh - logm[i + 1]).exp() / (2.0 * h * h);
    }
    let diag: Vec<f64> = (0..n).map(|i| -(up[i] + dn[i])).collect();
    let steps = (cfg.t0 / (cfg.dt_factor * h * h)).ceil().max(1.0) as usize;
    let dt = cfg.t0 / steps as f64;
    let c = 0.5 * dt;

    // Thomas factorisation of (I - c G)
    let a_sub: Vec<f64> = (0..n).map(|i| -c * dn[i]).collect();
    let a_diag: Vec<f64> = (0..n).map(|i| 1.0 - c * diag[i]).collect();
    let a_sup: Vec<f64> = (0..n).map(|i| -c * up[i]).collect();
    let mut cp = vec![0.0; n];
    let mut denom = vec![0.0; n];
    denom[0] = a_diag[0];
    cp[0] = a_sup[0] / denom[0];
    for i in 1..n {
        denom[i] = a_diag[i] - a_sub[i] * cp[i - 1];
        cp[i] = a_sup[i] / denom[i];
    }
    let step = |col: &mut Vec<f64>, rhs: &mut Vec<f64>| {
        for i in 0..n {
            let mut v = (1.0 + c * diag[i]) * col[i];
            if i > 0 {
                v += c * dn[i] * col[i - 1];
            }
            if i + 1 < n {
                v += c * up[i] * col[i + 1];
            }
            rhs[i] = v;
        }
        col[0] = rhs[0] / denom[0];
        for i in 1..n {
            col[i] = (rhs[i] - a_sub[i] * col[i - 1]) / denom[i];
        }
        for i in (0..n - 1).rev() {
            col[i] -= cp[i] * col[i + 1];
        }
    };
    // column j evolves the indicator of node j: P[(i, j)] = P_t(x_i, {x_j})
    let columns: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut col = vec![0.0; n];
            col[j] = 1.0;
            let mut rhs = vec![0.0; n];
            for _ in 0..steps {
                step(&mut col, &mut rhs);
            }
            col
        })
        .collect();
    let mut transition = DMatrix::from_fn(n, n, |i, j| columns[j][i]);
    let peak = transition.max();
    let mut clipped = 0.0;
    for v in transition.iter_mut() {
        if *v < 0.0 {
            clipped += -*v;
            *v = 0.0;
        }
    }
    let mass_defect = transition
        .row_iter()
        .map(|r| (r.sum() - 1.0).abs())
        .fold(0.0, f64::max);
    if mass_defect > cfg.mass_tolerance {
        return Err(Error::MassDefect {
            defect: mass_defect,
            tolerance: cfg.mass_tolerance,
        });
    }
    let mut duality: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let lhs = transition[(j, i)];
            let rhs = (logm[i] - logm[j]).exp() * transition[(i, j)];
            duality = duality.max((lhs - rhs).abs());
        }
    }
    let duality_residual = duality / peak;
    if duality_residual > cfg.duality_tolerance {
        return Err(Error::Quadrature(format!(
            "duality residual {duality_residual:e} exceeds {:e}",
            cfg.duality_tolerance
        )));
    }
    Ok(DriftedBM {
        config: cfg.clone(),
        lattice,
        transition,
        mass_defect,
        duality_residual,
        clipped,
        steps,
    })
}

pub fn build_drifted_bm_kernel(cfg: &DriftedBMConfig) -> Result<Tabulated> {
    build_drifted_bm(cfg)?.kernel()
}

/// Largest deviation of the `lambda = 0` density from the Gaussian heat
/// kernel over sources with `|x| <= inner`, relative to the Gaussian peak.
pub fn heat_kernel_deviation(bm: &DriftedBM, inner: f64) -> f64 {
    let t = bm.config.t0;
    let peak = 1.0 / (2.0 * std::f64::consts::PI * t).sqrt();
    let x = bm.lattice.nodes();
    let mut worst: f64 = 0.0;
    for (i, &xi) in x.iter().enumerate() {
        if xi.abs() > inner {
            continue;
        }
        for (j, &xj) in x.iter().enumerate() {
            let g = peak * (-(xj - xi).powi(2) / (2.0 * t)).exp();
            worst = worst.max((bm.density(i, j) - g).abs());
        }
    }
    worst / peak
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub lambda: f64,
    pub eta: f64,
    /// `(int (u0')^2 + lambda int b' u0^2) / 2`
    pub predictor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativityResult {
    pub lambda_star: Option<f64>,
    pub value: Option<f64>,
    pub predictor_at_star: Option<f64>,
    /// Smallest eigenvalue of the symmetrized form matrix at `lambda_star`.
    pub min_eigenvalue_at_star: Option<f64>,
    pub scan: Vec<ScanPoint>,
    pub inconclusive: bool,
}

/// Default test function: a smooth bump inside the region where `b' < 0`.
pub fn default_u0() -> SmoothBump {
    SmoothBump::new(vec![0.725], 0.265)
}

/// `2^0, 2^1, ..., 2^8`
pub fn default_lambda_scan() -> Vec<f64> {
    (0..=8).map(|k| 2f64.powi(k)).collect()
}

pub fn predictor(drift: &DriftShape, u0: &SmoothBump, lambda: f64, lattice: &Lattice) -> f64 {
    let h = lattice.spacing;
    let mut grad2 = 0.0;
    let mut drift_term = 0.0;
    for x in lattice.nodes() {
        let g = u0.gradient(&[x])[0];
        let u = u0.value(&[x]);
        grad2 += g * g * h;
        drift_term += drift.b_prime(x) * u * u * h;
    }
    0.5 * (grad2 + lambda * drift_term)
}

/// Scans `lambda` upward and returns the first value at which the
/// discrete `eta(u0, u0)` is negative.
pub fn negativity_witness(
    base: &DriftedBMConfig,
    u0: &SmoothBump,
    lambda_scan: &[f64],
) -> Result<NegativityResult> {
    if lambda_scan.is_empty() || lambda_scan.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param(
            "lambda_scan",
            "must be a nonempty increasing list",
        ));
    }
    let (lo, hi) = base.drift.decreasing_interval();
    let (slo, shi) = u0.support();
    if slo[0] < lo || shi[0] > hi {
        return Err(Error::param(
            "u0",
            format!(
                "support [{}, {}] must lie inside ({lo}, {hi}) where b' < 0",
                slo[0], shi[0]
            ),
        ));
    }
    let mut scan = Vec::new();
    let mut star = None;
    for &lambda in lambda_scan {
        let cfg = DriftedBMConfig {
            lambda,
            ..base.clone()
        };
        let bm = build_drifted_bm(&cfg)?;
        let u: Vec<f64> = bm.lattice.nodes().iter().map(|&x| u0.value(&[x])).collect();
        let eta = bm.form_value(&u);
        scan.push(ScanPoint {
            lambda,
            eta,
            predictor: predictor(&cfg.drift, u0, lambda, &bm.lattice),
        });
        if eta < 0.0 {
            star = Some(bm);
            break;
        }
    }
    let min_eig = star.as_ref().map(|bm| {
        let e = SymmetricEigen::new(bm.symmetrized_form()).eigenvalues;
        e.iter().copied().fold(f64::INFINITY, f64::min)
    });
    let last = scan.last().cloned();
    let found = star.is_some();
    Ok(NegativityResult {
        lambda_star: found.then(|| last.as_ref().map(|s| s.lambda)).flatten(),
        value: found.then(|| last.as_ref().map(|s| s.eta)).flatten(),
        predictor_at_star: found.then(|| last.as_ref().map(|s| s.predictor)).flatten(),
        min_eigenvalue_at_star: min_eig,
        scan,
        inconclusive: !found,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DichotomyRow {
    pub alpha: f64,
    pub primal: MarkovCheck,
    pub unshifted: DualMarkovCheck,
    pub shifted: DualMarkovCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DichotomyReport {
    pub lambda: f64,
    pub beta1: f64,
    /// Generator truncation radius in lattice steps.
    pub truncation: u32,
    pub rows: Vec<DichotomyRow>,
    pub primal_passes: bool,
    pub unshifted_fails: bool,
    pub shifted_passes: bool,
    /// First failing unshifted check: `(alpha, trial column, node, max value)`.
    pub witness: Option<(f64, usize, usize, f64)>,
}

/// Markov checks for the conservative restricted generator of the
/// drifted-BM kernel, its plain dual and its dual shifted by `beta1`.
pub fn dual_dichotomy(
    bm: &DriftedBM,
    alphas: &[f64],
    random_trials: usize,
    seed: u64,
) -> Result<DichotomyReport> {
    let lat = bm.lattice.clone();
    let k: SharedKernel = Arc::new(bm.kernel()?);
    let grid = Grid::interval(lat.node(0), lat.node(lat.len - 1), lat.len)?;
    let n = (2.0 / lat.spacing).ceil() as u32;
    let l = discrete_generator(&k, &grid, n, RowSumMode::ConservativeRestricted)?;
    let nodes: Vec<Vec<f64>> = lat.nodes().into_iter().map(|x| vec![x]).collect();
    let rep = check_lower_order(&k, &QuadratureConfig::default(), &nodes)?;
    let beta1 = rep
        .beta1
        .ok_or_else(|| Error::Quadrature("lower-order constant unavailable".into()))?;
    let kv: Vec<f64> = rep
        .k_samples
        .unwrap_or_default()
        .iter()
        .map(|p| p.value)
        .collect();
    let kv = (kv.len() == l.len()).then_some(kv);
    let trials = markov_trials(l.len(), random_trials, seed);
    let slack = 1e-10;
    let rows = alphas
        .iter()
        .map(|&alpha| {
            let g = resolvent(&l, alpha)?;
            Ok(DichotomyRow {
                alpha,
                primal: check_markov(&g, alpha, &trials, slack),
                unshifted: check_dual_markov(&l, kv.as_deref(), alpha, 0.0, &trials, slack)?,
                shifted: check_dual_markov(&l, kv.as_deref(), alpha, beta1, &trials, slack)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let witness = rows.iter().find_map(|r| {
        r.unshifted
            .markov
            .witness
            .map(|(c, i)| (r.alpha, c, i, r.unshifted.markov.max_value))
    });
    Ok(DichotomyReport {
        lambda: bm.config.lambda,
        beta1,
        truncation: n,
        primal_passes: rows.iter().all(|r| r.primal.pass),
        unshifted_fails: rows.iter().any(|r| !r.unshifted.markov.pass),
        shifted_passes: rows.iter().all(|r| r.shifted.markov.pass),
        witness,
        rows,
    })
}
