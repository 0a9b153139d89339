//! Finite-state generators built from kernels on a grid, their resolvents and
//! semigroups, and sampled Markov checks for the primal and dual families.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::forms::exterior_rates;
use crate::grid::Grid;
use crate::kernel::{distance, SharedKernel};
use crate::{Error, Result};

/// Dense linear algebra is refused beyond this many nodes.
pub const DENSE_LIMIT: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowSumMode {
    /// Jumps only between grid nodes; rows sum to zero.
    ConservativeRestricted,
    /// Diagonal carries the full truncated jump rate, including mass that
    /// leaves the box, so rows sum to `<= 0`.
    TruncatedKilling,
}

#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    pub l: DMatrix<f64>,
    pub n: u32,
    pub kernel: String,
    pub mode: RowSumMode,
    pub cell_measure: f64,
}

impl GeneratorMatrix {
    /// Wraps a matrix, checking the sign structure.
    pub fn from_matrix(
        l: DMatrix<f64>,
        n: u32,
        kernel: impl Into<String>,
        mode: RowSumMode,
        cell_measure: f64,
    ) -> Result<Self> {
        if !l.is_square() {
            return Err(Error::param("generator", "matrix must be square"));
        }
        if l.nrows() > DENSE_LIMIT {
            return Err(Error::TooLarge {
                size: l.nrows(),
                limit: DENSE_LIMIT,
            });
        }
        let g = Self {
            l,
            n,
            kernel: kernel.into(),
            mode,
            cell_measure,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.l.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.l.nrows() == 0
    }

    /// Largest diagonal magnitude.
    pub fn scale(&self) -> f64 {
        (0..self.len())
            .map(|i| self.l[(i, i)].abs())
            .fold(0.0, f64::max)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.l.row_iter().map(|r| r.sum()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        for i in 0..n {
            for j in 0..n {
                if i != j && !(self.l[(i, j)] >= 0.0) {
                    return Err(Error::NegativeRate {
                        row: i,
                        col: j,
                        value: self.l[(i, j)],
                    });
                }
            }
        }
        let tol = 1e-12 * self.scale().max(1.0);
        for (i, s) in self.row_sums().into_iter().enumerate() {
            let bad = match self.mode {
                RowSumMode::ConservativeRestricted => s.abs() > tol,
                RowSumMode::TruncatedKilling => s > tol,
            };
            if bad {
                return Err(Error::param(
                    "generator",
                    format!("row {i} sums to {s:e}, inconsistent with {:?}", self.mode),
                ));
            }
        }
        Ok(())
    }

    /// Generator of the dual family on a uniform grid: the plain transpose.
    /// Its rows need not sum to `<= 0`, so no sign check on row sums is made.
    pub fn dual(&self) -> DMatrix<f64> {
        self.l.transpose()
    }
}

/// `L[i][j] = k(x_i, x_j) * cell_measure` for `d(x_i, x_j) > 1/n`.
pub fn discrete_generator(
    k: &SharedKernel,
    grid: &Grid,
    n: u32,
    mode: RowSumMode,
) -> Result<GeneratorMatrix> {
    if n == 0 {
        return Err(Error::param("n", "truncation must be positive"));
    }
    if k.dim() != grid.dim() {
        return Err(Error::Dimension {
            expected: grid.dim(),
            got: k.dim(),
        });
    }
    if grid.len() > DENSE_LIMIT {
        return Err(Error::TooLarge {
            size: grid.len(),
            limit: DENSE_LIMIT,
        });
    }
    let pts = grid.points();
    let mu = grid.cell_measure();
    let cutoff = 1.0 / n as f64;
    let np = pts.len();
    let rows: Vec<Vec<f64>> = (0..np)
        .into_par_iter()
        .map(|i| {
            (0..np)
                .map(|j| {
                    if i == j || distance(&pts[i], &pts[j]) <= cutoff {
                        0.0
                    } else {
                        k.rate(&pts[i], &pts[j]) * mu
                    }
                })
                .collect()
        })
        .collect();
    let mut l = DMatrix::from_fn(np, np, |i, j| rows[i][j]);
    for i in 0..np {
        for j in 0..np {
            if i != j && !(l[(i, j)] >= 0.0 && l[(i, j)].is_finite()) {
                return Err(Error::NegativeRate {
                    row: i,
                    col: j,
                    value: l[(i, j)],
                });
            }
        }
    }
    let exterior: Vec<f64> = match mode {
        RowSumMode::ConservativeRestricted => vec![0.0; np],
        RowSumMode::TruncatedKilling => pts
            .par_iter()
            .map(|p| Ok(exterior_rates(k, (&grid.lower, &grid.upper), p, cutoff, 8, 32)?[0]))
            .collect::<Result<_>>()?,
    };
    for i in 0..np {
        let s: f64 = l.row(i).sum();
        l[(i, i)] = -s - exterior[i];
    }
    GeneratorMatrix::from_matrix(l, n, k.label(), mode, mu)
}

fn solve_resolvent(l: &DMatrix<f64>, alpha: f64) -> Result<DMatrix<f64>> {
    if !(alpha > 0.0) {
        return Err(Error::param(
            "alpha",
            format!("need alpha > 0, got {alpha}"),
        ));
    }
    let n = l.nrows();
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge {
            size: n,
            limit: DENSE_LIMIT,
        });
    }
    let a = DMatrix::identity(n, n) * alpha - l;
    let g = a.lu().try_inverse().ok_or(Error::Singular { alpha })?;
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular { alpha });
    }
    Ok(g)
}

/// `G_alpha = (alpha I - L)^{-1}`.
pub fn resolvent(l: &GeneratorMatrix, alpha: f64) -> Result<DMatrix<f64>> {
    solve_resolvent(&l.l, alpha)
}

/// Resolvent of the dual generator shifted by `beta`:
/// `(alpha I - (L^T - beta I))^{-1}`.
pub fn dual_resolvent(l: &GeneratorMatrix, alpha: f64, beta: f64) -> Result<DMatrix<f64>> {
    let n = l.len();
    let shifted = l.dual() - DMatrix::identity(n, n) * beta;
    solve_resolvent(&shifted, alpha)
}

/// `||G_a - G_b + (a - b) G_a G_b||_F / ||G_a||_F`.
pub fn resolvent_equation_residual(ga: &DMatrix<f64>, gb: &DMatrix<f64>, a: f64, b: f64) -> f64 {
    let r = ga - gb + (ga * gb) * (a - b);
    r.norm() / ga.norm().max(f64::MIN_POSITIVE)
}

/// `exp(t L)` by scaling and squaring.
pub fn semigroup(l: &GeneratorMatrix, t: f64) -> Result<DMatrix<f64>> {
    if !(t >= 0.0) {
        return Err(Error::param("t", "time must be nonnegative"));
    }
    Ok((&l.l * t).exp())
}

/// `||alpha G_alpha f - f||_inf`.
pub fn identity_defect(g: &DMatrix<f64>, alpha: f64, f: &DVector<f64>) -> f64 {
    ((g * f) * alpha - f).amax()
}

/// Coordinate vectors, the constant one, and `random` seeded vectors with
/// entries in `[0, 1]`.
pub fn markov_trials(n: usize, random: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = DMatrix::zeros(n, n + 1 + random);
    for i in 0..n {
        f[(i, i)] = 1.0;
        f[(i, n)] = 1.0;
    }
    for c in n + 1..n + 1 + random {
        for i in 0..n {
            f[(i, c)] = rng.random_range(0.0..=1.0);
        }
    }
    f
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovCheck {
    pub alpha: f64,
    /// Smallest entry of `alpha G f` over all trials.
    pub min_value: f64,
    /// Largest entry of `alpha G f` over all trials.
    pub max_value: f64,
    /// Smallest entry of `alpha G`.
    pub min_entry: f64,
    /// `max_i (alpha G 1)_i`.
    pub max_row_applied_to_one: f64,
    /// Trial column and node of the worst violation.
    pub witness: Option<(usize, usize)>,
    pub pass: bool,
}

/// Asserts `-slack <= (alpha G f)_i <= 1 + slack` for every trial column.
pub fn check_markov(
    g: &DMatrix<f64>,
    alpha: f64,
    trials: &DMatrix<f64>,
    slack: f64,
) -> MarkovCheck {
    let ag = g * alpha;
    let out = &ag * trials;
    let (mut min_value, mut max_value) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut witness = None;
    let mut worst = 0.0;
    for c in 0..out.ncols() {
        for i in 0..out.nrows() {
            let v = out[(i, c)];
            min_value = min_value.min(v);
            max_value = max_value.max(v);
            let excess = (-v).max(v - 1.0);
            if excess > slack && excess > worst {
                worst = excess;
                witness = Some((c, i));
            }
        }
    }
    let ones = &ag * DVector::from_element(ag.ncols(), 1.0);
    MarkovCheck {
        alpha,
        min_value,
        max_value,
        min_entry: ag.min(),
        max_row_applied_to_one: ones.max(),
        pass: witness.is_none(),
        witness,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualMarkovCheck {
    pub beta: f64,
    pub markov: MarkovCheck,
    /// `max_i |K_disc(x_i) - K_vec(x_i)|`, where `K_disc = -(row sums of L^T)`.
    pub k_discrepancy: Option<f64>,
}

/// `-(row sums of L^T)`: the discrete counterpart of `K(x) = int (k(x,y) - k(y,x)) dy`
/// restricted to the grid.
pub fn discrete_k(l: &GeneratorMatrix) -> Vec<f64> {
    let lt = l.dual();
    lt.row_iter().map(|r| -r.sum()).collect()
}

/// Markov check for `alpha (alpha - L^T + beta)^{-1}`.
pub fn check_dual_markov(
    l: &GeneratorMatrix,
    k_vec: Option<&[f64]>,
    alpha: f64,
    beta: f64,
    trials: &DMatrix<f64>,
    slack: f64,
) -> Result<DualMarkovCheck> {
    if !(beta >= 0.0) {
        return Err(Error::param("beta", "shift must be nonnegative"));
    }
    let g = dual_resolvent(l, alpha, beta)?;
    let k_discrepancy = match k_vec {
        Some(kv) => {
            if kv.len() != l.len() {
                return Err(Error::Dimension {
                    expected: l.len(),
                    got: kv.len(),
                });
            }
            Some(
                discrete_k(l)
                    .iter()
                    .zip(kv)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max),
            )
        }
        None => None,
    };
    Ok(DualMarkovCheck {
        beta,
        markov: check_markov(&g, alpha, trials, slack),
        k_discrepancy,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolventReport {
    pub kernel: String,
    pub alphas: Vec<f64>,
    pub markov: Vec<MarkovCheck>,
    pub markov_pass: Vec<bool>,
    /// Worst residual over consecutive pairs of tested alphas.
    pub resolvent_equation_residual: f64,
    pub dual: Vec<DualMarkovCheck>,
    pub min_entry: f64,
    pub max_row_applied_to_one: f64,
    /// `min entry of G / max entry` over tested alphas.
    pub positivity_margin: f64,
}

/// Runs Markov and resolvent-equation checks for each `alpha` and the dual
/// checks for each `(alpha, beta)` pair.
pub fn resolvent_report(
    l: &GeneratorMatrix,
    alphas: &[f64],
    betas: &[f64],
    k_vec: Option<&[f64]>,
    random_trials: usize,
    seed: u64,
) -> Result<ResolventReport> {
    if alphas.is_empty() {
        return Err(Error::param("alphas", "need at least one alpha"));
    }
    let trials = markov_trials(l.len(), random_trials, seed);
    let slack = 1e-10;
    let gs: Vec<DMatrix<f64>> = alphas
        .par_iter()
        .map(|&a| resolvent(l, a))
        .collect::<Result<_>>()?;
    let markov: Vec<MarkovCheck> = gs
        .par_iter()
        .zip(alphas.par_iter())
        .map(|(g, &a)| check_markov(g, a, &trials, slack))
        .collect();
    let mut residual: f64 = 0.0;
    for w in 0..alphas.len().saturating_sub(1) {
        residual = residual.max(resolvent_equation_residual(
            &gs[w],
            &gs[w + 1],
            alphas[w],
            alphas[w + 1],
        ));
    }
    let positivity_margin = gs
        .iter()
        .map(|g| g.min() / g.max().abs().max(f64::MIN_POSITIVE))
        .fold(f64::INFINITY, f64::min);
    let pairs: Vec<(f64, f64)> = alphas
        .iter()
        .flat_map(|&a| betas.iter().map(move |&b| (a, b)))
        .collect();
    let dual = pairs
        .par_iter()
        .map(|&(a, b)| check_dual_markov(l, k_vec, a, b, &trials, slack))
        .collect::<Result<Vec<_>>>()?;
    Ok(ResolventReport {
        kernel: l.kernel.clone(),
        alphas: alphas.to_vec(),
        markov_pass: markov.iter().map(|m| m.pass).collect(),
        min_entry: markov
            .iter()
            .map(|m| m.min_entry)
            .fold(f64::INFINITY, f64::min),
        max_row_applied_to_one: markov
            .iter()
            .map(|m| m.max_row_applied_to_one)
            .fold(f64::NEG_INFINITY, f64::max),
        markov,
        resolvent_equation_residual: residual,
        dual,
        positivity_margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponent::{ExponentField, ExponentProfile};
    use crate::kernel::{stable_like_kernel, Lattice, Normalization, Tabulated};
    use std::sync::Arc;

    fn tanh() -> SharedKernel {
        let ef = ExponentField::new(
            ExponentProfile::Tanh {
                base: 0.7,
                amplitude: 0.1,
                center: 0.0,
                width: 1.0,
            },
            1,
        )
        .unwrap();
        Arc::new(stable_like_kernel(ef, Normalization::LevyConstant).unwrap())
    }

    fn symmetric(alpha: f64) -> SharedKernel {
        Arc::new(
            stable_like_kernel(
                ExponentField::constant(alpha, 1).unwrap(),
                Normalization::LevyConstant,
            )
            .unwrap(),
        )
    }

    #[test]
    fn two_node_toy_generator() {
        let lat = Lattice {
            origin: 0.0,
            spacing: 1.0,
            len: 2,
        };
        let k: SharedKernel =
            Arc::new(Tabulated::new(lat, vec![0.0, 3.0, 5.0, 0.0], "toy").unwrap());
        let l = DMatrix::from_row_slice(2, 2, &[-3.0, 3.0, 5.0, -5.0]);
        let g = GeneratorMatrix::from_matrix(
            l.clone(),
            1,
            k.label(),
            RowSumMode::ConservativeRestricted,
            1.0,
        )
        .unwrap();
        assert_eq!(g.row_sums(), vec![0.0, 0.0]);
        assert!(GeneratorMatrix::from_matrix(
            -l,
            1,
            "bad",
            RowSumMode::ConservativeRestricted,
            1.0
        )
        .is_err());
    }

    #[test]
    fn conservative_rows_vanish_and_killing_rows_are_negative() {
        let grid = Grid::interval(-2.0, 2.0, 41).unwrap();
        let c = discrete_generator(&tanh(), &grid, 8, RowSumMode::ConservativeRestricted).unwrap();
        let scale = c.scale();
        assert!(c.row_sums().iter().all(|s| s.abs() <= 1e-12 * scale));
        let kill = discrete_generator(&tanh(), &grid, 8, RowSumMode::TruncatedKilling).unwrap();
        let rows = kill.row_sums();
        assert!(rows[0] < 0.0 && rows[40] < 0.0);
        assert!(rows[0] < rows[20]);
    }

    #[test]
    fn resolvent_equation_and_conservation() {
        let grid = Grid::interval(-2.0, 2.0, 41).unwrap();
        let l = discrete_generator(&tanh(), &grid, 8, RowSumMode::ConservativeRestricted).unwrap();
        let g1 = resolvent(&l, 1.0).unwrap();
        let g2 = resolvent(&l, 2.0).unwrap();
        assert!(resolvent_equation_residual(&g1, &g2, 1.0, 2.0) < 1e-10);
        let one = DVector::from_element(l.len(), 1.0);
        assert!(identity_defect(&g1, 1.0, &one) < 1e-10);
        assert!(g1.min() >= -1e-12 * g1.max());
    }

    #[test]
    fn large_alpha_approaches_identity() {
        let grid = Grid::interval(-2.0, 2.0, 41).unwrap();
        let l = discrete_generator(&tanh(), &grid, 8, RowSumMode::TruncatedKilling).unwrap();
        let f = DVector::from_fn(l.len(), |i, _| (i as f64 * 0.3).sin());
        let d3 = identity_defect(&resolvent(&l, 1e3).unwrap(), 1e3, &f);
        let d4 = identity_defect(&resolvent(&l, 1e4).unwrap(), 1e4, &f);
        assert!(d4 < d3);
    }

    #[test]
    fn semigroup_preserves_constants() {
        let grid = Grid::interval(-2.0, 2.0, 21).unwrap();
        let l = discrete_generator(&tanh(), &grid, 4, RowSumMode::ConservativeRestricted).unwrap();
        let p = semigroup(&l, 0.5).unwrap();
        let one = DVector::from_element(l.len(), 1.0);
        assert!(((&p * &one) - &one).amax() < 1e-8);
    }

    #[test]
    fn symmetric_kernel_is_markov_both_ways() {
        let grid = Grid::interval(-2.0, 2.0, 41).unwrap();
        let l = discrete_generator(
            &symmetric(1.2),
            &grid,
            8,
            RowSumMode::ConservativeRestricted,
        )
        .unwrap();
        let trials = markov_trials(l.len(), 100, 3);
        let m = check_markov(&resolvent(&l, 1.0).unwrap(), 1.0, &trials, 1e-10);
        assert!(m.pass && m.min_entry >= -1e-10);
        let d = check_dual_markov(&l, None, 1.0, 0.0, &trials, 1e-10).unwrap();
        assert!(d.markov.pass);
        let zero = DVector::zeros(l.len());
        assert_eq!(resolvent(&l, 1.0).unwrap() * zero, DVector::zeros(l.len()));
    }

    #[test]
    fn singular_and_oversized_systems_are_refused() {
        let l = GeneratorMatrix::from_matrix(
            DMatrix::zeros(3, 3),
            1,
            "zero",
            RowSumMode::ConservativeRestricted,
            1.0,
        )
        .unwrap();
        assert!(resolvent(&l, 0.0).is_err());
        assert!(GeneratorMatrix::from_matrix(
            DMatrix::zeros(2001, 2001),
            1,
            "big",
            RowSumMode::ConservativeRestricted,
            1.0
        )
        .is_err());
    }
}
