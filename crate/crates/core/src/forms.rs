//! Galerkin matrices of the truncated forms `eta^n`, `Gamma^n`, `B^n` over
//! compactly supported Lipschitz test functions, and checks of the form
//! inequalities.
//!
//! All double integrals are midpoint sums over a set of quadrature points
//! `p` (sub-cell midpoints of the grid) with weights `w_p`; pairs with
//! `|p - q| <= 1/n` are excluded. With `K[p][q] = k(p, q) w_p w_q` and basis
//! values `Phi[p][i] = phi_i(p)`,
//!
//! ```text
//! eta   = Phi^T (diag(rowsum K) - K) Phi
//! Gamma = 2 Phi^T (diag(rowsum K_s) - K_s) Phi
//! B     = Phi^T (K_a^T - diag(colsum K_a)) Phi
//! ```
//!
//! so that `eta = Gamma / 2 + B` holds to roundoff. Mass leaving the box is
//! included through ray integrals of `k` from each quadrature point.

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::conditions::ConditionReport;
use crate::grid::{hex16, Grid, Placement};
use crate::kernel::{decompose, SharedKernel};
use crate::quadrature::{outward_shells, sum_series, Directions, RadialRule};
use crate::{Error, Result};

/// A bounded, compactly supported Lipschitz function.
pub trait TestFunction: Send + Sync + Debug {
    fn value(&self, x: &[f64]) -> f64;
    /// Axis-aligned box containing the support.
    fn support(&self) -> (Vec<f64>, Vec<f64>);
    fn lipschitz(&self) -> f64;
    fn descriptor(&self) -> String;
}

/// Product of one-dimensional hats of half-width `half_width`.
#[derive(Debug, Clone)]
pub struct Tent {
    pub center: Vec<f64>,
    pub half_width: f64,
    pub height: f64,
}

impl TestFunction for Tent {
    fn value(&self, x: &[f64]) -> f64 {
        self.height
            * x.iter()
                .zip(&self.center)
                .map(|(a, c)| (1.0 - (a - c).abs() / self.half_width).max(0.0))
                .product::<f64>()
    }

    fn support(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.center.iter().map(|c| c - self.half_width).collect(),
            self.center.iter().map(|c| c + self.half_width).collect(),
        )
    }

    fn lipschitz(&self) -> f64 {
        self.height.abs() * (self.center.len() as f64).sqrt() / self.half_width
    }

    fn descriptor(&self) -> String {
        format!("tent{:?}/{}/{}", self.center, self.half_width, self.height)
    }
}

/// `height * (1 - |x - c|^2 / radius^2)^3` inside the ball, zero outside;
/// twice continuously differentiable.
#[derive(Debug, Clone)]
pub struct SmoothBump {
    pub center: Vec<f64>,
    pub radius: f64,
    pub height: f64,
}

impl SmoothBump {
    pub fn new(center: Vec<f64>, radius: f64) -> Self {
        Self {
            center,
            radius,
            height: 1.0,
        }
    }

    /// Gradient at `x`.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let s2 = self.s2(x);
        if s2 >= 1.0 {
            return vec![0.0; x.len()];
        }
        let f = -6.0 * self.height * (1.0 - s2).powi(2) / (self.radius * self.radius);
        x.iter()
            .zip(&self.center)
            .map(|(a, c)| f * (a - c))
            .collect()
    }

    fn s2(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.center)
            .map(|(a, c)| (a - c) * (a - c))
            .sum::<f64>()
            / (self.radius * self.radius)
    }
}

impl TestFunction for SmoothBump {
    fn value(&self, x: &[f64]) -> f64 {
        let s2 = self.s2(x);
        if s2 >= 1.0 {
            0.0
        } else {
            self.height * (1.0 - s2).powi(3)
        }
    }

    fn support(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.center.iter().map(|c| c - self.radius).collect(),
            self.center.iter().map(|c| c + self.radius).collect(),
        )
    }

    fn lipschitz(&self) -> f64 {
        // max of |d/ds (1 - s^2)^3| is 6 s (1-s^2)^2 at s = 1/sqrt 5
        self.height.abs() * 6.0 / 5f64.sqrt() * 0.64 / self.radius
    }

    fn descriptor(&self) -> String {
        format!("bump{:?}/{}/{}", self.center, self.radius, self.height)
    }
}

#[derive(Debug, Clone)]
pub struct BasisSet {
    pub functions: Vec<Arc<dyn TestFunction>>,
}

impl BasisSet {
    /// Tents centred at the interior vertices of `grid`, one grid spacing wide.
    pub fn tents(grid: &Grid) -> Result<Self> {
        if grid.placement != Placement::Vertex {
            return Err(Error::param(
                "grid.placement",
                "tent basis needs a vertex grid",
            ));
        }
        let h = grid.spacing();
        let functions = (0..grid.len())
            .filter(|&k| !grid.on_boundary(k))
            .map(|k| {
                Arc::new(Tent {
                    center: grid.point(k),
                    half_width: h,
                    height: 1.0,
                }) as Arc<dyn TestFunction>
            })
            .collect();
        Ok(Self { functions })
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn lipschitz_consts(&self) -> Vec<f64> {
        self.functions.iter().map(|f| f.lipschitz()).collect()
    }

    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for f in &self.functions {
            h.update(f.descriptor().as_bytes());
            h.update(b";");
        }
        hex16(&h.finalize())
    }
}

/// Quadrature points, weights and basis values shared by all assemblies.
#[derive(Debug, Clone)]
pub struct FormSpace {
    pub grid: Grid,
    pub basis: BasisSet,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// `phi[(p, i)] = phi_i(points[p])`
    pub phi: DMatrix<f64>,
    pub subdivisions: usize,
    /// Include jumps leaving the grid box.
    pub exterior: bool,
    pub radial_points: usize,
    pub angular_points: usize,
}

impl FormSpace {
    /// `subdivisions` midpoints per cell and axis.
    pub fn new(grid: Grid, basis: BasisSet, subdivisions: usize) -> Result<Self> {
        if basis.is_empty() {
            return Err(Error::param("basis", "basis is empty"));
        }
        let d = grid.dim();
        for f in &basis.functions {
            let (lo, hi) = f.support();
            let inside = lo
                .iter()
                .zip(&hi)
                .enumerate()
                .all(|(a, (l, u))| *l >= grid.lower[a] - 1e-12 && *u <= grid.upper[a] + 1e-12);
            if lo.len() != d || !inside {
                return Err(Error::param(
                    "basis",
                    format!("{} is not supported inside the grid box", f.descriptor()),
                ));
            }
        }
        let m = subdivisions.max(1);
        let width = grid.upper[0] - grid.lower[0];
        let per_axis = match grid.placement {
            Placement::Vertex => (grid.per_axis - 1) * m,
            Placement::Centered => grid.per_axis * m,
        };
        let step = width / per_axis as f64;
        let count = per_axis.pow(d as u32);
        let mut points = Vec::with_capacity(count);
        for k in 0..count {
            let mut rem = k;
            let mut p = vec![0.0; d];
            for a in (0..d).rev() {
                p[a] = grid.lower[a] + (rem % per_axis) as f64 * step + 0.5 * step;
                rem /= per_axis;
            }
            points.push(p);
        }
        let weights = vec![step.powi(d as i32); count];
        let phi = DMatrix::from_fn(count, basis.len(), |p, i| {
            basis.functions[i].value(&points[p])
        });
        Ok(Self {
            grid,
            basis,
            points,
            weights,
            phi,
            subdivisions: m,
            exterior: true,
            radial_points: 8,
            angular_points: 32,
        })
    }

    /// Hat functions on a vertex grid of `nodes` nodes over `[a, b]`.
    pub fn tents_1d(a: f64, b: f64, nodes: usize, subdivisions: usize) -> Result<Self> {
        let grid = Grid::interval(a, b, nodes)?;
        let basis = BasisSet::tents(&grid)?;
        Self::new(grid, basis, subdivisions)
    }

    pub fn mass(&self) -> DMatrix<f64> {
        let w = DVector::from_vec(self.weights.clone());
        let wphi = DMatrix::from_fn(self.phi.nrows(), self.phi.ncols(), |p, i| {
            w[p] * self.phi[(p, i)]
        });
        self.phi.transpose() * wphi
    }

    /// Coefficients -> values at quadrature points.
    pub fn values(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        &self.phi * coeffs
    }

    /// `(int k(p, y) dy, int k_s(p, y) dy, int k_a(p, y) dy)` over `y` outside
    /// the box with `|y - p| > cutoff`.
    pub fn exterior_rates(&self, k: &SharedKernel, p: &[f64], cutoff: f64) -> Result<[f64; 3]> {
        exterior_rates(
            k,
            (&self.grid.lower, &self.grid.upper),
            p,
            cutoff,
            self.radial_points,
            self.angular_points,
        )
    }
}

fn exit_distance(lower: &[f64], upper: &[f64], p: &[f64], v: &[f64]) -> f64 {
    let mut t = f64::INFINITY;
    for a in 0..p.len() {
        if v[a] > 1e-15 {
            t = t.min((upper[a] - p[a]) / v[a]);
        } else if v[a] < -1e-15 {
            t = t.min((lower[a] - p[a]) / v[a]);
        }
    }
    t.max(0.0)
}

/// Rates of jumps from `p` (inside the box) to points outside the box at
/// distance more than `cutoff`, as `[k, k_s, k_a]` integrals along rays.
pub fn exterior_rates(
    k: &SharedKernel,
    bounds: (&[f64], &[f64]),
    p: &[f64],
    cutoff: f64,
    radial_points: usize,
    angular_points: usize,
) -> Result<[f64; 3]> {
    let d = p.len();
    let dirs = Directions::new(d, angular_points)?;
    let rule = RadialRule::new(radial_points, 1);
    let kd = decompose(k);
    let mut out = [0.0; 3];
    let mut y = vec![0.0; d];
    let mut h = vec![0.0; d];
    for (v, w) in dirs.vectors.iter().zip(&dirs.weights) {
        let r0 = exit_distance(bounds.0, bounds.1, p, v).max(cutoff);
        if r0 <= 0.0 || k.range().is_some_and(|c| r0 >= c) {
            continue;
        }
        for part in 1..3 {
            let inc = outward_shells(&rule, r0, 48, |r| {
                for a in 0..d {
                    h[a] = r * v[a];
                    y[a] = p[a] + h[a];
                }
                let (s, an) = kd.parts_offset(p, &y, &h, r);
                let val = if part == 1 { s } else { an };
                val * r.powi(d as i32 - 1)
            });
            let est = sum_series(&inc, 1e-6, 1e-300);
            if !est.converged && est.value.abs() > 1e-12 {
                return Err(Error::Quadrature(format!(
                    "exterior mass from {p:?} along {v:?} does not converge"
                )));
            }
            out[part] += w * est.value;
        }
    }
    // keep k = k_s + k_a exact so the form identity survives the tail sums
    out[0] = out[1] + out[2];
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormKind {
    Eta,
    Gamma,
    B,
}

impl FormKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Eta => "eta",
            Self::Gamma => "gamma",
            Self::B => "B",
        }
    }
}

/// `entries[(i, j)] = form(phi_j, phi_i)`, so that `form(u, v) = v^T A u`.
#[derive(Debug, Clone, PartialEq)]
pub struct FormMatrix {
    pub kind: FormKind,
    pub n: u32,
    pub entries: DMatrix<f64>,
    /// `||A - A^T||_F / ||A||_F` before any symmetrization.
    pub asymmetry_residual: f64,
    pub grid_hash: String,
    pub basis_hash: String,
    /// Relative Frobenius size of the part contributed by jumps leaving the box.
    pub exterior_fraction: f64,
}

impl FormMatrix {
    pub fn apply(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.entries * u))
    }

    pub fn norm(&self) -> f64 {
        self.entries.norm()
    }

    pub fn to_triplets(&self) -> String {
        let (r, c) = self.entries.shape();
        let mut s = format!(
            "# kind={} n={} rows={} cols={} grid={} basis={}\n",
            self.kind.name(),
            self.n,
            r,
            c,
            self.grid_hash,
            self.basis_hash
        );
        for i in 0..r {
            for j in 0..c {
                let v = self.entries[(i, j)];
                if v != 0.0 {
                    s.push_str(&format!("{i} {j} {v:?}\n"));
                }
            }
        }
        s
    }

    pub fn from_triplets(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .and_then(|l| l.strip_prefix("# "))
            .ok_or_else(|| Error::param("triplets", "missing header line"))?;
        let mut kind = None;
        let (mut n, mut rows, mut cols) = (0u32, 0usize, 0usize);
        let (mut grid_hash, mut basis_hash) = (String::new(), String::new());
        for field in header.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| Error::param("triplets", format!("bad header field {field}")))?;
            let bad = |_| Error::param("triplets", format!("bad value in {field}"));
            match key {
                "kind" => {
                    kind = Some(match value {
                        "eta" => FormKind::Eta,
                        "gamma" => FormKind::Gamma,
                        "B" => FormKind::B,
                        _ => return Err(Error::param("triplets", format!("unknown kind {value}"))),
                    })
                }
                "n" => n = value.parse().map_err(bad)?,
                "rows" => rows = value.parse().map_err(bad)?,
                "cols" => cols = value.parse().map_err(bad)?,
                "grid" => grid_hash = value.to_string(),
                "basis" => basis_hash = value.to_string(),
                _ => {}
            }
        }
        let kind = kind.ok_or_else(|| Error::param("triplets", "header lacks kind"))?;
        let mut entries = DMatrix::zeros(rows, cols);
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let mut it = line.split_whitespace();
            let parse_err = || Error::param("triplets", format!("bad line {line:?}"));
            let i: usize = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(parse_err)?;
            let j: usize = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(parse_err)?;
            let v: f64 = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(parse_err)?;
            if i >= rows || j >= cols {
                return Err(parse_err());
            }
            entries[(i, j)] = v;
        }
        Ok(Self {
            kind,
            n,
            asymmetry_residual: asymmetry(&entries),
            entries,
            grid_hash,
            basis_hash,
            exterior_fraction: 0.0,
        })
    }
}

fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let norm = a.norm();
    if norm == 0.0 {
        0.0
    } else {
        (a - a.transpose()).norm() / norm
    }
}

/// The three matrices of one assembly together with the mass matrix.
#[derive(Debug, Clone)]
pub struct FormTriple {
    pub eta: FormMatrix,
    pub gamma: FormMatrix,
    pub b: FormMatrix,
    pub mass: DMatrix<f64>,
}

impl FormTriple {
    /// `||eta - (Gamma/2 + B)||_F / ||eta||_F`
    pub fn identity_residual(&self) -> f64 {
        let r = &self.eta.entries - (&self.gamma.entries * 0.5 + &self.b.entries);
        let norm = self.eta.norm();
        if norm == 0.0 {
            r.norm()
        } else {
            r.norm() / norm
        }
    }
}

struct PairSums {
    k: DMatrix<f64>,
    ext: Option<Vec<[f64; 3]>>,
}

fn pair_sums(k: &SharedKernel, space: &FormSpace, n: u32) -> Result<PairSums> {
    if n == 0 {
        return Err(Error::param("n", "truncation must be positive"));
    }
    if k.dim() != space.grid.dim() {
        return Err(Error::Dimension {
            expected: space.grid.dim(),
            got: k.dim(),
        });
    }
    let cutoff = 1.0 / n as f64;
    let pts = &space.points;
    let w = &space.weights;
    let np = pts.len();
    let mut km = DMatrix::zeros(np, np);
    for p in 0..np {
        for q in 0..np {
            if p == q {
                continue;
            }
            let r = crate::kernel::distance(&pts[p], &pts[q]);
            if r <= cutoff {
                continue;
            }
            let v = k.rate(&pts[p], &pts[q]) * w[p] * w[q];
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Assembly { p, q, value: v });
            }
            km[(p, q)] = v;
        }
    }
    let ext = if space.exterior {
        use rayon::prelude::*;
        Some(
            pts.par_iter()
                .zip(w.par_iter())
                .map(|(p, wp)| {
                    let e = space.exterior_rates(k, p, cutoff)?;
                    Ok([e[0] * wp, e[1] * wp, e[2] * wp])
                })
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    Ok(PairSums { k: km, ext })
}

fn sandwich(space: &FormSpace, mid: &DMatrix<f64>) -> DMatrix<f64> {
    space.phi.transpose() * (mid * &space.phi)
}

fn diag_plus(mut m: DMatrix<f64>, diag: impl Fn(usize) -> f64) -> DMatrix<f64> {
    for p in 0..m.nrows() {
        m[(p, p)] += diag(p);
    }
    m
}

fn matrix(
    space: &FormSpace,
    kind: FormKind,
    n: u32,
    entries: DMatrix<f64>,
    ext_part: Option<&DMatrix<f64>>,
) -> FormMatrix {
    let norm = entries.norm();
    let exterior_fraction = match ext_part {
        Some(e) if norm > 0.0 => e.norm() / norm,
        _ => 0.0,
    };
    FormMatrix {
        kind,
        n,
        asymmetry_residual: asymmetry(&entries),
        entries,
        grid_hash: space.grid.hash(),
        basis_hash: space.basis.hash(),
        exterior_fraction,
    }
}

fn exterior_matrix(space: &FormSpace, ext: &[[f64; 3]], slot: usize, factor: f64) -> DMatrix<f64> {
    let d = DMatrix::from_fn(ext.len(), 1, |p, _| factor * ext[p][slot]);
    let scaled = DMatrix::from_fn(space.phi.nrows(), space.phi.ncols(), |p, i| {
        d[p] * space.phi[(p, i)]
    });
    space.phi.transpose() * scaled
}

/// Assembles `eta^n`, `Gamma^n` and `B^n` from one set of pair sums.
pub fn assemble_all(k: &SharedKernel, space: &FormSpace, n: u32) -> Result<FormTriple> {
    let sums = pair_sums(k, space, n)?;
    let km = &sums.k;
    let vanish = k.is_symmetric();
    let ks = (km + km.transpose()) * 0.5;
    let ka = if vanish {
        DMatrix::zeros(km.nrows(), km.ncols())
    } else {
        (km - km.transpose()) * 0.5
    };
    let row_k: Vec<f64> = km.row_iter().map(|r| r.sum()).collect();
    let row_s: Vec<f64> = ks.row_iter().map(|r| r.sum()).collect();
    let col_a: Vec<f64> = ka.column_iter().map(|c| c.sum()).collect();

    let mut eta = sandwich(space, &diag_plus(-km.clone(), |p| row_k[p]));
    let mut gamma = sandwich(space, &diag_plus(-ks.clone(), |p| row_s[p])) * 2.0;
    let mut b = sandwich(space, &diag_plus(ka.transpose(), |p| -col_a[p]));

    let (mut e_eta, mut e_gamma, mut e_b) = (None, None, None);
    if let Some(ext) = &sums.ext {
        let ee = exterior_matrix(space, ext, 0, 1.0);
        let eg = exterior_matrix(space, ext, 1, 2.0);
        let eb = if vanish {
            DMatrix::zeros(ee.nrows(), ee.ncols())
        } else {
            exterior_matrix(space, ext, 2, 1.0)
        };
        eta += &ee;
        gamma += &eg;
        b += &eb;
        e_eta = Some(ee);
        e_gamma = Some(eg);
        e_b = Some(eb);
    }
    let gamma = {
        let mut m = matrix(space, FormKind::Gamma, n, gamma, e_gamma.as_ref());
        m.entries = (&m.entries + m.entries.transpose()) * 0.5;
        m
    };
    Ok(FormTriple {
        eta: matrix(space, FormKind::Eta, n, eta, e_eta.as_ref()),
        gamma,
        b: matrix(space, FormKind::B, n, b, e_b.as_ref()),
        mass: space.mass(),
    })
}

pub fn assemble_gamma(k: &SharedKernel, space: &FormSpace, n: u32) -> Result<FormMatrix> {
    Ok(assemble_all(k, space, n)?.gamma)
}

pub fn assemble_b(k: &SharedKernel, space: &FormSpace, n: u32) -> Result<FormMatrix> {
    Ok(assemble_all(k, space, n)?.b)
}

pub fn assemble_eta_n(k: &SharedKernel, space: &FormSpace, n: u32) -> Result<FormMatrix> {
    Ok(assemble_all(k, space, n)?.eta)
}

/// Smallest and largest eigenvalue of the symmetric part of `a`.
pub fn extreme_eigenvalues(a: &DMatrix<f64>) -> (f64, f64) {
    let s = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(s).eigenvalues;
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    /// Smallest normalized margin over all trials; negative means violation.
    pub worst_margin: f64,
    pub witness: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub beta0: f64,
    pub c4: f64,
    pub trials: usize,
    pub checks: Vec<BoundCheck>,
    /// `sup |eta(u,v)| / (sqrt(eta_b0(u,u)) sqrt(eta_b0(v,v)))`, to compare with `2 sqrt 2`.
    pub sector_ratio: f64,
    pub gamma_min_eig: f64,
    pub gamma_max_eig: f64,
    pub eta_shifted_min_eig: f64,
    pub eta_shifted_max_eig: f64,
    pub pass: bool,
}

/// Coordinate vectors followed by `random` seeded random vectors.
pub fn trial_vectors(dim: usize, random: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = (0..dim)
        .map(|i| {
            let mut e = DVector::zeros(dim);
            e[i] = 1.0;
            e
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in 0..random {
        let v = match t % 3 {
            0 => DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0)),
            1 => DVector::from_fn(dim, |_, _| rng.random_range(0.0..1.0)),
            _ => {
                // a smooth random profile: few low modes
                let a: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
                DVector::from_fn(dim, |i, _| {
                    let s = (i as f64 + 0.5) / dim as f64;
                    a.iter()
                        .enumerate()
                        .map(|(m, c)| c * (std::f64::consts::PI * (m + 1) as f64 * s).sin())
                        .sum()
                })
            }
        };
        out.push(v);
    }
    out
}

/// Checks the lower bound, upper comparison, sector condition and the bound
/// on `B` over trial vectors, with the constants of `report`.
pub fn verify_bounds(
    forms: &FormTriple,
    report: &ConditionReport,
    trials: &[DVector<f64>],
    slack: f64,
) -> Result<BoundsReport> {
    let nb = forms.eta.entries.nrows();
    if forms.gamma.entries.nrows() != nb
        || forms.b.entries.nrows() != nb
        || forms.mass.nrows() != nb
    {
        return Err(Error::param("forms", "matrices have different sizes"));
    }
    if forms.eta.n != forms.gamma.n || forms.eta.n != forms.b.n {
        return Err(Error::param(
            "forms",
            "matrices were assembled with different truncations",
        ));
    }
    if let Some(t) = trials.iter().find(|t| t.len() != nb) {
        return Err(Error::Dimension {
            expected: nb,
            got: t.len(),
        });
    }
    let beta0 = report.beta0;
    let c4 = report.c4;
    let upper_c = (2.0 + 2f64.sqrt()) / 2.0;
    let sector_c = 2.0 * 2f64.sqrt();

    struct Acc {
        name: &'static str,
        worst: f64,
        witness: usize,
    }
    impl Acc {
        fn push(&mut self, margin: f64, idx: usize) {
            if margin < self.worst {
                self.worst = margin;
                self.witness = idx;
            }
        }
    }
    let mk = |name| Acc {
        name,
        worst: f64::INFINITY,
        witness: 0,
    };
    let (mut lower, mut upper, mut sector, mut bbound) = (
        mk("lower_bound_quarter_gamma"),
        mk("upper_comparison"),
        mk("sector_condition"),
        mk("b_bound"),
    );
    let mut sector_ratio: f64 = 0.0;

    let quad = |m: &DMatrix<f64>, u: &DVector<f64>, v: &DVector<f64>| v.dot(&(m * u));
    let norm2: Vec<f64> = trials.iter().map(|u| quad(&forms.mass, u, u)).collect();
    let eta_uu: Vec<f64> = trials
        .iter()
        .map(|u| quad(&forms.eta.entries, u, u))
        .collect();
    let gam_uu: Vec<f64> = trials
        .iter()
        .map(|u| quad(&forms.gamma.entries, u, u))
        .collect();

    for (i, _) in trials.iter().enumerate() {
        if norm2[i] == 0.0 {
            continue;
        }
        let eb = eta_uu[i] + beta0 * norm2[i];
        let gb = gam_uu[i] + beta0 * norm2[i];
        let scale = gb.abs().max(eb.abs()).max(f64::MIN_POSITIVE);
        lower.push((eb - 0.25 * gb) / scale, i);
        upper.push((upper_c * gb - eb) / scale, i);
    }
    let t = trials.len();
    for i in 0..t {
        for j in [i, (i + 1) % t, (i * 7 + 3) % t] {
            if norm2[i] == 0.0 || norm2[j] == 0.0 {
                continue;
            }
            let (u, v) = (&trials[i], &trials[j]);
            let euv = quad(&forms.eta.entries, u, v);
            let ebu = eta_uu[i] + beta0 * norm2[i];
            let ebv = eta_uu[j] + beta0 * norm2[j];
            let denom = ebu.max(0.0).sqrt() * ebv.max(0.0).sqrt();
            if denom > 0.0 {
                sector_ratio = sector_ratio.max(euv.abs() / denom);
                sector.push((sector_c * denom - euv.abs()) / (sector_c * denom), i);
            } else if euv.abs() > slack {
                sector.push(-f64::INFINITY, i);
            }
            let buv = quad(&forms.b.entries, u, v);
            let rhs = c4 * norm2[j].sqrt() * gam_uu[i].max(0.0).sqrt();
            let scale = rhs.max(gam_uu[i].abs()).max(f64::MIN_POSITIVE);
            bbound.push((rhs - buv.abs()) / scale, i);
        }
    }
    let (gmin, gmax) = extreme_eigenvalues(&forms.gamma.entries);
    let shifted = &forms.eta.entries + &forms.mass * beta0;
    let (emin, emax) = extreme_eigenvalues(&shifted);
    let mut checks: Vec<BoundCheck> = [lower, upper, sector, bbound]
        .into_iter()
        .map(|a| BoundCheck {
            name: a.name.to_string(),
            worst_margin: a.worst,
            witness: a.witness,
            pass: a.worst >= -slack,
        })
        .collect();
    checks.push(BoundCheck {
        name: "gamma_psd".into(),
        worst_margin: gmin / gmax.abs().max(f64::MIN_POSITIVE),
        witness: 0,
        pass: gmin >= -slack * gmax.abs(),
    });
    checks.push(BoundCheck {
        name: "eta_shifted_psd".into(),
        worst_margin: emin / emax.abs().max(f64::MIN_POSITIVE),
        witness: 0,
        pass: emin >= -slack * emax.abs(),
    });
    let pass = checks.iter().all(|c| c.pass);
    Ok(BoundsReport {
        beta0,
        c4,
        trials: t,
        checks,
        sector_ratio,
        gamma_min_eig: gmin,
        gamma_max_eig: gmax,
        eta_shifted_min_eig: emin,
        eta_shifted_max_eig: emax,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub n: Vec<u32>,
    /// `values[s][m] = eta^{n_m}(Uu_s, u_s - Uu_s)`
    pub values: Vec<Vec<f64>>,
    pub min_value: f64,
    pub witness: Option<(usize, u32)>,
    pub pass: bool,
}

/// `(0 v u) ^ 1`
pub fn unit_contraction(u: &[f64]) -> Vec<f64> {
    u.iter().map(|v| v.clamp(0.0, 1.0)).collect()
}

/// `eta^n(v, w)` for grid functions given by their node values, by direct
/// double summation over grid nodes (nodes outside the box carry value 0).
pub fn eta_grid_functions(
    k: &SharedKernel,
    grid: &Grid,
    n: u32,
    v: &[f64],
    w: &[f64],
) -> Result<f64> {
    if v.len() != grid.len() || w.len() != grid.len() {
        return Err(Error::Dimension {
            expected: grid.len(),
            got: v.len().min(w.len()),
        });
    }
    let pts = grid.points();
    let mu = grid.cell_measure();
    let cutoff = 1.0 / n as f64;
    let mut total = 0.0;
    for p in 0..pts.len() {
        if w[p] == 0.0 {
            continue;
        }
        let mut inner = 0.0;
        for q in 0..pts.len() {
            if q == p {
                continue;
            }
            let r = crate::kernel::distance(&pts[p], &pts[q]);
            if r > cutoff {
                inner += (v[p] - v[q]) * k.rate(&pts[p], &pts[q]) * mu;
            }
        }
        if v[p] != 0.0 {
            inner +=
                v[p] * exterior_rates(k, (&grid.lower, &grid.upper), &pts[p], cutoff, 8, 32)?[0];
        }
        total += w[p] * inner * mu;
    }
    Ok(total)
}

/// Evaluates `eta^n(Uu, u - Uu)` for each sample and each truncation.
pub fn check_unit_contraction(
    k: &SharedKernel,
    grid: &Grid,
    ns: &[u32],
    samples: &[Vec<f64>],
    tolerance: f64,
) -> Result<ContractionReport> {
    let mut values = Vec::with_capacity(samples.len());
    let mut min_value = f64::INFINITY;
    let mut witness = None;
    for (s, u) in samples.iter().enumerate() {
        let uu = unit_contraction(u);
        let rest: Vec<f64> = u.iter().zip(&uu).map(|(a, b)| a - b).collect();
        let mut row = Vec::with_capacity(ns.len());
        for &n in ns {
            let val = eta_grid_functions(k, grid, n, &uu, &rest)?;
            if val < min_value {
                min_value = val;
                if val < -tolerance {
                    witness = Some((s, n));
                }
            }
            row.push(val);
        }
        values.push(row);
    }
    Ok(ContractionReport {
        n: ns.to_vec(),
        values,
        min_value,
        pass: witness.is_none(),
        witness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditions::{check_conditions, sample_box, QuadratureConfig};
    use crate::exponent::{ExponentField, ExponentProfile};
    use crate::kernel::{stable_like_kernel, Normalization, SymmetricPower};

    fn tanh_kernel() -> SharedKernel {
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

    fn constant_kernel(a: f64) -> SharedKernel {
        Arc::new(
            stable_like_kernel(
                ExponentField::constant(a, 1).unwrap(),
                Normalization::LevyConstant,
            )
            .unwrap(),
        )
    }

    #[test]
    fn identity_holds_at_matrix_level() {
        let space = FormSpace::tents_1d(-2.0, 2.0, 18, 2).unwrap();
        let f = assemble_all(&tanh_kernel(), &space, 16).unwrap();
        assert!(f.identity_residual() < 1e-12, "{}", f.identity_residual());
        assert!(f.gamma.asymmetry_residual < 1e-12);
        assert!(f.b.asymmetry_residual > 1e-6);
        assert!(f.eta.exterior_fraction > 0.0);
    }

    #[test]
    fn symmetric_kernel_gives_zero_b() {
        let space = FormSpace::tents_1d(-2.0, 2.0, 18, 2).unwrap();
        let f = assemble_all(&constant_kernel(1.2), &space, 16).unwrap();
        assert_eq!(f.b.norm(), 0.0);
        let half = &f.gamma.entries * 0.5;
        assert!((&f.eta.entries - half).norm() < 1e-12 * f.eta.norm());
    }

    #[test]
    fn far_supports_decouple_for_finite_range() {
        let grid = Grid::interval(0.0, 10.0, 21).unwrap();
        let basis = BasisSet {
            functions: vec![
                Arc::new(Tent {
                    center: vec![1.0],
                    half_width: 0.5,
                    height: 1.0,
                }),
                Arc::new(Tent {
                    center: vec![9.0],
                    half_width: 0.5,
                    height: 1.0,
                }),
            ],
        };
        let space = FormSpace::new(grid, basis, 2).unwrap();
        let k: SharedKernel = Arc::new(SymmetricPower {
            dim: 1,
            scale: 1.0,
            power: 1.5,
            cutoff: Some(2.0),
        });
        let g = assemble_gamma(&k, &space, 8).unwrap();
        assert_eq!(g.entries[(0, 1)], 0.0);
        assert!(g.entries[(0, 0)] > 0.0);
    }

    #[test]
    fn gamma_diagonal_is_nonnegative_and_monotone_in_n() {
        let space = FormSpace::tents_1d(-2.0, 2.0, 9, 8).unwrap();
        let k = constant_kernel(1.0);
        let mut last = 0.0;
        for n in [1, 2, 4, 8, 16] {
            let g = assemble_gamma(&k, &space, n).unwrap();
            let v = g.entries[(3, 3)];
            assert!(v > 0.0 && v >= last - 1e-14);
            last = v;
        }
    }

    #[test]
    fn triplets_roundtrip() {
        let space = FormSpace::tents_1d(-2.0, 2.0, 10, 1).unwrap();
        let f = assemble_all(&tanh_kernel(), &space, 4).unwrap();
        let text = f.b.to_triplets();
        let back = FormMatrix::from_triplets(&text).unwrap();
        assert_eq!(back.entries, f.b.entries);
        assert_eq!(back.kind, FormKind::B);
        assert_eq!(back.grid_hash, f.b.grid_hash);
        assert!(FormMatrix::from_triplets("garbage").is_err());
    }

    #[test]
    fn bounds_hold_for_tanh_kernel() {
        let k = tanh_kernel();
        let quad = QuadratureConfig {
            refine_samples: false,
            ..Default::default()
        };
        let rep = check_conditions(&k, &quad, &sample_box(1, -3.0, 3.0, 13), None).unwrap();
        let space = FormSpace::tents_1d(-2.0, 2.0, 18, 2).unwrap();
        let f = assemble_all(&k, &space, 16).unwrap();
        let trials = trial_vectors(space.basis.len(), 200, 1);
        let b = verify_bounds(&f, &rep, &trials, 1e-10).unwrap();
        assert!(b.pass, "{:?}", b.checks);
        assert!(b.sector_ratio <= 2.0 * 2f64.sqrt());
    }

    #[test]
    fn unit_contraction_is_nonnegative() {
        let grid = Grid::interval(-2.0, 2.0, 41).unwrap();
        let k = tanh_kernel();
        let pts = grid.points();
        let hat = |c: f64, w: f64| -> Vec<f64> {
            pts.iter()
                .map(|p| (1.0 - (p[0] - c).abs() / w).max(0.0))
                .collect()
        };
        let two_hat: Vec<f64> = hat(0.0, 0.5).iter().map(|v| 2.0 * v).collect();
        let neg_hat: Vec<f64> = hat(0.5, 0.5).iter().map(|v| -v).collect();
        let mixed: Vec<f64> = pts.iter().map(|p| 1.8 * (3.0 * p[0]).sin()).collect();
        let rep = check_unit_contraction(
            &k,
            &grid,
            &[2, 8],
            &[two_hat, neg_hat.clone(), mixed, hat(0.0, 1.0)],
            1e-12,
        )
        .unwrap();
        assert!(rep.pass, "{rep:?}");
        assert!(rep.values[0][0] > 0.0);
        assert_eq!(rep.values[1], vec![0.0, 0.0]);
        assert_eq!(rep.values[3], vec![0.0, 0.0]);
    }
}
