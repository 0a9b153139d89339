//! Jump kernels `k(x, y)` on `R^d`, their duals and symmetric/antisymmetric parts.

use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, gamma};

use crate::exponent::ExponentField;
use crate::{Error, Result};

/// A nonnegative rate density defined off the diagonal.
pub trait JumpKernel: Send + Sync + Debug {
    fn dim(&self) -> usize;

    /// Raw evaluation, assumed `x != y`. Use [`JumpKernel::eval`] for checked access.
    fn rate(&self, x: &[f64], y: &[f64]) -> f64;

    fn label(&self) -> String;

    /// `true` only when `k(x, y) = k(y, x)` holds identically, so that the
    /// antisymmetric part can be short-circuited to exact zero.
    fn is_symmetric(&self) -> bool {
        false
    }

    /// Tabulated kernels live on a lattice; integrals against them are node sums.
    fn lattice(&self) -> Option<&Lattice> {
        None
    }

    /// Kernels that vanish beyond a finite separation report it here.
    fn range(&self) -> Option<f64> {
        None
    }

    /// Structured dual when one exists (e.g. a stable-like kernel anchored at `y`).
    fn structured_dual(&self) -> Option<SharedKernel> {
        None
    }

    /// The kernel this one is the dual of, if it is a plain [`Dual`] wrapper.
    fn undual(&self) -> Option<SharedKernel> {
        None
    }

    fn as_stable_like(&self) -> Option<&StableLike> {
        None
    }

    /// `(k(x, y) - k(y, x)) / 2`; kernels with near-cancelling values override
    /// this with a cancellation-free form.
    fn anti_rate(&self, x: &[f64], y: &[f64]) -> f64 {
        0.5 * (self.rate(x, y) - self.rate(y, x))
    }

    /// `(k(x, y), k(y, x))` for `y = x + h` with `|h| = r` supplied exactly,
    /// so that quadrature nodes very close to `x` keep their separation.
    fn pair_rates(&self, x: &[f64], y: &[f64], _h: &[f64], _r: f64) -> (f64, f64) {
        (self.rate(x, y), self.rate(y, x))
    }

    /// `k_a(x, x + h)` with exact offset.
    fn pair_anti(&self, x: &[f64], y: &[f64], _h: &[f64], _r: f64) -> f64 {
        self.anti_rate(x, y)
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: x.len(),
            });
        }
        if y.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: y.len(),
            });
        }
        if x == y {
            return Err(Error::Diagonal { point: x.to_vec() });
        }
        let v = self.rate(x, y);
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::InvalidParameter {
                name: "kernel",
                reason: format!("k({x:?}, {y:?}) = {v} is not a finite nonnegative rate"),
            });
        }
        Ok(v)
    }
}

pub type SharedKernel = Arc<dyn JumpKernel>;

pub fn distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// How the prefactor `w(x)` of a stable-like kernel is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `Gamma((1+a)/2) Gamma((a+d)/2) sin(pi a/2) / (2^{1-a} pi^{d/2+1})`
    GammaSine,
    /// `a 2^{a-1} Gamma((a+d)/2) / (pi^{d/2} Gamma(1-a/2))`, the constant of the
    /// fractional Laplacian `-(-Delta)^{a/2}`, with symbol `-|u|^a`.
    #[default]
    LevyConstant,
}

/// Prefactor for local exponent `alpha` in dimension `d`.
pub fn stable_weight(alpha: f64, dim: usize, norm: Normalization) -> f64 {
    let d = dim as f64;
    let pi = std::f64::consts::PI;
    match norm {
        Normalization::GammaSine => {
            gamma((1.0 + alpha) / 2.0) * gamma((alpha + d) / 2.0) * (pi * alpha / 2.0).sin()
                / (2f64.powf(1.0 - alpha) * pi.powf(d / 2.0 + 1.0))
        }
        Normalization::LevyConstant => {
            alpha * 2f64.powf(alpha - 1.0) * gamma((alpha + d) / 2.0)
                / (pi.powf(d / 2.0) * gamma(1.0 - alpha / 2.0))
        }
    }
}

/// `d/d alpha` of `ln stable_weight(alpha, d, norm)`.
pub fn log_weight_slope(alpha: f64, dim: usize, norm: Normalization) -> f64 {
    let d = dim as f64;
    let pi = std::f64::consts::PI;
    match norm {
        Normalization::GammaSine => {
            0.5 * digamma((1.0 + alpha) / 2.0)
                + 0.5 * digamma((alpha + d) / 2.0)
                + 0.5 * pi / (pi * alpha / 2.0).tan()
                + std::f64::consts::LN_2
        }
        Normalization::LevyConstant => {
            1.0 / alpha
                + std::f64::consts::LN_2
                + 0.5 * digamma((alpha + d) / 2.0)
                + 0.5 * digamma(1.0 - alpha / 2.0)
        }
    }
}

/// `k(x, y) = w(z) |x - y|^{-d - alpha(z)}` with `z = x` (or `z = y` for the
/// dual orientation).
#[derive(Debug, Clone)]
pub struct StableLike {
    pub field: ExponentField,
    pub normalization: Normalization,
    /// Evaluate the exponent at the target point instead of the source.
    pub anchored_at_target: bool,
}

impl StableLike {
    pub fn weight_at(&self, z: &[f64]) -> f64 {
        stable_weight(self.field.alpha(z), self.field.dim, self.normalization)
    }

    /// Rate of a jump by `h` from `z` with exponent frozen at `z`.
    pub fn frozen(&self, z: &[f64], r: f64) -> f64 {
        let a = self.field.alpha(z);
        stable_weight(a, self.field.dim, self.normalization) * r.powf(-(self.field.dim as f64) - a)
    }
}

impl StableLike {
    /// `frozen(z + gap, r) - frozen(z, r)`, assembled from exact exponent
    /// differences so that it keeps relative accuracy as `gap -> 0`.
    pub fn frozen_difference(&self, z: &[f64], gap: &[f64], r: f64) -> f64 {
        let az = self.field.alpha(z);
        let da = self.field.profile.difference(z, gap);
        if da == 0.0 {
            return 0.0;
        }
        let dim = self.field.dim;
        let dlogw = if da.abs() < 1e-5 {
            da * log_weight_slope(az + 0.5 * da, dim, self.normalization)
        } else {
            (stable_weight(az + da, dim, self.normalization)
                / stable_weight(az, dim, self.normalization))
            .ln()
        };
        self.frozen(z, r) * (dlogw - da * r.ln()).exp_m1()
    }
}

impl JumpKernel for StableLike {
    fn dim(&self) -> usize {
        self.field.dim
    }

    fn rate(&self, x: &[f64], y: &[f64]) -> f64 {
        let z = if self.anchored_at_target { y } else { x };
        self.frozen(z, distance(x, y))
    }

    fn label(&self) -> String {
        let side = if self.anchored_at_target { "dual_" } else { "" };
        format!(
            "{side}stable_like[{:?},{:?}]",
            self.field.profile, self.normalization
        )
    }

    fn is_symmetric(&self) -> bool {
        self.field.is_constant()
    }

    fn as_stable_like(&self) -> Option<&StableLike> {
        Some(self)
    }

    fn anti_rate(&self, x: &[f64], y: &[f64]) -> f64 {
        let h: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
        self.pair_anti(x, y, &h, distance(x, y))
    }

    fn pair_rates(&self, x: &[f64], y: &[f64], _h: &[f64], r: f64) -> (f64, f64) {
        let (a, b) = (self.frozen(x, r), self.frozen(y, r));
        if self.anchored_at_target {
            (b, a)
        } else {
            (a, b)
        }
    }

    fn pair_anti(&self, x: &[f64], _y: &[f64], h: &[f64], r: f64) -> f64 {
        let v = -0.5 * self.frozen_difference(x, h, r);
        if self.anchored_at_target {
            -v
        } else {
            v
        }
    }

    fn structured_dual(&self) -> Option<SharedKernel> {
        let mut dual = self.clone();
        dual.anchored_at_target = !self.anchored_at_target;
        Some(Arc::new(dual))
    }
}

pub fn stable_like_kernel(
    field: ExponentField,
    normalization: Normalization,
) -> Result<StableLike> {
    field.validate()?;
    Ok(StableLike {
        field,
        normalization,
        anchored_at_target: false,
    })
}

/// `k(x, y) = scale |x - y|^{-power}`, optionally cut off beyond `range`.
#[derive(Debug, Clone)]
pub struct SymmetricPower {
    pub dim: usize,
    pub scale: f64,
    pub power: f64,
    pub cutoff: Option<f64>,
}

impl JumpKernel for SymmetricPower {
    fn dim(&self) -> usize {
        self.dim
    }

    fn rate(&self, x: &[f64], y: &[f64]) -> f64 {
        let r = distance(x, y);
        match self.cutoff {
            Some(c) if r > c => 0.0,
            _ => self.scale * r.powf(-self.power),
        }
    }

    fn label(&self) -> String {
        format!("symmetric_power[{},{}]", self.scale, self.power)
    }

    fn is_symmetric(&self) -> bool {
        true
    }

    fn range(&self) -> Option<f64> {
        self.cutoff
    }
}

/// `k*(x, y) = k(y, x)`.
#[derive(Debug, Clone)]
pub struct Dual {
    pub inner: SharedKernel,
}

impl JumpKernel for Dual {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn rate(&self, x: &[f64], y: &[f64]) -> f64 {
        self.inner.rate(y, x)
    }

    fn label(&self) -> String {
        format!("dual({})", self.inner.label())
    }

    fn is_symmetric(&self) -> bool {
        self.inner.is_symmetric()
    }

    fn lattice(&self) -> Option<&Lattice> {
        self.inner.lattice()
    }

    fn range(&self) -> Option<f64> {
        self.inner.range()
    }

    fn undual(&self) -> Option<SharedKernel> {
        Some(self.inner.clone())
    }

    fn anti_rate(&self, x: &[f64], y: &[f64]) -> f64 {
        -self.inner.anti_rate(x, y)
    }

    fn pair_rates(&self, x: &[f64], y: &[f64], h: &[f64], r: f64) -> (f64, f64) {
        let (a, b) = self.inner.pair_rates(x, y, h, r);
        (b, a)
    }

    fn pair_anti(&self, x: &[f64], y: &[f64], h: &[f64], r: f64) -> f64 {
        -self.inner.pair_anti(x, y, h, r)
    }
}

pub fn dual_kernel(k: &SharedKernel) -> SharedKernel {
    if k.is_symmetric() {
        return k.clone();
    }
    if let Some(inner) = k.undual() {
        return inner;
    }
    if let Some(d) = k.structured_dual() {
        return d;
    }
    Arc::new(Dual { inner: k.clone() })
}

/// Uniform one-dimensional lattice `origin + i * spacing`, `i = 0..len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub origin: f64,
    pub spacing: f64,
    pub len: usize,
}

impl Lattice {
    pub fn node(&self, i: usize) -> f64 {
        self.origin + i as f64 * self.spacing
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.node(i)).collect()
    }

    fn locate(&self, x: f64) -> Option<(usize, f64)> {
        let s = (x - self.origin) / self.spacing;
        let last = (self.len - 1) as f64;
        if !(-1e-9..=last + 1e-9).contains(&s) {
            return None;
        }
        let s = s.clamp(0.0, last);
        let i = (s.floor() as usize).min(self.len.saturating_sub(2));
        Some((i, s - i as f64))
    }

    /// Index of the node equal to `x` up to roundoff.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let s = (x - self.origin) / self.spacing;
        let i = s.round();
        if (s - i).abs() < 1e-6 && i >= 0.0 && (i as usize) < self.len {
            Some(i as usize)
        } else {
            None
        }
    }
}

/// Kernel given by a dense table of values at lattice node pairs; bilinear
/// interpolation in between and zero off the lattice.
#[derive(Debug, Clone)]
pub struct Tabulated {
    pub lattice: Lattice,
    /// Row-major, `values[i * len + j] = k(x_i, x_j)`.
    pub values: Vec<f64>,
    pub name: String,
    pub symmetric: bool,
}

impl Tabulated {
    pub fn new(lattice: Lattice, values: Vec<f64>, name: impl Into<String>) -> Result<Self> {
        let n = lattice.len;
        if n < 2 {
            return Err(Error::param("lattice.len", "need at least two nodes"));
        }
        if values.len() != n * n {
            return Err(Error::Dimension {
                expected: n * n,
                got: values.len(),
            });
        }
        if let Some((idx, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= 0.0) || !v.is_finite())
        {
            return Err(Error::NegativeRate {
                row: idx / n,
                col: idx % n,
                value: *v,
            });
        }
        let symmetric = (0..n).all(|i| (0..i).all(|j| values[i * n + j] == values[j * n + i]));
        Ok(Self {
            lattice,
            values,
            name: name.into(),
            symmetric,
        })
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.lattice.len + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.lattice.len;
        &self.values[i * n..(i + 1) * n]
    }

    pub fn transpose(&self) -> Tabulated {
        let n = self.lattice.len;
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                values[j * n + i] = self.values[i * n + j];
            }
        }
        Tabulated {
            lattice: self.lattice.clone(),
            values,
            name: format!("dual({})", self.name),
            symmetric: self.symmetric,
        }
    }
}

impl JumpKernel for Tabulated {
    fn dim(&self) -> usize {
        1
    }

    fn rate(&self, x: &[f64], y: &[f64]) -> f64 {
        let (Some((i, s)), Some((j, t))) = (self.lattice.locate(x[0]), self.lattice.locate(y[0]))
        else {
            return 0.0;
        };
        let v = |a: usize, b: usize| self.at(a, b);
        (1.0 - s) * (1.0 - t) * v(i, j)
            + s * (1.0 - t) * v(i + 1, j)
            + (1.0 - s) * t * v(i, j + 1)
            + s * t * v(i + 1, j + 1)
    }

    fn label(&self) -> String {
        self.name.clone()
    }

    fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    fn lattice(&self) -> Option<&Lattice> {
        Some(&self.lattice)
    }

    fn structured_dual(&self) -> Option<SharedKernel> {
        Some(Arc::new(self.transpose()))
    }
}

/// `k_s = (k + k*) / 2` and `k_a = (k - k*) / 2` as evaluable functions.
#[derive(Debug, Clone)]
pub struct KernelDecomposition {
    pub kernel: SharedKernel,
    /// Set when `k_a` vanishes identically.
    pub antisymmetric_vanishes: bool,
}

impl KernelDecomposition {
    pub fn sym(&self, x: &[f64], y: &[f64]) -> f64 {
        if self.antisymmetric_vanishes {
            return self.kernel.rate(x, y);
        }
        0.5 * (self.kernel.rate(x, y) + self.kernel.rate(y, x))
    }

    pub fn anti(&self, x: &[f64], y: &[f64]) -> f64 {
        if self.antisymmetric_vanishes {
            return 0.0;
        }
        self.kernel.anti_rate(x, y)
    }

    /// `(k_s, k_a)` at `y = x + h` with exact separation `r`.
    pub fn parts_offset(&self, x: &[f64], y: &[f64], h: &[f64], r: f64) -> (f64, f64) {
        let (kxy, kyx) = self.kernel.pair_rates(x, y, h, r);
        if self.antisymmetric_vanishes {
            return (kxy, 0.0);
        }
        (0.5 * (kxy + kyx), self.kernel.pair_anti(x, y, h, r))
    }

    pub fn parts(&self, x: &[f64], y: &[f64]) -> (f64, f64) {
        if self.antisymmetric_vanishes {
            return (self.kernel.rate(x, y), 0.0);
        }
        (self.sym(x, y), self.kernel.anti_rate(x, y))
    }

    pub fn sym_checked(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let kxy = self.kernel.eval(x, y)?;
        Ok(0.5 * (kxy + self.kernel.eval(y, x)?))
    }

    pub fn anti_checked(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let kxy = self.kernel.eval(x, y)?;
        Ok(0.5 * (kxy - self.kernel.eval(y, x)?))
    }
}

pub fn decompose(k: &SharedKernel) -> KernelDecomposition {
    KernelDecomposition {
        kernel: k.clone(),
        antisymmetric_vanishes: k.is_symmetric(),
    }
}
