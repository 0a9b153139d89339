//! Radial-angular product quadrature for integrals of singular jump kernels.
//!
//! Integrals over `{r0 < |h| < r1}` in `R^d` are split into dyadic radial
//! shells. Each shell is integrated in the logarithmic variable `s = ln r`
//! with Gauss-Legendre panels, which grades the rule geometrically toward
//! the singularity at `h = 0`. The sequence of shell increments is summed
//! with an extrapolated tail, so that both the inner cutoff limit and the
//! outer truncation can be checked for stability.

use std::f64::consts::PI;

use crate::{Error, Result};

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Legendre order must be positive");
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        let n = order as f64;
        for i in 0..order.div_ceil(2) {
            // Chebyshev initial guess, refined by Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(order, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(order, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[order - 1 - i] = x;
            weights[i] = w;
            weights[order - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Integrates `f` over `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(mid + half * t))
            .sum::<f64>()
            * half
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Unit directions with weights summing to the surface measure of the
/// unit sphere: `2` in `d = 1` and `2 pi` in `d = 2`.
#[derive(Debug, Clone)]
pub struct Directions {
    pub dim: usize,
    pub vectors: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl Directions {
    pub fn new(dim: usize, angular_points: usize) -> Result<Self> {
        match dim {
            1 => Ok(Self {
                dim,
                vectors: vec![vec![1.0], vec![-1.0]],
                weights: vec![1.0, 1.0],
            }),
            2 => {
                if angular_points < 4 || !angular_points.is_multiple_of(2) {
                    return Err(Error::param(
                        "angular_points",
                        "need an even number of at least 4 directions in d = 2",
                    ));
                }
                let w = 2.0 * PI / angular_points as f64;
                let vectors = (0..angular_points)
                    .map(|k| {
                        let th = 2.0 * PI * (k as f64 + 0.5) / angular_points as f64;
                        vec![th.cos(), th.sin()]
                    })
                    .collect();
                Ok(Self {
                    dim,
                    vectors,
                    weights: vec![w; angular_points],
                })
            }
            _ => Err(Error::Unsupported(format!(
                "radial-angular quadrature is implemented for d = 1, 2 (got d = {dim})"
            ))),
        }
    }

    /// Directions come in antipodal pairs `(v, -v)`; this returns the index
    /// of the partner of direction `i`.
    pub fn antipode(&self, i: usize) -> usize {
        match self.dim {
            1 => 1 - i,
            _ => (i + self.vectors.len() / 2) % self.vectors.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Log-graded rule for one radial interval.
#[derive(Debug, Clone)]
pub struct RadialRule {
    gl: GaussLegendre,
    panels: usize,
}

impl RadialRule {
    pub fn new(order: usize, panels: usize) -> Self {
        Self {
            gl: GaussLegendre::new(order),
            panels: panels.max(1),
        }
    }

    /// `int_a^b f(r) dr` with the substitution `r = e^s`.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        debug_assert!(a > 0.0 && b > a);
        let (la, lb) = (a.ln(), b.ln());
        let step = (lb - la) / self.panels as f64;
        (0..self.panels)
            .map(|p| {
                let s0 = la + p as f64 * step;
                self.gl.integrate(s0, s0 + step, |s| {
                    let r = s.exp();
                    f(r) * r
                })
            })
            .sum()
    }
}

/// Outcome of summing a sequence of shell increments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesEstimate {
    /// Extrapolated limit (partial sum plus geometric tail estimate).
    pub value: f64,
    /// Partial sum over all computed shells.
    pub partial: f64,
    /// Change of the extrapolated value between the two finest levels.
    pub error: f64,
    pub converged: bool,
}

impl SeriesEstimate {
    pub const ZERO: SeriesEstimate = SeriesEstimate {
        value: 0.0,
        partial: 0.0,
        error: 0.0,
        converged: true,
    };
}

/// Sums shell increments ordered from the first (coarsest) to the last
/// (finest) level and decides whether the limit is stable.
///
/// The tail is estimated with the Shanks `e_2` transform (Wynn's epsilon
/// table, two columns deep) of the partial sums, which is exact for
/// increments of the form `(a + b j) q^j` and for sums of two geometric
/// sequences. A final ratio `|Delta_J / Delta_{J-1}| >= 1` is divergence.
pub fn sum_series(increments: &[f64], rel_tol: f64, abs_floor: f64) -> SeriesEstimate {
    let n = increments.len();
    let partial: f64 = increments.iter().sum();
    if increments.iter().all(|&d| d == 0.0) {
        return SeriesEstimate::ZERO;
    }
    let unconverged = SeriesEstimate {
        value: partial,
        partial,
        error: f64::INFINITY,
        converged: false,
    };
    if n < 7 {
        return unconverged;
    }
    let scale = partial.abs().max(abs_floor);
    let last = increments[n - 1];
    let prev = increments[n - 2];
    if last.abs() <= 1e-15 * scale && prev.abs() <= 1e-13 * scale {
        return SeriesEstimate {
            value: partial,
            partial,
            error: last.abs() + prev.abs(),
            converged: true,
        };
    }
    if prev == 0.0 || (last / prev).abs() >= 0.999 {
        return unconverged;
    }
    let mut sums = Vec::with_capacity(6);
    let mut acc = partial - increments[n - 6..].iter().sum::<f64>();
    for &d in &increments[n - 6..] {
        acc += d;
        sums.push(acc);
    }
    let v_last = shanks2(&sums[1..6]);
    let v_prev = shanks2(&sums[0..5]);
    let (value, error) = match (v_last, v_prev) {
        (Some(a), Some(b)) => (a, (a - b).abs()),
        _ => {
            let q = last / prev;
            let a = partial + last * q / (1.0 - q);
            let qp = prev / increments[n - 3];
            let b = partial - last + prev * qp / (1.0 - qp);
            (a, (a - b).abs())
        }
    };
    SeriesEstimate {
        value,
        partial,
        error,
        converged: value.is_finite() && error <= rel_tol * value.abs().max(abs_floor),
    }
}

/// `epsilon_4` from five consecutive partial sums.
fn shanks2(s: &[f64]) -> Option<f64> {
    let inv = |d: f64| if d == 0.0 { f64::INFINITY } else { 1.0 / d };
    let mut prev: Vec<f64> = vec![0.0; s.len() + 1];
    let mut cur: Vec<f64> = s.to_vec();
    for _ in 0..4 {
        let next: Vec<f64> = (0..cur.len() - 1)
            .map(|i| prev[i + 1] + inv(cur[i + 1] - cur[i]))
            .collect();
        prev = cur;
        cur = next;
    }
    let v = cur[0];
    v.is_finite().then_some(v)
}

/// Integrates `g(r)` over dyadic shells `[r_{j}, r_{j-1}]` with
/// `r_j = outer * 2^{-j}`, `j = 1..=levels`, returning the increments from
/// the outermost shell inward.
pub fn inward_shells(
    rule: &RadialRule,
    outer: f64,
    levels: u32,
    mut g: impl FnMut(f64) -> f64,
) -> Vec<f64> {
    let mut hi = outer;
    (0..levels)
        .map(|_| {
            let lo = 0.5 * hi;
            let v = rule.integrate(lo, hi, &mut g);
            hi = lo;
            v
        })
        .collect()
}

/// Integrates `g(r)` over dyadic shells `[inner 2^{j-1}, inner 2^j]`,
/// `j = 1..=levels`, returning increments from the innermost shell outward.
pub fn outward_shells(
    rule: &RadialRule,
    inner: f64,
    levels: u32,
    mut g: impl FnMut(f64) -> f64,
) -> Vec<f64> {
    let mut lo = inner;
    (0..levels)
        .map(|_| {
            let hi = 2.0 * lo;
            let v = rule.integrate(lo, hi, &mut g);
            lo = hi;
            v
        })
        .collect()
}

/// Surface measure of the unit sphere in `R^d`.
pub fn sphere_area(dim: usize) -> f64 {
    let d = dim as f64;
    2.0 * PI.powf(d / 2.0) / statrs::function::gamma::gamma(d / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let gl = GaussLegendre::new(6);
        // degree 11 is integrated exactly by a 6-point rule.
        let v = gl.integrate(-1.0, 2.0, |x| x.powi(11) - 3.0 * x.powi(4));
        let exact = (2f64.powi(12) - 1.0) / 12.0 - 3.0 * (32.0 + 1.0) / 5.0;
        assert!((v - exact).abs() < 1e-10 * exact.abs());
        let w: f64 = gl.weights.iter().sum();
        assert!((w - 2.0).abs() < 1e-14);
    }

    #[test]
    fn radial_rule_handles_power_singularity() {
        let rule = RadialRule::new(8, 1);
        // int_{1e-6}^{1} r^{-0.5} dr = 2 (1 - 1e-3)
        let incs = inward_shells(&rule, 1.0, 20, |r| r.powf(-0.5));
        let s = sum_series(&incs, 1e-9, 1e-300);
        assert!(s.converged);
        assert!((s.value - 2.0).abs() < 1e-9, "{s:?}");
    }

    #[test]
    fn log_divergence_is_flagged() {
        let rule = RadialRule::new(8, 1);
        let incs = inward_shells(&rule, 1.0, 30, |r| 1.0 / r);
        assert!(!sum_series(&incs, 1e-3, 1e-300).converged);
        let incs = inward_shells(&rule, 1.0, 30, |r| r.powf(-1.2));
        assert!(!sum_series(&incs, 1e-3, 1e-300).converged);
    }

    #[test]
    fn outward_tail_extrapolates() {
        let rule = RadialRule::new(8, 1);
        // int_1^inf r^{-1.7} dr = 1/0.7
        let incs = outward_shells(&rule, 1.0, 30, |r| r.powf(-1.7));
        let s = sum_series(&incs, 1e-9, 1e-300);
        assert!(s.converged);
        assert!((s.value - 1.0 / 0.7).abs() < 1e-9, "{s:?}");
    }

    #[test]
    fn log_weighted_and_mixed_tails_extrapolate() {
        let q: f64 = 2f64.powf(-0.2);
        let inc: Vec<f64> = (1..=40).map(|j| j as f64 * q.powi(j)).collect();
        let s = sum_series(&inc, 1e-6, 1e-300);
        let exact = q / (1.0 - q).powi(2);
        assert!(
            s.converged && (s.value - exact).abs() < 1e-8 * exact,
            "{s:?}"
        );
        let (q1, q2): (f64, f64) = (2f64.powf(-0.7), 2f64.powf(-0.8));
        let inc: Vec<f64> = (1..=30).map(|j| q1.powi(j) - 2.0 * q2.powi(j)).collect();
        let exact = q1 / (1.0 - q1) - 2.0 * q2 / (1.0 - q2);
        let s = sum_series(&inc, 1e-6, 1e-300);
        assert!(
            s.converged && (s.value - exact).abs() < 1e-8 * exact.abs(),
            "{s:?}"
        );
    }

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(1) - 2.0).abs() < 1e-14);
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-13);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn directions_are_antipodal() {
        let d = Directions::new(2, 16).unwrap();
        for i in 0..d.len() {
            let j = d.antipode(i);
            assert!((d.vectors[i][0] + d.vectors[j][0]).abs() < 1e-14);
            assert!((d.vectors[i][1] + d.vectors[j][1]).abs() < 1e-14);
        }
        assert!(Directions::new(3, 8).is_err());
    }
}
