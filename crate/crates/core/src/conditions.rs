//! Numerical verification of the integrability conditions on a jump kernel
//! and computation of the derived constants `beta0`, `C4`, `beta1`, `K(x)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::exponent::ExponentField;
use crate::kernel::{decompose, KernelDecomposition, Lattice, SharedKernel};
use crate::quadrature::{
    inward_shells, outward_shells, sum_series, Directions, RadialRule, SeriesEstimate,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureConfig {
    /// Number of dyadic inner cutoff levels; the finest cutoff is `2^-levels`.
    pub cutoff_levels: u32,
    /// Outer truncation radius; rounded up to a power of two.
    pub r_max: f64,
    /// Gauss-Legendre order per dyadic shell (in `ln r`).
    pub radial_points: usize,
    /// Number of directions in `d = 2` (ignored in `d = 1`).
    pub angular_points: usize,
    /// Relative stability tolerance across the two finest levels.
    pub tolerance: f64,
    /// Number of log-spaced separations used for the pointwise ratio bound.
    pub ratio_separations: usize,
    /// Recompute sups on the doubled sample set and report the change.
    pub refine_samples: bool,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            cutoff_levels: 40,
            r_max: 2f64.powi(30),
            radial_points: 8,
            angular_points: 32,
            tolerance: 1e-3,
            ratio_separations: 240,
            refine_samples: true,
        }
    }
}

impl QuadratureConfig {
    pub fn outer_levels(&self) -> u32 {
        self.r_max.max(2.0).log2().ceil() as u32
    }

    pub fn validate(&self) -> Result<()> {
        if self.cutoff_levels < 4 {
            return Err(Error::param("cutoff_levels", "need at least 4 levels"));
        }
        if !(self.r_max > 1.0) {
            return Err(Error::param("r_max", "must exceed 1"));
        }
        if self.radial_points == 0 {
            return Err(Error::param("radial_points", "must be positive"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::param("tolerance", "must be positive"));
        }
        Ok(())
    }
}

/// A value computed at one sample point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointValue {
    pub point: Vec<f64>,
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureMeta {
    pub cutoff_levels: u32,
    pub inner_radius: f64,
    pub r_max: f64,
    pub radial_points: usize,
    pub angular_points: usize,
    pub tolerance: f64,
    /// Largest relative stability error over every reported integral.
    pub max_rel_error: f64,
    /// Relative change of the sups when the sample set is doubled.
    pub sup_refinement_change: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub kernel: String,
    pub dim: usize,
    pub gamma: f64,
    pub m_s_samples: Vec<PointValue>,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub beta0: f64,
    pub c4: f64,
    pub beta1: Option<f64>,
    pub k_samples: Option<Vec<PointValue>>,
    pub m_s_first_order: Option<Vec<PointValue>>,
    pub pass_m_s: bool,
    pub pass_c1: bool,
    pub pass_c2: bool,
    pub pass_c3: bool,
    pub pass_lower_order: Option<bool>,
    pub diagnostics: Vec<String>,
    pub quadrature: QuadratureMeta,
}

impl ConditionReport {
    pub fn passes_all(&self) -> bool {
        self.pass_m_s
            && self.pass_c1
            && self.pass_c2
            && self.pass_c3
            && self.pass_lower_order.unwrap_or(true)
    }
}

/// `beta0 = 8 (C1 v C2 C3)` and `C4 = sqrt(2) sqrt(C1 v C2 C3)`.
pub fn derived_constants(c1: f64, c2: f64, c3: f64) -> (f64, f64) {
    let m = c1.max(c2 * c3);
    (8.0 * m, 2f64.sqrt() * m.sqrt())
}

/// Open interval of exponents `gamma` for which the ratio condition can be
/// certified for stable-like kernels, intersected with `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaInterval {
    pub lower: f64,
    pub upper: f64,
    /// Whether `upper` itself belongs to the interval (only when clipped at 1).
    pub upper_closed: bool,
}

impl GammaInterval {
    pub fn is_empty(&self) -> bool {
        // (a, b] and (a, b) are both empty iff a >= b
        self.lower >= self.upper
    }

    pub fn contains(&self, g: f64) -> bool {
        g > self.lower && (g < self.upper || (self.upper_closed && g == self.upper))
    }

    pub fn midpoint(&self) -> Option<f64> {
        (!self.is_empty()).then_some(0.5 * (self.lower + self.upper))
    }
}

pub fn admissible_gamma(ef: &ExponentField) -> GammaInterval {
    let d = ef.dim as f64;
    let (lo, hi, delta) = (ef.lower, ef.upper, ef.hoelder_exp);
    let denom = d + hi - delta;
    let a = (d + 2.0 * hi - 2.0 * delta - lo) / denom;
    let b = d / denom;
    let (upper, upper_closed) = if b > 1.0 { (1.0, true) } else { (b, false) };
    GammaInterval {
        lower: a.max(0.0),
        upper,
        upper_closed,
    }
}

/// Target point `y = x + h` of an integrand, with `r = |h|` exact.
pub struct Offset<'a> {
    pub y: &'a [f64],
    pub h: &'a [f64],
    pub r: f64,
}

/// Integrals `int f(y) dy` over `{r < 1}` and `{r >= 1}` around a point `x`.
pub struct PointQuadrature<'a> {
    pub quad: &'a QuadratureConfig,
    pub dim: usize,
    rule: RadialRule,
    dirs: Directions,
}

impl<'a> PointQuadrature<'a> {
    pub fn new(quad: &'a QuadratureConfig, dim: usize) -> Result<Self> {
        quad.validate()?;
        Ok(Self {
            quad,
            dim,
            rule: RadialRule::new(quad.radial_points, 1),
            dirs: Directions::new(dim, quad.angular_points)?,
        })
    }

    pub fn directions(&self) -> &Directions {
        &self.dirs
    }

    fn angular(&self, x: &[f64], r: f64, f: &impl Fn(&Offset) -> f64) -> f64 {
        let mut y = vec![0.0; self.dim];
        let mut h = vec![0.0; self.dim];
        let mut acc = 0.0;
        for (v, w) in self.dirs.vectors.iter().zip(&self.dirs.weights) {
            for k in 0..self.dim {
                h[k] = r * v[k];
                y[k] = x[k] + h[k];
            }
            acc += w * f(&Offset { y: &y, h: &h, r });
        }
        acc * r.powi(self.dim as i32 - 1)
    }

    /// `int_{0 < |y - x| < 1} f(y) dy`
    pub fn inner(&self, x: &[f64], f: impl Fn(&Offset) -> f64) -> SeriesEstimate {
        let inc = inward_shells(&self.rule, 1.0, self.quad.cutoff_levels, |r| {
            self.angular(x, r, &f)
        });
        sum_series(&inc, self.quad.tolerance, 1e-300)
    }

    /// `int_{|y - x| >= 1} f(y) dy`
    pub fn outer(&self, x: &[f64], f: impl Fn(&Offset) -> f64) -> SeriesEstimate {
        let inc = outward_shells(&self.rule, 1.0, self.quad.outer_levels(), |r| {
            self.angular(x, r, &f)
        });
        sum_series(&inc, self.quad.tolerance, 1e-300)
    }

    /// `int_{a < |y - x| < b} f(y) dy` with a fixed number of shells.
    pub fn annulus(&self, x: &[f64], a: f64, b: f64, f: impl Fn(&Offset) -> f64) -> f64 {
        let rule = RadialRule::new(
            self.quad.radial_points,
            ((b / a).log2().ceil() as usize).max(1),
        );
        rule.integrate(a, b, |r| self.angular(x, r, &f))
    }
}

fn combine(a: SeriesEstimate, b: SeriesEstimate) -> SeriesEstimate {
    SeriesEstimate {
        value: a.value + b.value,
        partial: a.partial + b.partial,
        error: a.error + b.error,
        converged: a.converged && b.converged,
    }
}

/// Node-sum integration against a tabulated kernel.
struct LatticeSums<'a> {
    lattice: &'a Lattice,
}

impl LatticeSums<'_> {
    fn index(&self, x: &[f64]) -> Result<usize> {
        self.lattice.index_of(x[0]).ok_or_else(|| {
            Error::param(
                "sample_points",
                format!("{} is not a node of the kernel lattice", x[0]),
            )
        })
    }

    fn sum(
        &self,
        i: usize,
        region: impl Fn(f64) -> bool,
        f: impl Fn(&Offset) -> f64,
    ) -> SeriesEstimate {
        let xi = self.lattice.node(i);
        let h = self.lattice.spacing;
        let value = (0..self.lattice.len)
            .filter(|&j| j != i)
            .map(|j| {
                let y = self.lattice.node(j);
                let r = (y - xi).abs();
                if region(r) {
                    h * f(&Offset {
                        y: &[y],
                        h: &[y - xi],
                        r,
                    })
                } else {
                    0.0
                }
            })
            .sum();
        SeriesEstimate {
            value,
            partial: value,
            error: 0.0,
            converged: true,
        }
    }
}

enum Integrator<'a> {
    Radial(PointQuadrature<'a>),
    Lattice(LatticeSums<'a>),
}

impl Integrator<'_> {
    fn inner(&self, x: &[f64], f: impl Fn(&Offset) -> f64) -> Result<SeriesEstimate> {
        match self {
            Self::Radial(q) => Ok(q.inner(x, f)),
            Self::Lattice(l) => Ok(l.sum(l.index(x)?, |r| r < 1.0, f)),
        }
    }

    fn outer(&self, x: &[f64], f: impl Fn(&Offset) -> f64) -> Result<SeriesEstimate> {
        match self {
            Self::Radial(q) => Ok(q.outer(x, f)),
            Self::Lattice(l) => Ok(l.sum(l.index(x)?, |r| r >= 1.0, f)),
        }
    }

    fn whole(&self, x: &[f64], f: impl Fn(&Offset) -> f64 + Copy) -> Result<SeriesEstimate> {
        Ok(combine(self.inner(x, f)?, self.outer(x, f)?))
    }
}

struct PointIntegrals {
    m_s: SeriesEstimate,
    c1: SeriesEstimate,
    c2: SeriesEstimate,
    c3: RatioEstimate,
    lower: Option<LowerIntegrals>,
}

struct LowerIntegrals {
    m_s1: SeriesEstimate,
    abs_anti: SeriesEstimate,
    k_fn: SeriesEstimate,
}

#[derive(Debug, Clone, Copy)]
struct RatioEstimate {
    max: f64,
    blow_up: bool,
}

struct Checker<'a> {
    kd: KernelDecomposition,
    integ: Integrator<'a>,
    gamma: f64,
    lower_order: bool,
    quad: &'a QuadratureConfig,
}

impl Checker<'_> {
    fn point(&self, x: &[f64]) -> Result<PointIntegrals> {
        let kd = &self.kd;
        let vanish = kd.antisymmetric_vanishes;
        let sym = |o: &Offset| kd.parts_offset(x, o.y, o.h, o.r).0;
        let anti = |o: &Offset| kd.kernel.pair_anti(x, o.y, o.h, o.r);
        let m_s = combine(
            self.integ.inner(x, |o| o.r * o.r * sym(o))?,
            self.integ.outer(x, sym)?,
        );
        let zero = SeriesEstimate::ZERO;
        let (c1, c2) = if vanish {
            (zero, zero)
        } else {
            let g = self.gamma;
            (
                self.integ.outer(x, |o| anti(o).abs())?,
                self.integ.inner(x, |o| anti(o).abs().powf(g))?,
            )
        };
        let c3 = if self.lower_order {
            RatioEstimate {
                max: 1.0,
                blow_up: false,
            }
        } else if vanish {
            RatioEstimate {
                max: 0.0,
                blow_up: false,
            }
        } else {
            self.ratio(x)
        };
        let lower = if self.lower_order {
            let (abs_anti, k_fn) = if vanish {
                (zero, zero)
            } else {
                (
                    self.integ.whole(x, |o| anti(o).abs())?,
                    self.integ.whole(x, |o| 2.0 * anti(o))?,
                )
            };
            Some(LowerIntegrals {
                m_s1: combine(
                    self.integ.inner(x, |o| o.r * sym(o))?,
                    self.integ.outer(x, sym)?,
                ),
                abs_anti,
                k_fn,
            })
        } else {
            None
        };
        Ok(PointIntegrals {
            m_s,
            c1,
            c2,
            c3,
            lower,
        })
    }

    /// Max of `|k_a|^{2-gamma} / k_s` over separations in `(cutoff, 1]`, with a
    /// decade-trend test for growth toward the diagonal.
    fn ratio(&self, x: &[f64]) -> RatioEstimate {
        let kd = &self.kd;
        let e = 2.0 - self.gamma;
        let ratio = |y: &[f64], h: &[f64], r: f64| {
            let (s, a) = kd.parts_offset(x, y, h, r);
            if s > 0.0 {
                a.abs().powf(e) / s
            } else {
                0.0
            }
        };
        let mut pairs: Vec<(f64, f64)> = Vec::new();
        match &self.integ {
            Integrator::Lattice(l) => {
                let Ok(i) = l.index(x) else {
                    return RatioEstimate {
                        max: f64::INFINITY,
                        blow_up: true,
                    };
                };
                let xi = l.lattice.node(i);
                for j in 0..l.lattice.len {
                    let y = l.lattice.node(j);
                    let r = (y - xi).abs();
                    if j != i && r <= 1.0 {
                        pairs.push((r, ratio(&[y], &[y - xi], r)));
                    }
                }
            }
            Integrator::Radial(q) => {
                let n = self.quad.ratio_separations.max(20);
                let lmin = -(self.quad.cutoff_levels as f64) * std::f64::consts::LN_2;
                let mut y = vec![0.0; q.dim];
                let mut h = vec![0.0; q.dim];
                for s in 0..n {
                    let r = (lmin * (1.0 - s as f64 / (n - 1) as f64)).exp();
                    for v in &q.directions().vectors {
                        for k in 0..q.dim {
                            h[k] = r * v[k];
                            y[k] = x[k] + h[k];
                        }
                        pairs.push((r, ratio(&y, &h, r)));
                    }
                }
            }
        }
        let max = pairs.iter().map(|p| p.1).fold(0.0, f64::max);
        let blow_up = match &self.integ {
            Integrator::Lattice(_) => !max.is_finite(),
            Integrator::Radial(_) => {
                let rmin = pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
                let finest = pairs
                    .iter()
                    .filter(|p| p.0 < 10.0 * rmin)
                    .map(|p| p.1)
                    .fold(0.0, f64::max);
                let rest = pairs
                    .iter()
                    .filter(|p| p.0 >= 10.0 * rmin)
                    .map(|p| p.1)
                    .fold(0.0, f64::max);
                !max.is_finite() || finest > rest * (1.0 + self.quad.tolerance)
            }
        };
        RatioEstimate { max, blow_up }
    }
}

fn rel_err(s: &SeriesEstimate) -> f64 {
    if s.value == 0.0 {
        if s.error == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        s.error / s.value.abs()
    }
}

fn pv(x: &[f64], s: &SeriesEstimate) -> PointValue {
    PointValue {
        point: x.to_vec(),
        value: s.value,
        error: s.error,
        converged: s.converged && s.value.is_finite(),
    }
}

struct Sups {
    c1: f64,
    c2: f64,
    c3: f64,
    beta1: Option<f64>,
}

fn sups(results: &[PointIntegrals]) -> Sups {
    let max = |f: &dyn Fn(&PointIntegrals) -> f64| results.iter().map(f).fold(0.0, f64::max);
    Sups {
        c1: max(&|p| p.c1.value),
        c2: max(&|p| p.c2.value),
        c3: max(&|p| p.c3.max),
        beta1: results
            .first()
            .and_then(|p| p.lower.as_ref())
            .map(|_| 2.0 * max(&|p| p.lower.as_ref().map_or(0.0, |l| l.abs_anti.value))),
    }
}

fn midpoints(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    points
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| 0.5 * (a + b)).collect())
        .collect()
}

fn run(
    k: &SharedKernel,
    quad: &QuadratureConfig,
    sample_points: &[Vec<f64>],
    gamma: Option<f64>,
    lower_order: bool,
) -> Result<ConditionReport> {
    if sample_points.is_empty() {
        return Err(Error::param("sample_points", "need at least one point"));
    }
    let dim = k.dim();
    if let Some(p) = sample_points.iter().find(|p| p.len() != dim) {
        return Err(Error::Dimension {
            expected: dim,
            got: p.len(),
        });
    }
    let mut diagnostics = Vec::new();
    let gamma = if lower_order {
        1.0
    } else {
        match gamma {
            Some(g) => {
                if !(g > 0.0 && g <= 1.0) {
                    return Err(Error::param("gamma", format!("{g} is not in (0, 1]")));
                }
                g
            }
            None => match k.as_stable_like() {
                Some(s) => admissible_gamma(&s.field).midpoint().ok_or_else(|| {
                    Error::param("gamma", "admissible interval is empty; supply gamma")
                })?,
                None => 1.0,
            },
        }
    };
    let integ = match k.lattice() {
        Some(l) => Integrator::Lattice(LatticeSums { lattice: l }),
        None => Integrator::Radial(PointQuadrature::new(quad, dim)?),
    };
    let checker = Checker {
        kd: decompose(k),
        integ,
        gamma,
        lower_order,
        quad,
    };
    let eval = |pts: &[Vec<f64>]| -> Result<Vec<PointIntegrals>> {
        pts.par_iter().map(|x| checker.point(x)).collect()
    };
    let results = eval(sample_points)?;

    let s = sups(&results);
    let sup_refinement_change =
        if quad.refine_samples && sample_points.len() > 1 && k.lattice().is_none() {
            let extra = eval(&midpoints(sample_points))?;
            let all: Vec<PointIntegrals> = results.iter().map(copy_pi).chain(extra).collect();
            let r = sups(&all);
            let change = |a: f64, b: f64| if b == 0.0 { 0.0 } else { (b - a).abs() / b };
            let mut c = change(s.c1, r.c1)
                .max(change(s.c2, r.c2))
                .max(change(s.c3, r.c3));
            if let (Some(a), Some(b)) = (s.beta1, r.beta1) {
                c = c.max(change(a, b));
            }
            if c > quad.tolerance {
                diagnostics.push(format!(
                    "doubling the sample set changes a sup by {c:.3e} (> tolerance {:.1e})",
                    quad.tolerance
                ));
            }
            Some(c)
        } else {
            None
        };

    let mut max_rel_error: f64 = 0.0;
    let mut track = |s: &SeriesEstimate| {
        if s.converged {
            max_rel_error = max_rel_error.max(rel_err(s));
        }
    };
    for r in &results {
        track(&r.m_s);
        track(&r.c1);
        track(&r.c2);
        if let Some(l) = &r.lower {
            track(&l.m_s1);
            track(&l.abs_anti);
            track(&l.k_fn);
        }
    }

    let flag =
        |name: &str, ok: bool, diags: &mut Vec<String>, which: &dyn Fn(&PointIntegrals) -> bool| {
            if !ok {
                let bad: Vec<String> = sample_points
                    .iter()
                    .zip(&results)
                    .filter(|(_, r)| !which(r))
                    .take(3)
                    .map(|(p, _)| format!("{p:?}"))
                    .collect();
                diags.push(format!(
                    "{name}: integral unstable under cutoff refinement at {}",
                    bad.join(", ")
                ));
            }
            ok
        };
    let ok_ms = |r: &PointIntegrals| r.m_s.converged && r.m_s.value.is_finite();
    let ok_c1 = |r: &PointIntegrals| r.c1.converged && r.c1.value.is_finite();
    let ok_c2 = |r: &PointIntegrals| r.c2.converged && r.c2.value.is_finite();
    let ok_c3 = |r: &PointIntegrals| !r.c3.blow_up && r.c3.max.is_finite();
    let pass_m_s = flag("M_s", results.iter().all(ok_ms), &mut diagnostics, &ok_ms);
    let pass_c1 = flag("C1", results.iter().all(ok_c1), &mut diagnostics, &ok_c1);
    let pass_c2 = flag("C2", results.iter().all(ok_c2), &mut diagnostics, &ok_c2);
    let pass_c3 = results.iter().all(ok_c3);
    if !pass_c3 {
        diagnostics.push("C3: ratio grows toward the diagonal".into());
    }

    let (beta0, c4) = derived_constants(s.c1, s.c2, s.c3);
    let (m_s_first_order, k_samples, pass_lower_order) = if lower_order {
        let m1: Vec<PointValue> = sample_points
            .iter()
            .zip(&results)
            .map(|(x, r)| pv(x, &r.lower.as_ref().unwrap().m_s1))
            .collect();
        let ks: Vec<PointValue> = sample_points
            .iter()
            .zip(&results)
            .map(|(x, r)| pv(x, &r.lower.as_ref().unwrap().k_fn))
            .collect();
        let ok_m1 = m1.iter().all(|p| p.converged);
        let ok_b1 = results
            .iter()
            .all(|r| r.lower.as_ref().is_some_and(|l| l.abs_anti.converged));
        let ok_k = ks.iter().all(|p| p.converged);
        if !ok_m1 {
            diagnostics.push("first-order M_s diverges under cutoff refinement".into());
        }
        if !ok_b1 {
            diagnostics.push("beta1 integral diverges under cutoff refinement".into());
        }
        if !ok_k {
            diagnostics.push("K(x) integral diverges under cutoff refinement".into());
        }
        (Some(m1), Some(ks), Some(ok_m1 && ok_b1 && ok_k))
    } else {
        (None, None, None)
    };

    let quadrature = match k.lattice() {
        Some(l) => QuadratureMeta {
            cutoff_levels: 0,
            inner_radius: l.spacing,
            r_max: l.spacing * (l.len - 1) as f64,
            radial_points: 0,
            angular_points: 0,
            tolerance: quad.tolerance,
            max_rel_error,
            sup_refinement_change,
        },
        None => QuadratureMeta {
            cutoff_levels: quad.cutoff_levels,
            inner_radius: 2f64.powi(-(quad.cutoff_levels as i32)),
            r_max: 2f64.powi(quad.outer_levels() as i32),
            radial_points: quad.radial_points,
            angular_points: if dim == 1 { 2 } else { quad.angular_points },
            tolerance: quad.tolerance,
            max_rel_error,
            sup_refinement_change,
        },
    };

    Ok(ConditionReport {
        kernel: k.label(),
        dim,
        gamma,
        m_s_samples: sample_points
            .iter()
            .zip(&results)
            .map(|(x, r)| pv(x, &r.m_s))
            .collect(),
        c1: s.c1,
        c2: s.c2,
        c3: s.c3,
        beta0,
        c4,
        beta1: s.beta1,
        k_samples,
        m_s_first_order,
        pass_m_s,
        pass_c1,
        pass_c2,
        pass_c3,
        pass_lower_order,
        diagnostics,
        quadrature,
    })
}

fn copy_pi(p: &PointIntegrals) -> PointIntegrals {
    PointIntegrals {
        m_s: p.m_s,
        c1: p.c1,
        c2: p.c2,
        c3: p.c3,
        lower: p.lower.as_ref().map(|l| LowerIntegrals {
            m_s1: l.m_s1,
            abs_anti: l.abs_anti,
            k_fn: l.k_fn,
        }),
    }
}

/// Computes `M_s`, `C1`, `C2`, `C3` at the sample points and the derived
/// constants. `gamma = None` picks the midpoint of [`admissible_gamma`] for
/// stable-like kernels and `1` otherwise.
pub fn check_conditions(
    k: &SharedKernel,
    quad: &QuadratureConfig,
    sample_points: &[Vec<f64>],
    gamma: Option<f64>,
) -> Result<ConditionReport> {
    run(k, quad, sample_points, gamma, false)
}

/// Lower-order variant: first-order `M_s`, `beta1 = 2 sup int |k_a|`, and
/// `K(x) = int (k(x,y) - k(y,x)) dy`, with `gamma = 1` and `C3 = 1`.
pub fn check_lower_order(
    k: &SharedKernel,
    quad: &QuadratureConfig,
    sample_points: &[Vec<f64>],
) -> Result<ConditionReport> {
    run(k, quad, sample_points, None, true)
}

/// Evenly spaced sample points on `[a, b]^d` (`per_axis` per coordinate).
pub fn sample_box(dim: usize, a: f64, b: f64, per_axis: usize) -> Vec<Vec<f64>> {
    let line: Vec<f64> = (0..per_axis)
        .map(|i| {
            if per_axis == 1 {
                0.5 * (a + b)
            } else {
                a + (b - a) * i as f64 / (per_axis - 1) as f64
            }
        })
        .collect();
    let mut pts: Vec<Vec<f64>> = vec![vec![]];
    for _ in 0..dim {
        pts = pts
            .into_iter()
            .flat_map(|p| {
                line.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponent::ExponentProfile;
    use crate::kernel::{stable_like_kernel, stable_weight, Normalization, SymmetricPower};
    use std::sync::Arc;

    fn quick() -> QuadratureConfig {
        QuadratureConfig {
            refine_samples: false,
            ..QuadratureConfig::default()
        }
    }

    #[test]
    fn gamma_interval_examples() {
        let p = ExponentProfile::Tanh {
            base: 0.6,
            amplitude: 0.2,
            center: 0.0,
            width: 1.0,
        };
        let ef = ExponentField::new(p, 1).unwrap();
        let g = admissible_gamma(&ef);
        assert!(g.lower.abs() < 1e-15);
        assert_eq!((g.upper, g.upper_closed), (1.0, true));
        assert!(g.contains(1.0) && !g.contains(0.0));
        for &a in &[0.5, 1.0, 1.3] {
            let ef = ExponentField::constant(a, 1).unwrap();
            let g = admissible_gamma(&ef);
            let lower = ((a - 1.0) / a).max(0.0);
            assert!((g.lower - lower).abs() < 1e-14);
            assert!((g.upper - (1.0 / a).min(1.0)).abs() < 1e-14);
            assert!(!g.is_empty());
        }
    }

    #[test]
    fn derived_constants_arithmetic() {
        let (b, c) = derived_constants(0.3, 0.2, 2.0);
        assert_eq!(b, 8.0 * 0.4);
        assert_eq!(c, 2f64.sqrt() * 0.4f64.sqrt());
    }

    #[test]
    fn constant_alpha_closed_form() {
        for &a in &[0.6, 1.0, 1.5] {
            let k: SharedKernel = Arc::new(
                stable_like_kernel(
                    ExponentField::constant(a, 1).unwrap(),
                    Normalization::LevyConstant,
                )
                .unwrap(),
            );
            let pts = vec![vec![0.0], vec![1.7]];
            let rep = check_conditions(&k, &quick(), &pts, None).unwrap();
            let w = stable_weight(a, 1, Normalization::LevyConstant);
            let exact = 2.0 * w * (1.0 / (2.0 - a) + 1.0 / a);
            for p in &rep.m_s_samples {
                assert!(p.converged);
                assert!(
                    (p.value - exact).abs() < 1e-3 * exact,
                    "{a}: {} vs {exact}",
                    p.value
                );
            }
            assert_eq!(
                (rep.c1, rep.c2, rep.c3, rep.beta0, rep.c4),
                (0.0, 0.0, 0.0, 0.0, 0.0)
            );
            assert!(rep.passes_all());
        }
    }

    #[test]
    fn alpha_one_gives_four_over_pi() {
        let k: SharedKernel = Arc::new(
            stable_like_kernel(
                ExponentField::constant(1.0, 1).unwrap(),
                Normalization::LevyConstant,
            )
            .unwrap(),
        );
        let rep = check_conditions(&k, &quick(), &[vec![0.3]], None).unwrap();
        let v = rep.m_s_samples[0].value;
        assert!((v - 4.0 / std::f64::consts::PI).abs() < 1e-3 * v);
    }

    #[test]
    fn two_dimensional_closed_form() {
        let a = 1.2;
        let k: SharedKernel = Arc::new(
            stable_like_kernel(
                ExponentField::constant(a, 2).unwrap(),
                Normalization::LevyConstant,
            )
            .unwrap(),
        );
        let rep = check_conditions(&k, &quick(), &[vec![0.0, 0.0]], None).unwrap();
        let w = stable_weight(a, 2, Normalization::LevyConstant);
        let exact = 2.0 * std::f64::consts::PI * w * (1.0 / (2.0 - a) + 1.0 / a);
        let v = rep.m_s_samples[0].value;
        assert!((v - exact).abs() < 1e-3 * exact);
    }

    #[test]
    fn tanh_kernel_passes_all_conditions() {
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
        let k: SharedKernel =
            Arc::new(stable_like_kernel(ef, Normalization::LevyConstant).unwrap());
        let pts = sample_box(1, -3.0, 3.0, 13);
        let rep = check_conditions(&k, &QuadratureConfig::default(), &pts, None).unwrap();
        assert!(rep.passes_all(), "{:?}", rep.diagnostics);
        assert!(rep.c1 > 0.0 && rep.c2 > 0.0 && rep.c3 > 0.0);
        assert_eq!(rep.gamma, 0.5);
        let lo = check_lower_order(&k, &quick(), &pts).unwrap();
        assert_eq!(lo.pass_lower_order, Some(true), "{:?}", lo.diagnostics);
        assert!(lo.beta1.unwrap() > 0.0);
    }

    #[test]
    fn first_order_mass_diverges_for_alpha_above_one() {
        let ef = ExponentField::new(
            ExponentProfile::Tanh {
                base: 0.9,
                amplitude: 0.3,
                center: 0.0,
                width: 1.0,
            },
            1,
        )
        .unwrap();
        let k: SharedKernel =
            Arc::new(stable_like_kernel(ef, Normalization::LevyConstant).unwrap());
        let rep = check_lower_order(&k, &quick(), &[vec![-3.0], vec![3.0]]).unwrap();
        assert_eq!(rep.pass_lower_order, Some(false));
        let m1 = rep.m_s_first_order.unwrap();
        assert!(m1[0].converged && !m1[1].converged);
    }

    #[test]
    fn symmetric_power_short_circuits() {
        let k: SharedKernel = Arc::new(SymmetricPower {
            dim: 1,
            scale: 1.0,
            power: 2.0,
            cutoff: None,
        });
        let rep = check_lower_order(&k, &quick(), &[vec![0.0]]).unwrap();
        assert_eq!(rep.beta1, Some(0.0));
        assert_eq!(rep.k_samples.unwrap()[0].value, 0.0);
        assert_eq!(rep.beta0, 0.0);
    }
}
