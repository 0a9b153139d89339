//! Pointwise evaluation of the integro-differential generator of a
//! stable-like kernel, of its dual, and of the lower-order forms, together
//! with an independent evaluation of `eta(u, v)` through `k_s` and `k_a`.

use serde::{Deserialize, Serialize};

use crate::conditions::{Offset, PointQuadrature, QuadratureConfig};
use crate::forms::{exterior_rates, SmoothBump, TestFunction};
use crate::kernel::{decompose, dual_kernel, SharedKernel, StableLike};
use crate::quadrature::{GaussLegendre, SeriesEstimate};
use crate::{Error, Result};

/// Below this jump size the compensated increment is replaced by its
/// second-order Taylor term.
const TAYLOR_RADIUS: f64 = 1e-4;

pub trait SmoothFunction: TestFunction {
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    /// Row-major `d x d`.
    fn hessian(&self, x: &[f64]) -> Vec<f64>;
}

impl SmoothFunction for SmoothBump {
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        SmoothBump::gradient(self, x)
    }

    fn hessian(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        let r2 = self.radius * self.radius;
        let dx: Vec<f64> = x.iter().zip(&self.center).map(|(a, c)| a - c).collect();
        let s2 = dx.iter().map(|v| v * v).sum::<f64>() / r2;
        let mut hess = vec![0.0; d * d];
        if s2 >= 1.0 {
            return hess;
        }
        let t = 1.0 - s2;
        for i in 0..d {
            for j in 0..d {
                let mut v = 24.0 * self.height * t * dx[i] * dx[j] / (r2 * r2);
                if i == j {
                    v -= 6.0 * self.height * t * t / r2;
                }
                hess[i * d + j] = v;
            }
        }
        hess
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorValue {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

impl OperatorValue {
    fn sum(parts: &[SeriesEstimate]) -> Self {
        Self {
            value: parts.iter().map(|p| p.value).sum(),
            error: parts.iter().map(|p| p.error.abs()).sum(),
            converged: parts.iter().all(|p| p.converged),
        }
    }
}

fn check_point(k_dim: usize, x: &[f64]) -> Result<()> {
    if x.len() != k_dim {
        return Err(Error::Dimension {
            expected: k_dim,
            got: x.len(),
        });
    }
    Ok(())
}

/// `u(x + h) - u(x) - grad u(x) . h`
fn compensated(u: &dyn SmoothFunction, x: &[f64], grad: &[f64], hess: &[f64], o: &Offset) -> f64 {
    let d = x.len();
    if o.r < TAYLOR_RADIUS {
        let mut q = 0.0;
        for i in 0..d {
            for j in 0..d {
                q += o.h[i] * hess[i * d + j] * o.h[j];
            }
        }
        0.5 * q
    } else {
        u.value(o.y) - u.value(x) - grad.iter().zip(o.h).map(|(g, h)| g * h).sum::<f64>()
    }
}

/// `L u(x) = int (u(x+h) - u(x) - grad u(x) . h 1_{|h|<1}) k(x, x+h) dh
///          + 1/2 int_{|h|<1} grad u(x) . h (k(x, x+h) - k(x, x-h)) dh`.
///
/// For the source-anchored kernel the second integral vanishes and this is
/// the generator; for the target-anchored kernel it is the dual generator.
pub fn generator_apply(
    k: &StableLike,
    u: &dyn SmoothFunction,
    x: &[f64],
    quad: &QuadratureConfig,
) -> Result<OperatorValue> {
    let d = k.field.dim;
    check_point(d, x)?;
    let pq = PointQuadrature::new(quad, d)?;
    let ux = u.value(x);
    let grad = u.gradient(x);
    let hess = u.hessian(x);
    let rate = |o: &Offset| {
        if k.anchored_at_target {
            k.frozen(o.y, o.r)
        } else {
            k.frozen(x, o.r)
        }
    };
    let inner = pq.inner(x, |o| compensated(u, x, &grad, &hess, o) * rate(o));
    let outer = pq.outer(x, |o| (u.value(o.y) - ux) * rate(o));
    let correction = if k.anchored_at_target && !k.field.is_constant() {
        pq.inner(x, |o| {
            let lin: f64 = grad.iter().zip(o.h).map(|(g, h)| g * h).sum();
            let back: Vec<f64> = x.iter().zip(o.h).map(|(a, h)| a - h).collect();
            let gap: Vec<f64> = o.h.iter().map(|h| 2.0 * h).collect();
            0.5 * lin * k.frozen_difference(&back, &gap, o.r)
        })
    } else {
        SeriesEstimate::ZERO
    };
    Ok(OperatorValue::sum(&[inner, outer, correction]))
}

/// Generator of the dual kernel `k*(x, y) = k(y, x)`.
pub fn dual_generator_apply(
    k: &StableLike,
    u: &dyn SmoothFunction,
    x: &[f64],
    quad: &QuadratureConfig,
) -> Result<OperatorValue> {
    let mut dual = k.clone();
    dual.anchored_at_target = !k.anchored_at_target;
    generator_apply(&dual, u, x, quad)
}

/// `int (u(y) - u(x)) k(x, y) dy` without compensation; finite for
/// Lipschitz `u` when the lower-order conditions hold.
pub fn lower_order_apply(
    k: &SharedKernel,
    u: &dyn TestFunction,
    x: &[f64],
    quad: &QuadratureConfig,
) -> Result<OperatorValue> {
    check_point(k.dim(), x)?;
    let pq = PointQuadrature::new(quad, k.dim())?;
    let ux = u.value(x);
    let f = |o: &Offset| (u.value(o.y) - ux) * k.pair_rates(x, o.y, o.h, o.r).0;
    Ok(OperatorValue::sum(&[pq.inner(x, f), pq.outer(x, f)]))
}

/// `K(x) = int (k(x, y) - k(y, x)) dy`.
pub fn k_function(k: &SharedKernel, x: &[f64], quad: &QuadratureConfig) -> Result<OperatorValue> {
    check_point(k.dim(), x)?;
    let pq = PointQuadrature::new(quad, k.dim())?;
    let f = |o: &Offset| 2.0 * k.pair_anti(x, o.y, o.h, o.r);
    Ok(OperatorValue::sum(&[pq.inner(x, f), pq.outer(x, f)]))
}

fn tensor_nodes(lo: &[f64], hi: &[f64], panels: usize, order: usize) -> Vec<(Vec<f64>, f64)> {
    let gl = GaussLegendre::new(order);
    let mut axis_nodes = Vec::with_capacity(lo.len());
    for a in 0..lo.len() {
        let width = (hi[a] - lo[a]) / panels as f64;
        let mut pts = Vec::with_capacity(panels * order);
        for p in 0..panels {
            let (l, u) = (lo[a] + p as f64 * width, lo[a] + (p + 1) as f64 * width);
            for (t, w) in gl.nodes.iter().zip(&gl.weights) {
                pts.push((0.5 * (l + u) + 0.5 * (u - l) * t, 0.5 * (u - l) * w));
            }
        }
        axis_nodes.push(pts);
    }
    let mut out: Vec<(Vec<f64>, f64)> = vec![(vec![], 1.0)];
    for axis in &axis_nodes {
        out = out
            .into_iter()
            .flat_map(|(p, w)| {
                axis.iter().map(move |(x, wx)| {
                    let mut q = p.clone();
                    q.push(*x);
                    (q, w * wx)
                })
            })
            .collect();
    }
    out
}

/// `int f(x) v(x) dx` over the support box of `v` by panel Gauss-Legendre.
pub fn pairing(
    f: impl Fn(&[f64]) -> Result<OperatorValue> + Sync,
    v: &dyn TestFunction,
    panels: usize,
) -> Result<OperatorValue> {
    use rayon::prelude::*;
    let (lo, hi) = v.support();
    let nodes = tensor_nodes(&lo, &hi, panels, 8);
    let parts = nodes
        .par_iter()
        .map(|(x, w)| {
            let vx = v.value(x);
            if vx == 0.0 {
                return Ok((0.0, 0.0, true));
            }
            let o = f(x)?;
            Ok((w * vx * o.value, (w * vx).abs() * o.error, o.converged))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OperatorValue {
        value: parts.iter().map(|p| p.0).sum(),
        error: parts.iter().map(|p| p.1).sum(),
        converged: parts.iter().all(|p| p.2),
    })
}

/// `eta(u, v) = Gamma(u, v) / 2 + B(u, v)` from the symmetric and
/// antisymmetric parts, with
/// `Gamma(u,v) = iint (u(y)-u(x)) (v(y)-v(x)) k_s dx dy` and
/// `B(u,v) = iint (u(x)-u(y)) v(y) k_a(x,y) dx dy`.
///
/// The outer integrals run over the support box `S` of `u` and `v`; pairs
/// with `x` outside `S` are folded in by symmetry of the `Gamma` integrand.
pub fn form_pair(
    k: &SharedKernel,
    u: &dyn TestFunction,
    v: &dyn TestFunction,
    quad: &QuadratureConfig,
    panels: usize,
) -> Result<OperatorValue> {
    use rayon::prelude::*;
    let d = k.dim();
    let kd = decompose(k);
    let pq = PointQuadrature::new(quad, d)?;
    let (ul, uh) = u.support();
    let (vl, vh) = v.support();
    if ul.len() != d || vl.len() != d {
        return Err(Error::Dimension {
            expected: d,
            got: ul.len(),
        });
    }
    let lo: Vec<f64> = ul.iter().zip(&vl).map(|(a, b)| a.min(*b)).collect();
    let hi: Vec<f64> = uh.iter().zip(&vh).map(|(a, b)| a.max(*b)).collect();
    let nodes = tensor_nodes(&lo, &hi, panels, 8);
    let parts = nodes
        .par_iter()
        .map(|(x, w)| {
            let (ux, vx) = (u.value(x), v.value(x));
            let sym = |o: &Offset| {
                (u.value(o.y) - ux) * (v.value(o.y) - vx) * kd.parts_offset(x, o.y, o.h, o.r).0
            };
            // B with the roles relabelled: the outer variable is the target
            let anti = |o: &Offset| -(u.value(o.y) - ux) * vx * kd.parts_offset(x, o.y, o.h, o.r).1;
            let mut est = vec![pq.inner(x, sym), pq.outer(x, sym)];
            let leave = if ux * vx != 0.0 {
                ux * vx
                    * exterior_rates(
                        k,
                        (&lo, &hi),
                        x,
                        0.0,
                        quad.radial_points,
                        quad.angular_points,
                    )?[1]
            } else {
                0.0
            };
            let gamma = est.iter().map(|e| e.value).sum::<f64>() + leave;
            let (mut b, mut err, mut ok) = (0.0, 0.0, true);
            if vx != 0.0 && !kd.antisymmetric_vanishes {
                let bi = pq.inner(x, anti);
                let bo = pq.outer(x, anti);
                b = bi.value + bo.value;
                err += bi.error.abs() + bo.error.abs();
                ok &= bi.converged && bo.converged;
            }
            for e in est.drain(..) {
                err += 0.5 * e.error.abs();
                ok &= e.converged;
            }
            Ok((w * (0.5 * gamma + b), w.abs() * err, ok))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OperatorValue {
        value: parts.iter().map(|p| p.0).sum(),
        error: parts.iter().map(|p| p.1).sum(),
        converged: parts.iter().all(|p| p.2),
    })
}

/// `eta*(u, v)`: the form of the dual kernel.
pub fn dual_form_pair(
    k: &SharedKernel,
    u: &dyn TestFunction,
    v: &dyn TestFunction,
    quad: &QuadratureConfig,
    panels: usize,
) -> Result<OperatorValue> {
    form_pair(&dual_kernel(k), u, v, quad, panels)
}
