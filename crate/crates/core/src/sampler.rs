//! Exact draws from the standard symmetric `alpha`-stable law with
//! characteristic function `exp(-|u|^alpha)`, scalar and rotationally
//! invariant.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::stream;
use crate::{Error, Result};

/// Draws per RNG stream in batch sampling; fixed so that output does not
/// depend on the worker count.
pub const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableSpec {
    pub alpha: f64,
    pub dim: usize,
    pub seed: u64,
}

impl StableSpec {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if self.dim == 0 {
            return Err(Error::param("dim", "must be positive"));
        }
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::param(
            "alpha",
            format!("need 0 < alpha <= 2, got {alpha}"),
        ));
    }
    Ok(())
}

/// Chambers-Mallows-Stuck transform of `V ~ U(-pi/2, pi/2)`, `W ~ Exp(1)`.
pub fn sample_scalar<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(scalar_unchecked(alpha, rng))
}

fn scalar_unchecked<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    if alpha == 2.0 {
        let z: f64 = rng.sample(StandardNormal);
        return std::f64::consts::SQRT_2 * z;
    }
    let v = PI * (rng.random::<f64>() - 0.5);
    if alpha == 1.0 {
        return v.tan();
    }
    let w: f64 = rng.sample(Exp1);
    let cv = v.cos();
    (alpha * v).sin() / cv.powf(1.0 / alpha)
        * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha)
}

/// Positive `a`-stable draw with Laplace transform `exp(-s^a)`, `0 < a < 1`
/// (Kanter's representation).
pub fn sample_positive<R: Rng + ?Sized>(a: f64, rng: &mut R) -> Result<f64> {
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::param("a", format!("need 0 < a < 1, got {a}")));
    }
    Ok(positive_unchecked(a, rng))
}

fn positive_unchecked<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    // u in (0, 1) open so that sin(pi u) > 0
    let u = loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            break u;
        }
    };
    let w: f64 = rng.sample(Exp1);
    let num = (a * PI * u).sin();
    let den = (PI * u).sin();
    num / den.powf(1.0 / a) * (((1.0 - a) * PI * u).sin() / w).powf((1.0 - a) / a)
}

/// Rotationally invariant draw with characteristic function
/// `exp(-|u|^alpha)`: `sqrt(2 S) Z` with `S` positive `alpha/2`-stable and
/// `Z` standard Gaussian. In one dimension the scalar transform is used.
pub fn sample_isotropic<R: Rng + ?Sized>(alpha: f64, dim: usize, rng: &mut R) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    if dim == 0 {
        return Err(Error::param("dim", "must be positive"));
    }
    Ok(isotropic_unchecked(alpha, dim, rng))
}

pub(crate) fn isotropic_unchecked<R: Rng + ?Sized>(
    alpha: f64,
    dim: usize,
    rng: &mut R,
) -> Vec<f64> {
    if dim == 1 {
        return vec![scalar_unchecked(alpha, rng)];
    }
    let scale = if alpha == 2.0 {
        std::f64::consts::SQRT_2
    } else {
        (2.0 * positive_unchecked(alpha / 2.0, rng)).sqrt()
    };
    (0..dim)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            scale * z
        })
        .collect()
}

/// `count` draws as a flat row-major array (`dim` entries per draw).
/// Chunk `c` uses RNG stream `c` of `spec.seed`.
pub fn sample_batch(spec: &StableSpec, count: usize) -> Result<Vec<f64>> {
    spec.validate()?;
    let chunks = count.div_ceil(CHUNK);
    let parts: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(spec.seed, c as u64);
            let n = CHUNK.min(count - c * CHUNK);
            let mut out = Vec::with_capacity(n * spec.dim);
            for _ in 0..n {
                out.extend(isotropic_unchecked(spec.alpha, spec.dim, &mut rng));
            }
            out
        })
        .collect();
    Ok(parts.concat())
}
