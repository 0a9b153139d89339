//! Empirical characteristic functions of projected samples.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcfRow {
    pub u: f64,
    pub re: f64,
    pub im: f64,
    pub target: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcfReport {
    pub direction: Vec<f64>,
    pub samples: usize,
    pub rows: Vec<EcfRow>,
    pub max_error: f64,
    pub at_u: f64,
}

/// `n` evenly spaced points on `[-u_max, u_max]`.
pub fn u_grid(u_max: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| -u_max + 2.0 * u_max * i as f64 / (n - 1).max(1) as f64)
        .collect()
}

/// `|mean exp(i u <theta, X>) - target(u)|` on `us` for flat samples with `dim`
/// components each.
pub fn ecf_report(
    flat: &[f64],
    dim: usize,
    direction: &[f64],
    us: &[f64],
    target: impl Fn(f64) -> f64 + Sync,
) -> Result<EcfReport> {
    if dim == 0 || direction.len() != dim || !flat.len().is_multiple_of(dim) {
        return Err(Error::Dimension {
            expected: dim,
            got: direction.len(),
        });
    }
    let n = flat.len() / dim;
    if n == 0 {
        return Err(Error::param("samples", "need at least one sample"));
    }
    let proj: Vec<f64> = flat
        .chunks(dim)
        .map(|p| p.iter().zip(direction).map(|(a, b)| a * b).sum())
        .collect();
    let rows: Vec<EcfRow> = us
        .par_iter()
        .map(|&u| {
            let (mut re, mut im) = (0.0, 0.0);
            for x in &proj {
                let (s, c) = (u * x).sin_cos();
                re += c;
                im += s;
            }
            re /= n as f64;
            im /= n as f64;
            let t = target(u);
            EcfRow {
                u,
                re,
                im,
                target: t,
                error: ((re - t).powi(2) + im * im).sqrt(),
            }
        })
        .collect();
    let (max_error, at_u) = rows
        .iter()
        .map(|r| (r.error, r.u))
        .fold((0.0, 0.0), |a, b| if b.0 > a.0 { b } else { a });
    Ok(EcfReport {
        direction: direction.to_vec(),
        samples: n,
        rows,
        max_error,
        at_u,
    })
}

/// `exp(-c |u|^alpha)`
pub fn stable_cf(alpha: f64, c: f64) -> impl Fn(f64) -> f64 + Sync {
    move |u: f64| (-c * u.abs().powf(alpha)).exp()
}

/// Two-sample distance `max_u |ECF_a(u) - ECF_b(u)|` for scalar samples.
pub fn ecf_distance_between(a: &[f64], b: &[f64], us: &[f64]) -> f64 {
    let cf = |xs: &[f64], u: f64| {
        let (mut re, mut im) = (0.0, 0.0);
        for x in xs {
            let (s, c) = (u * x).sin_cos();
            re += c;
            im += s;
        }
        (re / xs.len() as f64, im / xs.len() as f64)
    };
    us.par_iter()
        .map(|&u| {
            let (ra, ia) = cf(a, u);
            let (rb, ib) = cf(b, u);
            ((ra - rb).powi(2) + (ia - ib).powi(2)).sqrt()
        })
        .reduce(|| 0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_mass_at_zero_has_unit_cf() {
        let r = ecf_report(&[0.0; 10], 1, &[1.0], &u_grid(5.0, 11), |_| 1.0).unwrap();
        assert_eq!(r.max_error, 0.0);
        assert_eq!(r.rows.len(), 11);
    }

    #[test]
    fn symmetric_pair_gives_cosine() {
        let r = ecf_report(&[1.0, -1.0], 1, &[1.0], &[0.7], |u| u.cos()).unwrap();
        assert!(r.max_error < 1e-15);
        assert!(ecf_report(&[1.0], 2, &[1.0], &[0.0], |_| 1.0).is_err());
    }

    #[test]
    fn two_sample_distance_is_zero_for_identical_samples() {
        let a = [0.3, -1.2, 4.0];
        assert_eq!(ecf_distance_between(&a, &a, &u_grid(5.0, 21)), 0.0);
    }
}
