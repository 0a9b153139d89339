//! Three small operations for the static page in `www/`. Each returns a JSON
//! string so the page only needs `JSON.parse`.

use std::sync::Arc;

use jumplab::conditions::{admissible_gamma, check_conditions, sample_box, QuadratureConfig};
use jumplab::ecf::{ecf_report, stable_cf, u_grid};
use jumplab::exponent::{ExponentField, ExponentProfile};
use jumplab::kernel::{stable_like_kernel, Normalization, SharedKernel};
use jumplab::sampler::{sample_batch, StableSpec};
use jumplab::simulate::{
    simulate_censored, simulation_kernel, OpenSetSpec, RecordMode, Scheme, SimConfig,
};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn fail(e: impl std::fmt::Display) -> String {
    json!({ "error": e.to_string() }).to_string()
}

fn constants(base: f64, amplitude: f64) -> jumplab::Result<serde_json::Value> {
    let ef = ExponentField::new(
        ExponentProfile::Tanh {
            base,
            amplitude,
            center: 0.0,
            width: 1.0,
        },
        1,
    )?;
    let gi = admissible_gamma(&ef);
    let k: SharedKernel = Arc::new(stable_like_kernel(ef, Normalization::LevyConstant)?);
    let quad = QuadratureConfig {
        refine_samples: false,
        ..Default::default()
    };
    let r = check_conditions(&k, &quad, &sample_box(1, -3.0, 3.0, 13), None)?;
    Ok(json!({
        "gamma": r.gamma,
        "gamma_interval": [gi.lower, gi.upper],
        "c1": r.c1,
        "c2": r.c2,
        "c3": r.c3,
        "c4": r.c4,
        "beta0": r.beta0,
        "pass": r.passes_all(),
    }))
}

/// Kernel constants for `alpha(x) = base + amplitude (1 + tanh x) / 2` in 1-d.
#[wasm_bindgen]
pub fn kernel_constants(base: f64, amplitude: f64) -> String {
    constants(base, amplitude).map_or_else(fail, |v| v.to_string())
}

fn ecf(alpha: f64, dim: usize, draws: usize, seed: u64) -> jumplab::Result<serde_json::Value> {
    let xs = sample_batch(&StableSpec { alpha, dim, seed }, draws)?;
    let mut dir = vec![0.0; dim];
    dir[0] = 1.0;
    let us = u_grid(5.0, 41);
    let r = ecf_report(&xs, dim, &dir, &us, stable_cf(alpha, 1.0))?;
    let rows: Vec<_> = r
        .rows
        .iter()
        .map(|row| json!([row.u, row.re, row.target]))
        .collect();
    Ok(json!({ "max_error": r.max_error, "at_u": r.at_u, "rows": rows }))
}

/// Empirical against exact characteristic function of a symmetric stable law.
#[wasm_bindgen]
pub fn sampler_ecf(alpha: f64, dim: usize, draws: usize, seed: u64) -> String {
    ecf(alpha, dim, draws, seed).map_or_else(fail, |v| v.to_string())
}

fn fraction(
    alpha: f64,
    paths: usize,
    horizon: f64,
    seed: u64,
) -> jumplab::Result<serde_json::Value> {
    let k = simulation_kernel(&ExponentField::constant(alpha, 1)?)?;
    let cfg = SimConfig {
        horizon,
        n_paths: paths,
        scheme: Scheme::CompoundPoisson,
        master_seed: seed,
        record: RecordMode::FinalOnly,
        ..Default::default()
    };
    let b = simulate_censored(&k, &OpenSetSpec::interval(0.0, 1.0), &[0.5], &cfg)?;
    Ok(json!({
        "boundary_fraction": b.boundary_fraction(),
        "survival": b.survival(horizon),
    }))
}

/// Censored stable process on (0, 1) from 0.5: share of paths that reach the
/// boundary before `horizon`.
#[wasm_bindgen]
pub fn censored_fraction(alpha: f64, paths: usize, horizon: f64, seed: u64) -> String {
    fraction(alpha, paths, horizon, seed).map_or_else(fail, |v| v.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> serde_json::Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn constants_satisfy_identities() {
        let v = parse(&kernel_constants(0.7, 0.1));
        let m = v["c1"]
            .as_f64()
            .unwrap()
            .max(v["c2"].as_f64().unwrap() * v["c3"].as_f64().unwrap());
        assert_eq!(v["beta0"].as_f64().unwrap(), 8.0 * m);
        assert_eq!(v["pass"], json!(true));
    }

    #[test]
    fn ecf_is_small_and_errors_are_reported() {
        let v = parse(&sampler_ecf(1.5, 1, 20_000, 1));
        assert!(v["max_error"].as_f64().unwrap() < 0.05);
        assert_eq!(v["rows"].as_array().unwrap().len(), 41);
        assert!(parse(&sampler_ecf(2.5, 1, 10, 1))["error"].is_string());
    }

    #[test]
    fn heavy_exponent_hits_the_boundary() {
        let v = parse(&censored_fraction(1.8, 50, 2.0, 3));
        assert!(v["boundary_fraction"].as_f64().unwrap() > 0.5);
    }
}
