//! Assembled truncated energy of hat functions against a direct integral in
//! the jump variable, for a constant exponent where the kernel is explicit.

use std::f64::consts::PI;
use std::sync::Arc;

use jumplab::exponent::ExponentField;
use jumplab::forms::{assemble_all, FormSpace};
use jumplab::kernel::{stable_like_kernel, Normalization, SharedKernel};
use statrs::function::gamma::gamma;

const ALPHA: f64 = 1.2;

fn levy_constant(a: f64) -> f64 {
    a * 2f64.powf(a - 1.0) * gamma((1.0 + a) / 2.0) / (PI.sqrt() * gamma(1.0 - a / 2.0))
}

fn hat(c: f64, h: f64, x: f64) -> f64 {
    (1.0 - (x - c).abs() / h).max(0.0)
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let s = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        acc += f(a + i as f64 * s) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * s / 3.0
}

/// `int_{|z| > cut} c |z|^{-1-a} int (u(x+z)-u(x)) (v(x+z)-v(x)) dx dz`
/// for hats centred at `cu`, `cv` with half-width `h`.
fn oracle(cu: f64, cv: f64, h: f64, cut: f64) -> f64 {
    let c = levy_constant(ALPHA);
    let lo = cu.min(cv) - h;
    let hi = cu.max(cv) + h;
    let inner = |z: f64| {
        // integrand in x is piecewise linear products; fine Simpson on the span
        let a = lo - z.abs();
        let b = hi + z.abs();
        let g = |x: f64| (hat(cu, h, x + z) - hat(cu, h, x)) * (hat(cv, h, x + z) - hat(cv, h, x));
        simpson(g, a, b, 4000)
    };
    // beyond the span the shifted supports are disjoint: inner = 2 int u v
    let far = (hi - lo).max(cut);
    let uv = simpson(|x| hat(cu, h, x) * hat(cv, h, x), lo, hi, 4000);
    let tail = 2.0 * uv * 2.0 * c * far.powf(-ALPHA) / ALPHA;
    let near = if cut < far {
        let panels = 200;
        let mut acc = 0.0;
        for s in [-1.0, 1.0] {
            acc += simpson(
                |z| c * z.powf(-1.0 - ALPHA) * inner(s * z),
                cut,
                far,
                panels,
            );
        }
        acc
    } else {
        0.0
    };
    near + tail
}

#[test]
fn truncated_gamma_matches_direct_integral() {
    let k: SharedKernel = Arc::new(
        stable_like_kernel(
            ExponentField::constant(ALPHA, 1).unwrap(),
            Normalization::LevyConstant,
        )
        .unwrap(),
    );
    let nodes = 18;
    let h = 2.0 / (nodes - 1) as f64;
    let n = 4;
    let centre = |i: usize| -1.0 + (i + 1) as f64 * h;
    let pairs = [(7, 7), (7, 8), (7, 9), (2, 12), (0, 15)];
    let oracles: Vec<f64> = pairs
        .iter()
        .map(|&(i, j)| oracle(centre(i), centre(j), h, 1.0 / n as f64))
        .collect();
    let worst = |m: usize| {
        let space = FormSpace::tents_1d(-1.0, 1.0, nodes, m).unwrap();
        let g = assemble_all(&k, &space, n).unwrap().gamma.entries;
        pairs
            .iter()
            .zip(&oracles)
            .map(|(&(i, j), o)| (g[(i, j)] - o).abs() / g[(i, i)].abs())
            .fold(0.0, f64::max)
    };
    let (coarse, fine) = (worst(8), worst(32));
    println!("worst relative deviation {coarse:.3e} (m=8) {fine:.3e} (m=32)");
    // the indicator of |x - y| > 1/n is sampled pointwise, so convergence is slow
    assert!(fine < 1.5e-2, "{fine}");
    assert!(fine < coarse);
}
