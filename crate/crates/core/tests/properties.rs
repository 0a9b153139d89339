use std::sync::Arc;

use jumplab::exponent::{ExponentField, ExponentProfile};
use jumplab::grid::Grid;
use jumplab::kernel::{stable_like_kernel, Normalization, SharedKernel};
use jumplab::resolvent::{discrete_generator, resolvent, RowSumMode};
use nalgebra::DVector;
use proptest::prelude::*;
use proptest::test_runner::RngSeed;

/// `amplitude` as a fraction of the room left by `upper < 1 + lower / 2`.
fn kernel(base: f64, share: f64) -> SharedKernel {
    let amplitude = share * (1.0 - base / 2.0 - 1e-3).min(0.4);
    let ef = ExponentField::new(
        ExponentProfile::Tanh {
            base,
            amplitude,
            center: 0.0,
            width: 1.0,
        },
        1,
    )
    .unwrap();
    Arc::new(stable_like_kernel(ef, Normalization::LevyConstant).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 12,
        rng_seed: RngSeed::Fixed(20),
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn resolvent_is_markov(
        base in 0.3f64..1.5,
        share in 0.0f64..1.0,
        nodes in 9usize..25,
        alpha in 0.1f64..20.0,
        f in prop::collection::vec(0.0f64..1.0, 25),
    ) {
        let grid = Grid::interval(-1.0, 1.0, nodes).unwrap();
        let l = discrete_generator(&kernel(base, share), &grid, 8, RowSumMode::ConservativeRestricted).unwrap();
        let s = l.scale();
        for i in 0..l.len() {
            let row: f64 = l.l.row(i).sum();
            prop_assert!(row.abs() <= 1e-12 * s, "row {i} sums to {row}");
        }
        let g = resolvent(&l, alpha).unwrap();
        prop_assert!(g.min() >= -1e-12 * s);
        let v = DVector::from_column_slice(&f[..l.len()]);
        let u = &g * v * alpha;
        prop_assert!(u.min() >= -1e-10 && u.max() <= 1.0 + 1e-10);
    }
}
