use jumplab::ecf::{ecf_distance_between, u_grid};
use jumplab::exponent::{ExponentField, ExponentProfile};
use jumplab::kernel::{stable_like_kernel, Normalization};
use jumplab::simulate::{
    scaled_endpoint_ecf, simulate_censored, simulate_free, simulate_part, simulation_kernel,
    DeathCause, OpenSetSpec, RecordMode, Scheme, SimConfig,
};

fn cfg(scheme: Scheme, n: usize, seed: u64) -> SimConfig {
    SimConfig {
        scheme,
        n_paths: n,
        horizon: 1.0,
        time_step: 2e-3,
        master_seed: seed,
        record: RecordMode::FinalOnly,
        ..Default::default()
    }
}

#[test]
fn both_schemes_reach_the_stable_law() {
    let ef = ExponentField::constant(1.2, 1).unwrap();
    let cp = simulate_free(&ef, &[0.0], &cfg(Scheme::CompoundPoisson, 4000, 1)).unwrap();
    let eu = simulate_free(&ef, &[0.0], &cfg(Scheme::FrozenEuler, 4000, 2)).unwrap();
    let a = scaled_endpoint_ecf(&cp, 1.2).unwrap().max_error;
    let b = scaled_endpoint_ecf(&eu, 1.2).unwrap().max_error;
    // sd of a single ECF value is at most 1/sqrt(2n) ~ 0.011
    assert!(a < 0.05 && b < 0.05, "{a} {b}");
    let d = ecf_distance_between(&cp.final_states(), &eu.final_states(), &u_grid(5.0, 51));
    assert!(d < 0.06, "{d}");
}

#[test]
fn whole_line_modes_coincide() {
    let ef = ExponentField::constant(1.5, 1).unwrap();
    let k = simulation_kernel(&ef).unwrap();
    let c = cfg(Scheme::CompoundPoisson, 300, 9);
    let free = simulate_free(&ef, &[0.3], &c).unwrap();
    let cen = simulate_censored(&k, &OpenSetSpec::whole(), &[0.3], &c).unwrap();
    let part = simulate_part(&k, &OpenSetSpec::whole(), &[0.3], &c).unwrap();
    assert_eq!(free.final_states(), cen.final_states());
    assert_eq!(free.final_states(), part.final_states());
    assert_eq!(part.survival(1.0), 1.0);
}

#[test]
fn part_process_dies_censored_process_does_not_jump_out() {
    let ef = ExponentField::constant(0.9, 1).unwrap();
    let k = simulation_kernel(&ef).unwrap();
    let d = OpenSetSpec::interval(-1.0, 1.0);
    let mut c = cfg(Scheme::CompoundPoisson, 500, 4);
    c.horizon = 3.0;
    let part = simulate_part(&k, &d, &[0.0], &c).unwrap();
    let cen = simulate_censored(&k, &d, &[0.0], &c).unwrap();
    let s: Vec<f64> = [0.5, 1.0, 2.0, 3.0]
        .iter()
        .map(|&t| part.survival(t))
        .collect();
    assert!(s.windows(2).all(|w| w[1] <= w[0]), "{s:?}");
    assert!(s[3] < 0.5, "{s:?}");
    assert!(part.fraction(DeathCause::KilledJumpOut) > 0.4);
    assert_eq!(cen.fraction(DeathCause::KilledJumpOut), 0.0);
    assert!(cen.final_states().iter().all(|x| x.abs() < 1.0));
    assert!(cen.survival(3.0) > s[3]);
}

#[test]
fn variable_exponent_censored_paths_stay_inside() {
    let ef = ExponentField::new(
        ExponentProfile::Tanh {
            base: 0.7,
            amplitude: 0.6,
            center: 0.0,
            width: 0.5,
        },
        1,
    )
    .unwrap();
    let k = stable_like_kernel(ef, Normalization::LevyConstant).unwrap();
    let d = OpenSetSpec::interval(-1.0, 1.0);
    let mut c = cfg(Scheme::CompoundPoisson, 200, 12);
    c.record = RecordMode::Full;
    let b = simulate_censored(&k, &d, &[-0.5], &c).unwrap();
    for p in &b.paths {
        assert!(p.states.iter().all(|x| x.abs() < 1.0));
        assert!(p.times.windows(2).all(|w| w[0] <= w[1]));
    }
    assert_eq!(b.interior_to_boundary_jumps(), 0);
}
