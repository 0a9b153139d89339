use jumplab::drifted::{
    build_drifted_bm, default_lambda_scan, default_u0, dual_dichotomy, heat_kernel_deviation,
    negativity_witness, DriftedBMConfig,
};

#[test]
fn heat_kernel_at_default_resolution() {
    let bm = build_drifted_bm(&DriftedBMConfig {
        lambda: 0.0,
        ..Default::default()
    })
    .unwrap();
    let dev = heat_kernel_deviation(&bm, 1.0);
    println!("deviation {dev:e}");
    assert!(dev < 1e-2);
}

#[test]
fn negativity_scan_finds_lambda() {
    let res = negativity_witness(
        &DriftedBMConfig::default(),
        &default_u0(),
        &default_lambda_scan(),
    )
    .unwrap();
    println!("{res:?}");
    assert!(!res.inconclusive);
    assert!(res.value.unwrap() < 0.0);
    assert!(res.predictor_at_star.unwrap() < 0.0);
    assert!(res.min_eigenvalue_at_star.unwrap() < 0.0);
    assert!(res.scan[0].eta >= 0.0);
}

#[test]
fn dual_markov_dichotomy() {
    let bm = build_drifted_bm(&DriftedBMConfig {
        lambda: 128.0,
        ..Default::default()
    })
    .unwrap();
    let rep = dual_dichotomy(&bm, &[1.0, 2.0, 10.0, 100.0], 100, 7).unwrap();
    for r in &rep.rows {
        println!(
            "alpha {} unshifted max {} kdisc {:?}",
            r.alpha, r.unshifted.markov.max_value, r.unshifted.k_discrepancy
        );
    }
    assert!(rep.beta1 > 0.0);
    assert!(rep.primal_passes && rep.shifted_passes && rep.unshifted_fails);
    let (_, _, _, v) = rep.witness.unwrap();
    assert!(v > 1.0 + 1e-10);
}
