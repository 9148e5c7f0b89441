use harris_web::ops;

#[test]
fn classify_matches_the_integral_test() {
    assert_eq!(ops::classify(1.0, 0.5).unwrap(), "nonclassical");
    assert_eq!(ops::classify(2.0, 1.0).unwrap(), "classical");
    assert!(ops::classify(1.0, 0.0).is_err());
}

#[test]
fn resolvent_curve_layout() {
    let v = ops::resolvent_curve(0.0, 1e2, 1e4, 3).unwrap();
    assert_eq!(v.len(), 7);
    for k in 0..3 {
        let (l, psi) = (v[2 * k], v[2 * k + 1]);
        assert!((psi / l.sqrt() - 1.0).abs() < 1e-3);
    }
    assert!((v[6] - ops::predicted(0.0)).abs() < 1e-6);
    assert!(ops::predicted(1.0).is_nan());
}

#[test]
fn spectral_set_is_inside_the_horizon() {
    let v = ops::spectral_set(0.0, 5, 12).unwrap();
    let tau = v[0];
    assert!((0.0..=1.0).contains(&tau));
    assert!(v[1..].iter().all(|&t| (0.0..=tau + 1e-12).contains(&t)));
    assert_eq!(v, ops::spectral_set(0.0, 5, 12).unwrap());
    assert!(ops::spectral_set(0.5, 5, 30).is_err());
}
