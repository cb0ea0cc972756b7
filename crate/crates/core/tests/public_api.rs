use cvxent::metrics::{hausdorff_epigraph, lp_distance};
use cvxent::packing::{build_packing_family, packing_certificate, GAMMA_D};
use cvxent::schedule::{strip_schedule, verify_schedule};
use cvxent::verify::{hinge_case, non_total_bounded_family};
use cvxent::{ConvexFunction, Error, GridSpec, Rational, Rect};

#[test]
fn packing_family_round_trip() {
    let eta: Rational = "1/100".parse().unwrap();
    let family = build_packing_family(&eta, 1, 5).unwrap();
    assert_eq!(family.system.k, 10);
    assert_eq!(family.functions.len(), family.code.len());
    let cert = packing_certificate(&family, GridSpec::midpoint(4001)).unwrap();
    assert!(cert.all_pass);
    for row in &cert.rows {
        // Disjoint bumps in one dimension: the distance is exactly zeta times the Hamming distance.
        let expected = GAMMA_D * 0.01f64.powf(1.5) * row.hamming as f64;
        assert!((row.l1_distance - expected).abs() < 1e-8, "{} vs {expected}", row.l1_distance);
    }
    let json = serde_json::to_value(&family).unwrap();
    assert_eq!(json["code"]["words"].as_array().unwrap().len(), family.code.len());
}

#[test]
fn error_kinds_are_distinguished() {
    assert!(matches!("x/y".parse::<Rational>(), Err(Error::Parse(_))));
    let eta: Rational = "3/2".parse().unwrap();
    assert!(matches!(build_packing_family(&eta, 1, 0), Err(Error::Parameter(_))));
    assert!(matches!(strip_schedule(&"2".parse().unwrap(), 1.0), Err(Error::Parameter(_))));
    let f = ConvexFunction::constant(Rect::unit(1).unwrap(), 0.0).unwrap();
    assert!(matches!(f.eval(&[1.5]), Err(Error::Domain(_))));
}

#[test]
fn schedule_for_tiny_eta() {
    let r = verify_schedule(&"2^-96".parse().unwrap(), 1.0, 1).unwrap();
    assert_eq!(r.a, 4);
    assert!(r.all_pass);
    assert_eq!(r.to_csv().lines().count(), 1 + r.a + 1);
}

#[test]
fn distances_and_reports_agree() {
    let unit = Rect::unit(1).unwrap();
    let hinge = ConvexFunction::hinge(unit.clone(), 0.5, 0).unwrap();
    let zero = ConvexFunction::constant(unit, 0.0).unwrap();
    let l1 = lp_distance(&hinge, &zero, 1.0, GridSpec::midpoint(2001)).unwrap();
    assert!((l1.value - 0.25).abs() < 1e-6);
    let h = hausdorff_epigraph(&hinge, &zero, 1.0, 256, GridSpec::trapezoid(2001)).unwrap();
    assert!((h.value - 0.5 / 1.25f64.sqrt()).abs() < 1e-9);
    let (case, lp, haus) = hinge_case(0.5, 1.0, GridSpec::midpoint(2001), 256).unwrap();
    assert!(lp.pass && haus.pass);
    assert_eq!(case.hausdorff_numeric, h.value);

    let r = non_total_bounded_family(2, 5, GridSpec::trapezoid(33)).unwrap();
    assert_eq!(r.rhs, 1.0 - 2f64.powi(-3));
    let json = serde_json::to_value(&r).unwrap();
    assert_eq!(json["name"], r.name.as_str());
    assert_eq!(json["pass"], true);
}
