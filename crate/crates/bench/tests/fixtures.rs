use cvxent_bench::{hinge_pair, random_pair};

#[test]
fn fixtures_are_seeded_and_bounded() {
    let (f, g) = random_pair(2, 4);
    let (f2, _) = random_pair(2, 4);
    assert_eq!(f, f2);
    assert_ne!(f, g);
    for h in [&f, &g] {
        let (lo, hi) = h.grid_range();
        assert!(lo >= -1.0 && hi <= 1.0);
    }
    let (h, z) = hinge_pair(0.5);
    assert_eq!(h.eval(&[0.0]).unwrap(), 1.0);
    assert_eq!(h.eval(&[0.75]).unwrap(), 0.0);
    assert_eq!(z.eval(&[0.3]).unwrap(), 0.0);
}
