use funcmech::Task;
use funcmech_demo::{epsilon_sweep, logistic_curves, toy_curves};

#[test]
fn toy_curves_with_huge_epsilon_match_exact_fit() {
    let c = toy_curves(1e12, 7, 41).unwrap();
    assert_eq!(c.w.len(), 41);
    assert!((c.exact_min - 117.0 / 206.0).abs() < 1e-12);
    assert!((c.private_min - 117.0 / 206.0).abs() < 1e-6);
    for (e, n) in c.exact.iter().zip(&c.noisy) {
        assert!((e - n).abs() < 1e-6);
    }
}

#[test]
fn toy_curves_are_reproducible_and_seed_dependent() {
    let a = toy_curves(0.5, 1, 11).unwrap();
    let b = toy_curves(0.5, 1, 11).unwrap();
    let c = toy_curves(0.5, 2, 11).unwrap();
    assert_eq!(a.noisy, b.noisy);
    assert_ne!(a.noisy, c.noisy);
    assert!(a.private_min.is_finite());
    assert_eq!(a.noise_scale, 16.0);
    assert!(toy_curves(0.0, 1, 11).is_err());
}

#[test]
fn sweep_reports_one_point_per_epsilon() {
    let pts = epsilon_sweep(Task::Linear, 2_000, 3, &[0.1, 3.2], 4).unwrap();
    assert_eq!(pts.len(), 2);
    assert_eq!(pts[0].no_privacy, pts[1].no_privacy);
    assert!(pts[1].fm >= pts[1].no_privacy);
    let pts = epsilon_sweep(Task::Logistic, 500, 2, &[1.0], 4).unwrap();
    assert!((0.0..=1.0).contains(&pts[0].fm));
}

#[test]
fn logistic_expansion_touches_exact_loss_at_zero() {
    let c = logistic_curves(1.0, 4.0, 81);
    let mid = 40;
    assert_eq!(c.s[mid], 0.0);
    assert!((c.exact[mid] - c.truncated[mid]).abs() < 1e-15);
    assert!((c.exact[mid + 1] - c.truncated[mid + 1]).abs() < 1e-3);
    assert!((c.exact[80] - c.truncated[80]).abs() > 0.1);
}
