mod common;

use remarnet::eval::{accuracy, wilcoxon_signed_rank, WilcoxonMethod};
use remarnet::rng::Rng;

#[test]
fn exact_path_equals_brute_force_enumeration() {
    let mut rng = Rng::new(12);
    for case in 0..200 {
        let d = common::random_integer_differences(&mut rng);
        let zeros = vec![0.0; d.len()];
        let r = wilcoxon_signed_rank(&d, &zeros, 12).unwrap();
        let (w, p) = common::wilcoxon_brute_force(&d);
        assert_eq!(r.method, WilcoxonMethod::Exact);
        assert_eq!(r.w_plus, w, "case {case}: {d:?}");
        assert!((r.p - p).abs() < 1e-12, "case {case}: {d:?} {} vs {p}", r.p);
        assert_eq!(r.w_plus + r.w_minus, (r.n * (r.n + 1)) as f64 / 2.0);
        assert!(r.p > 0.0 && r.p <= 1.0);
    }
}

#[test]
fn normal_approximation_matches_monte_carlo_reference() {
    // Thirty tie-free differences with a fixed sign pattern. The reference
    // p-value was estimated once from 10^7 random sign assignments
    // (standard error 1.2e-4).
    const SIGNS: [f64; 30] = [
        1., 1., -1., 1., 1., -1., 1., 1., 1., -1., 1., -1., 1., 1., -1., 1., 1., 1., -1., 1., -1., 1., 1., -1., 1.,
        1., -1., 1., 1., -1.,
    ];
    const P_MONTE_CARLO: f64 = 0.1840272;
    let d: Vec<f64> = (1..=30)
        .map(|k| SIGNS[k - 1] * (0.5 * k as f64 + 0.01 * (k * k) as f64))
        .collect();
    let r = wilcoxon_signed_rank(&d, &vec![0.0; 30], 12).unwrap();
    assert_eq!(r.method, WilcoxonMethod::NormalApprox);
    assert_eq!(r.w_plus, 298.0);
    assert!((r.p - P_MONTE_CARLO).abs() < 5e-3, "p = {}", r.p);
}

#[test]
fn accuracy_matches_a_direct_count() {
    let mut rng = Rng::new(1000);
    let pred: Vec<usize> = (0..1000).map(|_| rng.below(5)).collect();
    let truth: Vec<usize> = (0..1000).map(|_| rng.below(5)).collect();
    let mut hits = 0;
    for i in 0..1000 {
        if pred[i] == truth[i] {
            hits += 1;
        }
    }
    assert_eq!(accuracy(&pred, &truth).unwrap(), hits as f64 / 1000.0);
}
