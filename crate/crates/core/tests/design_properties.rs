mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use secdetect::designers::{
    design_known, design_subspace_fixed, design_subspace_free, principal_extremes,
    worst_case_sparse, worst_case_subspace,
};
use secdetect::etf_construction::{build_known_etf, build_simplex_etf, welch_bound};
use secdetect::linalg_frames::{frame_metrics, random_stiefel, MeasurementMatrix};
use secdetect::matrix_file::{format_matrix, parse_matrix};
use secdetect::secrecy_model::{deflection_ev_sup, Scenario};

fn random_scenario(r: &mut rand_chacha::ChaCha8Rng, frac: f64) -> Scenario {
    loop {
        let profile = random_profile(r, 2.0);
        let sup = deflection_ev_sup(&profile);
        if sup.is_finite() && sup > 1e-3 {
            return Scenario::new(profile, 1.0, frac * sup).unwrap();
        }
    }
}

fn orthonormal_columns(r: &mut rand_chacha::ChaCha8Rng, n: usize, k: usize) -> DMatrix<f64> {
    gaussian_matrix(r, n, k).qr().q()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn known_design_meets_budget(seed in any::<u64>(), frac in 0.02f64..1.3, scale in 0.1f64..4.0) {
        let mut r = rng(seed);
        let s = gaussian_vector(&mut r, 64) * (scale / 8.0);
        let scenario = random_scenario(&mut r, frac);
        let out = design_known(&s, 16, &scenario).unwrap();
        let x = out.matrix.projector().capture(&s);
        let energy = s.norm_squared();
        let delta = scenario.budget().delta;
        prop_assert!((x - energy.min(delta)).abs() < 1e-9, "x {x}, energy {energy}, delta {delta}");
        let ev = scenario.deflection_ev(x);
        prop_assert!(ev <= scenario.tau() + 1e-9);
        if delta < energy {
            prop_assert!((ev - scenario.tau()).abs() < 1e-9);
        }
        prop_assert!(out.matrix.stiefel_defect() < 1e-10);
    }

    #[test]
    fn subspace_free_design_hits_target(seed in any::<u64>(), frac in 0.02f64..1.3, k in 1usize..=6) {
        let mut r = rng(seed);
        let scenario = random_scenario(&mut r, frac);
        let design = design_subspace_free(24, 6, k, &scenario, seed).unwrap();
        let scaled = design.scaled_basis();
        // cos θ·D has orthogonal columns of norm cos θ; the worst case over
        // unit β of ‖P̂·cos θ·Dβ‖² is cos²θ·λ_min.
        let worst = worst_case_subspace(&design.outcome.matrix, &design.basis).unwrap()
            * design.outcome.attenuation.powi(2);
        let target = scenario.budget().delta.min(1.0);
        prop_assert!((worst - target).abs() < 1e-9, "worst {worst}, target {target}");
        prop_assert!((scaled.column(0).norm() - design.outcome.attenuation).abs() < 1e-12);
    }

    #[test]
    fn subspace_fixed_design_hits_target(seed in any::<u64>(), frac in 0.02f64..1.3, k in 1usize..=5) {
        let mut r = rng(seed);
        let scenario = random_scenario(&mut r, frac);
        let d = orthonormal_columns(&mut r, 20, k);
        let out = design_subspace_fixed(&d, 5, &scenario).unwrap();
        let worst = worst_case_subspace(&out.matrix, &d).unwrap() * out.attenuation.powi(2);
        prop_assert!((worst - scenario.budget().delta.min(1.0)).abs() < 1e-9);
        prop_assert!((out.achieved_delta - worst).abs() < 1e-12);
    }

    #[test]
    fn overfull_subspace_is_annihilated(seed in any::<u64>()) {
        let mut r = rng(seed);
        let scenario = random_scenario(&mut r, 0.5);
        let design = design_subspace_free(16, 4, 5, &scenario, seed).unwrap();
        prop_assert!(design.outcome.unattenuated_delta.abs() < 1e-12);
        let d = orthonormal_columns(&mut r, 16, 5);
        let phi = random_stiefel(4, 16, seed).unwrap();
        prop_assert!(worst_case_subspace(&phi, &d).unwrap().abs() < 1e-12);
    }

    #[test]
    fn sparse_worst_case_properties(seed in any::<u64>(), m in 2usize..6) {
        let n = m + 4;
        let phi = random_stiefel(m, n, seed).unwrap();
        let (w1, s1) = worst_case_sparse(&phi, 1).unwrap();
        let (w2, s2) = worst_case_sparse(&phi, 2).unwrap();
        let (w3, _) = worst_case_sparse(&phi, 3).unwrap();
        let ratio = m as f64 / n as f64;
        prop_assert!(w1 <= ratio + 1e-12);
        prop_assert!(w2 <= ratio * (1.0 - welch_bound(m, n)) + 1e-12);
        prop_assert!(w2 <= w1 + 1e-12 && w3 <= w2 + 1e-12);

        // Rescaling rows or mixing them leaves every worst case unchanged.
        let mut r = rng(seed);
        let a = gaussian_matrix(&mut r, m, m);
        let sv = a.clone().svd(false, false).singular_values;
        prop_assume!(sv.min() > 1e-2 * sv.max());
        let mixed = MeasurementMatrix::new(&a * phi.as_matrix()).unwrap();
        let ortho = mixed.row_orthonormalized();
        for k in 1..=3 {
            let base = worst_case_sparse(&phi, k).unwrap().0;
            prop_assert!((worst_case_sparse(&mixed, k).unwrap().0 - base).abs() < 1e-9);
            prop_assert!((worst_case_sparse(&ortho, k).unwrap().0 - base).abs() < 1e-9);
        }

        // The reported support attains the value, and no earlier support
        // does strictly better.
        let p = phi.projector().as_matrix();
        prop_assert_eq!(principal_extremes(p, &s1).0, w1);
        prop_assert_eq!(principal_extremes(p, &s2).0, w2);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = principal_extremes(p, &[i, j]).0;
                prop_assert!(v >= w2);
                if [i, j] < [s2[0], s2[1]] {
                    prop_assert!(v > w2);
                }
            }
        }
    }

    #[test]
    fn subspace_worst_case_is_a_minimum(seed in any::<u64>(), k in 1usize..4) {
        let mut r = rng(seed);
        let phi = gaussian_measurement(&mut r, 4, 10);
        let d = orthonormal_columns(&mut r, 10, k);
        let exact = worst_case_subspace(&phi, &d).unwrap();
        let p = phi.projector();
        for _ in 0..200 {
            let beta = gaussian_vector(&mut r, k).normalize();
            prop_assert!(exact <= p.capture(&(&d * beta)) + 1e-12);
        }
    }

    #[test]
    fn matrix_file_round_trip(seed in any::<u64>(), rows in 1usize..6, cols in 1usize..9) {
        let mut r = rng(seed);
        let mut a = gaussian_matrix(&mut r, rows, cols);
        a[(0, 0)] *= 1e-300;
        let back = parse_matrix(&format_matrix(&a)).unwrap();
        prop_assert_eq!(back, a);
    }
}

#[test]
fn subspace_worst_case_against_dense_sampling() {
    let mut r = rng(5);
    let phi = gaussian_measurement(&mut r, 6, 16);
    let d = orthonormal_columns(&mut r, 16, 3);
    let exact = worst_case_subspace(&phi, &d).unwrap();
    let p = phi.projector();
    let sampled = (0..100_000)
        .map(|_| p.capture(&(&d * gaussian_vector(&mut r, 3).normalize())))
        .fold(f64::INFINITY, f64::min);
    assert!(exact <= sampled + 1e-6);
    assert!(
        sampled - exact < 1e-2,
        "sampling should get close: {sampled} vs {exact}"
    );
}

#[test]
fn etf_pairs_match_coherence() {
    let mut frames: Vec<MeasurementMatrix> = (2..=6)
        .map(|m| build_simplex_etf(m).unwrap().frame)
        .collect();
    for (m, n) in [(3, 6), (5, 10), (6, 16)] {
        frames.push(build_known_etf(m, n).unwrap().unwrap().frame);
    }
    for phi in frames {
        let (m, n) = (phi.m(), phi.n());
        let mu = frame_metrics(&phi).unwrap().coherence;
        let (w2, _) = worst_case_sparse(&phi, 2).unwrap();
        let expected = m as f64 / n as f64 * (1.0 - mu);
        assert!(
            (w2 - expected).abs() < 1e-9,
            "({m},{n}): {w2} vs {expected}"
        );
        assert!((mu - welch_bound(m, n)).abs() < 1e-9);
    }
}

#[test]
fn known_design_keeps_clean_signal_when_vacuous() {
    let mut r = rng(1);
    let s = gaussian_vector(&mut r, 10);
    let scenario = Scenario::unconstrained(random_profile(&mut r, 1.0), 1.0).unwrap();
    let out = design_known(&s, 3, &scenario).unwrap();
    assert_eq!(out.theta, 0.0);
    assert!((out.achieved_delta - s.norm_squared()).abs() < 1e-10);
    let unit = DVector::from_fn(10, |i, _| if i == 0 { 1.0 } else { 0.0 });
    assert!(out.matrix.projector().capture(&unit) <= 1.0 + 1e-12);
}
