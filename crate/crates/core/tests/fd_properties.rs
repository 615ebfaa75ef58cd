use proptest::prelude::*;
use spectramech::fd::FdScenario;
use spectramech::rate::{FdUserPhysical, GainDistribution};
use spectramech::types::{TypeDistribution, VirtualTypeProfile};

fn scenario(bandwidth: f64, gains: &[f64], supports: &[(f64, f64)]) -> FdScenario {
    let users = gains
        .iter()
        .map(|&h| FdUserPhysical::new(GainDistribution::Deterministic { value: h }, 1.0, 1.0).unwrap())
        .collect();
    let dists = supports.iter().map(|&(a, b)| TypeDistribution::uniform(a, b).unwrap()).collect();
    FdScenario::new(bandwidth, users, VirtualTypeProfile::certify(dists, 256, false).unwrap()).unwrap()
}

fn instance() -> impl Strategy<Value = (f64, Vec<f64>, Vec<f64>)> {
    (1usize..5).prop_flat_map(|n| {
        (
            0.1f64..10.0,
            prop::collection::vec(0.05f64..10.0, n),
            prop::collection::vec(0.0f64..1.0, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn allocation_is_feasible_and_optimal((w, gains, t) in instance()) {
        let s = scenario(w, &gains, &vec![(0.0, 1.0); gains.len()]);
        let a = s.allocate(&t).unwrap();
        prop_assert!(a.bandwidth.iter().all(|&q| q >= 0.0));
        let used: f64 = a.bandwidth.iter().sum();
        prop_assert!(used <= w * (1.0 + 1e-12));
        for (i, &v) in a.virtual_types.iter().enumerate() {
            if v <= 0.0 {
                prop_assert_eq!(a.bandwidth[i], 0.0);
            }
        }
        if a.virtual_types.iter().any(|&v| v > 0.0) {
            prop_assert!((used - w).abs() <= 1e-9 * w, "budget {used} of {w}");
            prop_assert!(a.kkt_residual <= 1e-6, "kkt {}", a.kkt_residual);
        } else {
            prop_assert_eq!(used, 0.0);
        }
    }

    #[test]
    fn own_allocation_nondecreasing_in_own_report((w, gains, t) in instance(), bump in 0.0f64..0.5) {
        let s = scenario(w, &gains, &vec![(0.0, 1.0); gains.len()]);
        let base = s.allocate(&t).unwrap();
        for i in 0..gains.len() {
            let mut r = t.clone();
            r[i] = (r[i] + bump).min(1.0);
            let moved = s.allocate(&r).unwrap();
            prop_assert!(moved.bandwidth[i] >= base.bandwidth[i] - 1e-9 * w);
        }
    }
}

#[test]
fn single_positive_user_takes_everything() {
    let s = scenario(3.0, &[2.0], &[(0.0, 1.0)]);
    let a = s.allocate(&[0.9]).unwrap();
    assert_eq!(a.bandwidth, vec![3.0]);
    let a = s.allocate(&[0.2]).unwrap();
    assert_eq!(a.bandwidth, vec![0.0]);
}

#[test]
fn single_user_tax_matches_closed_form() {
    // Uniform [0,1], W = 1, h = 1: q = 1 iff θ > 1/2, so T(θ) = ln 2 / 2 there.
    let s = scenario(1.0, &[1.0], &[(0.0, 1.0)]);
    let p = s.payments(&[0.8], 64).unwrap();
    let exact = 2f64.ln() / 2.0;
    assert!(p.payments[0] <= exact + 1e-12);
    assert!(exact - p.payments[0] <= p.tax_error_bounds[0] + 1e-12);
    let z = s.payments_via_z(&[0.8], 64).unwrap();
    assert!((z[0].payment - exact).abs() <= z[0].error_bound + 1e-9);
}

#[test]
fn tax_error_halves_with_grid() {
    let s = scenario(2.0, &[1.0, 0.5], &[(0.0, 1.0), (0.5, 2.0)]);
    let r = [0.9, 1.7];
    let coarse = s.payments(&r, 64).unwrap();
    let fine = s.payments(&r, 128).unwrap();
    for i in 0..2 {
        assert!(fine.tax_error_bounds[i] <= 0.5 * coarse.tax_error_bounds[i] + 1e-15);
        assert!(fine.payments[i] >= coarse.payments[i] - coarse.tax_error_bounds[i]);
    }
}

#[test]
fn single_user_interim_has_no_sampling_noise() {
    let s = scenario(1.0, &[1.0], &[(0.0, 1.0)]);
    let e = s.interim(0, 0.8, 64, 4096, 3).unwrap();
    assert_eq!(e.expected_rate.std_error, 0.0);
    assert_eq!(e.expected_payment.std_error, 0.0);
    assert!((e.expected_rate.mean - 2f64.ln()).abs() < 1e-12);
}

#[test]
fn all_negative_virtual_types_earn_nothing() {
    // Uniform [0, 1] has w = 2θ − 1, negative below 1/2.
    let s = scenario(1.0, &[1.0, 2.0], &[(0.0, 1.0), (0.0, 1.0)]);
    let out = s.outcome(&[0.1, 0.45], 32).unwrap();
    assert_eq!(out.allocation.bandwidth, vec![0.0, 0.0]);
    assert_eq!(out.payments.payments, vec![0.0, 0.0]);
}

#[test]
fn revenue_identity_and_omniscient_bound() {
    let s = scenario(2.0, &[1.0, 0.5], &[(0.0, 1.0), (0.0, 1.0)]);
    let rev = s.expected_revenue(64, 2048, 5).unwrap();
    assert!(rev.identity_holds, "{rev:?}");
    assert!(rev.via_payments.mean <= rev.omniscient_bound.mean);
    assert!(rev.via_payments.mean > 0.0);
}

#[test]
fn monte_carlo_is_reproducible() {
    let s = scenario(2.0, &[1.0, 0.5], &[(0.0, 1.0), (0.0, 1.0)]);
    let a = s.expected_revenue(16, 512, 9).unwrap();
    let b = s.expected_revenue(16, 512, 9).unwrap();
    assert_eq!(a, b);
}
