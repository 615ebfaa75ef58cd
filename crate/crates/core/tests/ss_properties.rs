use proptest::prelude::*;
use spectramech::rate::SsPhysical;
use spectramech::ss::{project_capped_simplex, SsScenario, SsSolverOptions};
use spectramech::types::{TypeDistribution, VirtualTypeProfile};

fn scenario(gains: Vec<Vec<f64>>, total_power: f64) -> SsScenario {
    let n = gains.len();
    let phys = SsPhysical::new(gains, 1.0, 0.5).unwrap();
    let dists = vec![TypeDistribution::uniform(0.0, 1.0).unwrap(); n];
    SsScenario::new(total_power, phys, VirtualTypeProfile::certify(dists, 256, false).unwrap()).unwrap()
}

fn gains(n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.05f64..3.0, n), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_is_feasible_idempotent_and_nearest(y in prop::collection::vec(-3.0f64..3.0, 1..6), cap in 0.1f64..4.0,
                                                     probe in prop::collection::vec(0.0f64..1.0, 6)) {
        let x = project_capped_simplex(&y, cap);
        prop_assert!(x.iter().all(|&v| v >= 0.0));
        prop_assert!(x.iter().sum::<f64>() <= cap * (1.0 + 1e-12));
        let again = project_capped_simplex(&x, cap);
        for (a, b) in x.iter().zip(&again) {
            prop_assert!((a - b).abs() <= 1e-12 * cap);
        }
        // Any other feasible point is no closer to y.
        let total: f64 = probe[..y.len()].iter().sum::<f64>().max(1.0);
        let z: Vec<f64> = probe[..y.len()].iter().map(|p| cap * p / total).collect();
        let d = |u: &[f64]| u.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        prop_assert!(d(&x) <= d(&z) + 1e-12);
    }

    #[test]
    fn allocation_feasible_and_no_worse_than_deterministic_starts(g in (2usize..4).prop_flat_map(gains),
                                                                  t in prop::collection::vec(0.0f64..1.0, 3),
                                                                  p in 0.5f64..5.0) {
        let n = g.len();
        let s = scenario(g, p);
        let opts = SsSolverOptions { restarts: 4, ..Default::default() };
        let reports = &t[..n];
        let a = s.allocate(reports, &opts).unwrap();
        prop_assert!(a.power.iter().all(|&x| x >= 0.0));
        prop_assert!(a.power.iter().sum::<f64>() <= p * (1.0 + 1e-12));
        let w = s.profile.virtual_types(reports).unwrap();
        let mut candidates = vec![vec![p / n as f64; n]];
        for i in 0..n {
            let mut x = vec![0.0; n];
            x[i] = p;
            candidates.push(x);
        }
        for x in candidates {
            let (v, _) = s.objective_and_gradient(&w, &x).unwrap();
            prop_assert!(a.objective >= v - 1e-12 * v.abs().max(1.0));
        }
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let s = scenario(vec![vec![1.0, 0.4, 0.2], vec![0.3, 2.0, 0.5], vec![0.1, 0.6, 1.5]], 3.0);
    let w = [0.7, -0.2, 0.4];
    let x = [0.8, 1.1, 0.6];
    let (_, g) = s.objective_and_gradient(&w, &x).unwrap();
    for j in 0..3 {
        let h = 1e-6;
        let (mut up, mut dn) = (x, x);
        up[j] += h;
        dn[j] -= h;
        let fd = (s.objective_and_gradient(&w, &up).unwrap().0 - s.objective_and_gradient(&w, &dn).unwrap().0) / (2.0 * h);
        assert!((fd - g[j]).abs() <= 1e-6 * g[j].abs().max(1.0), "j={j} {fd} vs {}", g[j]);
    }
}

#[test]
fn solver_is_deterministic_for_a_seed() {
    let s = scenario(vec![vec![1.0, 0.8], vec![0.9, 1.2]], 2.0);
    let opts = SsSolverOptions { restarts: 8, seed: 17, ..Default::default() };
    let a = s.allocate(&[0.8, 0.9], &opts).unwrap();
    let b = s.allocate(&[0.8, 0.9], &opts).unwrap();
    assert_eq!(a, b);
    assert!(a.converged_restarts > 0);
    assert!(a.kkt_residual_projected <= opts.tolerance);
}

#[test]
fn negative_virtual_types_get_no_power() {
    let s = scenario(vec![vec![1.0, 0.2], vec![0.2, 1.0]], 2.0);
    let out = s.outcome(&[0.1, 0.3], 16, &SsSolverOptions::default()).unwrap();
    assert_eq!(out.allocation.power, vec![0.0, 0.0]);
    assert_eq!(out.payments.payments, vec![0.0, 0.0]);
}

#[test]
fn tax_is_zero_at_lowest_type() {
    let s = scenario(vec![vec![1.0, 0.2], vec![0.2, 1.0]], 2.0);
    let p = s.payments(&[0.0, 0.9], 32, &SsSolverOptions::default()).unwrap();
    assert_eq!(p.payments[0], 0.0);
    assert!(p.payments[1] > 0.0);
}
