use proptest::prelude::*;
use spectramech::rate::{FdUserPhysical, GainDensity, GainDistribution, Slope, SsPhysical};

fn gain_strategy() -> impl Strategy<Value = GainDistribution> {
    prop_oneof![
        (0.05f64..5.0).prop_map(|value| GainDistribution::Deterministic { value }),
        prop::collection::vec((0.05f64..5.0, 0.1f64..1.0), 1..5).prop_map(|raw| {
            let total: f64 = raw.iter().map(|p| p.1).sum();
            let mut points: Vec<(f64, f64)> = raw.iter().map(|&(h, p)| (h, p / total)).collect();
            // Make the probabilities sum to one to the last bit.
            let rest: f64 = points[1..].iter().map(|p| p.1).sum();
            points[0].1 = 1.0 - rest;
            GainDistribution::Discrete { points }
        }),
        (0.05f64..1.0, 1.0f64..5.0, prop::bool::ANY, 0.2f64..3.0).prop_map(|(lo, hi, expo, mean)| {
            let density = if expo { GainDensity::TruncatedExponential { mean } } else { GainDensity::Uniform };
            GainDistribution::Continuous { lo, hi, density, order: None }
        }),
    ]
}

fn user_strategy() -> impl Strategy<Value = FdUserPhysical> {
    (gain_strategy(), 0.1f64..10.0, 0.01f64..2.0)
        .prop_map(|(g, p, n0)| FdUserPhysical::new(g, p, n0).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn expected_rate_is_increasing_and_concave(u in user_strategy(), w in 0.1f64..20.0) {
        let xs: Vec<f64> = (1..=60).map(|k| w * k as f64 / 60.0).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| u.expected_rate(x).unwrap()).collect();
        for k in 1..ys.len() {
            prop_assert!(ys[k] >= ys[k - 1]);
        }
        for k in 2..ys.len() {
            let left = (ys[k - 1] - ys[k - 2]) / (xs[k - 1] - xs[k - 2]);
            let right = (ys[k] - ys[k - 1]) / (xs[k] - xs[k - 1]);
            prop_assert!(left >= right - 1e-12 * left.abs().max(1.0));
        }
    }

    #[test]
    fn derivative_matches_central_difference(u in user_strategy(), w in 0.1f64..20.0, t in 0.01f64..1.0) {
        let x = t * w;
        let h = 1e-4 * x;
        let fd = (u.expected_rate(x + h).unwrap() - u.expected_rate(x - h).unwrap()) / (2.0 * h);
        let d = u.expected_rate_derivative(x).unwrap().finite().unwrap();
        prop_assert!(d > 0.0);
        prop_assert!((fd - d).abs() <= 1e-5 * d, "x={x} analytic={d} fd={fd}");
        prop_assert!(u.expected_rate_second_derivative(x).unwrap() < 0.0);
    }

    #[test]
    fn bandwidth_for_slope_inverts_derivative(u in user_strategy(), x in 1e-3f64..50.0) {
        let Slope::Finite(slope) = u.expected_rate_derivative(x).unwrap() else { unreachable!() };
        let back = u.bandwidth_for_slope(slope, 1.0).unwrap();
        prop_assert!((back - x).abs() <= 1e-9 * x, "x={x} back={back}");
    }

    #[test]
    fn interference_rate_monotone_in_powers(
        n in 2usize..5,
        seed_gains in prop::collection::vec(0.05f64..3.0, 16),
        seed_powers in prop::collection::vec(0.0f64..4.0, 4),
        bump in 0.01f64..2.0,
    ) {
        let gains: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| seed_gains[i * 4 + j]).collect()).collect();
        let phys = SsPhysical::new(gains, 1.5, 0.3).unwrap();
        let p: Vec<f64> = seed_powers[..n].to_vec();
        for i in 0..n {
            let base = phys.interference_rate(&p, i).unwrap();
            for j in 0..n {
                let mut q = p.clone();
                q[j] += bump;
                let moved = phys.interference_rate(&q, i).unwrap();
                if i == j {
                    prop_assert!(moved >= base);
                } else {
                    prop_assert!(moved <= base);
                }
            }
        }
    }
}

#[test]
fn zero_bandwidth_rate_and_sentinel() {
    let u = FdUserPhysical::new(GainDistribution::Deterministic { value: 2.0 }, 1.0, 1.0).unwrap();
    assert_eq!(u.expected_rate(0.0).unwrap(), 0.0);
    assert_eq!(u.expected_rate_derivative(0.0).unwrap(), Slope::Unbounded);
}

#[test]
fn invalid_gain_distributions_rejected() {
    let bad = [
        GainDistribution::Deterministic { value: 0.0 },
        GainDistribution::Discrete { points: vec![(1.0, 0.5), (2.0, 0.4)] },
        GainDistribution::Discrete { points: vec![(-1.0, 1.0)] },
        GainDistribution::Continuous { lo: 2.0, hi: 1.0, density: GainDensity::Uniform, order: None },
    ];
    for g in bad {
        assert!(FdUserPhysical::new(g, 1.0, 1.0).is_err());
    }
    let ok = GainDistribution::Deterministic { value: 1.0 };
    assert!(FdUserPhysical::new(ok.clone(), 0.0, 1.0).is_err());
    assert!(FdUserPhysical::new(ok, 1.0, 0.0).is_err());
}

#[test]
fn interference_gradient_spec_cases() {
    let one = SsPhysical::new(vec![vec![1.0]], 1.0, 1.0).unwrap();
    assert!((one.interference_rate(&[1.0], 0).unwrap() - 2f64.ln()).abs() < 1e-15);
    let g = one.interference_rate_gradient(&[1.0], 0).unwrap();
    assert!((g[0] - 0.5).abs() < 1e-15);

    let two = SsPhysical::new(vec![vec![1.0, 1.0], vec![1.0, 1.0]], 1.0, 1.0).unwrap();
    for i in 0..2 {
        assert!((two.interference_rate(&[1.0, 1.0], i).unwrap() - 1.5f64.ln()).abs() < 1e-15);
        assert_eq!(two.interference_rate(&[0.0, 0.0], i).unwrap(), 0.0);
        let g = two.interference_rate_gradient(&[0.0, 0.0], i).unwrap();
        assert_eq!(g[1 - i], 0.0);
    }
    assert!(two.interference_rate(&[-1.0, 1.0], 0).is_err());
}
