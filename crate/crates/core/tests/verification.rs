use spectramech::fd::FdScenario;
use spectramech::rate::{FdUserPhysical, GainDistribution};
use spectramech::types::{TypeDistribution, VirtualTypeProfile};
use spectramech::verification::adversarial::{FlatFee, ReportProportional};
use spectramech::verification::{
    default_grids, verify_ir, verify_monotone_interim, verify_payment_identity, verify_suite, Suite,
    VerificationReport, VerifyOptions,
};

fn fd(gains: &[f64]) -> FdScenario {
    let users = gains
        .iter()
        .map(|&h| FdUserPhysical::new(GainDistribution::Deterministic { value: h }, 1.0, 1.0).unwrap())
        .collect();
    let dists = vec![TypeDistribution::uniform(0.0, 1.0).unwrap(); gains.len()];
    FdScenario::new(1.0, users, VirtualTypeProfile::certify(dists, 256, false).unwrap()).unwrap()
}

fn opts(mc: usize) -> VerifyOptions {
    VerifyOptions { mc_samples: mc, seed: 4, ..Default::default() }
}

#[test]
fn single_user_fd_passes_every_check() {
    let s = fd(&[1.0]);
    let mech = s.mechanism(64);
    let grids = default_grids(&mech, 9).unwrap();
    let r = verify_suite(&mech, Suite::All, &grids, &opts(64)).unwrap();
    assert!(r.passed, "{r:#?}");
    assert_eq!(r.ic.len(), 9);
    assert_eq!(r.ir.as_ref().unwrap().entries.len(), 9);

    let json = serde_json::to_string(&r).unwrap();
    let back: VerificationReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, r);
}

#[test]
fn ir_utility_nonnegative_and_nondecreasing() {
    let s = fd(&[1.0, 0.5]);
    let mech = s.mechanism(32);
    let grids = default_grids(&mech, 9).unwrap();
    let ir = verify_ir(&mech, &grids, &opts(256)).unwrap();
    assert!(ir.passed);
    for user in 0..2 {
        let v: Vec<f64> = ir.entries.iter().filter(|e| e.user == user).map(|e| e.utility.mean).collect();
        assert_eq!(v[0], 0.0, "lowest type earns nothing");
        for k in 1..v.len() {
            assert!(v[k] >= v[k - 1] - 1e-12, "user {user}: {v:?}");
        }
    }
}

#[test]
fn identity_and_monotonicity_hold_for_two_users() {
    let s = fd(&[1.0, 0.5]);
    let mech = s.mechanism(64);
    let reports: Vec<f64> = (0..=8).map(|k| k as f64 / 8.0).collect();
    let id = verify_payment_identity(&mech, 1, &reports, &opts(512)).unwrap();
    assert!(id.passed, "{id:#?}");
    let mono = verify_monotone_interim(&mech, 0, &reports, &opts(512)).unwrap();
    assert!(mono.passed);
    assert_eq!(mono.nonmonotone_steps, 0);
}

#[test]
fn adversarial_mechanisms_are_rejected() {
    let u = TypeDistribution::uniform(0.0, 1.0).unwrap();
    let proportional = ReportProportional { distributions: vec![u.clone(), u], rates: vec![1.0, 0.5] };
    let grids = default_grids(&proportional, 5).unwrap();
    let r = verify_suite(&proportional, Suite::All, &grids, &opts(64)).unwrap();
    assert!(!r.passed);
    assert!(r.ic.iter().any(|c| !c.passed));
    assert!(r.identity.iter().any(|c| !c.passed));

    let s = fd(&[1.0]);
    let flat = FlatFee { inner: s.mechanism(64), fee: 0.2 };
    let grids = default_grids(&flat, 9).unwrap();
    let r = verify_suite(&flat, Suite::All, &grids, &opts(64)).unwrap();
    assert!(r.ic.iter().any(|c| !c.passed));
    assert!(r.identity.iter().any(|c| !c.passed));
}

#[test]
fn verdicts_only_loosen_with_tolerance() {
    let u = TypeDistribution::uniform(0.0, 1.0).unwrap();
    let m = ReportProportional { distributions: vec![u], rates: vec![1.0] };
    let grids = default_grids(&m, 5).unwrap();
    let mut prev = 0;
    for extra in [0.0, 0.1, 0.3, 1.0, 10.0] {
        let o = VerifyOptions { extra_tolerance: extra, ..opts(16) };
        let r = verify_suite(&m, Suite::Ic, &grids, &o).unwrap();
        let passing = r.ic.iter().filter(|c| c.passed).count();
        assert!(passing >= prev);
        prev = passing;
    }
    assert_eq!(prev, 5);
}

#[test]
fn grids_outside_support_are_rejected() {
    let s = fd(&[1.0]);
    let mech = s.mechanism(16);
    assert!(verify_suite(&mech, Suite::All, &[vec![0.5, 1.5]], &opts(16)).is_err());
    assert!(verify_suite(&mech, Suite::All, &[], &opts(16)).is_err());
}
