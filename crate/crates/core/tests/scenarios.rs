use leashsim::adversary::{random_lra, run_scenario, threat_boundary_trial};
use leashsim::scenario::{bundled, bundled_names, Scenario};
use primitive_types::U256;
use proptest::prelude::*;

fn scenarios() -> impl Iterator<Item = Scenario> {
    bundled_names()
        .filter(|n| *n != "demo_chain")
        .map(|n| Scenario::parse(bundled(n).unwrap()).unwrap())
}

#[test]
fn bundled_expectations_hold() {
    for s in scenarios() {
        let r = run_scenario(&s).unwrap_or_else(|e| panic!("{}: {e}", s.name));
        let misses = r.check(&s.expect);
        assert!(misses.is_empty(), "{}: {misses:?}\n{}", s.name, r.to_text());
    }
}

#[test]
fn reports_are_byte_identical() {
    for s in scenarios() {
        assert_eq!(
            run_scenario(&s).unwrap().to_text(),
            run_scenario(&s).unwrap().to_text(),
            "{}",
            s.name
        );
    }
}

#[test]
fn seed_changes_report() {
    let mut s = Scenario::parse(bundled("canonical_lra").unwrap()).unwrap();
    let a = run_scenario(&s).unwrap().to_text();
    s.seed += 1;
    assert_ne!(a, run_scenario(&s).unwrap().to_text());
}

#[test]
fn canonical_report_shape() {
    let s = Scenario::parse(bundled("canonical_lra").unwrap()).unwrap();
    let text = run_scenario(&s).unwrap().to_text();
    assert!(text.starts_with("leashsim-report/1\n"));
    assert!(
        text.contains(
            "| leashed   |      1 | Reverted(AnchorHashMismatch) |          0 |          10 |"
        ),
        "{text}"
    );
    assert!(
        text.contains(
            "| unleashed |      1 | Committed                    |      50000 |       50010 |"
        ),
        "{text}"
    );
}

#[test]
fn threat_boundary_over_random_histories() {
    for seed in 0..20 {
        let t = threat_boundary_trial(seed).unwrap();
        assert!(t.holds(), "{t:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn side_anchored_leashes_never_commit(seed in any::<u64>()) {
        let s = random_lra(seed);
        let r = run_scenario(&s).unwrap();
        let leashed = r.arm(true);
        for round in &leashed.rounds {
            prop_assert_ne!(&round.outcome, "Committed");
            prop_assert_ne!(round.anchored_on_consensus, Some(true));
        }
        prop_assert_eq!(leashed.harm, U256::zero());
        let unleashed = r.arm(false);
        prop_assert!(leashed.harm <= unleashed.harm);
    }
}
