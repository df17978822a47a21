use npa_core::algebra::Scenario;
use npa_core::analysis::{analyze, recheck_report, simulated_table, AnalysisRequest, Source, Verdict, VerdictReport};
use npa_core::format::{ingest_table, table_to_json};
use npa_core::hierarchy::PinPolicy;
use npa_core::quantum::{StateKind, SuiteKind};
use npa_core::sdp::SolverConfig;
use proptest::prelude::*;

fn state() -> impl Strategy<Value = StateKind> {
    prop_oneof![
        Just(StateKind::W),
        Just(StateKind::Ghz),
        Just(StateKind::GraphLinear),
        Just(StateKind::GraphLoop),
        prop::collection::vec(any::<bool>(), 3).prop_map(StateKind::Basis),
    ]
}

fn suite() -> impl Strategy<Value = SuiteKind> {
    prop_oneof![Just(SuiteKind::W), Just(SuiteKind::Ghz), Just(SuiteKind::Graph)]
}

fn quick(seed: u64) -> SolverConfig {
    SolverConfig {
        max_iters: 300,
        restarts: 2,
        seed,
        ..SolverConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // every standard observable is traceless, so white noise scales moments
    #[test]
    fn tables_scale_with_visibility(state in state(), suite in suite(), p in 0.0f64..=1.0) {
        let scenario = Scenario::dichotomic(3, suite.settings()).unwrap();
        let full = simulated_table(&state, suite, 1.0, &scenario, 2).unwrap();
        let mixed = simulated_table(&state, suite, p, &scenario, 2).unwrap();
        for (k, m) in mixed.iter() {
            prop_assert!((m.value - p * full.get(k).unwrap().value).abs() <= 1e-10);
        }
    }

    #[test]
    fn serialized_tables_give_identical_bodies(state in state(), p in 0.0f64..=1.0, seed in 0u64..4) {
        let mut direct = AnalysisRequest::simulated(state.clone(), SuiteKind::Ghz, p).unwrap();
        direct.solver = quick(seed);
        let table = simulated_table(&state, SuiteKind::Ghz, p, &direct.scenario, 2).unwrap();
        let measured = AnalysisRequest {
            source: Source::Measured(ingest_table(&table_to_json(&table)).unwrap()),
            ..direct.clone()
        };
        let a = analyze(&direct).unwrap();
        let b = analyze(&measured).unwrap();
        prop_assert_eq!(serde_json::to_string(&a.body).unwrap(), serde_json::to_string(&b.body).unwrap());
    }

    #[test]
    fn nonlocal_reports_survive_serialization(p in 0.85f64..=1.0, policy in prop_oneof![Just(PinPolicy::All), Just(PinPolicy::MaxBodies(2))]) {
        let mut req = AnalysisRequest::simulated(StateKind::W, SuiteKind::W, p).unwrap();
        req.policy = policy;
        req.solver = quick(0);
        let report = analyze(&req).unwrap();
        let back = VerdictReport::from_json(&report.to_json()).unwrap();
        prop_assert_eq!(&back, &report);
        if report.verdict() == Verdict::Nonlocal {
            prop_assert!(recheck_report(&back).unwrap());
        }
    }
}

#[test]
fn noise_eventually_hides_nonlocality() {
    let mut verdicts = Vec::new();
    for p in [1.0, 0.5, 0.0] {
        let mut req = AnalysisRequest::simulated(StateKind::W, SuiteKind::W, p).unwrap();
        req.solver = quick(0);
        verdicts.push(analyze(&req).unwrap().verdict());
    }
    assert_eq!(verdicts, [Verdict::Nonlocal, Verdict::Inconclusive, Verdict::Inconclusive]);
}

#[test]
fn higher_level_still_detects_w() {
    let mut req = AnalysisRequest::simulated(StateKind::W, SuiteKind::W, 1.0).unwrap();
    req.level = 3;
    req.solver = quick(0);
    let report = analyze(&req).unwrap();
    assert_eq!(report.verdict(), Verdict::Nonlocal);
    assert!(recheck_report(&report).unwrap());
}
