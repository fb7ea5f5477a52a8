use std::collections::HashMap;
use std::path::Path;

use oracle_select::agents::{AgentKind, RoundRobin};
use oracle_select::domain::ScenarioError;
use oracle_select::env::OracleEnv;
use oracle_select::experiments::{export_run, run_agent, run_episode};
use oracle_select::metrics::import_report;
use oracle_select::ScenarioConfig;
use proptest::prelude::*;

fn small() -> ScenarioConfig {
    let mut c = ScenarioConfig::default();
    c.requests.count = 360;
    c.window.requests_per_window = 60;
    c.dqn.train_episodes = 1;
    c
}

#[test]
fn committed_scenario_is_the_default() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/acceptance.json");
    assert_eq!(ScenarioConfig::load(&path).unwrap(), ScenarioConfig::default());
}

#[test]
fn scenario_errors_name_the_field() {
    let mut raw: serde_json::Value = serde_json::from_str(&ScenarioConfig::default().to_json_pretty()).unwrap();
    raw["dqn"]["batch_size"] = serde_json::json!("thirty");
    let err = ScenarioConfig::from_json_str(&raw.to_string()).unwrap_err();
    assert!(matches!(err, ScenarioError::Parse { .. }));
    assert_eq!(err.path(), "dqn.batch_size");

    let mut raw: serde_json::Value = serde_json::from_str(&ScenarioConfig::default().to_json_pretty()).unwrap();
    raw["trust"]["behavior_weight"] = serde_json::json!(0.9);
    let err = ScenarioConfig::from_json_str(&raw.to_string()).unwrap_err();
    assert_eq!(err.path(), "trust");
}

#[test]
fn exported_reports_read_back() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_agent(AgentKind::TcoDrl, &small(), 5).unwrap();
    export_run(&run, dir.path()).unwrap();
    assert_eq!(import_report(dir.path()).unwrap(), run.report);
    assert_eq!(import_report(&dir.path().join("cold-start")).unwrap(), run.cold_start.unwrap());
    for f in ["records.csv", "trust.csv", "frozen/summary.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Queue and bookkeeping invariants of any episode.
    #[test]
    fn episode_invariants(seed in any::<u64>(), noise in 0.0f64..=1.0) {
        let mut cfg = small();
        cfg.noise = noise;
        let mut env = OracleEnv::new(cfg.clone(), seed).unwrap();
        run_episode(&mut env, &mut RoundRobin::new()).unwrap();
        let log = env.log();
        prop_assert_eq!(log.records.len(), cfg.requests.count);
        prop_assert_eq!(log.rewards.len(), cfg.requests.count);
        let served: u32 = log.selection_trace.iter().flatten().sum();
        prop_assert_eq!(served as usize, cfg.requests.count);
        prop_assert_eq!(log.reputation_trace.len(), cfg.requests.count / cfg.window.requests_per_window);

        let mut last_finish: HashMap<usize, f64> = HashMap::new();
        for r in &log.records {
            prop_assert!(r.start_ts >= r.arrival_ts);
            prop_assert!(r.response_time >= r.exe_time - 1e-9);
            prop_assert!(!r.success || r.verified);
            // each oracle serves its queue in order, one request at a time
            let prev = last_finish.insert(r.oid, r.finish_ts).unwrap_or(0.0);
            prop_assert!(r.start_ts >= prev - 1e-9);
        }
    }
}
