use std::io::Write;
use std::sync::{Arc, OnceLock};

use sasc_core::filter::AllocationMode;
use sasc_core::imitation::PolicyNet;
use sasc_core::koopman::{collect_random_transitions, fit, KoopmanModel};
use sasc_core::pilots::{Pilot, PilotSpec};
use sasc_core::sessions::{
    append_trajectory, compute_metrics, demonstrations, load_trajectories, read_log, replay_trajectory, run_trial,
    transitions, DatasetFilter, GroupBy, LabConfig, OutcomeFilter, Paradigm, SessionError, TrialSeeds, Trajectory,
    SCHEMA_VERSION,
};
use sasc_core::world::{make_environment, EnvId};

fn model() -> Arc<KoopmanModel> {
    static MODEL: OnceLock<Arc<KoopmanModel>> = OnceLock::new();
    MODEL
        .get_or_init(|| {
            let cfg = LabConfig::default();
            let env = make_environment(EnvId::Open, &cfg.layout, &cfg.physics, 0).unwrap();
            let data = collect_random_transitions(&env, &cfg.physics, 3000, &cfg.koopman.sampling, 3);
            Arc::new(fit(&data, cfg.koopman.ridge).unwrap())
        })
        .clone()
}

fn fly(env: EnvId, paradigm: Paradigm, spec: PilotSpec, seed: u64) -> Trajectory {
    let cfg = LabConfig::default();
    let label = spec.source_label();
    let mut pilot = Pilot::new(spec).unwrap();
    let m = paradigm.is_shared().then(model);
    let seeds = TrialSeeds { env: seed, source: seed };
    run_trial(format!("t{seed}"), env, paradigm, label, &mut pilot, seeds, &cfg, m).unwrap()
}

#[test]
fn expert_in_open_world_succeeds_without_interventions() {
    let t = fly(EnvId::Open, Paradigm::Shared, PilotSpec::expert(0), 0);
    assert!(t.outcome.is_success(), "{}", t.outcome.label());
    assert_eq!(t.metrics.replace_count, 0);
    // Path length is at least the straight spawn-to-goal distance.
    assert!(t.metrics.path_length >= t.header.layout.goal_x - t.header.layout.spawn[0]);
}

#[test]
fn paradigm_separation() {
    let user = fly(EnvId::NarrowPassage, Paradigm::UserOnly, PilotSpec::novice(1), 1);
    assert!(user.steps.iter().all(|s| s.mode.is_none() && s.u_sa_a.is_none() && s.applied == s.u_source));
    assert_eq!((user.metrics.replace_count, user.metrics.reject_count), (0, 0));
    let shared = fly(EnvId::NarrowPassage, Paradigm::Shared, PilotSpec::novice(1), 1);
    assert!(shared.steps.iter().all(|s| s.mode.is_some() && s.u_sa_a.is_some()));
}

#[test]
fn steps_are_contiguous_and_inside_d_safe_is_always_replace() {
    let cfg = LabConfig::default();
    let t = fly(EnvId::DynamicObstacles, Paradigm::Shared, PilotSpec::adversarial(2), 2);
    assert!(t.outcome.is_terminal());
    for (k, s) in t.steps.iter().enumerate() {
        assert_eq!(s.k, k);
        assert!((s.t - k as f64 * cfg.physics.dt).abs() < 1e-12);
        if s.distance < cfg.safety.d_safe {
            assert_eq!(s.mode, Some(AllocationMode::Replace));
        }
    }
}

#[test]
fn learned_policy_is_filtered_like_an_operator() {
    // An untrained network is an arbitrary command source.
    let cfg = LabConfig::default();
    for seed in 0..3 {
        let mut net = PolicyNet::classifier(seed);
        let t = run_trial("il", EnvId::NarrowPassage, Paradigm::IlShared, "random", &mut net, TrialSeeds::default(), &cfg, Some(model()))
            .unwrap();
        let inside: Vec<_> = t.steps.iter().filter(|s| s.distance < cfg.safety.d_safe).collect();
        assert!(inside.iter().all(|s| s.mode == Some(AllocationMode::Replace)));
        assert!(replay_trajectory(&t).unwrap().is_exact());
    }
}

#[test]
fn log_round_trip_filters_and_fenceposts() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.jsonl");
    let trials = vec![
        fly(EnvId::Open, Paradigm::Shared, PilotSpec::expert(0), 0),
        fly(EnvId::Open, Paradigm::UserOnly, PilotSpec::adversarial(1), 1),
        fly(EnvId::NarrowPassage, Paradigm::UserOnly, PilotSpec::novice(2), 2),
    ];
    for t in &trials {
        append_trajectory(&path, t).unwrap();
    }
    let back = read_log(&path).unwrap();
    assert_eq!(back, trials);
    assert!(back.iter().all(|t| t.schema == SCHEMA_VERSION && replay_trajectory(t).unwrap().is_exact()));

    let only_success = DatasetFilter { outcome: Some(OutcomeFilter::Success), ..Default::default() };
    let wins = load_trajectories(&[&path], &only_success).unwrap();
    assert!(!wins.is_empty() && wins.iter().all(|t| t.outcome.is_success()));
    let user_only = DatasetFilter { paradigm: Some(Paradigm::UserOnly), env: Some(EnvId::Open), ..Default::default() };
    assert_eq!(load_trajectories(&[&path], &user_only).unwrap().len(), 1);

    let data = transitions(&trials, false);
    let expected: usize = trials.iter().map(|t| t.steps.len() - 1).sum();
    assert_eq!(data.len(), expected);
    assert!(data.transitions.iter().all(|tr| tr.control.main >= 0.0));

    let demos = demonstrations(&trials);
    let success_steps: usize = trials.iter().filter(|t| t.outcome.is_success()).map(|t| t.steps.len()).sum();
    assert_eq!(demos.len(), success_steps);
}

#[test]
fn truncated_last_line_is_skipped_but_corruption_elsewhere_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.jsonl");
    let t = fly(EnvId::Open, Paradigm::UserOnly, PilotSpec::expert(0), 0);
    append_trajectory(&path, &t).unwrap();
    let line = t.to_json_line().unwrap();
    let mut f = std::fs::OpenOptions::new().append(true).open(&path).unwrap();
    f.write_all(&line.as_bytes()[..line.len() / 2]).unwrap();
    drop(f);
    assert_eq!(read_log(&path).unwrap(), vec![t.clone()]);

    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, format!("{{not json\n{line}\n")).unwrap();
    assert!(matches!(read_log(&bad), Err(SessionError::Parse { line: 1, .. })));
}

#[test]
fn other_schema_versions_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("old.jsonl");
    let mut t = fly(EnvId::Open, Paradigm::UserOnly, PilotSpec::expert(0), 0);
    t.schema = SCHEMA_VERSION + 1;
    append_trajectory(&path, &t).unwrap();
    match read_log(&path) {
        Err(SessionError::Schema { found, expected }) => assert_eq!((found, expected), (SCHEMA_VERSION + 1, SCHEMA_VERSION)),
        other => panic!("{other:?}"),
    }
}

#[test]
fn metrics_agree_with_raw_outcomes() {
    let trials: Vec<Trajectory> = (0..6)
        .flat_map(|s| {
            [Paradigm::UserOnly, Paradigm::Shared].map(|p| fly(EnvId::Open, p, PilotSpec::novice(s), s))
        })
        .collect();
    let rows = compute_metrics(&trials, GroupBy::ENV_AND_PARADIGM);
    assert_eq!(rows.len(), 2);
    for row in &rows {
        let members: Vec<_> = trials.iter().filter(|t| Some(t.header.paradigm.as_str()) == row.paradigm.as_deref()).collect();
        let wins = members.iter().filter(|t| t.outcome.is_success()).count();
        assert_eq!(row.trials, members.len());
        assert_eq!(row.successes, wins);
        assert_eq!(row.success_fraction, wins as f64 / members.len() as f64);
        assert_eq!(row.final_speed.is_none(), wins == 0);
    }
    let all = compute_metrics(&trials, GroupBy::default());
    assert_eq!(all.len(), 1);
    assert_eq!(all[0].trials, 12);
}
