use std::sync::OnceLock;

use proptest::prelude::*;
use sasc_core::imitation::{decode_control, encode_control, softmax, PolicyNet, NUM_CLASSES};
use sasc_core::koopman::{collect_random_transitions, fit, KoopmanModel};
use sasc_core::safe_policy::{predicted_cost, sac_action};
use sasc_core::sessions::LabConfig;
use sasc_core::world::{make_environment, step, Control, EnvId, Environment, LanderState};

fn model() -> &'static KoopmanModel {
    static MODEL: OnceLock<KoopmanModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let cfg = LabConfig::default();
        let env = make_environment(EnvId::Open, &cfg.layout, &cfg.physics, 0).unwrap();
        fit(&collect_random_transitions(&env, &cfg.physics, 3000, &cfg.koopman.sampling, 4), cfg.koopman.ridge).unwrap()
    })
}

fn env(id: EnvId) -> Environment {
    let cfg = LabConfig::default();
    make_environment(id, &cfg.layout, &cfg.physics, 1).unwrap()
}

fn state() -> impl Strategy<Value = LanderState> {
    (3.0..37.0, 3.0..27.0, -0.8..0.8, -3.0..3.0, -3.0..3.0, -1.5..1.5)
        .prop_map(|(x, y, h, vx, vy, w)| LanderState::new(x, y, h, vx, vy, w))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn sac_action_never_raises_predicted_cost(s in state(), t in 0.0..60.0f64, which in 0usize..3) {
        let cfg = LabConfig::default();
        let e = env(EnvId::ALL[which]);
        let a = sac_action(model(), &s, &e, t, &cfg.cost);
        prop_assert!(a.control.is_finite());
        prop_assert!(a.control.main.abs() <= 1.0 && a.control.side.abs() <= 1.0);
        if !a.fallback {
            let j0 = predicted_cost(model(), &s, &[], &e, t, &cfg.cost);
            let ja = predicted_cost(model(), &s, &[a.control], &e, t, &cfg.cost);
            prop_assert!(ja <= j0, "{ja} > {j0}");
        }
    }

    #[test]
    fn learned_model_tracks_the_simulator_in_free_flight(
        s in state(), main in 0.0..1.0f64, side in -1.0..1.0f64
    ) {
        let cfg = LabConfig::default();
        let e = env(EnvId::Open);
        let u = Control::new(main, side);
        let truth = step(&s, u, &e, &cfg.physics, 0.0).unwrap().to_array();
        let pred = model().predict_next(&s, &u).to_array();
        for i in 0..6 {
            prop_assert!((truth[i] - pred[i]).abs() < 1e-6, "component {i}: {} vs {}", truth[i], pred[i]);
        }
    }

    #[test]
    fn policy_output_is_a_grid_control(s in state(), seed in any::<u64>()) {
        let net = PolicyNet::classifier(seed);
        let u = net.act(&s);
        prop_assert_eq!(decode_control(encode_control(&u)), u);
        let p = net.probabilities(&s);
        prop_assert_eq!(p.len(), NUM_CLASSES);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_is_shift_invariant(logits in prop::collection::vec(-50.0..50.0f64, 1..30), c in -100.0..100.0f64) {
        let shifted: Vec<f64> = logits.iter().map(|v| v + c).collect();
        for (a, b) in softmax(&logits).iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
