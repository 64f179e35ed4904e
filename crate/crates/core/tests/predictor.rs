use std::sync::OnceLock;

use nalgebra::{Point2, Rotation2, Vector2};
use proptest::prelude::*;
use tasnsc::benchmark::Scene;
use tasnsc::metrics::angular_deviation;
use tasnsc::synthgen::{generate_tracks, scene_a, scene_b, Intent, PerIntent, SceneSpec};
use tasnsc::trajectory::{split_horizon, steps_for};
use tasnsc::{
    predict, train, CurbsideFrame, Dataset, Error, Mode, PipelineConfig, Split, TasnscModel,
    Trajectory,
};

fn scene_a_data() -> &'static Scene {
    static SCENE: OnceLock<Scene> = OnceLock::new();
    SCENE.get_or_init(|| Scene::synthetic(&scene_a(), 150, 30, 0.5).unwrap())
}

fn model_a() -> &'static TasnscModel {
    static MODEL: OnceLock<TasnscModel> = OnceLock::new();
    MODEL.get_or_init(|| train(&scene_a_data().train, &PipelineConfig::default()).unwrap())
}

fn observation(traj: &Trajectory, cfg: &PipelineConfig) -> (Trajectory, Trajectory) {
    split_horizon(traj, cfg.t_obs, cfg.t_pred).unwrap()
}

#[test]
fn likelihoods_normalize_and_rollouts_have_horizon_length() {
    let model = model_a();
    let scene = scene_a_data();
    let steps = steps_for(model.config.t_pred, 0.5);
    for traj in &scene.test.trajectories {
        let (obs, _) = observation(traj, &model.config);
        let set = predict(model, &scene.test.frame, &obs).unwrap();
        assert!(!set.candidates.is_empty() && set.candidates.len() <= model.config.top_m);
        let sum: f64 = set.candidates.iter().map(|c| c.likelihood).sum();
        assert!((sum - 1.0).abs() < 1e-9);
        for w in set.candidates.windows(2) {
            assert!(w[0].log_likelihood >= w[1].log_likelihood);
        }
        for c in &set.candidates {
            assert!(c.likelihood >= 0.0);
            assert_eq!(c.trajectory.len(), steps);
            assert_eq!(c.variance.len(), steps);
            assert!(c.variance.iter().all(|v| v[0] >= 0.0 && v[1] >= 0.0));
            let t0 = obs.last().unwrap().t;
            assert!((c.trajectory.points()[0].t - (t0 + 0.5)).abs() < 1e-12);
        }
    }
}

#[test]
fn every_pattern_comes_from_an_observed_transition() {
    let model = model_a();
    assert!(model.patterns.len() >= 3);
    let total: f64 = model.patterns.iter().map(|p| p.prior_weight).sum();
    assert!((total - 1.0).abs() < 1e-9);
    for p in &model.patterns {
        assert!(model.transitions.get(p.from, p.to) > 0);
        assert_eq!(model.transitions.get(p.from, p.to), p.count);
    }
}

fn replay_outcomes(k: usize) -> (usize, usize, usize) {
    let cfg = PipelineConfig {
        k,
        ..Default::default()
    };
    let scene = scene_a_data();
    let (model, trace) = tasnsc::predictor::train_traced(&scene.train, &cfg).unwrap();
    let (mut own_hits, mut dev_hits, mut total) = (0, 0, 0);
    for (traj, seg) in scene.train.trajectories.iter().zip(&trace.segmentations) {
        let Ok((obs, truth)) = split_horizon(traj, cfg.t_obs, cfg.t_pred) else {
            continue;
        };
        total += 1;
        let set = predict(&model, &scene.train.frame, &obs).unwrap();
        let top = set.top();
        let own = tasnsc::sparse_coding::distinct_transitions(&seg.atoms());
        if own.contains(&top.pattern) {
            own_hits += 1;
        }
        let anchor = obs.last().unwrap().pos;
        if angular_deviation(&top.trajectory, &truth, anchor).unwrap() < 40.0 {
            dev_hits += 1;
        }
    }
    (own_hits, dev_hits, total)
}

#[test]
fn replayed_training_prefix_picks_its_own_transition() {
    // One atom per intent: every replay must recover its own pair and direction.
    let (own, dev, total) = replay_outcomes(3);
    assert!(total >= 140);
    assert_eq!(own, total);
    assert_eq!(dev, total);
}

#[test]
fn replayed_training_prefix_keeps_direction_at_default_k() {
    let (_, dev, total) = replay_outcomes(PipelineConfig::default().k);
    assert!(dev * 100 >= total * 95, "{dev} of {total}");
}

#[test]
fn single_pattern_model_gives_certain_prediction() {
    let cfg = PipelineConfig {
        k: 1,
        ..Default::default()
    };
    let model = train(&scene_a_data().train, &cfg).unwrap();
    assert_eq!(model.dictionary.k(), 1);
    assert_eq!(model.patterns.len(), 1);
    assert_eq!((model.patterns[0].from, model.patterns[0].to), (0, 0));
    let (obs, _) = observation(&scene_a_data().test.trajectories[0], &cfg);
    let set = predict(&model, &scene_a_data().test.frame, &obs).unwrap();
    assert_eq!(set.candidates.len(), 1);
    assert_eq!(set.candidates[0].likelihood, 1.0);
}

#[test]
fn straight_walks_learn_flow_along_the_curb() {
    let spec = SceneSpec {
        intent_mix: PerIntent {
            straight: 1.0,
            left: 0.0,
            right: 0.0,
        },
        ..scene_b()
    };
    let data = tasnsc::synthgen::generate(&spec, 40, 0.5).unwrap();
    let model = train(&data, &PipelineConfig::default()).unwrap();
    assert!(!model.patterns.is_empty());
    // Approach lane beside the second curb, heading towards the corner: -e2 in curbside components.
    let lane = spec.sidewalk_offset / spec.alpha_deg.to_radians().sin();
    for w in [3.0, 4.0, 5.0] {
        let q = Point2::new(lane, w);
        let nearby: Vec<_> = model
            .patterns
            .iter()
            .filter(|p| p.gp_x.inputs().iter().filter(|x| (*x - q).norm() < 1.0).count() >= 10)
            .collect();
        assert!(!nearby.is_empty());
        for p in nearby {
            let v = p.mean_velocity(q);
            let angle = v.angle(&Vector2::new(0.0, -1.0)).to_degrees();
            assert!(angle < 15.0, "pattern {:?} at {q:?}: {angle}°", (p.from, p.to));
        }
    }
}

#[test]
fn baseline_equals_tasnsc_when_frames_coincide_with_local_axes() {
    let frame = CurbsideFrame::axis_aligned(Point2::origin());
    let spec = SceneSpec {
        corner: [0.0, 0.0],
        curb1_heading_deg: 0.0,
        ..scene_a()
    };
    let tracks: Vec<Trajectory> = tasnsc::synthgen::generate(&spec, 60, 0.5).unwrap().trajectories;
    let data = Dataset::new(frame, tracks.clone(), Split::Train).unwrap();
    let cfg = PipelineConfig::default();
    let t = train(&data, &cfg.with_mode(Mode::Tasnsc)).unwrap();
    let b = train(&data, &cfg.with_mode(Mode::Baseline)).unwrap();
    assert_eq!(t.grid, b.grid);
    assert_eq!(t.dictionary, b.dictionary);
    assert_eq!(t.transitions, b.transitions);
    assert_eq!(
        serde_json::to_string(&t.patterns).unwrap(),
        serde_json::to_string(&b.patterns).unwrap()
    );
    for traj in tracks.iter().take(10) {
        let (obs, _) = observation(traj, &cfg);
        let pt = predict(&t, &frame, &obs).unwrap();
        let pb = predict(&b, &frame, &obs).unwrap();
        assert_eq!(
            serde_json::to_string(&pt).unwrap(),
            serde_json::to_string(&pb).unwrap()
        );
    }
}

#[test]
fn left_turn_transferred_to_skewed_corner_stays_on_the_sidewalk() {
    let model = model_a();
    let spec = SceneSpec {
        intent_mix: PerIntent {
            straight: 0.0,
            left: 1.0,
            right: 0.0,
        },
        seed: 77,
        ..scene_b()
    };
    let frame = spec.frame().unwrap();
    for track in generate_tracks(&spec, 10, 0.5).unwrap() {
        assert_eq!(track.intent, Intent::Left);
        let (obs, _) = observation(&track.trajectory, &model.config);
        let set = predict(model, &frame, &obs).unwrap();
        for p in set.top().trajectory.positions() {
            let c = frame.to_curbside(p);
            assert!(c.x >= -0.5 && c.y >= -0.5, "{} left the sidewalk at {c:?}", obs.id());
        }
    }
}

#[test]
fn prediction_is_deterministic_and_survives_save_and_load() {
    let model = model_a();
    let dir = std::env::temp_dir().join(format!("tasnsc-model-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("model.json");
    model.save(&path).unwrap();
    let loaded = TasnscModel::load(&path).unwrap();
    std::fs::remove_dir_all(&dir).ok();
    let again = train(&scene_a_data().train, &PipelineConfig::default()).unwrap();
    let scene = scene_a_data();
    for traj in scene.test.trajectories.iter().take(8) {
        let (obs, _) = observation(traj, &model.config);
        let reference = serde_json::to_string(&predict(model, &scene.test.frame, &obs).unwrap()).unwrap();
        for other in [&loaded, &again] {
            let got = serde_json::to_string(&predict(other, &scene.test.frame, &obs).unwrap()).unwrap();
            assert_eq!(got, reference);
        }
    }
}

#[test]
fn rejects_short_observations_and_empty_models() {
    let model = model_a();
    let frame = scene_a_data().test.frame;
    let short = Trajectory::from_positions("s", 0.5, 0.0, [Point2::new(0.0, 0.0), Point2::new(0.5, 0.0)]).unwrap();
    assert!(matches!(predict(model, &frame, &short), Err(Error::TooShort { .. })));
    let mut empty = model.clone();
    empty.patterns.clear();
    let (obs, _) = observation(&scene_a_data().test.trajectories[0], &model.config);
    assert!(matches!(predict(&empty, &frame, &obs), Err(Error::NoPatterns)));
}

#[test]
fn model_files_with_unknown_versions_are_rejected() {
    let mut model = model_a().clone();
    model.version = 99;
    let path = std::env::temp_dir().join(format!("tasnsc-v99-{}.json", std::process::id()));
    model.save(&path).unwrap();
    let err = TasnscModel::load(&path).unwrap_err();
    std::fs::remove_file(&path).ok();
    assert!(matches!(err, Error::UnsupportedVersion(99)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn predictions_follow_rigid_motions_of_the_test_site(
        angle in 0.0..(2.0 * std::f64::consts::PI),
        tx in -100.0..100.0f64,
        ty in -100.0..100.0f64,
        which in 0usize..30,
    ) {
        let model = model_a();
        let scene = scene_a_data();
        let frame = scene.test.frame;
        let rot = Rotation2::new(angle);
        let shift = Vector2::new(tx, ty);
        let move_pt = |p: Point2<f64>| rot * p + shift;
        let moved_frame = CurbsideFrame::from_curbs(move_pt(frame.origin()), rot * frame.e1(), rot * frame.e2()).unwrap();

        let (obs, _) = observation(&scene.test.trajectories[which], &model.config);
        let moved_obs = obs.map_positions(move_pt);
        let original = predict(model, &frame, &obs).unwrap();
        let moved = predict(model, &moved_frame, &moved_obs).unwrap();
        prop_assert_eq!(original.candidates.len(), moved.candidates.len());
        for (a, b) in original.candidates.iter().zip(&moved.candidates) {
            prop_assert_eq!(a.pattern, b.pattern);
            for (p, q) in a.trajectory.positions().zip(b.trajectory.positions()) {
                prop_assert!((move_pt(p) - q).norm() < 1e-6, "{:?} vs {:?}", move_pt(p), q);
            }
        }
    }
}
