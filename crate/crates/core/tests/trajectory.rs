use nalgebra::Point2;
use proptest::prelude::*;
use tasnsc::trajectory::{
    read_jsonl_from, resample, split_horizon, velocities, write_jsonl_to, Sample, Trajectory,
};

fn walk() -> impl Strategy<Value = Trajectory> {
    (
        2usize..40,
        prop_oneof![Just(0.1), Just(0.25), Just(0.5), Just(1.0)],
        -100.0..100.0f64,
        prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64), 40),
    )
        .prop_map(|(n, dt, t0, steps)| {
            let mut p = Point2::new(0.0, 0.0);
            let pts = (0..n).map(|k| {
                if k > 0 {
                    p += nalgebra::Vector2::new(steps[k].0, steps[k].1);
                }
                p
            });
            Trajectory::from_positions("w", dt, t0, pts.collect::<Vec<_>>()).unwrap()
        })
}

proptest! {
    #[test]
    fn resample_is_idempotent_on_uniform_tracks(t in walk()) {
        let r = resample(&t, t.dt()).unwrap();
        prop_assert_eq!(r.len(), t.len());
        for (a, b) in r.points().iter().zip(t.points()) {
            prop_assert!((a.t - b.t).abs() < 1e-9);
            prop_assert!((a.pos - b.pos).amax() < 1e-9);
        }
        let twice = resample(&r, r.dt()).unwrap();
        prop_assert_eq!(twice, r);
    }

    #[test]
    fn straight_line_velocities_are_constant(
        vx in -3.0..3.0f64,
        vy in -3.0..3.0f64,
        n in 3usize..30,
        dt in prop_oneof![Just(0.2), Just(0.5)],
        new_dt in prop_oneof![Just(0.1), Just(0.3), Just(0.5)],
    ) {
        let t = Trajectory::from_positions(
            "line", dt, 0.0,
            (0..n).map(|k| Point2::new(vx * k as f64 * dt, vy * k as f64 * dt)).collect::<Vec<_>>(),
        ).unwrap();
        let r = resample(&t, new_dt).unwrap();
        prop_assume!(r.len() >= 2);
        for k in velocities(&r).unwrap() {
            prop_assert!((k.vel.x - vx).abs() < 1e-9 && (k.vel.y - vy).abs() < 1e-9);
        }
    }

    #[test]
    fn split_concatenates_to_a_prefix(t in walk(), obs in 0usize..10, pred in 1usize..10) {
        let dt = t.dt();
        match split_horizon(&t, obs as f64 * dt, pred as f64 * dt) {
            Ok((o, f)) => {
                prop_assert_eq!(o.len(), obs);
                prop_assert_eq!(f.len(), pred);
                let joined: Vec<Sample> = o.points().iter().chain(f.points()).copied().collect();
                prop_assert_eq!(&joined[..], &t.points()[..obs + pred]);
            }
            Err(_) => prop_assert!(obs + pred > t.len() || t.duration() + 1e-6 < (obs + pred) as f64 * dt),
        }
    }

    #[test]
    fn jsonl_round_trip_is_exact(ts in prop::collection::vec(walk(), 1..5)) {
        let mut buf = Vec::new();
        write_jsonl_to(&mut buf, &ts).unwrap();
        let back = read_jsonl_from(&buf[..]).unwrap();
        prop_assert_eq!(back, ts);
    }
}

#[test]
fn rejects_bad_timestamps() {
    let pts = vec![Sample::new(0.0, 0.0, 0.0), Sample::new(0.0, 1.0, 0.0)];
    assert!(Trajectory::new("dup", 0.5, pts).is_err());
    let nan = vec![Sample::new(0.0, f64::NAN, 0.0), Sample::new(0.5, 1.0, 0.0)];
    assert!(Trajectory::new("nan", 0.5, nan).is_err());
}
