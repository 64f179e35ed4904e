use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix2, Point2, Vector2};
use proptest::prelude::*;
use tasnsc::geometry::CurbsideFrame;
use tasnsc::trajectory::Trajectory;

/// Solves `[e1 | e2]·c = p − origin` by LU, independently of the library's
/// closed form.
fn lu_oracle(f: &CurbsideFrame, p: Point2<f64>) -> Vector2<f64> {
    let basis = Matrix2::from_columns(&[f.e1(), f.e2()]);
    basis.lu().solve(&(p - f.origin())).expect("non-singular basis")
}

/// Trigonometric form: `r·sin(α−θ)/sin α`, `r·sin θ/sin α`, with θ measured
/// from e1 towards e2.
fn trig_oracle(f: &CurbsideFrame, p: Point2<f64>) -> Vector2<f64> {
    let d = p - f.origin();
    let r = d.norm();
    let toward = f.e1().perp(&f.e2()).signum();
    let theta = (toward * f.e1().perp(&d)).atan2(f.e1().dot(&d)).rem_euclid(2.0 * PI);
    let a = f.alpha();
    Vector2::new(r * (a - theta).sin() / a.sin(), r * theta.sin() / a.sin())
}

fn frame_strategy() -> impl Strategy<Value = CurbsideFrame> {
    (
        -50.0..50.0f64,
        -50.0..50.0f64,
        0.0..(2.0 * PI),
        10.0f64..170.0,
        any::<bool>(),
    )
        .prop_map(|(ox, oy, heading, alpha_deg, ccw)| {
            let alpha = alpha_deg.to_radians() * if ccw { 1.0 } else { -1.0 };
            CurbsideFrame::from_heading(Point2::new(ox, oy), heading, alpha).unwrap()
        })
}

fn point() -> impl Strategy<Value = Point2<f64>> {
    (-60.0..60.0f64, -60.0..60.0f64).prop_map(|(x, y)| Point2::new(x, y))
}

/// Sine of the angle between two vectors.
fn sin_between(a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    a.perp(&b).abs() / (a.norm() * b.norm())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn matches_linear_system_and_round_trips(f in frame_strategy(), p in point()) {
        let c = f.to_curbside(p);
        let oracle = lu_oracle(&f, p);
        prop_assert!((c.x - oracle.x).abs() < 1e-9 && (c.y - oracle.y).abs() < 1e-9);
        let back = f.from_curbside(c);
        prop_assert!((back - p).amax() < 1e-9);
    }

    #[test]
    fn matches_trigonometric_form(f in frame_strategy(), p in point()) {
        prop_assume!((p - f.origin()).norm() > 1e-6);
        let c = f.to_curbside(p);
        let trig = trig_oracle(&f, p);
        prop_assert!((c.coords - trig).amax() < 1e-9, "{c:?} vs {trig:?}");
    }

    #[test]
    fn matrix_path_equals_closed_form(f in frame_strategy(), p in point()) {
        let direct = f.to_curbside(p);
        let via_maps = f.transform().apply(p);
        let composed = f.skew_matrix() * f.helper_map().apply(p).coords;
        prop_assert!((direct - via_maps).amax() < 1e-9);
        prop_assert!((direct.coords - composed).amax() < 1e-9);
    }

    #[test]
    fn helper_map_is_rigid(f in frame_strategy(), p in point(), q in point()) {
        let h = f.helper_map();
        prop_assert!(((h.apply(p) - h.apply(q)).norm() - (p - q).norm()).abs() < 1e-9);
        prop_assert!(h.apply(f.origin()).coords.amax() < 1e-9);
        prop_assert!((h.linear * f.e1() - Vector2::x()).amax() < 1e-12);
    }

    #[test]
    fn preserves_collinearity_midpoints_and_parallels(
        f in frame_strategy(),
        a in point(),
        b in point(),
        s in -3.0..3.0f64,
        shift in point(),
        scale in 0.2..5.0f64,
    ) {
        prop_assume!((b - a).norm() > 1e-3);
        let t = f.transform();
        let c = a + (b - a) * s;
        let (ta, tb, tc) = (t.apply(a), t.apply(b), t.apply(c));
        prop_assume!((tc - ta).norm() > 1e-6);
        prop_assert!(sin_between(tb - ta, tc - ta) < 1e-9);

        let mid = Point2::from((a.coords + b.coords) * 0.5);
        let tmid = Point2::from((ta.coords + tb.coords) * 0.5);
        prop_assert!((t.apply(mid) - tmid).amax() < 1e-9);

        let p = a + shift.coords;
        let q = p + (b - a) * scale;
        prop_assert!(sin_between(tb - ta, t.apply(q) - t.apply(p)) < 1e-9);
    }

    #[test]
    fn transform_is_invertible(f in frame_strategy()) {
        let t = f.transform();
        prop_assert!(t.determinant().abs() > 1e-12);
        let inv = t.inverse().unwrap();
        let p = Point2::new(3.0, -4.0);
        prop_assert!((inv.apply(t.apply(p)) - p).amax() < 1e-9);
    }

    #[test]
    fn unit_axes_and_angle(f in frame_strategy()) {
        prop_assert!((f.e1().norm() - 1.0).abs() < 1e-12);
        prop_assert!((f.e2().norm() - 1.0).abs() < 1e-12);
        prop_assert!(f.alpha() > 0.0 && f.alpha() < PI);
        prop_assert!((f.alpha() - f.e1().dot(&f.e2()).clamp(-1.0, 1.0).acos()).abs() < 1e-9);
    }
}

#[test]
fn skew_is_exactly_identity_for_right_angles() {
    for k in 0..360 {
        let heading = (k as f64).to_radians();
        let f = CurbsideFrame::from_heading(Point2::new(1.5, -2.0), heading, FRAC_PI_2).unwrap();
        assert_eq!(f.skew_matrix(), Matrix2::identity(), "heading {k}°");
    }
}

#[test]
fn transformed_trajectory_keeps_timestamps_and_collinearity() {
    let f = CurbsideFrame::from_curbs(
        Point2::new(1.0, 2.0),
        Vector2::new(1.0, 0.0),
        Vector2::new(0.5, 0.75f64.sqrt()),
    )
    .unwrap();
    let traj = Trajectory::from_positions(
        "line",
        0.5,
        3.0,
        [Point2::new(0.0, 0.0), Point2::new(1.0, 2.0), Point2::new(2.5, 5.0)],
    )
    .unwrap();
    let out = f.transform_trajectory(&traj);
    let ts: Vec<f64> = out.points().iter().map(|s| s.t).collect();
    assert_eq!(ts, vec![3.0, 3.5, 4.0]);
    let p: Vec<_> = out.positions().collect();
    assert!((p[1] - p[0]).perp(&(p[2] - p[0])).abs() < 1e-9);
    let back = f.inverse_trajectory(&out);
    for (a, b) in back.positions().zip(traj.positions()) {
        assert!((a - b).amax() < 1e-12);
    }
}
