use hsa_core::model::*;
use hsa_core::planner::*;
use nalgebra::Vector2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

fn workspace() -> &'static Workspace {
    static WS: OnceLock<Workspace> = OnceLock::new();
    WS.get_or_init(|| compute_workspace(&RobotParams::default(), 51).unwrap())
}

#[test]
fn steady_state_residual_is_tiny_everywhere() {
    let p = RobotParams::default();
    let ws = workspace();
    assert!(ws.failed.is_empty());
    assert_eq!(ws.samples.len(), 51 * 51);
    for s in &ws.samples {
        let phi = ActuationAngles::new(s.phi[0], s.phi[1]);
        let dq = s.q.to_vector() - p.q0.to_vector();
        let r = p.stiffness * dq + mass_terms(&s.q, &p).gravity
            - actuation_force(&s.q, &phi, &p).unwrap();
        assert!(r.norm() <= 1e-9, "residual {:e} at {:?}", r.norm(), s.phi);
        assert!((0.0..=p.phi_max).contains(&s.mean_phi));
    }
}

#[test]
fn workspace_mirrors_under_rod_swap() {
    let ws = workspace();
    for s in &ws.samples {
        let m = ws.sample_at([s.phi[1], s.phi[0]]).unwrap();
        assert!((s.x[0] + m.x[0]).abs() <= 1e-12);
        assert!((s.x[1] - m.x[1]).abs() <= 1e-12);
    }
    assert!(ws.is_simple());
}

#[test]
fn zero_gravity_rest_is_exact() {
    let p = RobotParams {
        gravity: Vector2::zeros(),
        ..RobotParams::default()
    };
    let q = steady_state(&ActuationAngles::zero(), &p, &p.q0).unwrap();
    assert_eq!(q, p.q0);
}

#[test]
fn clockwise_bending_corner() {
    let ws = workspace();
    let corner = ws.sample_at([3.49, 0.0]).unwrap();
    // Twisting only rod 1 bends clockwise (negative curvature), tip to +x.
    assert!(corner.q.kappa_be < 0.0);
    let max_x = ws
        .boundary
        .iter()
        .map(|b| b[0])
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(corner.x[0], max_x);
}

#[test]
fn clamp_behaviour() {
    let ws = workspace();
    let inside = Vector2::new(0.0, 0.11);
    assert!(ws.contains(&inside));
    assert_eq!(clamp_to_workspace(&inside, ws), inside);
    for far in [
        Vector2::new(1.0, 1.0),
        Vector2::new(-0.2, 0.0),
        Vector2::new(0.0, 0.5),
    ] {
        let c = clamp_to_workspace(&far, ws);
        assert!(ws.contains(&c));
        assert!(ws.distance_to_boundary(&c) <= 1e-12);
    }
}

#[test]
fn json_round_trip() {
    let ws = workspace();
    let text = ws.to_json().unwrap();
    let back = Workspace::from_json(&text).unwrap();
    assert_eq!(&back, ws);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["version"], 1);
    let bad = text.replacen("\"version\": 1", "\"version\": 9", 1);
    assert!(Workspace::from_json(&bad).is_err());
}

#[test]
fn setpoints_are_strictly_inside() {
    let ws = workspace();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pts = sample_setpoints(ws, 200, 0.002, &mut rng).unwrap();
    for x in &pts {
        assert!(ws.contains(x) && ws.distance_to_boundary(x) > 0.002);
    }
    let mut rng2 = ChaCha8Rng::seed_from_u64(5);
    assert_eq!(pts, sample_setpoints(ws, 200, 0.002, &mut rng2).unwrap());
}

#[test]
fn grid_needs_two_points() {
    assert!(compute_workspace(&RobotParams::default(), 1).is_err());
}

proptest! {
    #[test]
    fn prop_attractor_moves_at_most_one_step(
        signs in proptest::collection::vec(prop_oneof![Just(-1i8), Just(1i8), Just(0i8)], 1..200),
    ) {
        let ws = workspace();
        let mut s = AttractorState::new(Vector2::new(0.0, 0.11), Axis::X, DEFAULT_STEP).unwrap();
        for (k, sign) in signs.into_iter().enumerate() {
            let cmd = if sign == 0 {
                CommandEvent::switch(k as f64, s.axis)
            } else {
                CommandEvent::step(k as f64, s.axis, sign).unwrap()
            };
            let next = step_attractor(&s, &cmd, Some(ws));
            prop_assert!((next.x_at - s.x_at).norm() <= DEFAULT_STEP * (1.0 + 1e-12));
            if cmd.axis_switch {
                prop_assert_eq!(next.x_at, s.x_at);
            }
            prop_assert!(ws.contains(&next.x_at));
            s = next;
        }
    }

    #[test]
    fn prop_clamp_lands_on_or_inside(x in -0.2f64..0.2, y in 0.0f64..0.25) {
        let ws = workspace();
        let c = clamp_to_workspace(&Vector2::new(x, y), ws);
        prop_assert!(ws.contains(&c));
    }
}
