use hsa_core::controller::AnisotropicConfig;
use hsa_core::model::*;
use hsa_core::planner::steady_state;
use hsa_core::simulator::*;
use nalgebra::{Matrix3, Vector2};
use proptest::prelude::*;

fn rest_tip(p: &RobotParams) -> Vector2<f64> {
    let q = steady_state(&ActuationAngles::zero(), p, &p.q0).unwrap();
    tip_position(&q, p)
}

fn error_at_end(out: &SimulationOutput, target: Vector2<f64>) -> f64 {
    let last = out.log.last().unwrap();
    (Vector2::from(last.x) - target).norm()
}

#[test]
fn sg_kernel_annihilates_constants_and_is_exact_on_cubics() {
    let dt = 5e-3;
    let k = savitzky_golay_derivative(15, 3, dt).unwrap();
    assert_eq!(k.len(), 15);
    assert!(k.iter().sum::<f64>().abs() <= 1e-9);
    // kernel[i] multiplies the sample taken at (i - 14) dt.
    let at = |f: &dyn Fn(f64) -> f64| -> f64 {
        k.iter()
            .enumerate()
            .map(|(i, c)| c * f((i as f64 - 14.0) * dt))
            .sum()
    };
    assert!((at(&|t| 0.3 + 2.5 * t) - 2.5).abs() <= 1e-9);
    let cubic = |t: f64| 1.0 - 0.4 * t + 3.0 * t * t - 7.0 * t * t * t;
    assert!((at(&cubic) + 0.4).abs() <= 1e-9);
    assert!(savitzky_golay_derivative(3, 3, dt).is_err());
}

#[test]
fn measured_velocity_is_zero_until_the_window_fills() {
    let p = RobotParams::default();
    let cfg = NoiseConfig {
        enabled: true,
        ..NoiseConfig::default()
    };
    let mut m = MeasurementModel::new(cfg, 1).unwrap();
    let q = Configuration::new(2.0, 0.01, 0.05);
    for i in 0..cfg.window - 1 {
        let s = m.sample(i as f64 / cfg.rate, &q, &p).unwrap();
        assert_eq!(s.velocity, nalgebra::Vector3::zeros());
    }
    let s = m.sample(1.0, &q, &p).unwrap();
    assert!(s.velocity.norm() > 0.0);
}

#[test]
fn noise_free_measurement_recovers_a_moving_configuration() {
    let p = RobotParams::default();
    let cfg = NoiseConfig {
        enabled: true,
        sigma: 0.0,
        sigma_theta: 0.0,
        ..NoiseConfig::default()
    };
    let mut m = MeasurementModel::new(cfg, 0).unwrap();
    // Linear in q, so the pose is smooth but not polynomial; the rate error
    // is then set by the filter, not by round-off.
    let qd = nalgebra::Vector3::new(0.5, 0.002, -0.003);
    let q_at =
        |t: f64| Configuration::from_vector(&(nalgebra::Vector3::new(1.0, 0.0, 0.02) + qd * t));
    let mut last = None;
    for i in 0..40 {
        let t = i as f64 / cfg.rate;
        last = Some((t, m.sample(t, &q_at(t), &p).unwrap()));
    }
    let (t, s) = last.unwrap();
    let (q, rate) = s.configuration(&p).unwrap();
    assert!((q.to_vector() - q_at(t).to_vector()).norm() <= 1e-9);
    assert!((rate.to_vector() - qd).norm() <= 1e-6 * qd.norm());
}

#[test]
fn static_noise_is_unbiased() {
    let p = RobotParams::default();
    let cfg = NoiseConfig {
        enabled: true,
        ..NoiseConfig::default()
    };
    let mut m = MeasurementModel::new(cfg, 42).unwrap();
    let q = Configuration::new(-1.0, 0.0, 0.03);
    let truth = tip_position(&q, &p);
    let n = 4000;
    let mut mean = Vector2::zeros();
    let mut var = 0.0;
    for i in 0..n {
        let s = m.sample(i as f64 / cfg.rate, &q, &p).unwrap();
        mean += s.pose.x;
        var += (s.pose.x - truth).norm_squared();
    }
    mean /= n as f64;
    let bound = 3.0 * cfg.sigma / (n as f64).sqrt();
    assert!((mean - truth).amax() <= bound, "bias {:?}", mean - truth);
    let sd = (var / (2 * n) as f64).sqrt();
    assert!((sd / cfg.sigma - 1.0).abs() < 0.05);
}

#[test]
fn identical_seed_gives_identical_csv() {
    let sc = Scenario {
        duration_s: 4.0,
        seed: 7,
        noise: NoiseConfig {
            enabled: true,
            ..NoiseConfig::default()
        },
        command: CommandSourceConfig::Noisy {
            user: UserConfig::default(),
            mi_accuracy: 0.75,
            jaw_tpr: 0.85,
            jaw_fpr: 0.15,
        },
        setpoints: vec![Setpoint {
            t: 0.0,
            x: rest_tip(&RobotParams::default()) + Vector2::new(0.01, 0.01),
        }],
        ..Scenario::default()
    };
    let csv = |sc: &Scenario| {
        let src = build_source(sc, std::path::Path::new(".")).unwrap();
        let out = run_closed_loop(sc, None, src).unwrap();
        let mut buf = Vec::new();
        write_log_csv(&mut buf, &out.log).unwrap();
        buf
    };
    let a = csv(&sc);
    assert_eq!(a, csv(&sc));
    let other = Scenario {
        seed: 8,
        ..sc.clone()
    };
    assert_ne!(a, csv(&other));
}

#[test]
fn loop_rates_match_the_schedule() {
    let t = 7.3;
    let sc = Scenario {
        duration_s: t,
        command: CommandSourceConfig::Ideal {
            user: UserConfig::default(),
        },
        ..Scenario::default()
    };
    let src = build_source(&sc, std::path::Path::new(".")).unwrap();
    let out = run_closed_loop(&sc, None, src).unwrap();
    assert!(
        (out.control_calls as f64 - 50.0 * t).abs() <= 1.0,
        "{}",
        out.control_calls
    );
    assert!(
        (out.command_ticks as f64 - 18.0 * t).abs() <= 1.0,
        "{}",
        out.command_ticks
    );
    assert_eq!(out.log.len(), out.control_calls);
    for w in out.log.windows(2) {
        assert!((w[1].t - w[0].t - 0.02).abs() < 1e-12);
    }
}

#[test]
fn motor_command_reaches_the_plant_after_the_latency() {
    let x0 = rest_tip(&RobotParams::default());
    let sc = Scenario {
        duration_s: 2.0,
        setpoints: vec![Setpoint {
            t: 0.0,
            x: x0 + Vector2::new(0.005, 0.005),
        }],
        ..Scenario::default()
    };
    let out = run_closed_loop(&sc, None, None).unwrap();
    // 130 ms is 6.5 control periods; the apply event lands on the 7th row.
    for k in 7..out.log.len() {
        assert_eq!(out.log[k].phi_applied, out.log[k - 7].phi_d, "row {k}");
    }
    assert!(out.log[..7].iter().all(|r| r.phi_applied == [0.0, 0.0]));
    assert!(out.log[1].phi_d != [0.0, 0.0]);
}

#[test]
fn ideal_user_moves_the_attractor_at_the_command_rate() {
    let x0 = rest_tip(&RobotParams::default());
    let sc = Scenario {
        duration_s: 3.0,
        clamp_attractor: false,
        setpoints: vec![Setpoint {
            t: 0.0,
            x: x0 + Vector2::new(0.03, 0.0),
        }],
        command: CommandSourceConfig::Ideal {
            user: UserConfig::default(),
        },
        ..Scenario::default()
    };
    let src = build_source(&sc, std::path::Path::new(".")).unwrap();
    let out = run_closed_loop(&sc, None, src).unwrap();
    let first = out.log.iter().find(|r| r.t >= 1.0 - 1e-9).unwrap();
    let last = out.log.last().unwrap();
    let speed = (last.x_at[0] - first.x_at[0]) / (last.t - first.t);
    assert!((speed - 3.6e-3).abs() <= 0.1e-3, "speed {speed}");
    assert!(out.commands.iter().all(|c| c.sign == 1 && !c.axis_switch));
}

#[test]
fn ideal_user_switches_axis_and_settles_on_the_setpoint() {
    let x0 = rest_tip(&RobotParams::default());
    let target = x0 + Vector2::new(0.004, 0.006);
    let user = UserConfig {
        switch_tolerance: 3e-4,
        deadband: None,
    };
    let sc = Scenario {
        duration_s: 12.0,
        setpoints: vec![Setpoint { t: 0.0, x: target }],
        command: CommandSourceConfig::Ideal { user },
        ..Scenario::default()
    };
    let src = build_source(&sc, std::path::Path::new(".")).unwrap();
    let out = run_closed_loop(&sc, None, src).unwrap();
    assert!(out.commands.iter().any(|c| c.axis_switch));
    let x_at = Vector2::from(out.log.last().unwrap().x_at);
    assert!((x_at - target).amax() <= 3e-4 + 1e-12);
    assert!(error_at_end(&out, target) <= 1e-3);
}

#[test]
fn privileged_step_is_reached() {
    let x0 = rest_tip(&RobotParams::default());
    let target = x0 + Vector2::new(-0.015, 0.012);
    let sc = Scenario {
        duration_s: 15.0,
        setpoints: vec![Setpoint { t: 0.5, x: target }],
        ..Scenario::default()
    };
    let out = run_closed_loop(&sc, None, None).unwrap();
    assert!(out.log[0].xd_ref[0].is_nan());
    assert!(error_at_end(&out, target) <= 1e-5);
    assert_eq!(out.non_converged, 0);
}

#[test]
fn model_mismatch_leaves_a_small_offset() {
    let robot = RobotParams::default();
    let mut plant = robot.clone();
    plant.stiffness *= 1.05;
    plant.s_ax0 *= 0.95;
    plant.lin_density *= 1.05;
    let target = rest_tip(&robot) + Vector2::new(0.01, 0.01);
    let sc = Scenario {
        duration_s: 15.0,
        setpoints: vec![Setpoint { t: 0.0, x: target }],
        robot,
        plant: Some(plant),
        ..Scenario::default()
    };
    let out = run_closed_loop(&sc, None, None).unwrap();
    let e = error_at_end(&out, target);
    assert!(e > 1e-5 && e < 2e-3, "offset {e}");
    let tail = &out.log[out.log.len() - 50..];
    let drift = (Vector2::from(tail[0].x) - Vector2::from(tail[49].x)).norm();
    assert!(drift < 1e-6, "still moving: {drift}");
}

proptest! {
    #[test]
    fn contact_force_pushes_out_along_the_normal(
        theta in -3.1f64..3.1,
        k_env in 10.0f64..5000.0,
        px in -0.05f64..0.05,
        py in 0.05f64..0.15,
    ) {
        let c = ContactSurface {
            point: Vector2::new(0.0, 0.1),
            theta_perp: theta,
            k_env,
            f_trigger: 1.0,
        };
        let x = Vector2::new(px, py);
        let f = c.force(&x);
        let d = c.penetration(&x);
        if d <= 0.0 {
            prop_assert_eq!(f, Vector2::zeros());
        } else {
            let n = c.normal();
            prop_assert!((f + n * (k_env * d)).norm() <= 1e-12 * (1.0 + k_env * d));
            prop_assert!(f.dot(&n) <= 0.0);
            prop_assert!((f.x * n.y - f.y * n.x).abs() <= 1e-12 * (1.0 + f.norm()));
        }
    }
}

fn contact_scenario(k_env: f64, depth: f64) -> (Scenario, ContactSurface) {
    let p = RobotParams::default();
    let x0 = rest_tip(&p);
    // Wall 4 mm beyond the tip along +y; the attractor sits `depth` past it.
    let wall = ContactSurface {
        point: x0 + Vector2::new(0.0, 0.004),
        theta_perp: std::f64::consts::FRAC_PI_2,
        k_env,
        f_trigger: 0.5,
    };
    let sc = Scenario {
        duration_s: 15.0,
        contact: Some(wall),
        gains: hsa_core::controller::GainsConfig {
            anisotropic: Some(AnisotropicConfig {
                k_perp: 500.0,
                k_par: 50.0,
                theta_perp: wall.theta_perp,
            }),
            ..Default::default()
        },
        setpoints: vec![Setpoint {
            t: 0.0,
            x: wall.point + wall.normal() * depth,
        }],
        ..Scenario::default()
    };
    (sc, wall)
}

#[test]
fn contact_force_follows_the_series_spring_law() {
    for (k_env, depth) in [(2000.0, 0.003), (500.0, 0.004)] {
        let (sc, wall) = contact_scenario(k_env, depth);
        let out = run_closed_loop(&sc, None, None).unwrap();
        let f = Vector2::from(out.log.last().unwrap().contact_f);
        let expected = 500.0 * k_env / (500.0 + k_env) * depth;
        let normal = -f.dot(&wall.normal());
        assert!(
            (normal / expected - 1.0).abs() <= 0.05,
            "k_env {k_env}: {normal} vs {expected}"
        );
        assert!(!out.spray_events.is_empty());
    }
}

#[test]
fn no_contact_force_without_penetration() {
    let (mut sc, _) = contact_scenario(1000.0, 0.0);
    sc.setpoints[0].x -= Vector2::new(0.0, 0.003);
    sc.duration_s = 6.0;
    let out = run_closed_loop(&sc, None, None).unwrap();
    assert!(out.log.iter().all(|r| r.contact_f == [0.0, 0.0]));
    assert!(out.spray_events.is_empty());
}

#[test]
fn anisotropic_stiffness_shapes_the_deflection() {
    let theta = 0.3;
    let f = Vector2::new(0.03, -0.02);
    let x0 = rest_tip(&RobotParams::default());
    let run = |tip_force: Vector2<f64>| {
        // The soft direction converges slowly.
        let sc = Scenario {
            duration_s: 60.0,
            tip_force,
            gains: hsa_core::controller::GainsConfig {
                anisotropic: Some(AnisotropicConfig {
                    k_perp: 500.0,
                    k_par: 50.0,
                    theta_perp: theta,
                }),
                ..Default::default()
            },
            setpoints: vec![Setpoint {
                t: 0.0,
                x: x0 + Vector2::new(0.002, 0.006),
            }],
            ..Scenario::default()
        };
        let out = run_closed_loop(&sc, None, None).unwrap();
        Vector2::from(out.log.last().unwrap().x)
    };
    let d = run(f) - run(Vector2::zeros());
    let n = Vector2::new(theta.cos(), theta.sin());
    let t = Vector2::new(-theta.sin(), theta.cos());
    let d_perp = d.dot(&n) / f.dot(&n);
    let d_par = d.dot(&t) / f.dot(&t);
    // Compliance per unit force along each direction: 1/k.
    assert!(
        (d_perp * 500.0 - 1.0).abs() <= 0.05,
        "normal compliance {d_perp}"
    );
    assert!(
        (d_par / d_perp / 10.0 - 1.0).abs() <= 0.1,
        "ratio {}",
        d_par / d_perp
    );
}

#[test]
fn scenario_toml_round_trip() {
    let (mut sc, _) = contact_scenario(800.0, 0.002);
    sc.seed = 99;
    sc.tip_force = Vector2::new(0.01, 0.0);
    sc.plant = Some(RobotParams {
        damping: Matrix3::identity() * 0.2,
        ..RobotParams::default()
    });
    sc.command = CommandSourceConfig::Scripted {
        events: vec![
            ScriptedCommand {
                t: 0.5,
                sign: 1,
                axis_switch: false,
                repeat: 3,
            },
            ScriptedCommand {
                t: 1.0,
                sign: 0,
                axis_switch: true,
                repeat: 1,
            },
        ],
    };
    let text = sc.to_toml_string().unwrap();
    assert_eq!(Scenario::from_toml_str(&text).unwrap(), sc);
    for cmd in [
        CommandSourceConfig::Noisy {
            user: UserConfig::default(),
            mi_accuracy: 0.7,
            jaw_tpr: 0.9,
            jaw_fpr: 0.1,
        },
        CommandSourceConfig::Inbox,
    ] {
        let sc = Scenario {
            command: cmd,
            ..Scenario::default()
        };
        assert_eq!(
            Scenario::from_toml_str(&sc.to_toml_string().unwrap()).unwrap(),
            sc
        );
    }
}

#[test]
fn scenario_files_reject_bad_input() {
    assert!(Scenario::from_toml_str("duration_s = 5.0\nbogus = 1\n").is_err());
    assert!(Scenario::from_toml_str("duration_s = -1.0\n").is_err());
    assert!(Scenario::from_toml_str("[schedule]\nlatency = -0.1\n").is_err());
    assert!(Scenario::from_toml_str("[command]\nkind = \"noisy\"\nmi_accuracy = 1.5\n").is_err());
    let sc = Scenario::from_toml_str("[command]\nkind = \"noisy\"\n").unwrap();
    assert!(
        matches!(sc.command, CommandSourceConfig::Noisy { mi_accuracy, .. } if mi_accuracy == 0.75)
    );
}

#[test]
fn log_csv_round_trip_is_bit_exact() {
    let x0 = rest_tip(&RobotParams::default());
    let sc = Scenario {
        duration_s: 1.0,
        setpoints: vec![Setpoint {
            t: 0.3,
            x: x0 + Vector2::new(0.001, 0.002),
        }],
        ..Scenario::default()
    };
    let out = run_closed_loop(&sc, None, None).unwrap();
    let mut buf = Vec::new();
    write_log_csv(&mut buf, &out.log).unwrap();
    let header = std::str::from_utf8(&buf)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    assert_eq!(header, LOG_COLUMNS.join(","));
    let back = read_log_csv(buf.as_slice()).unwrap();
    assert_eq!(back.len(), out.log.len());
    let flat = |r: &LogRow| -> Vec<u64> {
        [
            &[r.t][..],
            &r.q,
            &r.qd,
            &r.x,
            &r.xd_ref,
            &r.x_at,
            &r.phi_d,
            &r.phi_applied,
            &r.tau,
        ]
        .concat()
        .into_iter()
        .chain([r.residual_norm, r.contact_f[0], r.contact_f[1]])
        .map(f64::to_bits)
        .collect()
    };
    for (a, b) in out.log.iter().zip(&back) {
        assert_eq!(flat(a), flat(b));
    }
    assert!(read_log_csv("t,x\n1,2\n".as_bytes()).is_err());
}
