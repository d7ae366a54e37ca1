//! One test per acceptance criterion. Each prints a `PASS`/`FAIL` line with
//! the measured values and then asserts.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use common::*;
use hsa_core::controller::*;
use hsa_core::harness::*;
use hsa_core::model::*;
use hsa_core::planner::*;
use hsa_core::signal::*;
use hsa_core::simulator::*;
use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(name: &str, checks: &[(&str, bool, String)]) {
    let pass = checks.iter().all(|c| c.1);
    let detail: Vec<String> = checks
        .iter()
        .map(|(what, ok, v)| format!("{what}: {v} [{}]", if *ok { "ok" } else { "FAIL" }))
        .collect();
    println!(
        "{} {name}: {}",
        if pass { "PASS" } else { "FAIL" },
        detail.join("; ")
    );
    assert!(pass, "{name}: {}", detail.join("; "));
}

fn rest_tip(p: &RobotParams) -> Vector2<f64> {
    tip_position(
        &steady_state(&ActuationAngles::zero(), p, &p.q0).unwrap(),
        p,
    )
}

fn csv_bytes(log: &[LogRow]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_log_csv(&mut buf, log).unwrap();
    buf
}

#[test]
fn kinematics() {
    let p = RobotParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let start = Instant::now();
    let (mut fk_err, mut rt_err) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let q = random_configuration(&mut rng);
        let pose = forward_kinematics(&q, p.length, &p).unwrap();
        fk_err = fk_err.max((pose.x - position_by_ode(&q, p.length, 10_000)).norm());
        let back =
            forward_kinematics(&inverse_kinematics(&pose, &p).unwrap(), p.length, &p).unwrap();
        rt_err = rt_err
            .max((back.x - pose.x).norm())
            .max((back.theta - pose.theta).abs());
    }
    let elapsed = start.elapsed();
    verdict(
        "kinematics",
        &[
            ("FK vs ODE max", fk_err <= 1e-8, format!("{fk_err:.2e} m")),
            (
                "IK/FK round trip max",
                rt_err <= 1e-9,
                format!("{rt_err:.2e}"),
            ),
            (
                "runtime",
                elapsed < Duration::from_secs(5),
                format!("{elapsed:.2?}"),
            ),
        ],
    );
}

fn weightless_undamped() -> RobotParams {
    RobotParams {
        gravity: Vector2::zeros(),
        damping: Matrix3::zeros(),
        ..RobotParams::default()
    }
}

fn undamped_endpoint(dt: f64) -> Vector3<f64> {
    let p = weightless_undamped();
    let mut s = SimState {
        qd: ConfigurationRate::new(1.0, 0.05, 0.05),
        ..SimState::at_rest(p.q0, ActuationAngles::zero())
    };
    for _ in 0..(1.0 / dt).round() as usize {
        s = step_physics(&s, &ActuationAngles::zero(), &Environment::free(), &p, dt).unwrap();
    }
    s.q.to_vector()
}

#[test]
fn dynamics_consistency() {
    let p = RobotParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1002);
    let mut skew = 0.0f64;
    for _ in 0..500 {
        let q = random_configuration(&mut rng);
        let v = Vector3::new(
            rng.gen_range(-20.0..20.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
        );
        let mt = mass_terms(&q, &p);
        let mdot = mt.dmass[0] * v[0] + mt.dmass[1] * v[1] + mt.dmass[2] * v[2];
        let d = dynamics_matrices(&q, &ConfigurationRate::from_vector(&v), &p).unwrap();
        let n = mdot - d.coriolis * 2.0;
        skew = skew
            .max((n + n.transpose()).norm() / (mdot.norm() + 2.0 * d.coriolis.norm()).max(1e-300));
    }

    let pw = weightless_undamped();
    let phi = ActuationAngles::new(1.2, 0.4);
    let mut s = SimState {
        qd: ConfigurationRate::new(5.0, 0.3, -0.2),
        ..SimState::at_rest(Configuration::new(-3.0, 0.02, 0.05), phi)
    };
    let e0 = mechanical_energy(&s.q, &s.qd, &phi, &pw);
    for _ in 0..10_000 {
        s = step_physics(&s, &phi, &Environment::free(), &pw, 1e-4).unwrap();
    }
    let drift = ((mechanical_energy(&s.q, &s.qd, &phi, &pw) - e0) / e0).abs();

    let (a, b, c) = (
        undamped_endpoint(1e-3),
        undamped_endpoint(5e-4),
        undamped_endpoint(2.5e-4),
    );
    let ratio = (a - b).norm() / (b - c).norm();
    verdict(
        "dynamics consistency",
        &[
            (
                "skew symmetry (relative)",
                skew <= 1e-8,
                format!("{skew:.2e}"),
            ),
            (
                "undamped energy drift over 1 s",
                drift <= 1e-6,
                format!("{drift:.2e}"),
            ),
            (
                "RK4 error ratio",
                (12.8..=19.2).contains(&ratio),
                format!("{ratio:.2}"),
            ),
        ],
    );
}

#[test]
fn controller_regulation() {
    let p = RobotParams::default();
    let gains = ImpedanceGains::isotropic(300.0, 1.5).unwrap();
    let x_at = rest_tip(&p) + Vector2::new(-0.012, 0.01);
    let mut s = SimState::at_rest(
        steady_state(&ActuationAngles::zero(), &p, &p.q0).unwrap(),
        ActuationAngles::zero(),
    );
    let v_of = |s: &SimState| {
        let d = dynamics_matrices(&s.q, &s.qd, &p).unwrap();
        lyapunov_value(&s.q, &s.qd, &x_at, &d, &gains, &p).unwrap()
    };
    let mut v_prev = v_of(&s);
    let mut rise = 0.0f64;
    for _ in 0..5000 {
        s = step_with_torque(&s, &Environment::free(), &p, 1e-3, |q, qd| {
            let d = dynamics_matrices(q, qd, &p)?;
            impedance_torque(q, qd, &x_at, &d, &gains, &p)
        })
        .unwrap();
        let v = v_of(&s);
        rise = rise.max(v - v_prev);
        v_prev = v;
    }
    let err = (tip_position(&s.q, &p) - x_at).norm();
    verdict(
        "controller regulation",
        &[
            ("error after 5 s", err <= 1e-5, format!("{err:.2e} m")),
            (
                "largest Lyapunov increase",
                rise <= 1e-8,
                format!("{rise:.2e}"),
            ),
        ],
    );
}

#[test]
fn actuation_mapping() {
    let p = RobotParams::default();
    let cfg = ExperimentConfig::default();
    let run = run_experiment(Experiment::SetpointPrivileged, &cfg, Path::new("."), None).unwrap();
    let res: Vec<f64> = run.output.log.iter().map(|r| r.residual_norm).collect();
    let worst = res.iter().cloned().fold(0.0, f64::max);
    let below = res.iter().filter(|&&r| r < 1e-3).count() as f64 / res.len() as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(1004);
    let (mut gap, mut times) = (f64::NEG_INFINITY, Vec::new());
    for _ in 0..50 {
        let q = Configuration::new(
            rng.gen_range(-12.0..12.0),
            rng.gen_range(-0.1..0.1),
            rng.gen_range(-0.05..0.3),
        );
        let phi = [rng.gen_range(0.0..p.phi_max), rng.gen_range(0.0..p.phi_max)];
        let tau = alpha_direct(&q, phi, &p)
            + Vector3::new(
                rng.gen_range(-0.02..0.02),
                rng.gen_range(-0.2..0.2),
                rng.gen_range(-1.0..1.0),
            );
        let t0 = Instant::now();
        let out = solve_actuation(&tau, &q, &ActuationAngles::zero(), &p).unwrap();
        times.push(t0.elapsed());
        let (grid, _) = brute_force_residual(&tau, &q, &p, 0.01);
        gap = gap.max(out.residual_norm - grid);
    }
    times.sort();
    let median = times[times.len() / 2];
    verdict(
        "actuation mapping",
        &[
            (
                "trajectory residual max",
                worst < 1e-3,
                format!("{worst:.2e} ({:.1}% of rows < 1e-3)", 100.0 * below),
            ),
            ("LM minus grid optimum", gap <= 1e-4, format!("{gap:.2e}")),
            (
                "median solve",
                median < Duration::from_millis(1),
                format!("{median:.2?}"),
            ),
        ],
    );
}

#[test]
fn workspace() {
    let p = RobotParams::default();
    let ws = compute_workspace(&p, 51).unwrap();
    let mut worst = 0.0f64;
    for s in &ws.samples {
        let phi = ActuationAngles::new(s.phi[0], s.phi[1]);
        let r = p.stiffness * (s.q.to_vector() - p.q0.to_vector()) + mass_terms(&s.q, &p).gravity
            - actuation_force(&s.q, &phi, &p).unwrap();
        worst = worst.max(r.norm());
    }
    let mut mirror = 0.0f64;
    for s in &ws.samples {
        let m = ws.sample_at([s.phi[1], s.phi[0]]).unwrap();
        mirror = mirror
            .max((s.x[0] + m.x[0]).abs())
            .max((s.x[1] - m.x[1]).abs());
    }
    verdict(
        "workspace",
        &[
            (
                "failed grid points",
                ws.failed.is_empty(),
                ws.failed.len().to_string(),
            ),
            (
                "steady-state residual max",
                worst <= 1e-9,
                format!("{worst:.2e}"),
            ),
            (
                "mirror asymmetry max",
                mirror <= 1e-12,
                format!("{mirror:.2e} m"),
            ),
        ],
    );
}

fn bandpass_gain_db(lo: f64, hi: f64, f: f64) -> Option<f64> {
    let w = |f: f64| (std::f64::consts::PI * f / FS).tan();
    let x = (w(f) * w(f) - w(lo) * w(hi)) / (w(f) * (w(hi) - w(lo)));
    let g2 = 1.0 / (1.0 + x.powi(2 * BANDPASS_ORDER as i32));
    (g2 >= 1e-6).then(|| 10.0 * g2.log10())
}

fn notch_gain(f: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let w = (pi * f / FS).tan() / (pi * NOTCH_HZ / FS).tan();
    (1.0 - w * w).abs() / ((1.0 - w * w).powi(2) + (w / NOTCH_Q).powi(2)).sqrt()
}

#[test]
fn signal_pipeline() {
    let mut g = SynthEeg::new(SynthConfig {
        seed: 1,
        ..SynthConfig::default()
    })
    .unwrap();
    let rows = g.render(&ClassSchedule::balanced(
        &[EegClass::Rest, EegClass::Mi, EegClass::Jaw],
        50,
        2.0,
        4.0,
        1,
    ));
    let bundle = train_classifiers(&rows, &TrainSettings::default()).unwrap();

    let mut g = SynthEeg::new(SynthConfig {
        seed: 77,
        mu_gain: 0.6f64.sqrt(),
        ..SynthConfig::default()
    })
    .unwrap();
    let trials: Vec<Vec<[f64; 3]>> = g
        .render(&ClassSchedule::balanced(&[EegClass::Mi], 40, 2.0, 4.0, 1))
        .chunks(6 * FS as usize)
        .map(|c| c.iter().map(|r| r.channels).collect())
        .collect();
    let map = erd_ers(
        &trials,
        2 * FS as usize,
        (-2.0, 0.0),
        &StftConfig::default(),
    )
    .unwrap();
    let erd = band_erd(&map, 0, (8.0, 12.0), (0.5, 3.5)).unwrap();

    let mut filt_db = 0.0f64;
    for &(lo, hi) in &BANDS {
        let sos = butterworth_bandpass(BANDPASS_ORDER, lo, hi, FS).unwrap();
        for i in 1..620 {
            let f = i as f64 * 0.1;
            if let Some(want) = bandpass_gain_db(lo, hi, f) {
                filt_db =
                    filt_db.max((20.0 * cascade_response(&sos, f, FS).norm().log10() - want).abs());
            }
        }
    }
    let notch_sec = notch(NOTCH_HZ, NOTCH_Q, FS).unwrap();
    for i in 1..620 {
        let f = i as f64 * 0.1;
        let want = notch_gain(f);
        if want > 1e-3 {
            filt_db = filt_db.max((20.0 * (notch_sec.response(f, FS).norm() / want).log10()).abs());
        }
    }
    verdict(
        "signal pipeline",
        &[
            (
                "MI vs rest CV accuracy",
                bundle.mi_cv_accuracy >= 0.75,
                format!("{:.3}", bundle.mi_cv_accuracy),
            ),
            (
                "jaw vs raw CV accuracy",
                bundle.jaw_cv_accuracy >= 0.85,
                format!("{:.3}", bundle.jaw_cv_accuracy),
            ),
            (
                "ERD vs programmed -0.40",
                (erd + 0.4).abs() <= 0.05,
                format!("{erd:.3}"),
            ),
            (
                "filter response deviation max",
                filt_db <= 1.0,
                format!("{filt_db:.2e} dB"),
            ),
        ],
    );
}

/// 50 Hz log over nine 60 s steps; step `i` enters the 2 mm ball at `crossing[i]`.
fn constructed_log(crossing: &[Option<f64>; 9]) -> (Vec<LogRow>, Vec<Setpoint>) {
    let schedule: Vec<Setpoint> = (0..9)
        .map(|i| Setpoint {
            t: 60.0 * i as f64,
            x: Vector2::new(0.0, 0.11),
        })
        .collect();
    let mut log = Vec::new();
    for (i, sp) in schedule.iter().enumerate() {
        for k in 0..=3000 {
            if k == 3000 && i < 8 {
                break;
            }
            let local = k as f64 / 50.0;
            let off = if crossing[i].is_some_and(|c| local >= c) {
                1.5e-3
            } else {
                5e-3
            };
            let x = [sp.x[0] + off, sp.x[1]];
            log.push(LogRow {
                t: sp.t + local,
                q: [0.0; 3],
                qd: [0.0; 3],
                x,
                xd_ref: sp.x.into(),
                x_at: x,
                phi_d: [0.0; 2],
                phi_applied: [0.0; 2],
                tau: [0.0; 3],
                residual_norm: 0.0,
                contact_f: [0.0; 2],
            });
        }
    }
    (log, schedule)
}

#[test]
fn end_to_end_setpoint_protocol() {
    let cfg = ExperimentConfig::default();
    let base = Path::new(".");
    let privileged = run_experiment(Experiment::SetpointPrivileged, &cfg, base, None).unwrap();
    let pm = privileged.metrics.clone().unwrap();

    let seeds: Vec<u64> = (0..20).collect();
    let noisy = run_seeds(Experiment::SetpointMi, &cfg, &seeds, base).unwrap();
    let rates: Vec<f64> = noisy
        .iter()
        .map(|r| r.metrics.as_ref().unwrap().success_rate)
        .collect();
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    let worst = rates.iter().cloned().fold(1.0, f64::min);

    let (log, schedule) = constructed_log(&[
        Some(21.5),
        None,
        Some(12.0),
        Some(31.0),
        None,
        Some(21.5),
        Some(20.0),
        None,
        Some(23.0),
    ]);
    let m = compute_step_metrics(&log, &schedule, PROXIMITY, STEP_BUDGET).unwrap();
    let exact = (m.success_rate - 2.0 / 3.0).abs() < 1e-15 && m.mean_response_time == Some(21.5);
    verdict(
        "end-to-end setpoint protocol",
        &[
            (
                "privileged success rate",
                pm.success_rate == 1.0,
                format!(
                    "{} (mean response {:.2} s)",
                    pm.success_rate,
                    pm.mean_response_time.unwrap_or(f64::NAN)
                ),
            ),
            (
                "noisy 75% source, 20 seeds mean success",
                mean >= 0.5,
                format!("{mean:.3} (worst {worst:.3})"),
            ),
            (
                "metrics on constructed log",
                exact,
                format!("{:.4} / {:?} s", m.success_rate, m.mean_response_time),
            ),
        ],
    );
}

fn wall_scenario(k_env: f64, depth: f64) -> (Scenario, ContactSurface) {
    let x0 = rest_tip(&RobotParams::default());
    let wall = ContactSurface {
        point: x0 + Vector2::new(0.0, 0.004),
        theta_perp: std::f64::consts::FRAC_PI_2,
        k_env,
        f_trigger: 0.5,
    };
    let sc = Scenario {
        duration_s: 15.0,
        contact: Some(wall),
        gains: GainsConfig {
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
fn adl_scenario() {
    let cfg = ExperimentConfig::default();
    let adl = run_experiment(Experiment::Adl, &cfg, Path::new("."), None).unwrap();
    let a = adl.adl.clone().unwrap();

    let mut spring_err = 0.0f64;
    for (k_env, depth) in [(2000.0, 0.003), (500.0, 0.004)] {
        let (sc, wall) = wall_scenario(k_env, depth);
        let out = run_closed_loop(&sc, None, None).unwrap();
        let normal = -Vector2::from(out.log.last().unwrap().contact_f).dot(&wall.normal());
        let expected = 500.0 * k_env / (500.0 + k_env) * depth;
        spring_err = spring_err.max((normal / expected - 1.0).abs());
    }

    let theta: f64 = 0.3;
    let f = Vector2::new(0.03, -0.02);
    let x0 = rest_tip(&RobotParams::default());
    let settle = |tip_force: Vector2<f64>| {
        let sc = Scenario {
            duration_s: 60.0,
            tip_force,
            gains: GainsConfig {
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
        Vector2::from(
            run_closed_loop(&sc, None, None)
                .unwrap()
                .log
                .last()
                .unwrap()
                .x,
        )
    };
    let d = settle(f) - settle(Vector2::zeros());
    let (n, t) = (
        Vector2::new(theta.cos(), theta.sin()),
        Vector2::new(-theta.sin(), theta.cos()),
    );
    let ratio = (d.dot(&t) / f.dot(&t)) / (d.dot(&n) / f.dot(&n));
    verdict(
        "ADL scenario",
        &[
            (
                "spray from scripted commands",
                !a.spray_events.is_empty() && a.max_normal_force >= cfg.adl.f_trigger,
                format!(
                    "{} events, first at {:?} s, peak {:.2} N",
                    a.spray_events.len(),
                    a.spray_events.first(),
                    a.max_normal_force
                ),
            ),
            (
                "series-spring force error",
                spring_err <= 0.05,
                format!("{:.2}%", 100.0 * spring_err),
            ),
            (
                "displacement ratio vs 10",
                (ratio / 10.0 - 1.0).abs() <= 0.1,
                format!("{ratio:.2}"),
            ),
        ],
    );
}

#[test]
fn determinism() {
    let mut cfg = ExperimentConfig::default();
    cfg.scenario.seed = 5;
    cfg.scenario.noise.enabled = true;
    cfg.protocol.steps = 3;
    cfg.protocol.step_duration = 20.0;
    let ws = compute_workspace(&cfg.scenario.robot, cfg.scenario.workspace_grid).unwrap();
    let mut checks = Vec::new();
    for kind in [
        Experiment::SetpointMi,
        Experiment::SetpointPrivileged,
        Experiment::Adl,
    ] {
        let once = || {
            let r = run_experiment(kind, &cfg, Path::new("."), Some(ws.clone())).unwrap();
            (csv_bytes(&r.output.log), r.config_hash)
        };
        let (a, b) = (once(), once());
        checks.push((kind.as_str(), a == b, format!("{} bytes", a.0.len())));
    }
    verdict("determinism", &checks);
}
