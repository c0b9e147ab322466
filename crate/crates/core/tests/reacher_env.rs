use std::collections::BTreeSet;
use std::f64::consts::{FRAC_PI_2, PI, TAU};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use reacher_rl::env::*;
use reacher_rl::render::{render_background, scene_pixels};

fn close(a: (f64, f64), b: (f64, f64)) -> bool {
    (a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12
}

#[test]
fn kinematics_examples() {
    let (j, g) = forward_kinematics(0.0, 0.0);
    assert!(close(j, (0.5, 0.0)) && close(g, (1.0, 0.0)));
    let (j, g) = forward_kinematics(FRAC_PI_2, 0.0);
    assert!(close(j, (0.0, 0.5)) && close(g, (0.0, 1.0)));
    let (j, g) = forward_kinematics(0.0, FRAC_PI_2);
    assert!(close(j, (0.5, 0.0)) && close(g, (0.5, 0.5)));
}

#[test]
fn reset_radius_matches_area_uniform_expectation() {
    let (a, b): (f64, f64) = (0.2, 0.95);
    let expected = (2.0 / 3.0) * (b.powi(3) - a.powi(3)) / (b * b - a * a);
    // variance of r under the area-uniform law: E[r²] − E[r]²
    let e2 = (b * b + a * a) / 2.0;
    let sd = (e2 - expected * expected).sqrt();
    let n = 1000;
    let mut sum = 0.0;
    for seed in 0..n {
        let s = reset(seed);
        assert_eq!(s, reset(seed));
        let r = s.target_x.hypot(s.target_y);
        assert!((a..=b).contains(&r));
        assert!(s.distance() >= MIN_START_DISTANCE);
        assert!((0.0..TAU).contains(&s.theta1) && (0.0..TAU).contains(&s.theta2));
        sum += r;
    }
    // the distance resampling slightly reshapes the law; 4 standard errors
    let mean = sum / n as f64;
    assert!((mean - expected).abs() < 4.0 * sd / (n as f64).sqrt(), "{mean} vs {expected}");
}

#[test]
fn reward_examples() {
    assert_eq!(reward_fn(0.3, 0.3), 0.0);
    let up = (-0.46f64).exp() * 0.04 / (PI / 90.0 * 1.5);
    assert!((reward_fn(0.5, 0.46) - up).abs() < 1e-12);
    assert!((reward_fn(0.5, 0.46) - 0.482).abs() < 1e-3);
    assert!((reward_fn(0.5, 0.54) + 0.445).abs() < 1e-3);
}

#[test]
fn zero_action_and_clipping() {
    let s = ReacherState::new(0.3, 1.1, (-0.4, 0.2));
    let out = step(&s, Action::zero()).unwrap();
    assert_eq!(out.next_state.gripper(), s.gripper());
    assert_eq!(out.reward, 0.0);
    assert!(!out.done);
    let a = Action::new(2.0, -3.0);
    assert_eq!((a.a1, a.a2), (1.0, -1.0));
}

#[test]
fn threshold_crossing_ends_episode() {
    // put the target 0.105 from the gripper along the direction the gripper
    // moves for action (1, 0), then step toward it
    let s = ReacherState::new(0.0, 0.0, (0.0, 0.0));
    let next = step(&s, Action::new(1.0, 0.0)).unwrap().next_state;
    let (g0, g1) = (s.gripper(), next.gripper());
    let (dx, dy) = (g1.0 - g0.0, g1.1 - g0.1);
    let len = dx.hypot(dy);
    let target = (g0.0 + dx / len * 0.105, g0.1 + dy / len * 0.105);
    let s = ReacherState::new(0.0, 0.0, target);
    let out = step(&s, Action::new(1.0, 0.0)).unwrap();
    assert!(out.next_state.distance() < 0.1);
    assert!(out.success && out.done);
}

#[test]
fn stepping_a_finished_episode_fails() {
    let mut s = ReacherState::new(0.0, PI, (0.5, 0.5));
    s.step_count = MAX_STEPS;
    assert!(matches!(
        step(&s, Action::zero()),
        Err(EnvError::EpisodeFinished { .. })
    ));
}

#[test]
fn full_turn_restores_angle() {
    let mut s = ReacherState::new(0.7, 0.2, (0.0, 0.0));
    let start = s.theta1;
    for _ in 0..180 {
        s = step(&s, Action::new(1.0, 0.0)).unwrap().next_state;
    }
    assert!((s.theta1 - start).abs() < 1e-9);
}

#[test]
fn features_examples() {
    let s = ReacherState::new(0.0, 0.0, (0.3, -0.2));
    assert_eq!(state_features(&s), [1.0, 0.0, 1.0, 0.0, 0.3, -0.2]);
    let f = state_features(&ReacherState::new(PI, 0.0, (0.0, 0.0)));
    assert_eq!(f[0], -1.0);
    assert!(f[1].abs() < 1e-7);
}

fn random_state(rng: &mut ChaCha8Rng) -> ReacherState {
    let mut s = reset(rng.random());
    s.step_count = rng.random_range(0..MAX_STEPS);
    s
}

#[test]
fn step_is_pure() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let s = random_state(&mut rng);
        let a = Action::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        assert_eq!(step(&s, a), step(&s, a));
    }
}

#[test]
fn render_noise_and_scene_sets() {
    let noise = NoiseConfig::enabled(11);
    let bg = render_background(&noise);
    let noise_px: BTreeSet<usize> = noise.pixels().into_iter().collect();
    assert_eq!(noise_px.len(), NoiseConfig::DEFAULT_PIXELS);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let s = random_state(&mut rng);
        let f = render(&s, &noise);
        assert_eq!(f, render(&s, &noise));
        let scene: BTreeSet<usize> = scene_pixels(&s).into_iter().collect();
        for i in 0..FRAME_PIXELS {
            if f.levels()[i] != bg.levels()[i] {
                assert!(scene.contains(&i), "pixel {i} changed outside the scene");
            }
            if noise_px.contains(&i) && !scene.contains(&i) {
                assert_eq!(f.levels()[i], bg.levels()[i]);
            }
        }
    }
    let clean = render(&reset(1), &NoiseConfig::disabled());
    assert_eq!(clean.intensity(0, 0), 0.0);
    assert_eq!(clean.intensity(63, 63), 0.0);
}

proptest! {
    #[test]
    fn reward_sign_and_bound(t1 in 0.0..TAU, t2 in 0.0..TAU, tx in -0.95f64..0.95, ty in -0.95f64..0.95,
                             a1 in -1.0f64..1.0, a2 in -1.0f64..1.0) {
        let s = ReacherState::new(t1, t2, (tx, ty));
        prop_assume!(!s.is_finished());
        let out = step(&s, Action::new(a1, a2)).unwrap();
        let dd = s.distance() - out.next_state.distance();
        prop_assert!(out.reward.abs() <= 1.0);
        prop_assert!(dd.abs() <= R_MAX + 1e-9);
        prop_assert_eq!(out.reward.signum() * (out.reward != 0.0) as i32 as f64,
                        dd.signum() * (dd != 0.0) as i32 as f64);
        // the clamp never activates for reachable transitions
        prop_assert!((out.reward - (-out.next_state.distance()).exp() * dd / R_MAX).abs() < 1e-12);
    }
}
