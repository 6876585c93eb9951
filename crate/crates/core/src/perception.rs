//! Noisy visual perception of the approaching vehicle.
//!
//! The pedestrian reads the vehicle's distance through the angle below
//! the horizon, with constant Gaussian angular noise `sigma_v`. That
//! induces a distance-dependent positional noise, which a constant-
//! velocity Kalman filter turns into a belief over vehicle position and
//! speed. Belief means and variances are what the noisy model variants
//! observe.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::env::WorldConfig;
use crate::scenario::ScenarioSpec;

/// Angular noise level of the visual system, radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    pub sigma_v: f64,
}

/// Filter constants. The priors are the sample standard deviations of
/// the initial distances and speeds across the evaluation catalog, so
/// the initial belief is centred on the true state with the spread of
/// the scenario set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerceptionConfig {
    /// White-acceleration process noise intensity, m/s^2. The filter
    /// assumes constant velocity; this lets it track braking vehicles.
    pub process_accel_std: f64,
    pub prior_pos_std: f64,
    pub prior_vel_std: f64,
}

impl PerceptionConfig {
    pub const DEFAULT_PROCESS_ACCEL_STD: f64 = 2.0;

    pub fn from_catalog(catalog: &[ScenarioSpec]) -> Self {
        let eval: Vec<&ScenarioSpec> = catalog.iter().filter(|s| s.is_evaluation()).collect();
        let d0: Vec<f64> = eval.iter().map(|s| s.d0).collect();
        let v0: Vec<f64> = eval.iter().map(|s| s.v0).collect();
        PerceptionConfig {
            process_accel_std: Self::DEFAULT_PROCESS_ACCEL_STD,
            prior_pos_std: sample_std(&d0),
            prior_vel_std: sample_std(&v0),
        }
    }
}

fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    var.sqrt()
}

/// Kalman estimate of the vehicle front position and speed.
///
/// Speed is signed toward the crossing line: the predicted position
/// decreases by `v_hat * dt` per step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Belief {
    pub x_hat: f64,
    pub v_hat: f64,
    /// Position variance, m^2.
    pub p_pos: f64,
    /// Velocity variance, (m/s)^2.
    pub p_vel: f64,
    /// Position-velocity covariance.
    pub p_cross: f64,
}

/// Positional noise standard deviation induced by angular noise.
///
/// `d_l` is the longitudinal distance from the vehicle front to the
/// crossing line, `d` the Euclidean distance from the pedestrian's eye
/// to the vehicle front, `h` the eye height. If the perturbed angle
/// reaches the horizon the geometry degenerates and the full distance
/// `|d_l|` is returned.
pub fn angular_noise_std(d_l: f64, d: f64, h: f64, sigma_v: f64) -> f64 {
    debug_assert!(d > 0.0 && h > 0.0 && sigma_v >= 0.0);
    let angle = (h / d).atan() + sigma_v;
    if angle >= std::f64::consts::FRAC_PI_2 {
        return d_l.abs();
    }
    let sigma = d_l.abs() * (1.0 - h / (d * angle.tan()));
    sigma.max(0.0)
}

/// Euclidean distance from the pedestrian (at longitudinal 0, lateral
/// `y_ped`) to the vehicle front at the lane centerline.
pub fn pedestrian_vehicle_distance(x_veh: f64, y_ped: f64, cfg: &WorldConfig) -> f64 {
    let lateral = cfg.lane_center() - y_ped;
    (x_veh * x_veh + lateral * lateral).sqrt().max(1e-9)
}

/// Noisy measurement of the vehicle's longitudinal distance to the
/// crossing line. The noise scale follows [`angular_noise_std`] at the
/// true geometry.
pub fn sample_measurement<R: Rng + ?Sized>(
    true_x_veh: f64,
    y_ped: f64,
    cfg: &WorldConfig,
    noise: NoiseParams,
    rng: &mut R,
) -> f64 {
    let d = pedestrian_vehicle_distance(true_x_veh, y_ped, cfg);
    let sigma = angular_noise_std(true_x_veh, d, cfg.eye_height, noise.sigma_v);
    if sigma == 0.0 {
        return true_x_veh;
    }
    let normal = Normal::new(0.0, sigma).expect("finite noise std");
    true_x_veh + normal.sample(rng)
}

/// Initial belief: centred on the true scenario state, with prior
/// standard deviations taken from the evaluation catalog.
pub fn belief_init(spec: &ScenarioSpec, catalog: &[ScenarioSpec]) -> Belief {
    let pcfg = PerceptionConfig::from_catalog(catalog);
    belief_init_with(spec, &pcfg)
}

pub fn belief_init_with(spec: &ScenarioSpec, pcfg: &PerceptionConfig) -> Belief {
    Belief {
        x_hat: spec.d0,
        v_hat: spec.v0,
        p_pos: pcfg.prior_pos_std * pcfg.prior_pos_std,
        p_vel: pcfg.prior_vel_std * pcfg.prior_vel_std,
        p_cross: 0.0,
    }
}

/// One predict-update cycle of the constant-velocity filter with a
/// position measurement `z` of variance `r_meas`.
///
/// Transition: `x <- x - v dt`, `v <- v`, with white-acceleration
/// process noise of intensity `process_accel_std`. The update uses the
/// Joseph form so the covariance stays symmetric positive semidefinite;
/// an exact measurement (`r_meas = 0`) pins the position to `z`.
pub fn belief_step(belief: &Belief, z: f64, r_meas: f64, dt: f64, pcfg: &PerceptionConfig) -> Belief {
    debug_assert!(r_meas >= 0.0 && dt > 0.0);

    // Predict. F = [[1, -dt], [0, 1]]; noise enters as [-dt^2/2, dt]^T a.
    let x_pred = belief.x_hat - belief.v_hat * dt;
    let v_pred = belief.v_hat;
    let q = pcfg.process_accel_std * pcfg.process_accel_std;
    let g_pos = -0.5 * dt * dt;
    let g_vel = dt;

    let p00 = belief.p_pos - 2.0 * dt * belief.p_cross + dt * dt * belief.p_vel + q * g_pos * g_pos;
    let p01 = belief.p_cross - dt * belief.p_vel + q * g_pos * g_vel;
    let p11 = belief.p_vel + q * g_vel * g_vel;

    // Update with H = [1, 0].
    let s = p00 + r_meas;
    if s <= 0.0 {
        // Doubly degenerate: exact prior and exact measurement.
        return Belief {
            x_hat: z,
            v_hat: v_pred,
            p_pos: 0.0,
            p_vel: p11,
            p_cross: 0.0,
        };
    }
    let k0 = p00 / s;
    let k1 = p01 / s;
    let innovation = z - x_pred;

    let x_hat = x_pred + k0 * innovation;
    let v_hat = v_pred + k1 * innovation;

    // Joseph form: (I - K H) P (I - K H)^T + K R K^T.
    let a = 1.0 - k0; // (I - KH) = [[1-k0, 0], [-k1, 1]]
    let j00 = a * a * p00 + k0 * k0 * r_meas;
    let j01 = a * (p01 - k1 * p00) + k0 * k1 * r_meas;
    let j11 = p11 - 2.0 * k1 * p01 + k1 * k1 * p00 + k1 * k1 * r_meas;

    Belief {
        x_hat,
        v_hat,
        p_pos: j00.max(0.0),
        p_vel: j11.max(0.0),
        p_cross: j01,
    }
}

/// Inverse time-to-arrival: `v / x` while the vehicle approaches the
/// crossing line, 0 once it is stopped, at, or past it.
pub fn inverse_tau(x_front: f64, v: f64) -> f64 {
    if x_front > 0.0 && v > 0.0 {
        v / x_front
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::build_catalog;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn zero_angular_noise_means_zero_positional_noise() {
        assert_eq!(angular_noise_std(31.81, 31.81, 1.6, 0.0), 0.0);
    }

    #[test]
    fn noise_at_31_81_metres() {
        // Direct evaluation of the closed form.
        let sigma = angular_noise_std(31.81, 31.81, 1.6, 0.1);
        assert!((sigma - 21.241785216378016).abs() < 1e-9, "sigma = {sigma}");
    }

    #[test]
    fn small_angle_limit() {
        // First-order expansion in sigma_v: sigma_x ~ sigma_v (d^2 + h^2) / h,
        // with a relative remainder of order sigma_v d / h. The common
        // shorthand sigma_v d^2 / h additionally drops an h^2/d^2 term,
        // so it only holds to 1% once h^2/d^2 is small.
        let h = 1.6;
        let sv = 1e-4;
        for d in [10.0f64, 20.0, 50.0] {
            let sigma = angular_noise_std(d, d, h, sv);
            let first_order = sv * (d * d + h * h) / h;
            let remainder = sv * d / h + 1e-6;
            assert!(
                (sigma - first_order).abs() / first_order < 2.0 * remainder,
                "d = {d}: {sigma} vs {first_order}"
            );
            if h * h / (d * d) < 0.005 {
                let shorthand = sv * d * d / h;
                assert!((sigma - shorthand).abs() / shorthand < 0.01, "d = {d}");
            }
        }
    }

    #[test]
    fn horizon_saturation_returns_full_distance() {
        assert_eq!(angular_noise_std(40.0, 40.0, 1.6, 1.6), 40.0);
    }

    #[test]
    fn measurement_exact_when_noiseless() {
        let cfg = WorldConfig::default();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let z = sample_measurement(25.0, 0.0, &cfg, NoiseParams { sigma_v: 0.0 }, &mut rng);
        assert_eq!(z, 25.0);
        // Vehicle front exactly at the line: |d_l| factor kills the noise.
        let z = sample_measurement(0.0, 0.0, &cfg, NoiseParams { sigma_v: 0.1 }, &mut rng);
        assert_eq!(z, 0.0);
    }

    #[test]
    fn measurement_spread_matches_noise_law() {
        let cfg = WorldConfig::default();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let true_x = 31.81;
        // Evaluate the law at the same geometry the sampler uses.
        let d = pedestrian_vehicle_distance(true_x, 0.0, &cfg);
        let expected = angular_noise_std(true_x, d, cfg.eye_height, 0.1);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let err = sample_measurement(true_x, 0.0, &cfg, NoiseParams { sigma_v: 0.1 }, &mut rng)
                - true_x;
            sum += err;
            sum_sq += err * err;
        }
        let var = (sum_sq - sum * sum / n as f64) / (n as f64 - 1.0);
        let std = var.sqrt();
        assert!(
            (std - expected).abs() / expected < 0.02,
            "sample std {std}, expected {expected}"
        );
    }

    #[test]
    fn prior_stds_match_catalog_arithmetic() {
        let catalog = build_catalog();
        let pcfg = PerceptionConfig::from_catalog(&catalog);
        // Sample standard deviations of the fourteen evaluation rows,
        // computed independently.
        assert!((pcfg.prior_pos_std - 25.718476447278732).abs() < 1e-9);
        assert!((pcfg.prior_vel_std - 3.569190507541014).abs() < 1e-9);

        let spec = catalog.iter().find(|s| s.d0 == 31.81).unwrap();
        let belief = belief_init(spec, &catalog);
        assert_eq!(belief.x_hat, 31.81);
        assert_eq!(belief.v_hat, spec.v0);
        assert_eq!(belief.p_cross, 0.0);
    }

    #[test]
    fn identical_catalog_gives_zero_priors() {
        let catalog = build_catalog();
        let one = catalog[0].clone();
        let same: Vec<_> = (0..5).map(|_| one.clone()).collect();
        let pcfg = PerceptionConfig::from_catalog(&same);
        assert_eq!(pcfg.prior_pos_std, 0.0);
        assert_eq!(pcfg.prior_vel_std, 0.0);
    }

    #[test]
    fn exact_measurement_pins_position() {
        let pcfg = PerceptionConfig {
            process_accel_std: 0.5,
            prior_pos_std: 10.0,
            prior_vel_std: 3.0,
        };
        let belief = Belief {
            x_hat: 40.0,
            v_hat: 8.0,
            p_pos: 100.0,
            p_vel: 9.0,
            p_cross: 0.0,
        };
        let post = belief_step(&belief, 37.5, 0.0, 0.1, &pcfg);
        assert_eq!(post.x_hat, 37.5);
        assert!(post.p_pos < 1e-12);
    }

    #[test]
    fn stationary_vehicle_velocity_estimate_converges() {
        // Exact position measurements of a stationary vehicle with zero
        // process noise drive the speed estimate to zero.
        let pcfg = PerceptionConfig {
            process_accel_std: 0.0,
            prior_pos_std: 25.0,
            prior_vel_std: 3.5,
        };
        let mut belief = Belief {
            x_hat: 20.0,
            v_hat: 6.94,
            p_pos: 625.0,
            p_vel: 12.25,
            p_cross: 0.0,
        };
        for _ in 0..5 {
            belief = belief_step(&belief, 20.0, 0.0, 0.1, &pcfg);
        }
        assert!(belief.v_hat.abs() < 1e-6, "v_hat = {}", belief.v_hat);
        assert!((belief.x_hat - 20.0).abs() < 1e-9);
    }

    #[test]
    fn noiseless_tracking_error_shrinks_monotonically() {
        let catalog = build_catalog();
        let spec = catalog.iter().find(|s| s.d0 == 63.61).unwrap();
        let pcfg = PerceptionConfig {
            process_accel_std: 0.0,
            ..PerceptionConfig::from_catalog(&catalog)
        };
        let mut belief = belief_init_with(spec, &pcfg);
        // Start the speed estimate off target so there is an error to shed.
        belief.v_hat += 2.0;
        let dt = 0.1;
        let mut prev_err = f64::INFINITY;
        for k in 1..=20 {
            let t = k as f64 * dt;
            let x_true = spec.d0 - spec.v0 * t;
            belief = belief_step(&belief, x_true, 0.0, dt, &pcfg);
            let err = (belief.x_hat - x_true).abs();
            assert!(err <= prev_err + 1e-12);
            prev_err = err;
        }
        assert!(prev_err < 1e-9);
    }

    #[test]
    fn inverse_tau_clamps() {
        assert!((inverse_tau(31.81, 13.89) - 0.4366551398931154).abs() < 1e-15);
        assert_eq!(inverse_tau(10.0, 0.0), 0.0);
        assert_eq!(inverse_tau(-2.0, 6.94), 0.0);
        assert_eq!(inverse_tau(0.0, 6.94), 0.0);
    }

    proptest! {
        #[test]
        fn noise_nondecreasing_in_sigma(
            d in 1.0f64..200.0,
            s1 in 0.0f64..0.8,
            s2 in 0.0f64..0.8,
        ) {
            let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
            let a = angular_noise_std(d, d, 1.6, lo);
            let b = angular_noise_std(d, d, 1.6, hi);
            prop_assert!(a <= b + 1e-12);
        }

        #[test]
        fn noise_scale_property(
            d in 1.0f64..100.0,
            scale in 0.1f64..10.0,
            sigma in 1e-4f64..0.5,
        ) {
            // sigma_x / |d_l| depends only on (h/d, sigma): scaling d and h
            // together leaves the ratio unchanged.
            let h = 1.6;
            let base = angular_noise_std(d, d, h, sigma) / d;
            let scaled = angular_noise_std(d * scale, d * scale, h * scale, sigma) / (d * scale);
            prop_assert!((base - scaled).abs() < 1e-9);
        }

        #[test]
        fn belief_covariance_stays_psd(
            seed in 0u64..1000,
            r in 0.0f64..50.0,
        ) {
            let pcfg = PerceptionConfig {
                process_accel_std: 2.0,
                prior_pos_std: 25.0,
                prior_vel_std: 3.5,
            };
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let mut belief = Belief {
                x_hat: 50.0, v_hat: 10.0,
                p_pos: 625.0, p_vel: 12.25, p_cross: 0.0,
            };
            for _ in 0..50 {
                let z = 50.0 + rng.random_range(-30.0..30.0);
                belief = belief_step(&belief, z, r, 0.1, &pcfg);
                let trace_ok = belief.p_pos >= -1e-12 && belief.p_vel >= -1e-12;
                let det = belief.p_pos * belief.p_vel - belief.p_cross * belief.p_cross;
                prop_assert!(trace_ok && det >= -1e-9 * (1.0 + belief.p_pos * belief.p_vel));
            }
        }

        #[test]
        fn inverse_tau_nonnegative(x in -100.0f64..100.0, v in -10.0f64..30.0) {
            let it = inverse_tau(x, v);
            prop_assert!(it >= 0.0);
            if x > 0.0 && v > 0.0 {
                prop_assert!((it - v / x).abs() < 1e-15);
            }
        }
    }
}
