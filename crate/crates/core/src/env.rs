//! POMDP environment: world geometry, pedestrian state machine, collision
//! check, and terminal reward.
//!
//! Coordinates: the pedestrian crosses along the lateral axis at
//! longitudinal coordinate 0. `x_veh` is the vehicle front bumper's
//! longitudinal distance to the crossing line (negative once past it);
//! the vehicle body extends from `x_veh` to `x_veh + vehicle_length`.
//! `y_ped` is the pedestrian's progress across the road, 0 at the curb.
//!
//! The commit-to-cross decision is modelled as a button press: the
//! sampled motor delay offsets the reported crossing-initiation time but
//! does not shift the walking trajectory used for the collision check.
//! Walking starts on the step after the Go action.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::scenario::{vehicle_state, ScenarioSpec};

/// World geometry, timing and reward constants shared by every scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    /// Full road width the pedestrian has to cover, m.
    pub road_width: f64,
    /// Pedestrian walking speed once committed, m/s.
    pub walk_speed: f64,
    /// Simulation step, s.
    pub dt: f64,
    /// Pedestrian eye height over ground, m.
    pub eye_height: f64,
    /// Vehicle length, m.
    pub vehicle_length: f64,
    /// Vehicle width, m.
    pub vehicle_width: f64,
    /// Lateral distance from the curb to the near side of the vehicle, m.
    pub lane_near_edge: f64,
    /// Pedestrian body radius, m.
    pub ped_radius: f64,
    /// Episode cutoff, s.
    pub max_episode_s: f64,
    /// Motor delay distribution between commitment and button press, s.
    pub motor_delay_mean: f64,
    pub motor_delay_std: f64,
    /// Terminal reward for crossing without collision.
    pub reward_success: f64,
    /// Terminal reward for a collision (also used for timeouts).
    pub reward_collision: f64,
    /// Penalty per elapsed step, applied at arrival.
    pub time_penalty_rate: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            road_width: 5.85,
            walk_speed: 1.31,
            dt: 0.1,
            eye_height: 1.6,
            vehicle_length: 4.5,
            vehicle_width: 2.0,
            // Vehicle centered in the near lane of a two-lane 5.85 m road.
            lane_near_edge: 0.4625,
            ped_radius: 0.25,
            max_episode_s: 30.0,
            motor_delay_mean: 0.6,
            motor_delay_std: 0.2,
            reward_success: 20.0,
            reward_collision: -20.0,
            time_penalty_rate: 0.01,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> crate::error::Result<()> {
        let positive = [
            ("road_width", self.road_width),
            ("walk_speed", self.walk_speed),
            ("dt", self.dt),
            ("eye_height", self.eye_height),
            ("vehicle_length", self.vehicle_length),
            ("vehicle_width", self.vehicle_width),
            ("lane_near_edge", self.lane_near_edge),
            ("ped_radius", self.ped_radius),
            ("max_episode_s", self.max_episode_s),
        ];
        for (name, value) in positive {
            if !(value > 0.0) {
                return Err(crate::error::Error::Config(format!(
                    "world.{name} must be positive, got {value}"
                )));
            }
        }
        if self.motor_delay_std < 0.0 {
            return Err(crate::error::Error::Config(
                "world.motor_delay_std must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// Number of steps after which an undecided episode times out.
    pub fn max_steps(&self) -> u32 {
        (self.max_episode_s / self.dt).ceil() as u32
    }

    /// Lateral coordinate of the vehicle centerline.
    pub fn lane_center(&self) -> f64 {
        self.lane_near_edge + 0.5 * self.vehicle_width
    }

    /// Motor delay sample, truncated below at zero.
    pub fn sample_motor_delay<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.motor_delay_std == 0.0 {
            return self.motor_delay_mean.max(0.0);
        }
        let normal = Normal::new(self.motor_delay_mean, self.motor_delay_std)
            .expect("validated motor delay parameters");
        normal.sample(rng).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    NotGo,
    Go,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PedPhase {
    /// Standing at the curb; Go/NotGo decisions are live.
    Waiting,
    /// Committed and walking; actions are ignored.
    Walking,
    /// Episode over.
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminalKind {
    None,
    Arrival,
    Collision,
    Timeout,
}

/// Full environment state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimState {
    /// Step index; elapsed time is `step * dt`.
    pub step: u32,
    /// Vehicle front bumper longitudinal coordinate, m.
    pub x_veh: f64,
    /// Vehicle speed, m/s (>= 0).
    pub v_veh: f64,
    /// Pedestrian progress across the road, m from the curb.
    pub y_ped: f64,
    pub phase: PedPhase,
}

impl SimState {
    pub fn initial(spec: &ScenarioSpec) -> Self {
        SimState {
            step: 0,
            x_veh: spec.d0,
            v_veh: spec.v0,
            y_ped: 0.0,
            phase: PedPhase::Waiting,
        }
    }

    pub fn time(&self, cfg: &WorldConfig) -> f64 {
        self.step as f64 * cfg.dt
    }
}

/// Result of a single environment transition.
#[derive(Debug, Clone, Copy)]
pub struct StepOutcome {
    pub next: SimState,
    pub terminal: bool,
    pub terminal_kind: TerminalKind,
    /// True inverse time-to-arrival at the moment Go was executed,
    /// recorded on the Go step only.
    pub inverse_tau_at_go: Option<f64>,
    /// Motor delay sampled on the Go step; added to the reported
    /// crossing-initiation time.
    pub motor_delay: Option<f64>,
}

/// True iff the pedestrian disc (center at longitudinal 0, lateral
/// `y_ped`) intersects the vehicle rectangle.
pub fn check_collision(state: &SimState, cfg: &WorldConfig) -> bool {
    let nearest_x = 0.0_f64.clamp(
        state.x_veh.min(state.x_veh + cfg.vehicle_length),
        state.x_veh.max(state.x_veh + cfg.vehicle_length),
    );
    let nearest_y = state
        .y_ped
        .clamp(cfg.lane_near_edge, cfg.lane_near_edge + cfg.vehicle_width);
    let dx = nearest_x;
    let dy = nearest_y - state.y_ped;
    dx * dx + dy * dy <= cfg.ped_radius * cfg.ped_radius
}

/// Interpolated collision checks within a single walking step.
const COLLISION_SUBSTEPS: u32 = 5;

/// Advances the environment by one step.
///
/// Go is only honored while waiting; any action after commitment is
/// treated as NotGo. Walking advances the pedestrian by
/// `walk_speed * dt` with collision checked at interpolated substeps
/// (the vehicle position is exact at each substep, the pedestrian moves
/// linearly). Arrival triggers when `y_ped` reaches the far curb;
/// timeout when elapsed time reaches `max_episode_s`.
pub fn step<R: Rng + ?Sized>(
    state: &SimState,
    action: Action,
    spec: &ScenarioSpec,
    cfg: &WorldConfig,
    rng: &mut R,
) -> StepOutcome {
    assert!(
        state.phase != PedPhase::Done,
        "step() called on a terminal state"
    );

    let t_next = (state.step + 1) as f64 * cfg.dt;
    let (x_next, v_next) = vehicle_state(spec, t_next).expect("valid scenario");

    let mut inverse_tau_at_go = None;
    let mut motor_delay = None;
    let phase = match (state.phase, action) {
        (PedPhase::Waiting, Action::Go) => {
            inverse_tau_at_go = Some(crate::perception::inverse_tau(state.x_veh, state.v_veh));
            motor_delay = Some(cfg.sample_motor_delay(rng));
            PedPhase::Walking
        }
        (phase, _) => phase,
    };

    let mut next = SimState {
        step: state.step + 1,
        x_veh: x_next,
        v_veh: v_next,
        y_ped: state.y_ped,
        phase,
    };

    let mut terminal_kind = TerminalKind::None;
    if phase == PedPhase::Walking && state.phase == PedPhase::Walking {
        // Sweep the step interval for contact before moving on.
        let y_start = state.y_ped;
        let y_end = state.y_ped + cfg.walk_speed * cfg.dt;
        for k in 1..=COLLISION_SUBSTEPS {
            let frac = k as f64 / COLLISION_SUBSTEPS as f64;
            let t_sub = (state.step as f64 + frac) * cfg.dt;
            let (x_sub, _) = vehicle_state(spec, t_sub).expect("valid scenario");
            let probe = SimState {
                step: state.step,
                x_veh: x_sub,
                v_veh: 0.0,
                y_ped: y_start + frac * (y_end - y_start),
                phase: PedPhase::Walking,
            };
            if check_collision(&probe, cfg) {
                terminal_kind = TerminalKind::Collision;
                break;
            }
        }
        next.y_ped = y_end;
        if terminal_kind == TerminalKind::None && next.y_ped >= cfg.road_width {
            next.y_ped = cfg.road_width;
            terminal_kind = TerminalKind::Arrival;
        }
    }

    if terminal_kind == TerminalKind::None && t_next >= cfg.max_episode_s {
        terminal_kind = TerminalKind::Timeout;
    }

    let terminal = terminal_kind != TerminalKind::None;
    if terminal {
        next.phase = PedPhase::Done;
    }
    StepOutcome {
        next,
        terminal,
        terminal_kind,
        inverse_tau_at_go,
        motor_delay,
    }
}

/// Terminal reward. Collisions and timeouts earn the flat collision
/// reward; arrival earns the success reward minus the step-count time
/// penalty and the looming-aversion penalty `c * inv_tau`, clamped to
/// the collision/success band.
pub fn terminal_reward(
    kind: TerminalKind,
    t_steps: u32,
    c: f64,
    inv_tau: f64,
    cfg: &WorldConfig,
) -> f64 {
    match kind {
        TerminalKind::Collision | TerminalKind::Timeout => cfg.reward_collision,
        TerminalKind::Arrival => (cfg.reward_success
            - cfg.time_penalty_rate * t_steps as f64
            - c * inv_tau)
            .clamp(cfg.reward_collision, cfg.reward_success),
        TerminalKind::None => panic!("terminal_reward called with TerminalKind::None"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::build_catalog;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn cfg() -> WorldConfig {
        WorldConfig::default()
    }

    fn constant_spec() -> ScenarioSpec {
        build_catalog()
            .into_iter()
            .find(|s| s.kind == crate::scenario::ScenarioKind::Constant && s.d0 == 15.90)
            .unwrap()
    }

    #[test]
    fn collision_geometry() {
        let cfg = cfg();
        // On the curb: outside the lane band regardless of vehicle position.
        for x in [-10.0, -2.25, 0.0, 5.0, 100.0] {
            let s = SimState {
                step: 0,
                x_veh: x,
                v_veh: 5.0,
                y_ped: 0.0,
                phase: PedPhase::Walking,
            };
            assert!(!check_collision(&s, &cfg), "x_veh = {x}");
        }
        // Lane center with the vehicle straddling the crossing line.
        let s = SimState {
            step: 0,
            x_veh: -cfg.vehicle_length / 2.0,
            v_veh: 5.0,
            y_ped: cfg.lane_near_edge + 0.5 * cfg.vehicle_width,
            phase: PedPhase::Walking,
        };
        assert!(check_collision(&s, &cfg));
        // Vehicle front just beyond the pedestrian radius: clear.
        let s = SimState {
            x_veh: cfg.ped_radius + 0.001,
            ..s
        };
        assert!(!check_collision(&s, &cfg));
        let s = SimState {
            x_veh: cfg.ped_radius - 0.001,
            ..s
        };
        assert!(check_collision(&s, &cfg));
    }

    #[test]
    fn waiting_notgo_is_a_noop() {
        let cfg = cfg();
        let spec = constant_spec();
        let state = SimState::initial(&spec);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let out = step(&state, Action::NotGo, &spec, &cfg, &mut rng);
        assert!(!out.terminal);
        assert_eq!(out.next.phase, PedPhase::Waiting);
        assert_eq!(out.next.y_ped, 0.0);
        assert_eq!(out.next.step, 1);
        assert!(out.inverse_tau_at_go.is_none());
    }

    #[test]
    fn go_records_inverse_tau_and_delay() {
        let cfg = cfg();
        let spec = constant_spec();
        let state = SimState::initial(&spec);
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let out = step(&state, Action::Go, &spec, &cfg, &mut rng);
        let inv = out.inverse_tau_at_go.unwrap();
        assert!((inv - spec.v0 / spec.d0).abs() < 1e-12);
        assert!(out.motor_delay.unwrap() >= 0.0);
        assert_eq!(out.next.phase, PedPhase::Walking);
        // Walking begins on the following step.
        assert_eq!(out.next.y_ped, 0.0);
    }

    #[test]
    fn arrival_at_far_curb() {
        let cfg = cfg();
        let spec = constant_spec();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let state = SimState {
            step: 200,
            x_veh: -500.0,
            v_veh: spec.v0,
            y_ped: cfg.road_width - cfg.walk_speed * cfg.dt,
            phase: PedPhase::Walking,
        };
        let out = step(&state, Action::NotGo, &spec, &cfg, &mut rng);
        assert!(out.terminal);
        assert_eq!(out.terminal_kind, TerminalKind::Arrival);
        assert_eq!(out.next.y_ped, cfg.road_width);
    }

    #[test]
    fn walking_into_the_vehicle_collides() {
        let cfg = cfg();
        let spec = constant_spec();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        // Vehicle front reaches the line at tau0 = 2.291 s (step ~23).
        // Put the pedestrian inside the lane band at that moment.
        let t = 23;
        let (x, v) = vehicle_state(&spec, t as f64 * cfg.dt).unwrap();
        let state = SimState {
            step: t,
            x_veh: x,
            v_veh: v,
            y_ped: cfg.lane_near_edge + 0.5,
            phase: PedPhase::Walking,
        };
        let out = step(&state, Action::NotGo, &spec, &cfg, &mut rng);
        assert!(out.terminal);
        assert_eq!(out.terminal_kind, TerminalKind::Collision);
    }

    #[test]
    fn never_go_times_out_at_exact_step_count() {
        let cfg = cfg();
        let spec = constant_spec();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let mut state = SimState::initial(&spec);
        let mut steps = 0u32;
        loop {
            let out = step(&state, Action::NotGo, &spec, &cfg, &mut rng);
            steps += 1;
            if out.terminal {
                assert_eq!(out.terminal_kind, TerminalKind::Timeout);
                break;
            }
            state = out.next;
        }
        assert_eq!(steps, cfg.max_steps());
        assert_eq!(cfg.max_steps(), 300);
    }

    #[test]
    fn terminal_reward_examples() {
        let cfg = cfg();
        assert_eq!(terminal_reward(TerminalKind::Collision, 57, 30.0, 0.3, &cfg), -20.0);
        assert_eq!(terminal_reward(TerminalKind::Timeout, 300, 0.0, 0.0, &cfg), -20.0);
        assert_eq!(terminal_reward(TerminalKind::Arrival, 0, 0.0, 0.0, &cfg), 20.0);
        // 20 - 1 - 100 clamps to the lower bound.
        assert_eq!(
            terminal_reward(TerminalKind::Arrival, 100, 100.0, 1.0, &cfg),
            -20.0
        );
        // 20 - 0.5 - 5
        assert!(
            (terminal_reward(TerminalKind::Arrival, 50, 10.0, 0.5, &cfg) - 14.5).abs() < 1e-12
        );
    }

    #[test]
    fn go_at_start_is_safe_for_constant_and_fatal_for_tta_1() {
        // Deterministic rollouts of the walking dynamics.
        let cfg = cfg();
        let run = |spec: &ScenarioSpec| {
            let mut rng = ChaCha12Rng::seed_from_u64(1);
            let mut state = SimState::initial(spec);
            let mut action = Action::Go;
            loop {
                let out = step(&state, action, spec, &cfg, &mut rng);
                action = Action::NotGo;
                if out.terminal {
                    return out.terminal_kind;
                }
                state = out.next;
            }
        };
        for spec in build_catalog().iter().filter(|s| s.is_evaluation()) {
            match spec.kind {
                crate::scenario::ScenarioKind::Constant => {
                    assert_eq!(run(spec), TerminalKind::Arrival, "{}", spec.id);
                }
                _ => {}
            }
        }
        for spec in build_catalog()
            .iter()
            .filter(|s| s.kind == crate::scenario::ScenarioKind::InfeasibleTraining)
        {
            assert_eq!(run(spec), TerminalKind::Collision, "{}", spec.id);
        }
    }

    #[test]
    fn motor_delay_truncated_at_zero() {
        let mut cfg = cfg();
        cfg.motor_delay_mean = 0.0;
        cfg.motor_delay_std = 0.5;
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        for _ in 0..1000 {
            assert!(cfg.sample_motor_delay(&mut rng) >= 0.0);
        }
    }

    proptest! {
        #[test]
        fn reward_bounded(t in 0u32..10_000, c in 0.0f64..200.0, inv in 0.0f64..10.0) {
            let cfg = WorldConfig::default();
            for kind in [TerminalKind::Arrival, TerminalKind::Collision, TerminalKind::Timeout] {
                let r = terminal_reward(kind, t, c, inv, &cfg);
                prop_assert!((-20.0..=20.0).contains(&r));
            }
        }

        #[test]
        fn collision_depends_only_on_instantaneous_state(
            x in -20.0f64..20.0,
            y in 0.0f64..5.85,
            step_a in 0u32..300,
            step_b in 0u32..300,
        ) {
            let cfg = WorldConfig::default();
            let a = SimState { step: step_a, x_veh: x, v_veh: 3.0, y_ped: y, phase: PedPhase::Walking };
            let b = SimState { step: step_b, x_veh: x, v_veh: 9.0, y_ped: y, phase: PedPhase::Waiting };
            prop_assert_eq!(check_collision(&a, &cfg), check_collision(&b, &cfg));
        }
    }
}
