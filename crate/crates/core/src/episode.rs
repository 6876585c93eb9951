//! Episode runner shared by the training loop and the evaluator.
//!
//! Decisions are only live while the pedestrian waits at the curb. Once
//! Go is chosen the walking dynamics roll forward without further
//! decisions and the terminal reward lands on the Go transition, so the
//! learner sees a compact decision process: a chain of NotGo steps
//! closed by either a Go (arrival or collision) or a timeout.

use rand::{Rng, RngCore};

use crate::env::{self, Action, PedPhase, SimState, TerminalKind, WorldConfig};
use crate::error::Result;
use crate::perception::{
    angular_noise_std, belief_init_with, belief_step, inverse_tau, pedestrian_vehicle_distance,
    Belief, NoiseParams, PerceptionConfig,
};
use crate::policy::ObsEncoder;
use crate::scenario::ScenarioSpec;

/// Scenario and parameter bundle for one episode.
pub struct EpisodeSetup<'a> {
    pub spec: &'a ScenarioSpec,
    pub world: &'a WorldConfig,
    pub pcfg: &'a PerceptionConfig,
    pub encoder: &'a ObsEncoder,
    /// Angular noise level fed to the perception pipeline (visual
    /// variants only).
    pub sigma_v: f64,
    /// Looming aversion weight (looming variants only).
    pub c: f64,
}

/// One decision-step transition as seen by the learner.
pub struct DecisionTransition {
    pub obs: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub terminal: bool,
}

/// Decision maker driven by the episode runner. `observe` fires after
/// every decision step, in order.
pub trait Agent {
    fn decide(&mut self, obs: &[f64], rng: &mut dyn RngCore) -> Result<Action>;
    fn observe(&mut self, _transition: DecisionTransition, _rng: &mut dyn RngCore) -> Result<()> {
        Ok(())
    }
}

/// Adapter for plain closures, mostly for tests and greedy rollouts.
pub struct FnAgent<D>(pub D);

impl<D> Agent for FnAgent<D>
where
    D: FnMut(&[f64], &mut dyn RngCore) -> Result<Action>,
{
    fn decide(&mut self, obs: &[f64], rng: &mut dyn RngCore) -> Result<Action> {
        (self.0)(obs, rng)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EpisodeSummary {
    pub outcome: TerminalKind,
    /// Step index at which Go was selected, if it was.
    pub go_step: Option<u32>,
    /// Sampled motor delay, s.
    pub motor_delay: Option<f64>,
    /// Crossing initiation time: Go time plus motor delay, s.
    pub cit: Option<f64>,
    /// Step index at termination.
    pub final_step: u32,
    /// Reward credited to the closing decision.
    pub terminal_reward: f64,
}

/// Runs one episode to termination.
pub fn run_episode<R: Rng, A: Agent>(
    setup: &EpisodeSetup,
    rng: &mut R,
    agent: &mut A,
) -> Result<EpisodeSummary> {
    let variant = setup.encoder.variant;
    let noise = NoiseParams {
        sigma_v: setup.sigma_v,
    };
    let looming_weight = if variant.uses_looming() { setup.c } else { 0.0 };

    let mut state = SimState::initial(setup.spec);
    let mut belief: Option<Belief> = variant
        .uses_belief()
        .then(|| belief_init_with(setup.spec, setup.pcfg));

    let encode = |state: &SimState, belief: &Option<Belief>| -> Result<Vec<f64>> {
        setup.encoder.encode(
            state,
            belief.as_ref(),
            variant.uses_belief().then_some(setup.sigma_v),
            variant.uses_looming().then_some(setup.c),
        )
    };

    let mut obs = encode(&state, &belief)?;
    loop {
        let action = agent.decide(&obs, rng)?;
        if action == Action::Go {
            // The looming penalty is charged against the threat accepted
            // at the decision instant: true inverse tau for ideal
            // observers, the belief estimate for noisy ones.
            let inv_tau_est = match &belief {
                Some(b) => inverse_tau(b.x_hat, b.v_hat),
                None => inverse_tau(state.x_veh, state.v_veh),
            };
            let go_step = state.step;
            let mut out = env::step(&state, Action::Go, setup.spec, setup.world, rng);
            let motor_delay = out.motor_delay;
            while !out.terminal {
                out = env::step(&out.next, Action::NotGo, setup.spec, setup.world, rng);
            }
            let reward = env::terminal_reward(
                out.terminal_kind,
                out.next.step,
                looming_weight,
                inv_tau_est,
                setup.world,
            );
            agent.observe(
                DecisionTransition {
                    obs,
                    action: Action::Go,
                    reward,
                    next_obs: vec![0.0; setup.encoder.obs_len()],
                    terminal: true,
                },
                rng,
            )?;
            return Ok(EpisodeSummary {
                outcome: out.terminal_kind,
                go_step: Some(go_step),
                motor_delay,
                cit: motor_delay.map(|d| go_step as f64 * setup.world.dt + d),
                final_step: out.next.step,
                terminal_reward: reward,
            });
        }

        let out = env::step(&state, Action::NotGo, setup.spec, setup.world, rng);
        if out.terminal {
            debug_assert_eq!(out.terminal_kind, TerminalKind::Timeout);
            let reward =
                env::terminal_reward(out.terminal_kind, out.next.step, 0.0, 0.0, setup.world);
            agent.observe(
                DecisionTransition {
                    obs,
                    action: Action::NotGo,
                    reward,
                    next_obs: vec![0.0; setup.encoder.obs_len()],
                    terminal: true,
                },
                rng,
            )?;
            return Ok(EpisodeSummary {
                outcome: TerminalKind::Timeout,
                go_step: None,
                motor_delay: None,
                cit: None,
                final_step: out.next.step,
                terminal_reward: reward,
            });
        }

        state = out.next;
        debug_assert_eq!(state.phase, PedPhase::Waiting);
        if let Some(b) = belief.as_mut() {
            // Measurement noise realized at the true geometry; the filter
            // weighs it by the noise level at its own predicted distance,
            // since the agent has no access to the truth.
            let z = crate::perception::sample_measurement(
                state.x_veh,
                state.y_ped,
                setup.world,
                noise,
                rng,
            );
            let x_pred = b.x_hat - b.v_hat * setup.world.dt;
            let d_pred = pedestrian_vehicle_distance(x_pred, state.y_ped, setup.world);
            let sigma_pred =
                angular_noise_std(x_pred, d_pred, setup.world.eye_height, setup.sigma_v);
            *b = belief_step(b, z, sigma_pred * sigma_pred, setup.world.dt, setup.pcfg);
        }
        let next_obs = encode(&state, &belief)?;
        agent.observe(
            DecisionTransition {
                obs,
                action: Action::NotGo,
                reward: 0.0,
                next_obs: next_obs.clone(),
                terminal: false,
            },
            rng,
        )?;
        obs = next_obs;
    }
}
