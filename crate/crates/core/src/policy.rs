//! Model variants, observation encoding, exploration schedule, replay
//! buffer, and the double-DQN update rule.

use rand::Rng;

use crate::env::{Action, SimState, WorldConfig};
use crate::error::{Error, Result};
use crate::net::{Optimizer, QNet, N_ACTIONS};
use crate::perception::{Belief, PerceptionConfig};

/// The four model variants. Looming variants add the aversion weight to
/// the reward and to the observation; visual variants observe Kalman
/// estimates instead of the true vehicle state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Baseline: ideal observer, no looming aversion.
    Bm,
    /// Looming aversion only.
    Lm,
    /// Visual limitation only.
    Vm,
    /// Visual limitation and looming aversion.
    Vlm,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Bm => "BM",
            Variant::Lm => "LM",
            Variant::Vm => "VM",
            Variant::Vlm => "VLM",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "BM" => Some(Variant::Bm),
            "LM" => Some(Variant::Lm),
            "VM" => Some(Variant::Vm),
            "VLM" => Some(Variant::Vlm),
            _ => None,
        }
    }

    pub fn uses_belief(&self) -> bool {
        matches!(self, Variant::Vm | Variant::Vlm)
    }

    pub fn uses_looming(&self) -> bool {
        matches!(self, Variant::Lm | Variant::Vlm)
    }

    /// Observation vector length.
    pub fn obs_len(&self) -> usize {
        match self {
            Variant::Bm => 6,
            Variant::Lm => 7,
            Variant::Vm => 9,
            Variant::Vlm => 10,
        }
    }
}

/// Fixed feature scales.
pub const POSITION_SCALE: f64 = 100.0;
pub const SPEED_SCALE: f64 = 15.0;
pub const LOOMING_WEIGHT_SCALE: f64 = 100.0;

/// Packs and normalizes the observation vector for one variant.
///
/// Layout: pedestrian position (longitudinal, lateral), vehicle
/// longitudinal position (true or estimated), vehicle lateral position,
/// vehicle speed (true or estimated), then for visual variants the two
/// belief variances and `sigma_v`, then for looming variants `c`, and
/// finally the step index. Positions scale by 100 m, speeds by 15 m/s,
/// variances by their priors, `c` by 100, time by the episode cutoff.
#[derive(Debug, Clone)]
pub struct ObsEncoder {
    pub variant: Variant,
    lane_center: f64,
    max_steps: f64,
    prior_pos_var: f64,
    prior_vel_var: f64,
}

impl ObsEncoder {
    pub fn new(variant: Variant, world: &WorldConfig, pcfg: &PerceptionConfig) -> Self {
        ObsEncoder {
            variant,
            lane_center: world.lane_center(),
            max_steps: world.max_steps() as f64,
            prior_pos_var: (pcfg.prior_pos_std * pcfg.prior_pos_std).max(1e-12),
            prior_vel_var: (pcfg.prior_vel_std * pcfg.prior_vel_std).max(1e-12),
        }
    }

    pub fn obs_len(&self) -> usize {
        self.variant.obs_len()
    }

    pub fn encode(
        &self,
        state: &SimState,
        belief: Option<&Belief>,
        sigma_v: Option<f64>,
        c: Option<f64>,
    ) -> Result<Vec<f64>> {
        if self.variant.uses_belief() && (belief.is_none() || sigma_v.is_none()) {
            return Err(Error::Invalid(format!(
                "variant {} requires a belief and sigma_v",
                self.variant.as_str()
            )));
        }
        if self.variant.uses_looming() && c.is_none() {
            return Err(Error::Invalid(format!(
                "variant {} requires a looming weight",
                self.variant.as_str()
            )));
        }

        let mut obs = Vec::with_capacity(self.obs_len());
        // Pedestrian longitudinal position is pinned to the crossing line.
        obs.push(0.0 / POSITION_SCALE);
        obs.push(state.y_ped / POSITION_SCALE);
        if self.variant.uses_belief() {
            let b = belief.unwrap();
            obs.push(b.x_hat / POSITION_SCALE);
            obs.push(self.lane_center / POSITION_SCALE);
            obs.push(b.v_hat / SPEED_SCALE);
            obs.push(b.p_pos / self.prior_pos_var);
            obs.push(b.p_vel / self.prior_vel_var);
            obs.push(sigma_v.unwrap());
        } else {
            obs.push(state.x_veh / POSITION_SCALE);
            obs.push(self.lane_center / POSITION_SCALE);
            obs.push(state.v_veh / SPEED_SCALE);
        }
        if self.variant.uses_looming() {
            obs.push(c.unwrap() / LOOMING_WEIGHT_SCALE);
        }
        obs.push(state.step as f64 / self.max_steps);

        debug_assert_eq!(obs.len(), self.obs_len());
        Ok(obs)
    }

    /// Inverse of the normalization, in encoding order. Diagnostic.
    pub fn decode(&self, obs: &[f64]) -> Vec<f64> {
        let mut raw = Vec::with_capacity(obs.len());
        raw.push(obs[0] * POSITION_SCALE);
        raw.push(obs[1] * POSITION_SCALE);
        raw.push(obs[2] * POSITION_SCALE);
        raw.push(obs[3] * POSITION_SCALE);
        raw.push(obs[4] * SPEED_SCALE);
        let mut idx = 5;
        if self.variant.uses_belief() {
            raw.push(obs[5] * self.prior_pos_var);
            raw.push(obs[6] * self.prior_vel_var);
            raw.push(obs[7]);
            idx = 8;
        }
        if self.variant.uses_looming() {
            raw.push(obs[idx] * LOOMING_WEIGHT_SCALE);
            idx += 1;
        }
        raw.push(obs[idx] * self.max_steps);
        raw
    }
}

/// Linearly decayed exploration rate, floored at `eps_min`.
pub fn epsilon(learn_step: u64, cfg: &TrainConfig) -> f64 {
    (cfg.eps_start - cfg.eps_decay_per_step * learn_step as f64).max(cfg.eps_min)
}

/// Epsilon-greedy action selection. Greedy ties break toward NotGo.
pub fn select_action<R: Rng + ?Sized>(
    net: &QNet,
    obs: &[f64],
    eps: f64,
    rng: &mut R,
) -> Result<Action> {
    debug_assert!((0.0..=1.0).contains(&eps));
    if eps > 0.0 && rng.random::<f64>() < eps {
        return Ok(if rng.random::<f64>() < 0.5 {
            Action::NotGo
        } else {
            Action::Go
        });
    }
    let q = net.forward(obs)?;
    Ok(greedy_action(q))
}

pub fn greedy_action(q: [f64; N_ACTIONS]) -> Action {
    if q[1] > q[0] {
        Action::Go
    } else {
        Action::NotGo
    }
}

pub fn action_index(action: Action) -> usize {
    match action {
        Action::NotGo => 0,
        Action::Go => 1,
    }
}

/// One stored decision-step transition.
#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub terminal: bool,
}

/// Fixed-capacity ring buffer with uniform sampling.
pub struct ReplayBuffer {
    data: Vec<Transition>,
    capacity: usize,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer {
            data: Vec::with_capacity(capacity.min(4096)),
            capacity,
            next: 0,
        }
    }

    pub fn push(&mut self, transition: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(transition);
        } else {
            self.data[self.next] = transition;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        (0..n).map(|_| rng.random_range(0..self.data.len())).collect()
    }

    pub fn get(&self, index: usize) -> &Transition {
        &self.data[index]
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub gamma: f64,
    pub eps_start: f64,
    pub eps_decay_per_step: f64,
    pub eps_min: f64,
    pub episodes: u32,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub target_sync_steps: u64,
    pub hidden1: usize,
    pub hidden2: usize,
    pub optimizer: crate::net::OptimizerKind,
    pub seed: u64,
    /// Reward log granularity, episodes per entry.
    pub reward_log_every: u32,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config("train.gamma must lie in (0, 1)".into()));
        }
        if self.eps_min > self.eps_start {
            return Err(Error::Config("train.eps_min must not exceed eps_start".into()));
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return Err(Error::Config(
                "train.replay_capacity must be at least batch_size".into(),
            ));
        }
        if self.episodes == 0 || self.reward_log_every == 0 {
            return Err(Error::Config("train.episodes and reward_log_every must be positive".into()));
        }
        Ok(())
    }
}

/// Double-DQN regression targets: terminal transitions use the raw
/// reward; otherwise the online network chooses the next action and the
/// target network evaluates it.
pub fn ddqn_targets(
    online: &QNet,
    target: &QNet,
    batch: &[&Transition],
    gamma: f64,
) -> Result<Vec<f64>> {
    let mut targets = Vec::with_capacity(batch.len());
    for tr in batch {
        if tr.terminal {
            targets.push(tr.reward);
        } else {
            let q_online = online.forward(&tr.next_obs)?;
            let chosen = action_index(greedy_action(q_online));
            let q_target = target.forward(&tr.next_obs)?;
            targets.push(tr.reward + gamma * q_target[chosen]);
        }
    }
    Ok(targets)
}

/// One gradient step of mean-squared error toward the double-DQN
/// targets. Returns the pre-step loss.
pub fn dqn_update(
    net: &mut QNet,
    target: &QNet,
    batch: &[&Transition],
    gamma: f64,
    opt: &mut Optimizer,
) -> Result<f64> {
    assert!(!batch.is_empty(), "dqn_update requires a nonempty batch");
    let targets = ddqn_targets(net, target, batch, gamma)?;
    let mut grad = net.grad();
    let mut loss = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for (tr, &y) in batch.iter().zip(&targets) {
        let cache = net.forward_cached(&tr.obs)?;
        let a = action_index(tr.action);
        let err = cache.q[a] - y;
        loss += err * err;
        let mut dq = [0.0; N_ACTIONS];
        dq[a] = 2.0 * err * scale;
        net.backward(&cache, dq, &mut grad);
    }
    opt.step(net, &grad);
    Ok(loss * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::OptimizerKind;
    use crate::scenario::build_catalog;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn encoder(variant: Variant) -> ObsEncoder {
        let world = WorldConfig::default();
        let pcfg = PerceptionConfig::from_catalog(&build_catalog());
        ObsEncoder::new(variant, &world, &pcfg)
    }

    fn train_cfg() -> TrainConfig {
        TrainConfig {
            learning_rate: 1e-4,
            gamma: 0.99,
            eps_start: 1.0,
            eps_decay_per_step: 5e-5,
            eps_min: 0.001,
            episodes: 5000,
            replay_capacity: 100_000,
            batch_size: 64,
            target_sync_steps: 1000,
            hidden1: 64,
            hidden2: 64,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            reward_log_every: 500,
        }
    }

    fn waiting_state() -> SimState {
        SimState {
            step: 12,
            x_veh: 27.4,
            v_veh: 6.94,
            y_ped: 0.0,
            phase: crate::env::PedPhase::Waiting,
        }
    }

    #[test]
    fn observation_lengths_per_variant() {
        let state = waiting_state();
        let belief = Belief {
            x_hat: 27.0,
            v_hat: 7.0,
            p_pos: 4.0,
            p_vel: 1.0,
            p_cross: 0.1,
        };
        for (variant, len) in [
            (Variant::Bm, 6),
            (Variant::Lm, 7),
            (Variant::Vm, 9),
            (Variant::Vlm, 10),
        ] {
            let enc = encoder(variant);
            let obs = enc
                .encode(&state, Some(&belief), Some(0.1), Some(20.0))
                .unwrap();
            assert_eq!(obs.len(), len, "{variant:?}");
        }
    }

    #[test]
    fn missing_inputs_rejected() {
        let state = waiting_state();
        assert!(encoder(Variant::Vlm).encode(&state, None, None, Some(1.0)).is_err());
        assert!(encoder(Variant::Lm).encode(&state, None, None, None).is_err());
        assert!(encoder(Variant::Bm).encode(&state, None, None, None).is_ok());
    }

    #[test]
    fn normalization_round_trips() {
        let state = waiting_state();
        let belief = Belief {
            x_hat: 31.81,
            v_hat: 13.89,
            p_pos: 17.3,
            p_vel: 2.6,
            p_cross: 0.0,
        };
        let enc = encoder(Variant::Vlm);
        let obs = enc
            .encode(&state, Some(&belief), Some(0.3), Some(40.0))
            .unwrap();
        let raw = enc.decode(&obs);
        let expected = [
            0.0, 0.0, 31.81, 1.4625, 13.89, 17.3, 2.6, 0.3, 40.0, 12.0,
        ];
        for (r, e) in raw.iter().zip(expected.iter()) {
            assert!((r - e).abs() < 1e-12, "{r} vs {e}");
        }
    }

    #[test]
    fn epsilon_schedule_examples() {
        let cfg = train_cfg();
        assert_eq!(epsilon(0, &cfg), 1.0);
        assert!((epsilon(10_000, &cfg) - 0.5).abs() < 1e-12);
        assert!((epsilon(19_980, &cfg) - 0.001).abs() < 1e-12);
        assert_eq!(epsilon(500_000, &cfg), 0.001);
    }

    #[test]
    fn greedy_selection_and_tie_break() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let net = QNet::zeroed(Variant::Bm, 6, 4, 4);
        // Zero net: q = (0, 0), ties break toward NotGo.
        let action = select_action(&net, &[0.0; 6], 0.0, &mut rng).unwrap();
        assert_eq!(action, Action::NotGo);
        assert_eq!(greedy_action([1.0, 2.0]), Action::Go);
        assert_eq!(greedy_action([1.0, 1.0]), Action::NotGo);
    }

    #[test]
    fn random_actions_near_uniform_at_eps_one() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let net = QNet::zeroed(Variant::Bm, 6, 4, 4);
        let n = 100_000;
        let mut go = 0usize;
        for _ in 0..n {
            if select_action(&net, &[0.0; 6], 1.0, &mut rng).unwrap() == Action::Go {
                go += 1;
            }
        }
        let frac = go as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.01, "go fraction {frac}");
    }

    fn transition(reward: f64, terminal: bool) -> Transition {
        Transition {
            obs: vec![0.1; 6],
            action: Action::Go,
            reward,
            next_obs: vec![0.2; 6],
            terminal,
        }
    }

    #[test]
    fn terminal_target_ignores_next_state() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let online = QNet::new(Variant::Bm, 6, 8, 8, &mut rng);
        let target = QNet::new(Variant::Bm, 6, 8, 8, &mut rng);
        let tr = transition(20.0, true);
        let targets = ddqn_targets(&online, &target, &[&tr], 0.99).unwrap();
        assert_eq!(targets, vec![20.0]);
    }

    #[test]
    fn double_dqn_uses_online_argmax_on_target_net() {
        // Bias-only networks with disagreeing argmax: the online net
        // prefers Go, the target net scores Go lowest. The double-DQN
        // target must evaluate Go on the target net.
        let mut online = QNet::zeroed(Variant::Bm, 6, 4, 4);
        online.advantage_bias_mut()[1] = 1.0; // online argmax: Go
        let mut target = QNet::zeroed(Variant::Bm, 6, 4, 4);
        target.advantage_bias_mut()[0] = 5.0; // target argmax: NotGo
        let q_target = target.forward(&[0.0; 6]).unwrap();
        assert_eq!(q_target, [2.5, -2.5]);

        let tr = transition(0.0, false);
        let targets = ddqn_targets(&online, &target, &[&tr], 0.99).unwrap();
        // 0 + 0.99 * Q_target(Go) = -2.475; a naive max would give +2.475.
        assert!((targets[0] - (-2.475)).abs() < 1e-12);
    }

    #[test]
    fn q_fixed_point_reached_on_single_transition() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let mut net = QNet::new(Variant::Bm, 6, 16, 16, &mut rng);
        // Constant-output target net so the regression target is fixed
        // no matter which next action the online net prefers.
        let mut target = QNet::zeroed(Variant::Bm, 6, 16, 16);
        *target.value_bias_mut() = 2.0;
        let tr = Transition {
            obs: vec![0.3; 6],
            action: Action::NotGo,
            reward: 1.0,
            next_obs: vec![0.6; 6],
            terminal: false,
        };
        let gamma = 0.9;
        let q_target = target.forward(&tr.next_obs).unwrap();
        assert_eq!(q_target, [2.0, 2.0]);
        let expected = 1.0 + gamma * q_target[0].max(q_target[1]);
        let mut opt = Optimizer::new(OptimizerKind::Adam, 1e-2, net.param_count());
        for _ in 0..2000 {
            dqn_update(&mut net, &target, &[&tr], gamma, &mut opt).unwrap();
        }
        let q = net.forward(&tr.obs).unwrap();
        assert!(
            (q[0] - expected).abs() < 0.01,
            "q = {}, expected fixed point {expected}",
            q[0]
        );
    }

    #[test]
    fn loss_decreases_on_fixed_batch() {
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        let mut net = QNet::new(Variant::Bm, 6, 16, 16, &mut rng);
        let target = net.clone();
        let batch: Vec<Transition> = (0..8)
            .map(|i| Transition {
                obs: (0..6).map(|j| ((i * 7 + j) as f64 * 0.13).sin()).collect(),
                action: if i % 2 == 0 { Action::Go } else { Action::NotGo },
                reward: (i as f64) - 4.0,
                next_obs: (0..6).map(|j| ((i * 5 + j) as f64 * 0.29).cos()).collect(),
                terminal: i % 3 == 0,
            })
            .collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        let mut opt = Optimizer::new(OptimizerKind::Adam, 1e-3, net.param_count());
        let first = dqn_update(&mut net, &target, &refs, 0.99, &mut opt).unwrap();
        let mut last = first;
        for _ in 0..99 {
            last = dqn_update(&mut net, &target, &refs, 0.99, &mut opt).unwrap();
        }
        assert!(last < first, "loss {first} -> {last}");
    }

    #[test]
    fn replay_capacity_and_uniform_sampling() {
        let mut buffer = ReplayBuffer::new(128);
        for i in 0..1000 {
            buffer.push(transition(i as f64, false));
        }
        assert_eq!(buffer.len(), 128);

        // Chi-square uniformity over 8 index buckets. With 80_000 draws
        // and df = 7, the 0.001 critical value is 24.322.
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let draws = 80_000usize;
        let mut counts = [0f64; 8];
        for idx in buffer.sample_indices(draws, &mut rng) {
            counts[idx * 8 / 128] += 1.0;
        }
        let expected = draws as f64 / 8.0;
        let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
        assert!(chi2 < 24.322, "chi2 = {chi2}");
    }

    proptest! {
        #[test]
        fn epsilon_monotone_and_bounded(a in 0u64..100_000, b in 0u64..100_000) {
            let cfg = train_cfg();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let e_lo = epsilon(lo, &cfg);
            let e_hi = epsilon(hi, &cfg);
            prop_assert!(e_hi <= e_lo);
            prop_assert!((cfg.eps_min..=cfg.eps_start).contains(&e_lo));
        }

        #[test]
        fn dueling_invariant_under_bias_shift(seed in 0u64..500, delta in -10.0f64..10.0) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let mut net = QNet::new(Variant::Bm, 6, 8, 8, &mut rng);
            let obs: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let before = net.forward(&obs).unwrap();
            net.shift_advantage_bias(delta);
            let after = net.forward(&obs).unwrap();
            prop_assert!((before[0] - after[0]).abs() < 1e-9);
            prop_assert!((before[1] - after[1]).abs() < 1e-9);
        }
    }
}
