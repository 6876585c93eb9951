//! Greedy policy rollouts over the scenario-by-parameter grid, and the
//! comparison metrics: gap acceptance, Kolmogorov-Smirnov distance, and
//! mean absolute deviation of mean crossing times.

use std::collections::BTreeMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::env::{TerminalKind, WorldConfig};
use crate::episode::{run_episode, Agent, EpisodeSetup};
use crate::error::{Error, Result};
use crate::fitter::ParamGrid;
use crate::net::QNet;
use crate::perception::PerceptionConfig;
use crate::policy::{select_action, ObsEncoder};
use crate::scenario::{ScenarioKind, ScenarioSpec};

/// One simulated trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub scenario_id: String,
    pub sigma_v: f64,
    pub c: f64,
    /// Go time plus motor delay; absent when the episode timed out
    /// without a commitment.
    pub cit: Option<f64>,
    /// Step index of the Go decision, if one was made.
    pub go_step: Option<u32>,
    pub outcome: TerminalKind,
}

/// Per-cell tallies and sorted CIT samples.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CellSamples {
    /// Sorted ascending. Every trial with a Go decision contributes,
    /// including collisions; timeouts are counted separately.
    pub cits: Vec<f64>,
    pub n_arrival: u32,
    pub n_collision: u32,
    pub n_timeout: u32,
    /// Trials whose Go decision fell on the very first step.
    pub n_go_first: u32,
}

/// CIT samples keyed by (scenario id, sigma index, c index).
#[derive(Debug, Clone, PartialEq)]
pub struct CitSampleSet {
    pub grid: ParamGrid,
    cells: BTreeMap<(String, usize, usize), CellSamples>,
}

impl CitSampleSet {
    pub fn new(grid: ParamGrid) -> Self {
        CitSampleSet {
            grid,
            cells: BTreeMap::new(),
        }
    }

    pub fn insert_trial(&mut self, scenario_id: &str, si: usize, ci: usize, trial: &TrialResult) {
        let cell = self
            .cells
            .entry((scenario_id.to_string(), si, ci))
            .or_default();
        match trial.outcome {
            TerminalKind::Arrival => cell.n_arrival += 1,
            TerminalKind::Collision => cell.n_collision += 1,
            TerminalKind::Timeout => cell.n_timeout += 1,
            TerminalKind::None => unreachable!("trials always terminate"),
        }
        if trial.go_step == Some(0) {
            cell.n_go_first += 1;
        }
        if let Some(cit) = trial.cit {
            let pos = cell.cits.partition_point(|&x| x < cit);
            cell.cits.insert(pos, cit);
        }
    }

    /// Replaces the samples of one cell wholesale (sorted on insert).
    pub fn insert_cits(&mut self, scenario_id: &str, si: usize, ci: usize, mut cits: Vec<f64>) {
        cits.sort_by(|a, b| a.total_cmp(b));
        let n = cits.len() as u32;
        self.cells.insert(
            (scenario_id.to_string(), si, ci),
            CellSamples {
                cits,
                n_arrival: n,
                n_collision: 0,
                n_timeout: 0,
                n_go_first: 0,
            },
        );
    }

    pub fn cits(&self, scenario_id: &str, si: usize, ci: usize) -> Option<&[f64]> {
        self.cells
            .get(&(scenario_id.to_string(), si, ci))
            .map(|c| c.cits.as_slice())
    }

    pub fn cell(&self, scenario_id: &str, si: usize, ci: usize) -> Option<&CellSamples> {
        self.cells.get(&(scenario_id.to_string(), si, ci))
    }

    pub fn iter(
        &self,
    ) -> impl Iterator<Item = (&(String, usize, usize), &CellSamples)> + '_ {
        self.cells.iter()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn total_cits(&self) -> usize {
        self.cells.values().map(|c| c.cits.len()).sum()
    }
}

/// Shared context for rollouts of one trained network.
pub struct EvalContext<'a> {
    pub world: &'a WorldConfig,
    pub pcfg: &'a PerceptionConfig,
    pub encoder: &'a ObsEncoder,
}

struct PolicyAgent<'a> {
    net: &'a QNet,
    eps: f64,
}

impl Agent for PolicyAgent<'_> {
    fn decide(&mut self, obs: &[f64], rng: &mut dyn RngCore) -> Result<crate::env::Action> {
        select_action(self.net, obs, self.eps, rng)
    }
}

/// Exploration rate used by non-greedy diagnostic rollouts.
const ROLLOUT_EXPLORE_EPS: f64 = 0.05;

/// Runs one episode under the trained policy and records the trial.
/// Greedy rollouts act with epsilon 0.
pub fn rollout<R: Rng>(
    net: &QNet,
    spec: &ScenarioSpec,
    sigma_v: f64,
    c: f64,
    ctx: &EvalContext,
    rng: &mut R,
    greedy: bool,
) -> Result<TrialResult> {
    let setup = EpisodeSetup {
        spec,
        world: ctx.world,
        pcfg: ctx.pcfg,
        encoder: ctx.encoder,
        sigma_v,
        c,
    };
    let mut agent = PolicyAgent {
        net,
        eps: if greedy { 0.0 } else { ROLLOUT_EXPLORE_EPS },
    };
    let summary = run_episode(&setup, rng, &mut agent)?;
    Ok(TrialResult {
        scenario_id: spec.id.clone(),
        sigma_v,
        c,
        cit: summary.cit,
        go_step: summary.go_step,
        outcome: summary.outcome,
    })
}

/// Derives an independent deterministic stream for one grid cell.
pub fn substream(seed: u64, parts: &[u64]) -> ChaCha12Rng {
    // SplitMix64-style avalanche applied per part; the full mix between
    // parts keeps the derivation order sensitive.
    fn mix(mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;
    let mut state = mix(seed ^ GAMMA);
    for part in parts {
        state = mix(state.wrapping_add(GAMMA).wrapping_add(*part));
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        state = state.wrapping_add(GAMMA);
        chunk.copy_from_slice(&mix(state).to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}

/// Greedy rollouts for every (evaluation scenario, grid cell) pair.
///
/// Each cell owns an independent random substream derived from the seed
/// and the cell coordinates, so results do not depend on iteration
/// order. Training-only scenarios are excluded.
pub fn simulate_grid(
    net: &QNet,
    catalog: &[ScenarioSpec],
    grid: &ParamGrid,
    n_reps: u32,
    world: &WorldConfig,
    seed: u64,
) -> Result<CitSampleSet> {
    Ok(simulate_grid_trials(net, catalog, grid, n_reps, world, seed)?.0)
}

/// As [`simulate_grid`], additionally returning every trial row in
/// deterministic (scenario, cell, rep) order for export.
pub fn simulate_grid_trials(
    net: &QNet,
    catalog: &[ScenarioSpec],
    grid: &ParamGrid,
    n_reps: u32,
    world: &WorldConfig,
    seed: u64,
) -> Result<(CitSampleSet, Vec<crate::io::GridTrialRow>)> {
    if n_reps == 0 {
        return Err(Error::Invalid("simulate_grid requires n_reps >= 1".into()));
    }
    let grid = grid.collapsed_for(net.variant);
    grid.validate()?;
    let pcfg = PerceptionConfig::from_catalog(catalog);
    let encoder = ObsEncoder::new(net.variant, world, &pcfg);
    let ctx = EvalContext {
        world,
        pcfg: &pcfg,
        encoder: &encoder,
    };

    let mut set = CitSampleSet::new(grid.clone());
    let mut rows = Vec::new();
    for (scen_idx, spec) in catalog.iter().filter(|s| s.is_evaluation()).enumerate() {
        for (si, &sigma_v) in grid.sigma_v_values.iter().enumerate() {
            for (ci, &c) in grid.c_values.iter().enumerate() {
                let mut rng = substream(seed, &[scen_idx as u64, si as u64, ci as u64]);
                for rep in 0..n_reps {
                    let trial = rollout(net, spec, sigma_v, c, &ctx, &mut rng, true)?;
                    set.insert_trial(&spec.id, si, ci, &trial);
                    rows.push(crate::io::GridTrialRow {
                        scenario_id: spec.id.clone(),
                        sigma_v,
                        c,
                        rep,
                        cit: trial.cit,
                        outcome: trial.outcome,
                    });
                }
            }
        }
    }
    Ok((set, rows))
}

/// Fraction of trials that crossed ahead of the vehicle: CIT below the
/// initial time to arrival. Defined for constant-speed scenarios only.
pub fn gap_acceptance_rate(cits: &[f64], spec: &ScenarioSpec) -> Result<f64> {
    if spec.kind != ScenarioKind::Constant {
        return Err(Error::Invalid(format!(
            "gap acceptance is defined for constant-speed scenarios, {} is {}",
            spec.id,
            spec.kind.as_str()
        )));
    }
    if cits.is_empty() {
        return Ok(0.0);
    }
    let accepted = cits.iter().filter(|&&cit| cit < spec.tau0).count();
    Ok(accepted as f64 / cits.len() as f64)
}

/// Two-sample Kolmogorov-Smirnov statistic: the largest vertical gap
/// between the two empirical CDFs.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Invalid("ks_statistic requires nonempty samples".into()));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.total_cmp(y));
    sb.sort_by(|x, y| x.total_cmp(y));

    let (na, nb) = (sa.len(), sb.len());
    let (mut ia, mut ib) = (0usize, 0usize);
    let mut d = 0.0f64;
    while ia < na && ib < nb {
        let t = sa[ia].min(sb[ib]);
        while ia < na && sa[ia] == t {
            ia += 1;
        }
        while ib < nb && sb[ib] == t {
            ib += 1;
        }
        let fa = ia as f64 / na as f64;
        let fb = ib as f64 / nb as f64;
        d = d.max((fa - fb).abs());
    }
    // Once one sample is exhausted its ECDF sits at 1 while the other
    // climbs toward 1, so the gap only shrinks past this point.
    Ok(d)
}

/// Mean over scenarios of the absolute difference between predicted and
/// observed mean CITs. Key sets must match exactly.
pub fn mad(
    pred_means: &BTreeMap<String, f64>,
    obs_means: &BTreeMap<String, f64>,
) -> Result<f64> {
    if pred_means.len() != obs_means.len()
        || pred_means.keys().any(|k| !obs_means.contains_key(k))
    {
        return Err(Error::Invalid(
            "mad requires identical scenario key sets".into(),
        ));
    }
    if pred_means.is_empty() {
        return Err(Error::Invalid("mad requires at least one scenario".into()));
    }
    let total: f64 = pred_means
        .iter()
        .map(|(k, p)| (p - obs_means[k]).abs())
        .sum();
    Ok(total / pred_means.len() as f64)
}
