//! The four pipeline commands: train, simulate, fit, report. Each is a
//! deterministic function of its configuration, seed and input files.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::evaluator::{
    gap_acceptance_rate, ks_statistic, rollout, simulate_grid_trials, substream, CitSampleSet,
    EvalContext,
};
use crate::fitter::{aic, fit_participant, fit_pooled, FitResult};
use crate::io::{
    read_cit_samples, read_trials, sample_set_from_rows, write_catalog, write_cit_samples,
    write_fits, write_reward_log, write_trials, TrialRecord,
};

use crate::net::{load_weights, save_weights};
use crate::perception::PerceptionConfig;
use crate::policy::ObsEncoder;
use crate::scenario::{build_catalog, ScenarioKind};

fn json_to_file<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Invalid(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
        }
    }
    std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

#[derive(Debug, Clone)]
pub struct TrainArtifacts {
    pub weights_path: PathBuf,
    pub reward_log_path: PathBuf,
    pub final_mean_reward: f64,
    pub learn_steps: u64,
}

/// Trains the configured variant and writes the weight file, the
/// reward curve and the scenario catalog. Fails after writing when the
/// final reward-log block mean is below the configured threshold.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainArtifacts> {
    cfg.validate()?;
    let catalog = build_catalog();
    let outcome =
        crate::learner::train_variant_full(cfg.variant, &catalog, &cfg.world, &cfg.train, &cfg.grid)?;
    let (net, reward_log) = (outcome.net, outcome.reward_log);

    let weights_path = cfg
        .weights
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join("weights.txt"));
    save_weights(&net, &weights_path)?;
    let reward_log_path = cfg.out_dir.join("reward_log.csv");
    write_reward_log(&reward_log, &reward_log_path)?;
    write_catalog(&catalog, &cfg.out_dir.join("catalog.csv"))?;

    let final_mean_reward = reward_log.last().map(|e| e.mean_reward).unwrap_or(f64::NAN);
    if let Some(threshold) = cfg.min_final_mean_reward {
        if !(final_mean_reward >= threshold) {
            return Err(Error::Invalid(format!(
                "training did not converge: final mean reward {final_mean_reward:.3} < {threshold:.3}"
            )));
        }
    }
    Ok(TrainArtifacts {
        weights_path,
        reward_log_path,
        final_mean_reward,
        learn_steps: outcome.learn_steps,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GapAcceptanceEntry {
    pub scenario_id: String,
    pub tau0_s: f64,
    pub v0_mps: f64,
    pub sigma_v: f64,
    pub c: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutcomeCountEntry {
    pub scenario_id: String,
    pub sigma_v: f64,
    pub c: f64,
    pub arrival: u32,
    pub collision: u32,
    pub timeout: u32,
    /// Fraction of trials that committed on the very first step.
    pub go_first_fraction: f64,
    pub mean_cit_s: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct KsEntry {
    pub scenario_id: String,
    pub sigma_v: f64,
    pub c: f64,
    pub ks: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MadEntry {
    pub sigma_v: f64,
    pub c: f64,
    pub mad_s: f64,
    pub n_scenarios: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReferenceComparison {
    pub ks: Vec<KsEntry>,
    pub mad: Vec<MadEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateMetrics {
    pub variant: String,
    pub seed: u64,
    pub n_reps: u32,
    pub gap_acceptance: Vec<GapAcceptanceEntry>,
    pub outcome_counts: Vec<OutcomeCountEntry>,
    pub reference_comparison: Option<ReferenceComparison>,
}

#[derive(Debug, Clone)]
pub struct SimulateArtifacts {
    pub cit_samples_path: PathBuf,
    pub metrics_path: PathBuf,
    pub synthetic_trials_path: Option<PathBuf>,
    pub metrics: SimulateMetrics,
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

fn compare_to_reference(set: &CitSampleSet, reference: &CitSampleSet) -> ReferenceComparison {
    let mut ks = Vec::new();
    // Per-cell accumulation of |mean difference| over scenarios.
    let mut mad_acc: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
    for (key, cell) in set.iter() {
        let (scenario_id, si, ci) = key;
        let sigma_v = set.grid.sigma_v_values[*si];
        let c = set.grid.c_values[*ci];
        let ref_si = reference
            .grid
            .sigma_v_values
            .iter()
            .position(|&s| s == sigma_v);
        let ref_ci = reference.grid.c_values.iter().position(|&x| x == c);
        let (Some(ref_si), Some(ref_ci)) = (ref_si, ref_ci) else {
            continue;
        };
        let Some(ref_cits) = reference.cits(scenario_id, ref_si, ref_ci) else {
            continue;
        };
        if cell.cits.is_empty() || ref_cits.is_empty() {
            continue;
        }
        if let Ok(d) = ks_statistic(&cell.cits, ref_cits) {
            ks.push(KsEntry {
                scenario_id: scenario_id.clone(),
                sigma_v,
                c,
                ks: d,
            });
        }
        let diff = (mean(&cell.cits).unwrap() - mean(ref_cits).unwrap()).abs();
        let entry = mad_acc.entry((*si, *ci)).or_insert((0.0, 0));
        entry.0 += diff;
        entry.1 += 1;
    }
    let mad = mad_acc
        .into_iter()
        .map(|((si, ci), (sum, n))| MadEntry {
            sigma_v: set.grid.sigma_v_values[si],
            c: set.grid.c_values[ci],
            mad_s: sum / n as f64,
            n_scenarios: n,
        })
        .collect();
    ReferenceComparison { ks, mad }
}

/// Simulates the trained policy over the scenario-by-parameter grid and
/// writes the CIT samples plus summary metrics. With a synthesize block
/// in the configuration it also writes model rollouts as trial records.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<SimulateArtifacts> {
    cfg.validate()?;
    let weights_path = cfg
        .weights
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join("weights.txt"));
    let net = load_weights(&weights_path)?;
    if net.variant != cfg.variant {
        return Err(Error::VariantMismatch {
            expected: cfg.variant.as_str().to_string(),
            found: net.variant.as_str().to_string(),
        });
    }

    let catalog = build_catalog();
    let (set, rows) = simulate_grid_trials(
        &net,
        &catalog,
        &cfg.grid,
        cfg.n_reps,
        &cfg.world,
        cfg.seed,
    )?;
    let cit_samples_path = cfg.out_dir.join("cit_samples.csv");
    write_cit_samples(&rows, &cit_samples_path)?;
    write_catalog(&catalog, &cfg.out_dir.join("catalog.csv"))?;

    let by_id: BTreeMap<&str, &crate::scenario::ScenarioSpec> =
        catalog.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut gap_acceptance = Vec::new();
    let mut outcome_counts = Vec::new();
    for (key, cell) in set.iter() {
        let (scenario_id, si, ci) = key;
        let spec = by_id[scenario_id.as_str()];
        let sigma_v = set.grid.sigma_v_values[*si];
        let c = set.grid.c_values[*ci];
        if spec.kind == ScenarioKind::Constant {
            gap_acceptance.push(GapAcceptanceEntry {
                scenario_id: scenario_id.clone(),
                tau0_s: spec.tau0,
                v0_mps: spec.v0,
                sigma_v,
                c,
                rate: gap_acceptance_rate(&cell.cits, spec)?,
            });
        }
        let total = cell.n_arrival + cell.n_collision + cell.n_timeout;
        outcome_counts.push(OutcomeCountEntry {
            scenario_id: scenario_id.clone(),
            sigma_v,
            c,
            arrival: cell.n_arrival,
            collision: cell.n_collision,
            timeout: cell.n_timeout,
            go_first_fraction: cell.n_go_first as f64 / total.max(1) as f64,
            mean_cit_s: mean(&cell.cits),
        });
    }

    let reference_comparison = match &cfg.reference {
        Some(path) => {
            let ref_rows = read_cit_samples(path)?;
            let ref_set = sample_set_from_rows(&ref_rows)?;
            Some(compare_to_reference(&set, &ref_set))
        }
        None => None,
    };

    let synthetic_trials_path = match &cfg.synthesize {
        Some(synth) => {
            let pcfg = PerceptionConfig::from_catalog(&catalog);
            let encoder = ObsEncoder::new(net.variant, &cfg.world, &pcfg);
            let ctx = EvalContext {
                world: &cfg.world,
                pcfg: &pcfg,
                encoder: &encoder,
            };
            let mut trials = Vec::new();
            for p in 0..synth.participants {
                let participant_id = format!("synth{p:02}");
                for (scen_idx, spec) in
                    catalog.iter().filter(|s| s.is_evaluation()).enumerate()
                {
                    // Distinct stream family from the grid simulation.
                    let mut rng =
                        substream(cfg.seed, &[0x5f17, p as u64, scen_idx as u64]);
                    for _ in 0..synth.reps_per_scenario {
                        let trial =
                            rollout(&net, spec, synth.sigma_v, synth.c, &ctx, &mut rng, true)?;
                        if let Some(cit) = trial.cit {
                            trials.push(TrialRecord {
                                participant_id: participant_id.clone(),
                                scenario_id: spec.id.clone(),
                                cit,
                            });
                        }
                    }
                }
            }
            let path = cfg.out_dir.join("synthetic_trials.csv");
            write_trials(&trials, &path)?;
            Some(path)
        }
        None => None,
    };

    let metrics = SimulateMetrics {
        variant: cfg.variant.as_str().to_string(),
        seed: cfg.seed,
        n_reps: cfg.n_reps,
        gap_acceptance,
        outcome_counts,
        reference_comparison,
    };
    let metrics_path = cfg.out_dir.join("metrics.json");
    json_to_file(&metrics, &metrics_path)?;

    Ok(SimulateArtifacts {
        cit_samples_path,
        metrics_path,
        synthetic_trials_path,
        metrics,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AicSummaryEntry {
    pub log_lik: f64,
    pub k: usize,
    pub aic: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitEntry {
    pub participant_id: String,
    pub sigma_v: f64,
    pub c: f64,
    pub log_lik: f64,
    pub n_trials: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitSummary {
    /// Independent (sigma_v, c) per participant: 2 parameters each.
    pub per_participant: AicSummaryEntry,
    /// One shared (sigma_v, c) pair across all trials.
    pub pooled: AicSummaryEntry,
    pub fits: Vec<FitEntry>,
}

#[derive(Debug, Clone)]
pub struct FitArtifacts {
    pub fits_path: PathBuf,
    pub aic_path: PathBuf,
    pub summary: FitSummary,
}

/// Fits (sigma_v, c) per participant and pooled, writing the fit table
/// and the AIC summary.
pub fn cmd_fit(cfg: &ExperimentConfig) -> Result<FitArtifacts> {
    cfg.validate()?;
    let samples_path = cfg
        .cit_samples
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join("cit_samples.csv"));
    let rows = read_cit_samples(&samples_path)?;
    let samples = sample_set_from_rows(&rows)?;

    let trials_path = cfg
        .trials
        .clone()
        .ok_or_else(|| Error::Config("fit requires a `trials` path".into()))?;
    let known_ids: BTreeSet<String> = build_catalog().iter().map(|s| s.id.clone()).collect();
    let trials = read_trials(&trials_path, &known_ids)?;

    let mut by_participant: BTreeMap<String, Vec<TrialRecord>> = BTreeMap::new();
    for trial in &trials {
        by_participant
            .entry(trial.participant_id.clone())
            .or_default()
            .push(trial.clone());
    }

    let mut fits: Vec<FitResult> = Vec::new();
    for (participant, ptrials) in &by_participant {
        fits.push(fit_participant(&samples, ptrials, participant)?);
    }
    let pooled = fit_pooled(&samples, &trials)?;

    let individual_log_lik: f64 = fits.iter().map(|f| f.log_lik).sum();
    let k_individual = 2 * fits.len();
    let summary = FitSummary {
        per_participant: AicSummaryEntry {
            log_lik: individual_log_lik,
            k: k_individual,
            aic: aic(individual_log_lik, k_individual),
        },
        pooled: AicSummaryEntry {
            log_lik: pooled.log_lik,
            k: 2,
            aic: aic(pooled.log_lik, 2),
        },
        fits: fits
            .iter()
            .chain(std::iter::once(&pooled))
            .map(|f| FitEntry {
                participant_id: f.participant.clone(),
                sigma_v: f.sigma_v,
                c: f.c,
                log_lik: f.log_lik,
                n_trials: f.n_trials,
            })
            .collect(),
    };

    let mut all_fits = fits;
    all_fits.push(pooled);
    let fits_path = cfg.out_dir.join("fits.csv");
    write_fits(&all_fits, &fits_path)?;
    let aic_path = cfg.out_dir.join("aic.json");
    json_to_file(&summary, &aic_path)?;

    Ok(FitArtifacts {
        fits_path,
        aic_path,
        summary,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportWarning {
    pub scenario_id: String,
    pub sigma_v: f64,
    pub c: f64,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportSummary {
    pub n_cells: usize,
    pub n_cdf_points: usize,
    pub gap_acceptance: Vec<GapAcceptanceEntry>,
    pub mad: Vec<MadEntry>,
    pub warnings: Vec<ReportWarning>,
}

#[derive(Debug, Clone)]
pub struct ReportArtifacts {
    pub cdf_points_path: PathBuf,
    pub gap_acceptance_path: PathBuf,
    pub report_path: PathBuf,
    pub summary: ReportSummary,
}

/// Consolidates simulate/fit outputs into plot-ready tables: empirical
/// CDF points per scenario and cell, the gap-acceptance table, and the
/// MAD table when a reference comparison was computed.
pub fn cmd_report(cfg: &ExperimentConfig) -> Result<ReportArtifacts> {
    let samples_path = cfg
        .cit_samples
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join("cit_samples.csv"));
    let rows = read_cit_samples(&samples_path)?;
    let set = sample_set_from_rows(&rows)?;
    let catalog = build_catalog();
    let by_id: BTreeMap<&str, &crate::scenario::ScenarioSpec> =
        catalog.iter().map(|s| (s.id.as_str(), s)).collect();

    let mut warnings = Vec::new();
    let mut cdf_csv = String::from("scenario_id,sigma_v,c,cit_s,cum_frac\n");
    let mut n_cdf_points = 0usize;
    let mut gap_acceptance = Vec::new();
    for (key, cell) in set.iter() {
        let (scenario_id, si, ci) = key;
        let sigma_v = set.grid.sigma_v_values[*si];
        let c = set.grid.c_values[*ci];
        if cell.cits.is_empty() {
            warnings.push(ReportWarning {
                scenario_id: scenario_id.clone(),
                sigma_v,
                c,
                message: "no crossing trials; omitted from CDF output".into(),
            });
            continue;
        }
        let n = cell.cits.len() as f64;
        for (k, cit) in cell.cits.iter().enumerate() {
            cdf_csv.push_str(&format!(
                "{},{},{},{},{}\n",
                scenario_id,
                sigma_v,
                c,
                cit,
                (k + 1) as f64 / n
            ));
            n_cdf_points += 1;
        }
        if let Some(spec) = by_id.get(scenario_id.as_str()) {
            if spec.kind == ScenarioKind::Constant {
                gap_acceptance.push(GapAcceptanceEntry {
                    scenario_id: scenario_id.clone(),
                    tau0_s: spec.tau0,
                    v0_mps: spec.v0,
                    sigma_v,
                    c,
                    rate: gap_acceptance_rate(&cell.cits, spec)?,
                });
            }
        } else {
            warnings.push(ReportWarning {
                scenario_id: scenario_id.clone(),
                sigma_v,
                c,
                message: "scenario not in catalog; skipped in gap-acceptance table".into(),
            });
        }
    }

    let mut gap_csv = String::from("scenario_id,tau0_s,v0_mps,sigma_v,c,rate\n");
    for e in &gap_acceptance {
        gap_csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            e.scenario_id, e.tau0_s, e.v0_mps, e.sigma_v, e.c, e.rate
        ));
    }

    // MAD table: recompute against the configured reference when given.
    let mad = match &cfg.reference {
        Some(path) => {
            let ref_rows = read_cit_samples(path)?;
            let ref_set = sample_set_from_rows(&ref_rows)?;
            compare_to_reference(&set, &ref_set).mad
        }
        None => Vec::new(),
    };

    let cdf_points_path = cfg.out_dir.join("cdf_points.csv");
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| Error::io(format!("creating {}", cfg.out_dir.display()), e))?;
    std::fs::write(&cdf_points_path, cdf_csv)
        .map_err(|e| Error::io(format!("writing {}", cdf_points_path.display()), e))?;
    let gap_acceptance_path = cfg.out_dir.join("gap_acceptance.csv");
    std::fs::write(&gap_acceptance_path, gap_csv)
        .map_err(|e| Error::io(format!("writing {}", gap_acceptance_path.display()), e))?;

    let summary = ReportSummary {
        n_cells: set.len(),
        n_cdf_points,
        gap_acceptance,
        mad,
        warnings,
    };
    let report_path = cfg.out_dir.join("report.json");
    json_to_file(&summary, &report_path)?;

    Ok(ReportArtifacts {
        cdf_points_path,
        gap_acceptance_path,
        report_path,
        summary,
    })
}
