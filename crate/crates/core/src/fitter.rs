//! Kernel-density likelihood of observed crossing-initiation times under
//! model samples, per-participant and pooled grid fits, and AIC.

use crate::error::{Error, Result};
use crate::evaluator::CitSampleSet;
use crate::io::TrialRecord;
use crate::policy::Variant;

/// Density floor applied when scoring observations, so trials far
/// outside the model's support contribute a finite penalty instead of
/// an infinite one.
pub const DENSITY_FLOOR: f64 = 1e-9;

/// Bandwidth floor, s. Keeps the kernel from collapsing on nearly
/// degenerate model CIT distributions.
pub const BANDWIDTH_FLOOR: f64 = 0.05;

/// Search grid over the two non-policy parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrid {
    pub sigma_v_values: Vec<f64>,
    pub c_values: Vec<f64>,
}

impl ParamGrid {
    /// Inclusive default grid: sigma_v 0..1 by 0.1, c 0..100 by 10.
    pub fn default_inclusive() -> Self {
        ParamGrid {
            sigma_v_values: (0..=10).map(|i| i as f64 / 10.0).collect(),
            c_values: (0..=10).map(|i| (i * 10) as f64).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, values) in [("sigma_v", &self.sigma_v_values), ("c", &self.c_values)] {
            if values.is_empty() {
                return Err(Error::Config(format!("grid.{name} must not be empty")));
            }
            if values[0] < 0.0 {
                return Err(Error::Config(format!("grid.{name} must be nonnegative")));
            }
            if values.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config(format!(
                    "grid.{name} must be strictly increasing"
                )));
            }
        }
        Ok(())
    }

    /// Drops the axes a variant is not conditioned on. The collapsed
    /// axis holds the single value 0.
    pub fn collapsed_for(&self, variant: Variant) -> ParamGrid {
        ParamGrid {
            sigma_v_values: if variant.uses_belief() {
                self.sigma_v_values.clone()
            } else {
                vec![0.0]
            },
            c_values: if variant.uses_looming() {
                self.c_values.clone()
            } else {
                vec![0.0]
            },
        }
    }

    pub fn n_cells(&self) -> usize {
        self.sigma_v_values.len() * self.c_values.len()
    }
}

fn sample_std(samples: &[f64]) -> f64 {
    if samples.len() < 2 {
        return 0.0;
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    (samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Interquartile range with linearly interpolated quartiles.
fn iqr(sorted: &[f64]) -> f64 {
    quantile(sorted, 0.75) - quantile(sorted, 0.25)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Silverman's rule of thumb, floored at [`BANDWIDTH_FLOOR`]:
/// `0.9 min(std, IQR / 1.34) n^(-1/5)`.
pub fn kde_bandwidth(samples: &[f64]) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let spread = sample_std(samples).min(iqr(&sorted) / 1.34);
    let bw = 0.9 * spread * (samples.len() as f64).powf(-0.2);
    bw.max(BANDWIDTH_FLOOR)
}

/// Gaussian-kernel density estimate at `query` with an explicit
/// bandwidth.
pub fn kde_pdf_with_bandwidth(samples: &[f64], bandwidth: f64, query: f64) -> f64 {
    debug_assert!(bandwidth > 0.0);
    let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * bandwidth * samples.len() as f64);
    samples
        .iter()
        .map(|x| {
            let u = (query - x) / bandwidth;
            (-0.5 * u * u).exp()
        })
        .sum::<f64>()
        * norm
}

/// Gaussian-kernel density with the Silverman bandwidth.
pub fn kde_pdf(samples: &[f64], query: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Invalid("kde_pdf requires nonempty samples".into()));
    }
    Ok(kde_pdf_with_bandwidth(samples, kde_bandwidth(samples), query))
}

/// Log-likelihood of the observed CITs for one scenario under the
/// model's sample set: sum of `ln(max(pdf, DENSITY_FLOOR))`.
pub fn scenario_loglik(model_samples: &[f64], observed_cits: &[f64]) -> Result<f64> {
    if observed_cits.is_empty() {
        return Ok(0.0);
    }
    if model_samples.is_empty() {
        return Err(Error::Invalid(
            "scenario_loglik requires nonempty model samples".into(),
        ));
    }
    let bw = kde_bandwidth(model_samples);
    Ok(observed_cits
        .iter()
        .map(|&cit| {
            kde_pdf_with_bandwidth(model_samples, bw, cit)
                .max(DENSITY_FLOOR)
                .ln()
        })
        .sum())
}

/// Best-fitting grid cell for one participant (or the pooled data set).
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub participant: String,
    pub sigma_v: f64,
    pub c: f64,
    pub sigma_idx: usize,
    pub c_idx: usize,
    pub log_lik: f64,
    pub n_trials: usize,
}

/// Evaluates the total log-likelihood of `trials` at every grid cell of
/// `samples` and returns the argmax. Ties break toward the smaller
/// `sigma_v`, then the smaller `c`.
pub fn fit_participant(
    samples: &CitSampleSet,
    trials: &[TrialRecord],
    participant: &str,
) -> Result<FitResult> {
    if trials.is_empty() {
        return Err(Error::Invalid(format!(
            "participant {participant}: no trials to fit"
        )));
    }
    // Group observed CITs by scenario so each cell's KDE is built once.
    let mut by_scenario: std::collections::BTreeMap<&str, Vec<f64>> =
        std::collections::BTreeMap::new();
    for trial in trials {
        by_scenario
            .entry(trial.scenario_id.as_str())
            .or_default()
            .push(trial.cit);
    }

    let grid = &samples.grid;
    let mut best: Option<FitResult> = None;
    for (si, &sigma_v) in grid.sigma_v_values.iter().enumerate() {
        for (ci, &c) in grid.c_values.iter().enumerate() {
            let mut total = 0.0;
            for (scenario_id, cits) in &by_scenario {
                let cell = samples
                    .cits(scenario_id, si, ci)
                    .ok_or_else(|| Error::MissingScenario((*scenario_id).to_string()))?;
                total += scenario_loglik(cell, cits)?;
            }
            let better = match &best {
                None => true,
                Some(b) => total > b.log_lik,
            };
            if better {
                best = Some(FitResult {
                    participant: participant.to_string(),
                    sigma_v,
                    c,
                    sigma_idx: si,
                    c_idx: ci,
                    log_lik: total,
                    n_trials: trials.len(),
                });
            }
        }
    }
    Ok(best.expect("validated nonempty grid"))
}

/// Pooled fit over the concatenated trials of all participants.
pub fn fit_pooled(samples: &CitSampleSet, all_trials: &[TrialRecord]) -> Result<FitResult> {
    fit_participant(samples, all_trials, "pooled")
}

/// Akaike information criterion: `2 k - 2 log_lik`.
pub fn aic(log_lik: f64, k: usize) -> f64 {
    2.0 * k as f64 - 2.0 * log_lik
}
