//! Monte Carlo experiment runner and CSV export.
//!
//! Runs are seeded with `base_seed ^ run_index`, so the same run index sees
//! the same noise realization under every strategy (common random numbers).
//! Output rows are sorted by `(strategy, seed, episode)` and floats are
//! written with 17 significant digits, so identical specs produce identical
//! bytes.

use rayon::prelude::*;
use std::io::Write;

use crate::error::Result;
use crate::identify::{run_episodes, StrategyConfig};
use crate::lti::{Scenario, SimRng};

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub scenario_label: String,
    pub scenario: Scenario,
    pub strategies: Vec<StrategyConfig>,
    pub tau: usize,
    pub episodes: usize,
    pub delta: f64,
    pub mc_runs: usize,
    pub base_seed: u64,
}

/// One (run, episode) observation. Failed runs produce a single row with the
/// `error` column set and no metric values.
#[derive(Debug, Clone)]
pub struct RunRow {
    pub scenario: String,
    pub strategy: String,
    pub seed: u64,
    pub episode: usize,
    /// Normalized half-likelihood of the true system given all data so far.
    pub likelihood_true: f64,
    /// Tempered exponential-weights posterior of the true system.
    pub posterior_true: f64,
    /// Whether the stopping rule has fired by this episode.
    pub declared: bool,
    pub declared_index: Option<usize>,
    pub rho_used: f64,
    pub plan_energy: f64,
    pub error: Option<String>,
}

/// Executes every strategy on every seeded run for the full episode budget,
/// recording where the stopping rule would have fired. Failed runs record an
/// error row and do not abort the experiment.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<RunRow>> {
    if spec.mc_runs == 0 {
        return Err(crate::error::Error::InvalidArgument(
            "mc_runs must be at least 1".into(),
        ));
    }
    if spec.episodes == 0 {
        return Err(crate::error::Error::InvalidArgument(
            "episodes must be at least 1".into(),
        ));
    }
    let jobs: Vec<(usize, usize)> = (0..spec.strategies.len())
        .flat_map(|s| (0..spec.mc_runs).map(move |r| (s, r)))
        .collect();
    let mut rows: Vec<RunRow> = jobs
        .par_iter()
        .flat_map_iter(|&(s_idx, run_idx)| {
            let strategy = &spec.strategies[s_idx];
            let label = strategy.label();
            let seed = spec.base_seed ^ run_idx as u64;
            let mut rng = SimRng::from_seed(seed);
            match run_episodes(
                &spec.scenario,
                strategy,
                spec.tau,
                spec.delta,
                spec.episodes,
                &mut rng,
            ) {
                Ok(res) => {
                    let true_index = spec.scenario.true_index();
                    res.episodes
                        .iter()
                        .map(|rec| {
                            let declared = res.stop_episode.is_some_and(|s| rec.k >= s);
                            RunRow {
                                scenario: spec.scenario_label.clone(),
                                strategy: label.clone(),
                                seed,
                                episode: rec.k,
                                likelihood_true: rec.likelihood_true_raw,
                                posterior_true: rec.posterior[true_index],
                                declared,
                                declared_index: if declared { res.declared } else { None },
                                rho_used: rec.rho_used,
                                plan_energy: rec.plan_energy,
                                error: None,
                            }
                        })
                        .collect::<Vec<_>>()
                }
                Err(e) => vec![RunRow {
                    scenario: spec.scenario_label.clone(),
                    strategy: label,
                    seed,
                    episode: 0,
                    likelihood_true: f64::NAN,
                    posterior_true: f64::NAN,
                    declared: false,
                    declared_index: None,
                    rho_used: f64::NAN,
                    plan_energy: f64::NAN,
                    error: Some(e.to_string()),
                }],
            }
        })
        .collect();
    rows.sort_by(|a, b| (&a.strategy, a.seed, a.episode).cmp(&(&b.strategy, b.seed, b.episode)));
    Ok(rows)
}

/// Per-(strategy, episode) sample mean and standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub strategy: String,
    pub episode: usize,
    pub runs: usize,
    pub mean_likelihood: f64,
    pub std_likelihood: f64,
    pub mean_posterior: f64,
    pub std_posterior: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Groups rows by `(strategy, episode)`; error rows are skipped.
pub fn summarize(rows: &[RunRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, usize)> = rows
        .iter()
        .filter(|r| r.error.is_none())
        .map(|r| (r.strategy.clone(), r.episode))
        .collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(strategy, episode)| {
            let lik: Vec<f64> = rows
                .iter()
                .filter(|r| r.error.is_none() && r.strategy == strategy && r.episode == episode)
                .map(|r| r.likelihood_true)
                .collect();
            let post: Vec<f64> = rows
                .iter()
                .filter(|r| r.error.is_none() && r.strategy == strategy && r.episode == episode)
                .map(|r| r.posterior_true)
                .collect();
            let (ml, sl) = mean_std(&lik);
            let (mp, sp) = mean_std(&post);
            SummaryRow {
                strategy,
                episode,
                runs: lik.len(),
                mean_likelihood: ml,
                std_likelihood: sl,
                mean_posterior: mp,
                std_posterior: sp,
            }
        })
        .collect()
}

/// The synthetic episode-0 summary entry: before any data every candidate is
/// equally likely, so both metrics sit at `1 / n_systems` with zero spread.
pub fn uniform_prior_row(strategy: &str, n_systems: usize, runs: usize) -> SummaryRow {
    let prior = 1.0 / n_systems as f64;
    SummaryRow {
        strategy: strategy.to_string(),
        episode: 0,
        runs,
        mean_likelihood: prior,
        std_likelihood: 0.0,
        mean_posterior: prior,
        std_posterior: 0.0,
    }
}

/// 17 significant digits; round-trips f64 exactly. NaN serializes empty.
fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:.16e}")
    }
}

pub fn write_rows_csv<W: Write>(out: W, rows: &[RunRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "scenario",
        "strategy",
        "seed",
        "episode",
        "likelihood_true",
        "posterior_true",
        "declared",
        "declared_index",
        "rho_used",
        "plan_energy",
        "error",
    ])?;
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.strategy.clone(),
            r.seed.to_string(),
            r.episode.to_string(),
            fmt_f64(r.likelihood_true),
            fmt_f64(r.posterior_true),
            r.declared.to_string(),
            r.declared_index.map(|i| i.to_string()).unwrap_or_default(),
            fmt_f64(r.rho_used),
            fmt_f64(r.plan_energy),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(out: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "strategy",
        "episode",
        "runs",
        "mean_likelihood_true",
        "std_likelihood_true",
        "mean_posterior_true",
        "std_posterior_true",
    ])?;
    for r in rows {
        w.write_record([
            r.strategy.clone(),
            r.episode.to_string(),
            r.runs.to_string(),
            fmt_f64(r.mean_likelihood),
            fmt_f64(r.std_likelihood),
            fmt_f64(r.mean_posterior),
            fmt_f64(r.std_posterior),
        ])?;
    }
    w.flush()?;
    Ok(())
}
