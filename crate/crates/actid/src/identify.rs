//! Sequential identification with a log-likelihood-ratio stopping rule and
//! the per-episode input-design subroutine.
//!
//! Each episode draws an estimate with exponential weights on the cumulative
//! prediction errors, solves the certainty-equivalence excitation problem for
//! that estimate from the current state, mixes the designed block with
//! isotropic noise according to a `rho` schedule, and simulates the block on
//! the single ongoing trajectory. A candidate is declared as soon as every
//! other candidate's error exceeds it by `2 log(N / delta)`.

use nalgebra::DVector;
use rand::Rng;

use crate::design::design_ce_input;
use crate::error::{Error, Result};
use crate::geometry::{pe_optimal, pe_random};
use crate::lti::{sample_isotropic_input, simulate, step_error, Scenario, SimRng, Trajectory};

/// Per-episode mixing fraction between the designed excitation and isotropic
/// exploration. Schedules are evaluated at a zero-based episode counter, so
/// the first episode of `InvK` is pure exploration.
#[derive(Debug, Clone, PartialEq)]
pub enum RhoSchedule {
    Constant(f64),
    /// `1 / (1 + k)`
    InvK,
    /// `1 / (1 + k)^2`
    InvKSq,
    /// `e^{-k}`
    ExpDecay,
    /// Switches from pure exploration to pure design once the posterior is
    /// confident enough relative to the design benefit.
    OracleRule,
}

/// Which excitation each episode uses.
#[derive(Debug, Clone, PartialEq)]
pub enum StrategyKind {
    /// Certainty-equivalence design at the drawn estimate.
    CertaintyEquivalence,
    /// Certainty-equivalence design at the true index (oracle knowledge).
    OracleOptimal,
    /// i.i.d. isotropic Gaussian inputs.
    Isotropic,
    /// A caller-supplied full input sequence, consumed block by block.
    FixedSequence(Vec<DVector<f64>>),
}

#[derive(Debug, Clone)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub rho_schedule: RhoSchedule,
    /// Exponential-weights temperature.
    pub eta: f64,
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind, rho_schedule: RhoSchedule, eta: f64) -> Result<Self> {
        if !eta.is_finite() || eta <= 0.0 {
            return Err(Error::InvalidArgument("eta must be positive".into()));
        }
        if let RhoSchedule::Constant(c) = rho_schedule {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::InvalidArgument(format!(
                    "constant rho must lie in [0, 1], got {c}"
                )));
            }
        }
        Ok(Self {
            kind,
            rho_schedule,
            eta,
        })
    }

    pub fn ce(rho_schedule: RhoSchedule, eta: f64) -> Result<Self> {
        Self::new(StrategyKind::CertaintyEquivalence, rho_schedule, eta)
    }

    pub fn oracle(rho_schedule: RhoSchedule, eta: f64) -> Result<Self> {
        Self::new(StrategyKind::OracleOptimal, rho_schedule, eta)
    }

    pub fn isotropic(eta: f64) -> Result<Self> {
        Self::new(StrategyKind::Isotropic, RhoSchedule::Constant(1.0), eta)
    }

    pub fn label(&self) -> String {
        let kind = match &self.kind {
            StrategyKind::CertaintyEquivalence => "ce",
            StrategyKind::OracleOptimal => "oracle",
            StrategyKind::Isotropic => return "isotropic".into(),
            StrategyKind::FixedSequence(_) => "fixed",
        };
        let rho = match &self.rho_schedule {
            RhoSchedule::Constant(c) => format!("const{c}"),
            RhoSchedule::InvK => "inv_k".into(),
            RhoSchedule::InvKSq => "inv_k_sq".into(),
            RhoSchedule::ExpDecay => "exp_decay".into(),
            RhoSchedule::OracleRule => "oracle_rule".into(),
        };
        format!("{kind}:rho={rho}:eta={}", self.eta)
    }
}

/// State of one completed episode. `eps`, `weights`, `posterior` and
/// `likelihood_true_raw` describe the knowledge state after the episode's
/// block (the weights episode `k+1` samples from); `drawn_estimate` and
/// `rho_used` describe the decisions that produced the episode's input.
#[derive(Debug, Clone)]
pub struct EpisodeRecord {
    pub k: usize,
    /// Cumulative prediction errors at the end of the episode.
    pub eps: Vec<f64>,
    /// Exponential weights of `eps` (max-subtracted).
    pub weights: Vec<f64>,
    /// Normalized exponential weights.
    pub posterior: Vec<f64>,
    /// Normalized half-likelihood `exp(-eps/2)` evaluated at the true index.
    pub likelihood_true_raw: f64,
    pub drawn_estimate: Option<usize>,
    pub rho_used: f64,
    /// Realized energy of the injected block.
    pub plan_energy: f64,
    /// Whether the stopping criterion holds at the end of this episode.
    pub terminated: bool,
    pub declared: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct IdentificationResult {
    pub episodes: Vec<EpisodeRecord>,
    /// First criterion-satisfying candidate, if any.
    pub declared: Option<usize>,
    pub stop_episode: Option<usize>,
    /// True when `declared` equals the scenario's true index.
    pub correct: bool,
    /// The full simulated trajectory (episodes are contiguous blocks).
    pub trajectory: Trajectory,
}

/// Returns the unique candidate whose error every other candidate exceeds by
/// more than `2 log(N / delta)`, if one exists.
pub fn termination_check(eps: &[f64], n_alternatives: usize, delta: f64) -> Result<Option<usize>> {
    if eps.len() != n_alternatives + 1 {
        return Err(Error::InvalidArgument(format!(
            "eps has length {}, expected {}",
            eps.len(),
            n_alternatives + 1
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    let threshold = 2.0 * (n_alternatives as f64 / delta).ln();
    let mut best = 0usize;
    for (i, &e) in eps.iter().enumerate() {
        if e < eps[best] {
            best = i;
        }
    }
    let wins = eps
        .iter()
        .enumerate()
        .all(|(i, &e)| i == best || e - eps[best] > threshold);
    Ok(wins.then_some(best))
}

/// Exponential weights `exp(-eta * eps)` with max-subtraction, and their
/// normalization.
pub fn exp_weights(eps: &[f64], eta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !eta.is_finite() || eta <= 0.0 {
        return Err(Error::InvalidArgument("eta must be positive".into()));
    }
    if eps.is_empty() {
        return Err(Error::InvalidArgument("eps must be non-empty".into()));
    }
    let min = eps.iter().cloned().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = eps.iter().map(|&e| (-eta * (e - min)).exp()).collect();
    let z: f64 = weights.iter().sum();
    let posterior = weights.iter().map(|w| w / z).collect();
    Ok((weights, posterior))
}

/// Normalized half-likelihoods `exp(-eps/2) / sum`.
pub fn half_likelihood(eps: &[f64]) -> Vec<f64> {
    let min = eps.iter().cloned().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = eps.iter().map(|&e| (-(e - min) / 2.0).exp()).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / z).collect()
}

/// Evaluates a `rho` schedule at zero-based episode counter `k`. The oracle
/// rule uses `1 - max posterior` as a proxy for the misidentification
/// probability.
pub fn rho_value(
    schedule: &RhoSchedule,
    k: usize,
    posterior: &[f64],
    c_opt: f64,
    c_rand: f64,
) -> f64 {
    match schedule {
        RhoSchedule::Constant(c) => *c,
        RhoSchedule::InvK => 1.0 / (1.0 + k as f64),
        RhoSchedule::InvKSq => 1.0 / ((1.0 + k as f64) * (1.0 + k as f64)),
        RhoSchedule::ExpDecay => (-(k as f64)).exp(),
        RhoSchedule::OracleRule => {
            let p_max = posterior.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let p_err = 1.0 - p_max;
            if (1.0 - p_err) * c_opt >= c_rand {
                0.0
            } else {
                1.0
            }
        }
    }
}

/// Informational upper bound on the stopping episode for constant PE
/// coefficients: the first `k` with
/// `tau (k c_u gamma^2 + c_w) >= 8 (2 + 1/(2 eta)) log(N / delta)`.
/// Never gates termination; the stopping rule itself is [`termination_check`].
pub fn stopping_episode_bound(
    pe: &crate::geometry::PECoefficients,
    gamma_u: f64,
    n_alternatives: usize,
    delta: f64,
    eta: f64,
) -> Result<usize> {
    if !eta.is_finite() || eta <= 0.0 || !gamma_u.is_finite() || gamma_u <= 0.0 {
        return Err(Error::InvalidArgument(
            "eta and gamma_u must be positive".into(),
        ));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument("delta must lie in (0, 1)".into()));
    }
    let rate = pe.c_u * gamma_u * gamma_u;
    if rate <= 0.0 {
        return Err(Error::InvalidArgument(
            "PE coefficient c_u must be positive".into(),
        ));
    }
    let target = 8.0 * (2.0 + 1.0 / (2.0 * eta)) * (n_alternatives as f64 / delta).ln();
    let tau = pe.tau as f64;
    Ok(((target / tau - pe.c_w) / rate).ceil().max(1.0) as usize)
}

/// Samples an index from a normalized distribution.
pub fn sample_index<R: Rng + ?Sized>(posterior: &[f64], rng: &mut R) -> usize {
    let x: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in posterior.iter().enumerate() {
        acc += p;
        if x < acc {
            return i;
        }
    }
    posterior.len() - 1
}

/// Energy-preserving mixing `sqrt(1-rho) u_star + sqrt(rho) u_eta` with
/// `u_eta` isotropic at the scenario budget. With `rho = 0` no random draw is
/// consumed; with `rho = 1` the output is exactly the isotropic sample.
pub fn mix_excitation<R: Rng + ?Sized>(
    u_star: &[DVector<f64>],
    rho: f64,
    gamma_u: f64,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidArgument(format!(
            "rho must lie in [0, 1], got {rho}"
        )));
    }
    if rho == 0.0 {
        return Ok(u_star.to_vec());
    }
    let n_u = u_star.first().map(|u| u.len()).unwrap_or(0);
    let noise = sample_isotropic_input(gamma_u, n_u, u_star.len(), rng)?;
    let a = (1.0 - rho).sqrt();
    let b = rho.sqrt();
    Ok(u_star
        .iter()
        .zip(noise.iter())
        .map(|(us, ue)| us * a + ue * b)
        .collect())
}

/// Decisions and inputs of one episode.
#[derive(Debug, Clone)]
pub struct EpisodeInputs {
    pub inputs: Vec<DVector<f64>>,
    pub drawn_estimate: Option<usize>,
    pub rho_used: f64,
}

/// Builds the excitation block for episode `k` (1-based) given the
/// prediction errors accumulated before the episode.
pub fn design_episode_input(
    scenario: &Scenario,
    strategy: &StrategyConfig,
    k: usize,
    eps: &[f64],
    x_start: &DVector<f64>,
    tau: usize,
    rng: &mut SimRng,
) -> Result<EpisodeInputs> {
    if x_start.len() != scenario.state_dim() {
        return Err(Error::InvalidArgument(
            "x_start dimension does not match scenario".into(),
        ));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("episode index is 1-based".into()));
    }
    match &strategy.kind {
        StrategyKind::Isotropic => {
            let inputs = sample_isotropic_input(
                scenario.gamma_u(),
                scenario.input_dim(),
                tau,
                rng.policy_rng(),
            )?;
            Ok(EpisodeInputs {
                inputs,
                drawn_estimate: None,
                rho_used: 1.0,
            })
        }
        StrategyKind::FixedSequence(full) => {
            if full.len() < k * tau {
                return Err(Error::InvalidArgument(format!(
                    "fixed sequence of length {} is shorter than episode {k} needs ({})",
                    full.len(),
                    k * tau
                )));
            }
            let inputs = full[(k - 1) * tau..k * tau].to_vec();
            Ok(EpisodeInputs {
                inputs,
                drawn_estimate: None,
                rho_used: 0.0,
            })
        }
        StrategyKind::CertaintyEquivalence | StrategyKind::OracleOptimal => {
            let (_, posterior) = exp_weights(eps, strategy.eta)?;
            let estimate = match strategy.kind {
                StrategyKind::OracleOptimal => scenario.true_index(),
                _ => sample_index(&posterior, rng.policy_rng()),
            };
            let rho = match &strategy.rho_schedule {
                RhoSchedule::OracleRule => {
                    let opt = pe_optimal(scenario, tau)?;
                    let rand = pe_random(scenario, tau)?;
                    rho_value(&strategy.rho_schedule, k - 1, &posterior, opt.c_u, rand.c_u)
                }
                s => rho_value(s, k - 1, &posterior, 0.0, 0.0),
            };
            let inputs = if rho >= 1.0 {
                // Pure exploration; skip the design solve entirely.
                let u_star = vec![DVector::zeros(scenario.input_dim()); tau];
                mix_excitation(&u_star, 1.0, scenario.gamma_u(), rng.policy_rng())?
            } else {
                let plan = design_ce_input(scenario, estimate, tau, x_start)?;
                let steps = plan.inputs(scenario.input_dim());
                mix_excitation(&steps, rho, scenario.gamma_u(), rng.policy_rng())?
            };
            Ok(EpisodeInputs {
                inputs,
                drawn_estimate: Some(estimate),
                rho_used: rho,
            })
        }
    }
}

fn run_loop(
    scenario: &Scenario,
    strategy: &StrategyConfig,
    tau: usize,
    delta: f64,
    max_episodes: usize,
    stop_on_termination: bool,
    rng: &mut SimRng,
) -> Result<IdentificationResult> {
    if tau == 0 {
        return Err(Error::InvalidArgument("tau must be at least 1".into()));
    }
    if max_episodes == 0 {
        return Err(Error::InvalidArgument(
            "max_episodes must be at least 1".into(),
        ));
    }
    let n_alt = scenario.n_alternatives();
    let n_sys = scenario.systems().len();
    let mut eps = vec![0.0; n_sys];
    let mut states: Vec<DVector<f64>> = vec![DVector::zeros(scenario.state_dim())];
    let mut all_inputs: Vec<DVector<f64>> = Vec::new();
    let mut episodes = Vec::new();
    let mut declared = None;
    let mut stop_episode = None;

    for k in 1..=max_episodes {
        let design = design_episode_input(
            scenario,
            strategy,
            k,
            &eps,
            states.last().unwrap(),
            tau,
            rng,
        )?;
        let block = simulate(
            scenario.true_system(),
            scenario.noise(),
            &design.inputs,
            states.last().unwrap(),
            rng.noise_rng(),
        )?;
        for t in 0..tau {
            for (i, sys) in scenario.systems().iter().enumerate() {
                eps[i] += step_error(
                    sys,
                    scenario.noise(),
                    &block.states()[t],
                    &block.inputs()[t],
                    &block.states()[t + 1],
                );
            }
        }
        states.extend_from_slice(&block.states()[1..]);
        all_inputs.extend_from_slice(block.inputs());

        let (weights, posterior) = exp_weights(&eps, strategy.eta)?;
        let lik = half_likelihood(&eps)[scenario.true_index()];
        let winner = termination_check(&eps, n_alt, delta)?;
        if winner.is_some() && declared.is_none() {
            declared = winner;
            stop_episode = Some(k);
        }
        episodes.push(EpisodeRecord {
            k,
            eps: eps.clone(),
            weights,
            posterior,
            likelihood_true_raw: lik,
            drawn_estimate: design.drawn_estimate,
            rho_used: design.rho_used,
            plan_energy: design.inputs.iter().map(|u| u.norm_squared()).sum(),
            terminated: winner.is_some(),
            declared: winner,
        });
        if stop_on_termination && declared.is_some() {
            break;
        }
    }

    let correct = declared == Some(scenario.true_index());
    Ok(IdentificationResult {
        episodes,
        declared,
        stop_episode,
        correct,
        trajectory: Trajectory::new(states, all_inputs)?,
    })
}

/// The sequential identification procedure: episodes run until a candidate
/// clears the stopping rule or `max_episodes` elapse undecided.
pub fn run_identification(
    scenario: &Scenario,
    strategy: &StrategyConfig,
    tau: usize,
    delta: f64,
    max_episodes: usize,
    rng: &mut SimRng,
) -> Result<IdentificationResult> {
    run_loop(scenario, strategy, tau, delta, max_episodes, true, rng)
}

/// Fixed-horizon variant used for evaluation: always runs `episodes`
/// episodes, recording where the stopping rule would first have fired.
pub fn run_episodes(
    scenario: &Scenario,
    strategy: &StrategyConfig,
    tau: usize,
    delta: f64,
    episodes: usize,
    rng: &mut SimRng,
) -> Result<IdentificationResult> {
    run_loop(scenario, strategy, tau, delta, episodes, false, rng)
}
