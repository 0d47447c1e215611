//! Sample-complexity lower bounds and experiment-design benefit diagnostics.
//!
//! Any procedure that returns the true system with probability `1 - δ` needs
//! the expected information against every alternative to clear
//! `2 log(1/(2.4 δ))`. The per-candidate left-hand side is the input term
//! (`U' W_i U` for a deterministic excitation, `σ_u² tr(W_i)` for isotropic
//! Gaussian inputs) plus the process-noise trace. Both terms are evaluated
//! here without materializing the block kernels, so horizons in the tens of
//! thousands stay cheap for the isotropic path.

use nalgebra::{DMatrix, DVector};

use crate::design::minimize_mixture;
use crate::error::{Error, Result};
use crate::geometry::{build_profile, pe_optimal, pe_random};
use crate::lti::Scenario;

const DEFAULT_HORIZON_CAP: usize = 100_000;
/// Largest stacked-input dimension for which the dense mixture kernels are
/// assembled by [`optimal_lhs`].
const MAX_DENSE_SIDE: usize = 2_000;
/// Stacked-input dimension of the reference block the horizon search uses
/// for the mixture coefficient. The coefficient is nondecreasing in the
/// block length, so freezing it beyond this size keeps the search a valid
/// (slightly conservative) lower bound on the LHS.
const MIXTURE_REF_SIDE: usize = 240;

/// Threshold `2 log(1/(2.4 δ))` of the lower bound.
pub fn delta_threshold(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    Ok(2.0 * (1.0 / (2.4 * delta)).ln())
}

/// The excitation whose information content is being evaluated.
#[derive(Debug, Clone)]
pub enum InputDescriptor {
    /// A fixed stacked input of length `n_u * horizon`.
    Deterministic(DVector<f64>),
    /// i.i.d. `N(0, sigma_u2 I)` inputs.
    Isotropic { sigma_u2: f64 },
}

#[derive(Debug, Clone)]
pub struct LowerBoundReport {
    pub horizon: usize,
    pub lhs_per_candidate: Vec<f64>,
    /// Minimum over candidates; the binding side of the bound.
    pub lhs: f64,
    pub threshold: f64,
    pub satisfied: bool,
    /// Set when a deterministic input exceeds the scenario's power budget;
    /// the bound still evaluates.
    pub budget_exceeded: bool,
}

/// Per-candidate streaming quantities: difference blocks and the per-lag
/// traces that build `tr(W_i)` and the noise trace without dense assembly.
struct CandidateTerms {
    delta_a: DMatrix<f64>,
    delta_b: DMatrix<f64>,
    q: DMatrix<f64>,
    r_trace: f64,
    cross_trace: f64,
}

fn candidate_terms(scenario: &Scenario, i: usize) -> CandidateTerms {
    let truth = scenario.true_system();
    let cand = scenario.system(i);
    let prec = scenario.noise().precision();
    let delta_a = truth.a() - cand.a();
    let delta_b = truth.b() - cand.b();
    let q = delta_a.transpose() * prec * &delta_a;
    let r_trace = (delta_b.transpose() * prec * &delta_b).trace();
    let cross_trace = (delta_b.transpose() * prec * &delta_a * truth.b()).trace();
    CandidateTerms {
        delta_a,
        delta_b,
        q,
        r_trace,
        cross_trace,
    }
}

/// `(tr(W_i(horizon)), noise_trace_i(horizon))` for every candidate, via the
/// lag sums `Σ_k (horizon - k) tr((A^k X)' Q (A^k X))`.
fn streamed_traces(scenario: &Scenario, horizon: usize) -> Vec<(f64, f64)> {
    let truth = scenario.true_system();
    let terms: Vec<CandidateTerms> = scenario
        .alternatives_of(scenario.true_index())
        .map(|i| candidate_terms(scenario, i))
        .collect();
    let mut acc: Vec<(f64, f64)> = terms
        .iter()
        .map(|t| (horizon as f64 * (t.r_trace + 2.0 * t.cross_trace), 0.0))
        .collect();
    let mut pow_b = truth.b().clone();
    let mut pow_l = scenario.noise().chol().clone();
    for k in 0..horizon {
        let weight = (horizon - k) as f64;
        for (t, a) in terms.iter().zip(acc.iter_mut()) {
            a.0 += weight * (pow_b.transpose() * &t.q * &pow_b).trace();
            a.1 += weight * (pow_l.transpose() * &t.q * &pow_l).trace();
        }
        if k + 1 < horizon {
            pow_b = truth.a() * pow_b;
            pow_l = truth.a() * pow_l;
        }
    }
    acc
}

/// `U' W_i U` for every candidate, accumulated along the noise-free
/// trajectory the input induces from rest.
fn deterministic_quadratics(
    scenario: &Scenario,
    u: &DVector<f64>,
    horizon: usize,
) -> Result<Vec<f64>> {
    let truth = scenario.true_system();
    let (nx, nu) = (truth.state_dim(), truth.input_dim());
    if u.len() != nu * horizon {
        return Err(Error::InvalidArgument(format!(
            "stacked input has length {}, expected {}",
            u.len(),
            nu * horizon
        )));
    }
    let prec = scenario.noise().precision();
    let terms: Vec<CandidateTerms> = scenario
        .alternatives_of(scenario.true_index())
        .map(|i| candidate_terms(scenario, i))
        .collect();
    let mut out = vec![0.0; terms.len()];
    let mut x = DVector::zeros(nx);
    for t in 0..horizon {
        let ut = u.rows(t * nu, nu).clone_owned();
        x = truth.a() * &x + truth.b() * &ut;
        for (term, o) in terms.iter().zip(out.iter_mut()) {
            let resid = &term.delta_a * &x + &term.delta_b * &ut;
            *o += (prec * &resid).dot(&resid);
        }
    }
    Ok(out)
}

/// Evaluates the lower-bound left-hand side per candidate at the given
/// horizon and confidence level.
pub fn lower_bound_lhs(
    scenario: &Scenario,
    input: &InputDescriptor,
    horizon: usize,
    delta: f64,
) -> Result<LowerBoundReport> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let threshold = delta_threshold(delta)?;
    let traces = streamed_traces(scenario, horizon);
    let (input_terms, budget_exceeded) = match input {
        InputDescriptor::Deterministic(u) => {
            let quads = deterministic_quadratics(scenario, u, horizon)?;
            let budget = scenario.gamma_u().powi(2) * horizon as f64;
            (quads, u.norm_squared() > budget * (1.0 + 1e-9))
        }
        InputDescriptor::Isotropic { sigma_u2 } => {
            if *sigma_u2 < 0.0 {
                return Err(Error::InvalidArgument(
                    "sigma_u2 must be nonnegative".into(),
                ));
            }
            (
                traces.iter().map(|(tr_w, _)| sigma_u2 * tr_w).collect(),
                false,
            )
        }
    };
    let lhs_per_candidate: Vec<f64> = input_terms
        .iter()
        .zip(traces.iter())
        .map(|(inp, (_, nt))| inp + nt)
        .collect();
    let lhs = lhs_per_candidate
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    Ok(LowerBoundReport {
        horizon,
        lhs: if lhs.is_finite() { lhs } else { 0.0 },
        lhs_per_candidate,
        threshold,
        satisfied: lhs >= threshold,
        budget_exceeded,
    })
}

/// LHS decomposition for the optimal input kind: the mixture term plus the
/// trace term in both its conservative (max) and optimistic (min) variants.
#[derive(Debug, Clone, Copy)]
pub struct OptimalLhs {
    pub mixture_term: f64,
    pub trace_max: f64,
    pub trace_min: f64,
}

impl OptimalLhs {
    /// The official left-hand side: mixture term plus the conservative trace.
    pub fn value(&self) -> f64 {
        self.mixture_term + self.trace_max
    }
}

/// Evaluates the optimal-excitation LHS at one horizon. Dense kernels are
/// assembled, so the stacked dimension is capped at desk scale.
pub fn optimal_lhs(scenario: &Scenario, horizon: usize) -> Result<OptimalLhs> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    if scenario.input_dim() * horizon > MAX_DENSE_SIDE {
        return Err(Error::InvalidArgument(format!(
            "optimal-input evaluation at horizon {horizon} needs a dense {}-dim kernel (cap {MAX_DENSE_SIDE})",
            scenario.input_dim() * horizon
        )));
    }
    let x0 = DVector::zeros(scenario.state_dim());
    let profiles: Vec<_> = scenario
        .alternatives_of(scenario.true_index())
        .map(|i| build_profile(scenario, i, horizon, &x0))
        .collect::<Result<_>>()?;
    let w_list: Vec<DMatrix<f64>> = profiles.iter().map(|p| p.w().clone()).collect();
    let sol = minimize_mixture(&w_list, 1e-8, crate::design::DEFAULT_MIXTURE_ITERS)?;
    let gamma2 = scenario.gamma_u().powi(2);
    let traces: Vec<f64> = profiles.iter().map(|p| p.noise_trace()).collect();
    Ok(OptimalLhs {
        mixture_term: gamma2 * horizon as f64 * sol.value,
        trace_max: traces.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        trace_min: traces.iter().cloned().fold(f64::INFINITY, f64::min),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HorizonInputKind {
    Optimal,
    Isotropic,
}

/// Smallest horizon at which the lower-bound LHS for the given input kind
/// clears the threshold. Both LHS variants are nondecreasing in the horizon,
/// so a doubling bracket plus bisection finds the crossing.
pub fn min_horizon(scenario: &Scenario, input_kind: HorizonInputKind, delta: f64) -> Result<usize> {
    min_horizon_with_cap(scenario, input_kind, delta, DEFAULT_HORIZON_CAP)
}

/// Mixture coefficient `min_p λ_max(Σ p_i W_i(tau))` at one block length.
fn mixture_coefficient(scenario: &Scenario, tau: usize) -> Result<f64> {
    let x0 = DVector::zeros(scenario.state_dim());
    let w_list: Vec<DMatrix<f64>> = scenario
        .alternatives_of(scenario.true_index())
        .map(|i| build_profile(scenario, i, tau, &x0).map(|p| p.w().clone()))
        .collect::<Result<_>>()?;
    Ok(minimize_mixture(&w_list, 1e-8, crate::design::DEFAULT_MIXTURE_ITERS)?.value)
}

pub fn min_horizon_with_cap(
    scenario: &Scenario,
    input_kind: HorizonInputKind,
    delta: f64,
    cap: usize,
) -> Result<usize> {
    let threshold = delta_threshold(delta)?;
    let ref_tau = (MIXTURE_REF_SIDE / scenario.input_dim()).max(1);
    let mut coeff_cache: std::collections::HashMap<usize, f64> = std::collections::HashMap::new();
    let mut eval = |h: usize| -> Result<f64> {
        match input_kind {
            HorizonInputKind::Isotropic => {
                let sigma_u2 = scenario.gamma_u().powi(2) / scenario.input_dim() as f64;
                Ok(
                    lower_bound_lhs(scenario, &InputDescriptor::Isotropic { sigma_u2 }, h, delta)?
                        .lhs,
                )
            }
            HorizonInputKind::Optimal => {
                let block = h.min(ref_tau);
                let coeff = match coeff_cache.get(&block) {
                    Some(&c) => c,
                    None => {
                        let c = mixture_coefficient(scenario, block)?;
                        coeff_cache.insert(block, c);
                        c
                    }
                };
                let trace_max = streamed_traces(scenario, h)
                    .iter()
                    .map(|&(_, nt)| nt)
                    .fold(f64::NEG_INFINITY, f64::max);
                Ok(scenario.gamma_u().powi(2) * h as f64 * coeff + trace_max)
            }
        }
    };

    let mut hi = 1usize;
    let mut lo = 0usize;
    loop {
        if eval(hi)? >= threshold {
            break;
        }
        lo = hi;
        if hi >= cap {
            return Err(Error::HorizonCap { cap });
        }
        hi = (hi * 2).min(cap);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if eval(mid)? >= threshold {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // Guard against non-monotone numerics near the crossing.
    while hi > 1 && eval(hi - 1)? >= threshold {
        hi -= 1;
    }
    Ok(hi)
}

/// How much the optimal excitation buys over isotropic noise for this
/// instance: the ratio of the two persistent-excitation coefficients.
#[derive(Debug, Clone, Copy)]
pub struct BenefitDiagnostic {
    pub tau: usize,
    pub c_opt: f64,
    pub c_rand: f64,
    /// `c_opt / c_rand`; at least 1 up to solver tolerance.
    pub ratio: f64,
    /// Shared noise floor `c_w`.
    pub noise_floor: f64,
}

pub fn benefit(scenario: &Scenario, tau: usize) -> Result<BenefitDiagnostic> {
    let opt = pe_optimal(scenario, tau)?;
    let rand = pe_random(scenario, tau)?;
    let ratio = if rand.c_u > 0.0 {
        opt.c_u / rand.c_u
    } else {
        f64::INFINITY
    };
    Ok(BenefitDiagnostic {
        tau,
        c_opt: opt.c_u,
        c_rand: rand.c_u,
        ratio,
        noise_floor: rand.c_w,
    })
}
