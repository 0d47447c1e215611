//! Max-min excitation design.
//!
//! Two layers:
//!
//! * [`minimize_mixture`] solves the convex relaxation
//!   `min over simplex p of λ_max(Σ p_i W_i)` with entropic mirror descent.
//!   The raw top-eigenvector subgradient converges like `1/√k`, far too slow
//!   for the tolerances this crate pins, so the descent runs on a
//!   softmax-smoothed spectral objective with a shrinking temperature. The
//!   smoothed gradient `g_i = tr(P W_i)` comes with its own certificate: `P`
//!   is a feasible dual point (PSD, unit trace), so `min_i tr(P W_i)` lower
//!   bounds the optimum and the solver reports the duality gap it actually
//!   certified.
//!
//! * [`design_oracle_input`] / [`design_ce_input`] turn the relaxation into a
//!   feasible excitation: scale the mixture's top eigenvector to the energy
//!   budget, then polish with projected gradient ascent on a softmin
//!   surrogate of the true max-min objective, keeping whichever candidate
//!   scores best. The relaxation value gives an upper bound on the max-min,
//!   so every returned plan carries a sandwich check.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{build_profile_centered, DistinguishabilityProfile};
use crate::lti::Scenario;

pub const DEFAULT_MIXTURE_ITERS: usize = 10_000;
const REFINE_ITERS: usize = 200;
const MAX_REFINE_STARTS: usize = 8;

/// Solution of the simplex-mixture eigenvalue minimization.
#[derive(Debug, Clone)]
pub struct MixtureSolution {
    /// Simplex weights over the candidate kernels.
    pub p: Vec<f64>,
    /// `λ_max` of the weighted mixture at `p`.
    pub value: f64,
    /// Unit top eigenvector of the mixture at `p`.
    pub top_vector: DVector<f64>,
    pub iterations: usize,
    /// `value` minus the best dual lower bound found; zero at exact optimality.
    pub certified_gap: f64,
}

/// Deterministic top eigenpair: among numerically tied top eigenvalues pick
/// the eigenvector whose leading support sits at the lowest coordinate index,
/// sign-fixed so that entry is positive.
pub(crate) fn top_eigenpair(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let eig = m.clone().symmetric_eigen();
    let lam_max = eig
        .eigenvalues
        .iter()
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let tie = 1e-12 * (1.0 + lam_max.abs());
    let mut best: Option<(usize, f64, usize)> = None; // (support index, |entry|, column)
    for j in 0..eig.eigenvalues.len() {
        if eig.eigenvalues[j] < lam_max - tie {
            continue;
        }
        let col = eig.eigenvectors.column(j);
        let thresh = 1e-8 * col.amax().max(f64::MIN_POSITIVE);
        let support = (0..col.len()).find(|&r| col[r].abs() > thresh).unwrap_or(0);
        let mag = col[support].abs();
        let better = match best {
            None => true,
            Some((s, m_abs, _)) => support < s || (support == s && mag > m_abs + 1e-15),
        };
        if better {
            best = Some((support, mag, j));
        }
    }
    let (support, _, j) = best.expect("matrix has at least one eigenvalue");
    let mut v = eig.eigenvectors.column(j).clone_owned();
    if v[support] < 0.0 {
        v = -v;
    }
    let n = v.norm();
    if n > 0.0 {
        v /= n;
    }
    (lam_max, v)
}

fn frobenius_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Eigen data of one mixture iterate.
struct MixtureEigen {
    lam_max: f64,
    /// Smoothed objective `λ_max + μ logsumexp((λ - λ_max)/μ)`.
    f_mu: f64,
    /// Softmax density matrix over the spectrum at temperature `μ`.
    density: DMatrix<f64>,
}

fn mixture_eigen(w_list: &[DMatrix<f64>], p: &[f64], mu: f64) -> MixtureEigen {
    let dim = w_list[0].nrows();
    let mut m = DMatrix::zeros(dim, dim);
    for (w, &pi) in w_list.iter().zip(p.iter()) {
        if pi != 0.0 {
            m += w * pi;
        }
    }
    let eig = m.symmetric_eigen();
    let lam_max = eig
        .eigenvalues
        .iter()
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut z = 0.0;
    let mut weights = Vec::with_capacity(dim);
    for j in 0..dim {
        let e = ((eig.eigenvalues[j] - lam_max) / mu).exp();
        weights.push(e);
        z += e;
    }
    let mut density = DMatrix::zeros(dim, dim);
    for (j, w) in weights.iter().enumerate() {
        let d = w / z;
        if d > 1e-18 {
            let v = eig.eigenvectors.column(j);
            density.syger(d, &v, &v, 1.0);
        }
    }
    // syger fills the lower triangle; symmetrize.
    let density = density.lower_triangle() + density.lower_triangle().transpose()
        - DMatrix::from_diagonal(&density.diagonal());
    MixtureEigen {
        lam_max,
        f_mu: lam_max + mu * z.ln(),
        density,
    }
}

/// Minimizes `λ_max(Σ p_i W_i)` over the probability simplex.
///
/// Terminates when the certified duality gap drops below `tol` (scaled by the
/// kernel magnitude) or when the best objective stops improving; exhausting
/// `max_iter` with a gap above `100 * tol` is an error carrying the best
/// iterate found.
pub fn minimize_mixture(
    w_list: &[DMatrix<f64>],
    tol: f64,
    max_iter: usize,
) -> Result<MixtureSolution> {
    if w_list.is_empty() {
        return Err(Error::InvalidArgument(
            "mixture requires at least one kernel".into(),
        ));
    }
    let dim = w_list[0].nrows();
    for (i, w) in w_list.iter().enumerate() {
        if !w.is_square() || w.nrows() != dim {
            return Err(Error::InvalidArgument(format!(
                "kernel {i} has shape {}x{}, expected {dim}x{dim}",
                w.nrows(),
                w.ncols()
            )));
        }
        let asym = (w - w.transpose()).amax();
        if asym > 1e-8 * (1.0 + w.amax()) {
            return Err(Error::InvalidArgument(format!(
                "kernel {i} is not symmetric (asymmetry {asym:.3e})"
            )));
        }
    }
    if !tol.is_finite() || tol <= 0.0 {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }

    let n = w_list.len();
    if n == 1 {
        let (value, top_vector) = top_eigenpair(&w_list[0]);
        return Ok(MixtureSolution {
            p: vec![1.0],
            value,
            top_vector,
            iterations: 0,
            certified_gap: 0.0,
        });
    }

    let scale = w_list
        .iter()
        .map(|w| top_eigenpair(w).0)
        .fold(f64::NEG_INFINITY, f64::max);
    if scale <= 0.0 {
        // All kernels are (numerically) zero or negative semidefinite; the
        // uniform mixture is as good as any.
        let p = vec![1.0 / n as f64; n];
        let eig = mixture_eigen(w_list, &p, 1.0);
        let mut m = DMatrix::zeros(dim, dim);
        for (w, &pi) in w_list.iter().zip(p.iter()) {
            m += w * pi;
        }
        let (value, top_vector) = top_eigenpair(&m);
        let _ = eig;
        return Ok(MixtureSolution {
            p,
            value,
            top_vector,
            iterations: 0,
            certified_gap: 0.0,
        });
    }

    let tol_eff = tol * scale.max(1.0);
    let mu_min = (tol_eff / (2.0 * ((dim + 1) as f64).ln())).max(1e-14 * scale);
    let mut mu = 0.25 * scale;

    let mut p = vec![1.0 / n as f64; n];
    let mut eig = mixture_eigen(w_list, &p, mu);
    let mut best_f = eig.lam_max;
    let mut best_p = p.clone();
    let mut best_cert = f64::NEG_INFINITY;
    let mut avg_density = DMatrix::<f64>::zeros(dim, dim);
    let mut avg_weight = 0.0;

    let mut step = 1.0;
    let mut last_improve = 0usize;
    let mut iterations = 0usize;
    let window = 30usize;

    while iterations < max_iter {
        iterations += 1;

        if eig.lam_max < best_f - 0.1 * tol_eff {
            last_improve = iterations;
        }
        if eig.lam_max < best_f {
            best_f = eig.lam_max;
            best_p = p.clone();
        }

        let g: Vec<f64> = w_list
            .iter()
            .map(|w| frobenius_dot(&eig.density, w))
            .collect();
        let cert_now = g.iter().cloned().fold(f64::INFINITY, f64::min);
        best_cert = best_cert.max(cert_now);

        avg_density += &eig.density * step;
        avg_weight += step;
        if iterations.is_multiple_of(10) && avg_weight > 0.0 {
            let averaged = &avg_density / avg_weight;
            let cert_avg = w_list
                .iter()
                .map(|w| frobenius_dot(&averaged, w))
                .fold(f64::INFINITY, f64::min);
            best_cert = best_cert.max(cert_avg);
        }

        if best_f - best_cert <= tol_eff {
            break;
        }

        // Entropic mirror step with backtracking on the smoothed objective.
        let g_min = g.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut trial = step;
        let mut accepted = false;
        for _ in 0..12 {
            let mut p_new: Vec<f64> = p
                .iter()
                .zip(g.iter())
                .map(|(&pi, &gi)| pi * (-(trial) * (gi - g_min) / scale).exp())
                .collect();
            let z: f64 = p_new.iter().sum();
            for v in &mut p_new {
                *v /= z;
            }
            let eig_new = mixture_eigen(w_list, &p_new, mu);
            if eig_new.f_mu <= eig.f_mu + 1e-14 * scale {
                p = p_new;
                eig = eig_new;
                step = (trial * 1.3).min(64.0);
                accepted = true;
                break;
            }
            trial *= 0.5;
        }
        if !accepted {
            step = (step * 0.5).max(1e-8);
        }

        if iterations - last_improve > window || !accepted {
            if mu > mu_min * 1.000_001 {
                mu = (mu / 5.0).max(mu_min);
                eig = mixture_eigen(w_list, &p, mu);
                last_improve = iterations;
            } else if iterations - last_improve > window {
                break; // converged by the stagnation window
            }
        }
    }

    let mut m = DMatrix::zeros(dim, dim);
    for (w, &pi) in w_list.iter().zip(best_p.iter()) {
        m += w * pi;
    }
    let (value, top_vector) = top_eigenpair(&m);
    let certified_gap = (value - best_cert).max(0.0);
    if iterations >= max_iter && certified_gap > 100.0 * tol_eff {
        return Err(Error::MixtureStalled {
            iterations,
            gap: certified_gap,
            best: (best_p, value),
        });
    }
    Ok(MixtureSolution {
        p: best_p,
        value,
        top_vector,
        iterations,
        certified_gap,
    })
}

/// How the returned excitation was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMethod {
    /// Scaled top eigenvector of the mixture relaxation.
    MixtureEigvec,
    /// Projected-gradient refinement improved on the eigenvector candidate.
    Refined,
}

/// A stacked excitation for one block together with its score.
#[derive(Debug, Clone)]
pub struct ExcitationPlan {
    pub u: DVector<f64>,
    pub tau: usize,
    /// `||U||^2`.
    pub energy: f64,
    /// Smallest per-candidate design objective at `u`.
    pub achieved_minimum: f64,
    pub method: PlanMethod,
    /// Relaxation upper bound on the max-min objective; only available for
    /// designs from the origin (the initial-state terms break the bound).
    pub upper_bound: Option<f64>,
}

impl ExcitationPlan {
    /// Per-step input sequence view of the stacked vector.
    pub fn inputs(&self, n_u: usize) -> Vec<DVector<f64>> {
        (0..self.tau)
            .map(|t| DVector::from_column_slice(self.u.rows(t * n_u, n_u).as_slice()))
            .collect()
    }
}

struct DesignObjective {
    profiles: Vec<DistinguishabilityProfile>,
    constants: Vec<f64>,
}

impl DesignObjective {
    fn new(profiles: Vec<DistinguishabilityProfile>) -> Self {
        let constants = profiles.iter().map(|p| p.c0() + p.noise_trace()).collect();
        Self {
            profiles,
            constants,
        }
    }

    fn per_candidate(&self, u: &DVector<f64>) -> Vec<f64> {
        self.profiles
            .iter()
            .zip(self.constants.iter())
            .map(|(p, &c)| (p.w() * u).dot(u) + 2.0 * u.dot(p.m()) + c)
            .collect()
    }

    fn value(&self, u: &DVector<f64>) -> f64 {
        self.per_candidate(u)
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    fn softmin_and_grad(&self, u: &DVector<f64>, beta: f64) -> (f64, DVector<f64>) {
        let objs = self.per_candidate(u);
        let fmin = objs.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut z = 0.0;
        let mut weights = Vec::with_capacity(objs.len());
        for &f in &objs {
            let e = (-(beta) * (f - fmin)).exp();
            weights.push(e);
            z += e;
        }
        let mut grad = DVector::zeros(u.len());
        for ((p, &w), _) in self.profiles.iter().zip(weights.iter()).zip(objs.iter()) {
            let share = w / z;
            if share > 1e-16 {
                grad += (p.w() * u + p.m()) * (2.0 * share);
            }
        }
        (fmin - z.ln() / beta, grad)
    }
}

fn project_ball(u: &mut DVector<f64>, radius: f64) {
    let n = u.norm();
    if n > radius {
        *u *= radius / n;
    }
}

fn refine(
    objective: &DesignObjective,
    start: &DVector<f64>,
    radius: f64,
    beta: f64,
) -> DVector<f64> {
    let mut u = start.clone();
    project_ball(&mut u, radius);
    let (mut f_cur, mut grad) = objective.softmin_and_grad(&u, beta);
    let mut step = radius / (grad.norm() + 1e-12);
    for _ in 0..REFINE_ITERS {
        let mut trial = step;
        let mut accepted = false;
        for _ in 0..10 {
            let mut u_new = &u + &grad * trial;
            project_ball(&mut u_new, radius);
            let (f_new, grad_new) = objective.softmin_and_grad(&u_new, beta);
            if f_new > f_cur + 1e-15 * (1.0 + f_cur.abs()) {
                u = u_new;
                f_cur = f_new;
                grad = grad_new;
                step = trial * 1.5;
                accepted = true;
                break;
            }
            trial *= 0.3;
        }
        if !accepted {
            break;
        }
    }
    u
}

fn design_from_profiles(
    profiles: Vec<DistinguishabilityProfile>,
    tau: usize,
    gamma_u: f64,
    at_origin: bool,
) -> Result<ExcitationPlan> {
    let budget = gamma_u * gamma_u * tau as f64;
    let radius = budget.sqrt();
    let w_list: Vec<DMatrix<f64>> = profiles.iter().map(|p| p.w().clone()).collect();
    let mixture = minimize_mixture(&w_list, 1e-8, DEFAULT_MIXTURE_ITERS)?;

    let objective = DesignObjective::new(profiles);

    let mut u0 = &mixture.top_vector * radius;
    let m_mix: f64 = objective
        .profiles
        .iter()
        .zip(mixture.p.iter())
        .map(|(p, &pi)| pi * u0.dot(p.m()))
        .sum();
    if m_mix < 0.0 {
        u0 = -u0;
    }
    let base_value = objective.value(&u0);

    // Smoothing temperature tied to the median kernel magnitude.
    let peaks: Vec<f64> = objective
        .profiles
        .iter()
        .map(|p| top_eigenpair(p.w()).0)
        .collect();
    let mut sorted_peaks = peaks.clone();
    sorted_peaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let beta = 50.0 / (1.0 + sorted_peaks[sorted_peaks.len() / 2]);

    // Deterministic multi-start: the mixture vector plus the most binding
    // per-candidate eigenvectors.
    let mut starts = vec![u0.clone()];
    let mut ranked: Vec<(f64, usize)> = peaks.iter().cloned().zip(0..).collect();
    ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    for &(peak, i) in ranked.iter().take(MAX_REFINE_STARTS) {
        if peak > 0.0 {
            let (_, v) = top_eigenpair(objective.profiles[i].w());
            let mut cand = v * radius;
            if cand.dot(objective.profiles[i].m()) < 0.0 {
                cand = -cand;
            }
            starts.push(cand);
        }
    }

    let mut best_u = u0.clone();
    let mut best_value = base_value;
    for start in &starts {
        let refined = refine(&objective, start, radius, beta);
        let v = objective.value(&refined);
        if v > best_value {
            best_value = v;
            best_u = refined;
        }
    }

    let method = if best_value > base_value {
        PlanMethod::Refined
    } else {
        PlanMethod::MixtureEigvec
    };
    let upper_bound = if at_origin {
        let max_const = objective
            .constants
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let upper = budget * mixture.value + max_const;
        if best_value > upper + 1e-8 * (1.0 + upper.abs()) {
            return Err(Error::SolverFailure(format!(
                "max-min value {best_value} exceeds relaxation bound {upper}"
            )));
        }
        Some(upper)
    } else {
        None
    };

    Ok(ExcitationPlan {
        energy: best_u.norm_squared(),
        u: best_u,
        tau,
        achieved_minimum: best_value,
        method,
        upper_bound,
    })
}

/// Oracle excitation: maximizes the smallest expected block gap against every
/// alternative of the true system, subject to `||U||^2 <= gamma_u^2 tau`.
pub fn design_oracle_input(
    scenario: &Scenario,
    tau: usize,
    x0: &DVector<f64>,
) -> Result<ExcitationPlan> {
    if tau == 0 {
        return Err(Error::InvalidArgument("tau must be at least 1".into()));
    }
    let center = scenario.true_index();
    let profiles: Vec<DistinguishabilityProfile> = scenario
        .alternatives_of(center)
        .map(|i| build_profile_centered(scenario, center, i, tau, x0))
        .collect::<Result<_>>()?;
    let at_origin = x0.iter().all(|v| *v == 0.0);
    design_from_profiles(profiles, tau, scenario.gamma_u(), at_origin)
}

/// Certainty-equivalence excitation: the same design with the current
/// estimate treated as the true system.
pub fn design_ce_input(
    scenario: &Scenario,
    estimate_index: usize,
    tau: usize,
    x0: &DVector<f64>,
) -> Result<ExcitationPlan> {
    let recentered = scenario.with_true_index(estimate_index)?;
    design_oracle_input(&recentered, tau, x0)
}
