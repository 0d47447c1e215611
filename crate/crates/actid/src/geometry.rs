//! Block-Toeplitz excitation geometry.
//!
//! For a block of length `tau` driven by stacked inputs
//! `U = [u(0); ...; u(tau-1)]`, the expected precision-weighted gap between
//! the true system and an alternative decomposes into a quadratic form in
//! `U` plus terms for the initial state and the process noise:
//!
//! ```text
//! E[gap] = U' W U + 2 U' m + c0 + noise_trace
//! ```
//!
//! with `W` built from the block-lower-triangular input/noise propagators and
//! the per-step difference blocks. Each input `u(t)` is credited with its
//! direct `ΔB` effect at step `t` and its `ΔA` effect propagated through the
//! states it reaches, so the block functional is
//! `Σ_{t=0}^{tau-1} ||ΔA x(t+1) + ΔB u(t)||²` in the precision norm.
//!
//! The same matrices yield the persistent-excitation coefficients: for
//! isotropic Gaussian inputs the per-block information is governed by
//! `λ_mean(W_i)`, for the optimal excitation by the minimax `λ_max` over
//! candidate mixtures.

use nalgebra::{DMatrix, DVector};

use crate::design;
use crate::error::{Error, Result};
use crate::lti::{LinearSystem, NoiseModel, Scenario};

/// Block-lower-triangular propagators from stacked inputs and stacked noise
/// to the stacked states of one block.
#[derive(Debug, Clone)]
pub struct ToeplitzPair {
    s_u: DMatrix<f64>,
    s_w: DMatrix<f64>,
    tau: usize,
}

impl ToeplitzPair {
    /// Input propagator, block `(r, c)` equal to `A^{r-c} B` for `c <= r`.
    pub fn s_u(&self) -> &DMatrix<f64> {
        &self.s_u
    }

    /// Noise propagator, block `(r, c)` equal to `A^{r-c} Σ_w^{1/2}` for `c <= r`.
    pub fn s_w(&self) -> &DMatrix<f64> {
        &self.s_w
    }

    pub fn tau(&self) -> usize {
        self.tau
    }
}

/// Powers `A^0 .. A^{count-1}` by iterated multiplication. `A` may be
/// nilpotent or otherwise non-diagonalizable, so no eigendecomposition.
fn matrix_powers(a: &DMatrix<f64>, count: usize) -> Vec<DMatrix<f64>> {
    let n = a.nrows();
    let mut powers = Vec::with_capacity(count);
    powers.push(DMatrix::identity(n, n));
    for k in 1..count {
        let next = &powers[k - 1] * a;
        powers.push(next);
    }
    powers
}

pub fn build_toeplitz(
    true_system: &LinearSystem,
    noise: &NoiseModel,
    tau: usize,
) -> Result<ToeplitzPair> {
    if tau == 0 {
        return Err(Error::InvalidArgument("tau must be at least 1".into()));
    }
    let (nx, nu) = (true_system.state_dim(), true_system.input_dim());
    if noise.dim() != nx {
        return Err(Error::InvalidArgument(
            "noise dimension does not match system".into(),
        ));
    }
    let powers = matrix_powers(true_system.a(), tau);
    let u_blocks: Vec<DMatrix<f64>> = powers.iter().map(|p| p * true_system.b()).collect();
    let w_blocks: Vec<DMatrix<f64>> = powers.iter().map(|p| p * noise.chol()).collect();

    let mut s_u = DMatrix::zeros(nx * tau, nu * tau);
    let mut s_w = DMatrix::zeros(nx * tau, nx * tau);
    for r in 0..tau {
        for c in 0..=r {
            s_u.view_mut((r * nx, c * nu), (nx, nu))
                .copy_from(&u_blocks[r - c]);
            s_w.view_mut((r * nx, c * nx), (nx, nx))
                .copy_from(&w_blocks[r - c]);
        }
    }
    Ok(ToeplitzPair { s_u, s_w, tau })
}

/// `diag_tau(block) * rhs` without forming the block-diagonal matrix.
fn block_diag_mul(block: &DMatrix<f64>, rhs: &DMatrix<f64>, tau: usize) -> DMatrix<f64> {
    let br = block.nrows();
    let bc = block.ncols();
    debug_assert_eq!(rhs.nrows(), bc * tau);
    let mut out = DMatrix::zeros(br * tau, rhs.ncols());
    for t in 0..tau {
        let chunk = block * rhs.view((t * bc, 0), (bc, rhs.ncols()));
        out.view_mut((t * br, 0), (br, rhs.ncols()))
            .copy_from(&chunk);
    }
    out
}

/// Everything needed to evaluate the expected block gap against one
/// alternative: the quadratic kernel `W`, the initial-state terms, and the
/// process-noise trace.
#[derive(Debug, Clone)]
pub struct DistinguishabilityProfile {
    index: usize,
    w: DMatrix<f64>,
    m: DVector<f64>,
    c0: f64,
    noise_trace: f64,
    tau: usize,
}

impl DistinguishabilityProfile {
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn m(&self) -> &DVector<f64> {
        &self.m
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn noise_trace(&self) -> f64 {
        self.noise_trace
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    /// `λ_mean(W) = tr(W) / dim`.
    pub fn lambda_mean(&self) -> f64 {
        self.w.trace() / self.w.nrows() as f64
    }
}

/// Profile of candidate `i` measured against the class centered at `center`,
/// i.e. treating `systems[center]` as the data-generating system.
pub(crate) fn build_profile_centered(
    scenario: &Scenario,
    center: usize,
    i: usize,
    tau: usize,
    x0: &DVector<f64>,
) -> Result<DistinguishabilityProfile> {
    if center >= scenario.systems().len() || i >= scenario.systems().len() {
        return Err(Error::InvalidArgument(format!(
            "candidate index out of range: center={center}, i={i}, class size {}",
            scenario.systems().len()
        )));
    }
    if x0.len() != scenario.state_dim() {
        return Err(Error::InvalidArgument(
            "x0 dimension does not match scenario".into(),
        ));
    }
    let truth = scenario.system(center);
    let cand = scenario.system(i);
    let noise = scenario.noise();
    let (nx, nu) = (truth.state_dim(), truth.input_dim());

    let delta_a = truth.a() - cand.a();
    let delta_b = truth.b() - cand.b();
    let prec = noise.precision();
    let q = delta_a.transpose() * prec * &delta_a; // nx x nx
    let r = delta_b.transpose() * prec * &delta_b; // nu x nu
    let n = delta_b.transpose() * prec * &delta_a; // nu x nx

    let toeplitz = build_toeplitz(truth, noise, tau)?;
    let s_u = toeplitz.s_u();
    let s_w = toeplitz.s_w();

    // W = R + S_u' Q S_u + N S_u + (N S_u)'
    let q_su = block_diag_mul(&q, s_u, tau);
    let n_su = block_diag_mul(&n, s_u, tau);
    let mut w = s_u.transpose() * q_su;
    w += &n_su + n_su.transpose();
    for t in 0..tau {
        let mut d = w.view_mut((t * nu, t * nu), (nu, nu));
        d += &r;
    }
    // Exact symmetry; the quadratic form only sees the symmetric part.
    w = (&w + w.transpose()) * 0.5;

    // Initial-state terms. The state reached by step t+1 carries A^{t+1} x0,
    // so the stacked free response is [A x0; A^2 x0; ...; A^tau x0].
    let (m, c0) = if x0.iter().all(|v| *v == 0.0) {
        (DVector::zeros(nu * tau), 0.0)
    } else {
        let mut free = DVector::zeros(nx * tau);
        let mut cur = truth.a() * x0;
        for t in 0..tau {
            free.rows_mut(t * nx, nx).copy_from(&cur);
            if t + 1 < tau {
                cur = truth.a() * &cur;
            }
        }
        let q_free = block_diag_mul(
            &q,
            &DMatrix::from_column_slice(nx * tau, 1, free.as_slice()),
            tau,
        );
        let q_free = DVector::from_column_slice(q_free.as_slice());
        let m = s_u.transpose() * &q_free + {
            let n_free = block_diag_mul(
                &n,
                &DMatrix::from_column_slice(nx * tau, 1, free.as_slice()),
                tau,
            );
            DVector::from_column_slice(n_free.as_slice())
        };
        let c0 = free.dot(&q_free);
        (m, c0)
    };

    let q_sw = block_diag_mul(&q, s_w, tau);
    let noise_trace = (s_w.transpose() * q_sw).trace();

    Ok(DistinguishabilityProfile {
        index: i,
        w,
        m,
        c0,
        noise_trace: noise_trace.max(0.0),
        tau,
    })
}

/// Profile of candidate `i` against the scenario's true system. The profile
/// of the true system against itself is identically zero.
pub fn build_profile(
    scenario: &Scenario,
    i: usize,
    tau: usize,
    x0: &DVector<f64>,
) -> Result<DistinguishabilityProfile> {
    if tau == 0 {
        return Err(Error::InvalidArgument("tau must be at least 1".into()));
    }
    build_profile_centered(scenario, scenario.true_index(), i, tau, x0)
}

/// Closed-form expected block gap for the mixed input
/// `u(t) = (1 - rho) u_d(t) + rho u_p(t)`, `u_p ~ N(0, sigma_u2 I)`:
///
/// ```text
/// (1-rho)^2 U' W U + 2 (1-rho) U' m + c0 + sigma_u2 rho^2 tr(W) + noise_trace
/// ```
pub fn expected_error(
    profile: &DistinguishabilityProfile,
    u: &DVector<f64>,
    rho: f64,
    sigma_u2: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidArgument(format!(
            "rho must lie in [0, 1], got {rho}"
        )));
    }
    if sigma_u2 < 0.0 {
        return Err(Error::InvalidArgument(
            "sigma_u2 must be nonnegative".into(),
        ));
    }
    if u.len() != profile.w.nrows() {
        return Err(Error::InvalidArgument(format!(
            "stacked input length {} does not match profile dimension {}",
            u.len(),
            profile.w.nrows()
        )));
    }
    let det = 1.0 - rho;
    let quad = (profile.w() * u).dot(u);
    Ok(det * det * quad
        + 2.0 * det * u.dot(profile.m())
        + profile.c0
        + sigma_u2 * rho * rho * profile.w.trace()
        + profile.noise_trace)
}

/// Persistent-excitation coefficients: per-block information is at least
/// `c_u * gamma_u^2 + c_w` for every alternative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PECoefficients {
    pub c_u: f64,
    pub c_w: f64,
    pub tau: usize,
    pub kind: PEKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PEKind {
    Random,
    Optimal,
    Algorithm,
}

fn profiles_at_origin(scenario: &Scenario, tau: usize) -> Result<Vec<DistinguishabilityProfile>> {
    let x0 = DVector::zeros(scenario.state_dim());
    scenario
        .alternatives_of(scenario.true_index())
        .map(|i| build_profile(scenario, i, tau, &x0))
        .collect()
}

fn noise_floor(profiles: &[DistinguishabilityProfile], tau: usize) -> f64 {
    profiles
        .iter()
        .map(|p| p.noise_trace / tau as f64)
        .fold(f64::INFINITY, f64::min)
}

/// PE coefficients of isotropic Gaussian excitation. The mean eigenvalue is
/// linear in the mixture weights, so the simplex minimum sits at a vertex:
/// `c_u = min_i λ_mean(W_i)`.
pub fn pe_random(scenario: &Scenario, tau: usize) -> Result<PECoefficients> {
    let profiles = profiles_at_origin(scenario, tau)?;
    let c_u = profiles
        .iter()
        .map(|p| p.lambda_mean())
        .fold(f64::INFINITY, f64::min);
    Ok(PECoefficients {
        c_u,
        c_w: noise_floor(&profiles, tau),
        tau,
        kind: PEKind::Random,
    })
}

/// PE coefficients of the optimal oracle excitation:
/// `c_u = min over mixtures of λ_max(Σ p_i W_i)`.
pub fn pe_optimal(scenario: &Scenario, tau: usize) -> Result<PECoefficients> {
    let profiles = profiles_at_origin(scenario, tau)?;
    let w_list: Vec<DMatrix<f64>> = profiles.iter().map(|p| p.w().clone()).collect();
    let sol = design::minimize_mixture(&w_list, 1e-8, design::DEFAULT_MIXTURE_ITERS)?;
    Ok(PECoefficients {
        c_u: sol.value,
        c_w: noise_floor(&profiles, tau),
        tau,
        kind: PEKind::Optimal,
    })
}

/// PE coefficients of the sequential design subroutine with misidentification
/// probability `p_err` and mixing weight `rho`:
/// `c_u = (1 - p_err)(1 - rho) c_u_opt + rho c_u_rand`.
pub fn pe_algorithm(
    scenario: &Scenario,
    tau: usize,
    p_err: f64,
    rho: f64,
) -> Result<PECoefficients> {
    for (name, v) in [("p_err", p_err), ("rho", rho)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidArgument(format!(
                "{name} must lie in [0, 1], got {v}"
            )));
        }
    }
    let opt = pe_optimal(scenario, tau)?;
    let rand = pe_random(scenario, tau)?;
    Ok(PECoefficients {
        c_u: (1.0 - p_err) * (1.0 - rho) * opt.c_u + rho * rand.c_u,
        c_w: rand.c_w,
        tau,
        kind: PEKind::Algorithm,
    })
}

/// Covariance of the residual increment `ΔA x(tau) + ΔB u(tau)` when the
/// block is driven from rest by i.i.d. `N(0, sigma_u2 I)` inputs:
///
/// ```text
/// ΔA [ Σ_{s=0}^{tau-1} A^s (sigma_u2 B B' + Σ_w) (A^s)' ] ΔA' + sigma_u2 ΔB ΔB'
/// ```
pub fn sigma_delta(
    scenario: &Scenario,
    i: usize,
    tau: usize,
    sigma_u2: f64,
) -> Result<DMatrix<f64>> {
    if tau == 0 {
        return Err(Error::InvalidArgument("tau must be at least 1".into()));
    }
    if sigma_u2 < 0.0 {
        return Err(Error::InvalidArgument(
            "sigma_u2 must be nonnegative".into(),
        ));
    }
    if i >= scenario.systems().len() {
        return Err(Error::InvalidArgument(format!(
            "candidate index {i} out of range"
        )));
    }
    let truth = scenario.true_system();
    let cand = scenario.system(i);
    let delta_a = truth.a() - cand.a();
    let delta_b = truth.b() - cand.b();
    let step_cov = truth.b() * truth.b().transpose() * sigma_u2 + scenario.noise().sigma_w();

    let nx = truth.state_dim();
    let mut state_cov = DMatrix::zeros(nx, nx);
    let mut pow = DMatrix::identity(nx, nx);
    for s in 0..tau {
        state_cov += &pow * &step_cov * pow.transpose();
        if s + 1 < tau {
            pow = truth.a() * pow;
        }
    }
    let cov =
        &delta_a * state_cov * delta_a.transpose() + &delta_b * delta_b.transpose() * sigma_u2;
    Ok((&cov + cov.transpose()) * 0.5)
}

/// Largest eigenvalue of `Σ_w^{-1/2} Σ_Δ Σ_w^{-1/2}` (the precision-weighted
/// residual variance), computed on the symmetrized similarity transform.
fn weighted_variance_peak(noise: &NoiseModel, cov: &DMatrix<f64>) -> f64 {
    // chol * chol' = Σ_w, so the weighted matrix is L^{-1} Σ_Δ L^{-T}.
    let l = noise.chol();
    let li = l
        .clone()
        .try_inverse()
        .expect("Cholesky factor of a positive-definite matrix is invertible");
    let sym = &li * cov * li.transpose();
    let sym = (&sym + sym.transpose()) * 0.5;
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b))
}

/// The temperature ceiling under which the sequential-identification
/// supermartingale argument applies: the minimum over alternatives of
/// `1 / (512 tau λ_max(Σ_Δ^{1/2'} Σ_w^{-1} Σ_Δ^{1/2}))`.
pub fn eta_bound(scenario: &Scenario, tau: usize, sigma_u2: f64) -> Result<f64> {
    let mut bound = f64::INFINITY;
    for i in scenario.alternatives_of(scenario.true_index()) {
        let cov = sigma_delta(scenario, i, tau, sigma_u2)?;
        let peak = weighted_variance_peak(scenario.noise(), &cov);
        if peak <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "residual variance against candidate {i} is degenerate; eta bound undefined"
            )));
        }
        bound = bound.min(1.0 / (512.0 * tau as f64 * peak));
    }
    Ok(bound)
}
