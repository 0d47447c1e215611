//! Linear time-invariant systems, process noise, and prediction-error accounting.
//!
//! A [`Scenario`] bundles a finite hypothesis class of candidate `(A, B)` pairs
//! with the (known) process-noise covariance and the input power budget. The
//! simulator advances `x(t+1) = A x(t) + B u(t) + w(t)` with `w ~ N(0, Σ_w)`,
//! and [`prediction_error`] accumulates the precision-weighted one-step
//! residuals that drive the sequential identification test.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{dim_err, Error, Result};

/// A candidate state-space pair `(A, B)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(dim_err(
                "LinearSystem A",
                "square matrix",
                format!("{}x{}", a.nrows(), a.ncols()),
            ));
        }
        if b.nrows() != a.nrows() {
            return Err(dim_err("LinearSystem B rows", a.nrows(), b.nrows()));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "system matrices must be finite".into(),
            ));
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }
}

/// Gaussian process-noise model: covariance, its lower Cholesky factor, and
/// the precision matrix.
///
/// The lower-triangular Cholesky factor serves as the matrix square root
/// everywhere a `Σ_w^{1/2}` is needed.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    sigma_w: DMatrix<f64>,
    chol: DMatrix<f64>,
    precision: DMatrix<f64>,
}

impl NoiseModel {
    pub fn new(sigma_w: DMatrix<f64>) -> Result<Self> {
        if !sigma_w.is_square() {
            return Err(dim_err(
                "NoiseModel covariance",
                "square matrix",
                format!("{}x{}", sigma_w.nrows(), sigma_w.ncols()),
            ));
        }
        let scale = sigma_w.amax().max(f64::MIN_POSITIVE);
        let asym = (&sigma_w - sigma_w.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(Error::NotPositiveDefinite(format!(
                "covariance asymmetry {asym:.3e} exceeds tolerance"
            )));
        }
        let sym = (&sigma_w + sigma_w.transpose()) * 0.5;
        let chol = nalgebra::Cholesky::new(sym.clone()).ok_or_else(|| {
            Error::NotPositiveDefinite("covariance has a non-positive eigenvalue".into())
        })?;
        let precision = chol.inverse();
        let l = chol.l();
        let recon_err = (&l * l.transpose() - &sym).norm() / sym.norm().max(f64::MIN_POSITIVE);
        if recon_err > 1e-10 {
            return Err(Error::NotPositiveDefinite(format!(
                "Cholesky reconstruction error {recon_err:.3e}"
            )));
        }
        Ok(Self {
            sigma_w: sym,
            chol: l,
            precision,
        })
    }

    /// Isotropic noise `variance * I`.
    pub fn isotropic(dim: usize, variance: f64) -> Result<Self> {
        if variance <= 0.0 {
            return Err(Error::InvalidArgument(
                "noise variance must be positive".into(),
            ));
        }
        Self::new(DMatrix::identity(dim, dim) * variance)
    }

    pub fn sigma_w(&self) -> &DMatrix<f64> {
        &self.sigma_w
    }

    /// Lower-triangular factor with `chol * chol^T = Σ_w`.
    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// Precision matrix `Σ_w^{-1}`.
    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn dim(&self) -> usize {
        self.sigma_w.nrows()
    }

    /// Draws one noise vector `chol * z`, `z ~ N(0, I)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample(StandardNormal));
        &self.chol * z
    }
}

/// An identification problem instance: the hypothesis class, the index of the
/// system that generates data, the noise model, and the input power budget.
#[derive(Debug, Clone)]
pub struct Scenario {
    systems: Vec<LinearSystem>,
    true_index: usize,
    noise: NoiseModel,
    gamma_u: f64,
}

impl Scenario {
    pub fn new(
        systems: Vec<LinearSystem>,
        true_index: usize,
        noise: NoiseModel,
        gamma_u: f64,
    ) -> Result<Self> {
        if systems.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "hypothesis class needs at least 2 systems, got {}",
                systems.len()
            )));
        }
        let (nx, nu) = (systems[0].state_dim(), systems[0].input_dim());
        for (i, s) in systems.iter().enumerate() {
            if s.state_dim() != nx || s.input_dim() != nu {
                return Err(dim_err(
                    "Scenario systems",
                    format!("({nx}, {nu})"),
                    format!("({}, {}) at index {i}", s.state_dim(), s.input_dim()),
                ));
            }
        }
        if noise.dim() != nx {
            return Err(dim_err("Scenario noise", nx, noise.dim()));
        }
        if true_index >= systems.len() {
            return Err(Error::InvalidArgument(format!(
                "true_index {true_index} out of range for {} systems",
                systems.len()
            )));
        }
        if !gamma_u.is_finite() || gamma_u <= 0.0 {
            return Err(Error::InvalidArgument("gamma_u must be positive".into()));
        }
        for i in 0..systems.len() {
            for j in (i + 1)..systems.len() {
                let d = (systems[i].a() - systems[j].a()).norm()
                    + (systems[i].b() - systems[j].b()).norm();
                if d == 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "candidate systems {i} and {j} are identical"
                    )));
                }
            }
        }
        Ok(Self {
            systems,
            true_index,
            noise,
            gamma_u,
        })
    }

    pub fn systems(&self) -> &[LinearSystem] {
        &self.systems
    }

    pub fn system(&self, i: usize) -> &LinearSystem {
        &self.systems[i]
    }

    pub fn true_index(&self) -> usize {
        self.true_index
    }

    pub fn true_system(&self) -> &LinearSystem {
        &self.systems[self.true_index]
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn gamma_u(&self) -> f64 {
        self.gamma_u
    }

    pub fn state_dim(&self) -> usize {
        self.systems[0].state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.systems[0].input_dim()
    }

    /// Number of alternatives `N` (class size minus one).
    pub fn n_alternatives(&self) -> usize {
        self.systems.len() - 1
    }

    /// Indices of all candidates other than `center`.
    pub fn alternatives_of(&self, center: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.systems.len()).filter(move |&i| i != center)
    }

    /// A copy of the scenario with the ground-truth index replaced. Used by
    /// certainty-equivalence design, which treats the current estimate as if
    /// it were the true system.
    pub fn with_true_index(&self, index: usize) -> Result<Self> {
        if index >= self.systems.len() {
            return Err(Error::InvalidArgument(format!(
                "index {index} out of range for {} systems",
                self.systems.len()
            )));
        }
        let mut s = self.clone();
        s.true_index = index;
        Ok(s)
    }
}

/// A single state/input trajectory. `states` has exactly one more element
/// than `inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    states: Vec<DVector<f64>>,
    inputs: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn new(states: Vec<DVector<f64>>, inputs: Vec<DVector<f64>>) -> Result<Self> {
        if states.len() != inputs.len() + 1 {
            return Err(dim_err(
                "Trajectory",
                format!("{} states", inputs.len() + 1),
                format!("{} states", states.len()),
            ));
        }
        Ok(Self { states, inputs })
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn inputs(&self) -> &[DVector<f64>] {
        &self.inputs
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn last_state(&self) -> &DVector<f64> {
        self.states
            .last()
            .expect("trajectory has at least one state")
    }
}

fn check_sim_dims(system: &LinearSystem, inputs: &[DVector<f64>], x0: &DVector<f64>) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::InvalidArgument(
            "input sequence must be non-empty".into(),
        ));
    }
    if x0.len() != system.state_dim() {
        return Err(dim_err("simulate x0", system.state_dim(), x0.len()));
    }
    for (t, u) in inputs.iter().enumerate() {
        if u.len() != system.input_dim() {
            return Err(dim_err(
                "simulate input",
                system.input_dim(),
                format!("{} at t={t}", u.len()),
            ));
        }
    }
    Ok(())
}

/// Simulates `x(t+1) = A x(t) + B u(t) + chol * z(t)` with `z(t) ~ N(0, I)`
/// drawn from `rng`.
pub fn simulate<R: Rng + ?Sized>(
    system: &LinearSystem,
    noise: &NoiseModel,
    inputs: &[DVector<f64>],
    x0: &DVector<f64>,
    rng: &mut R,
) -> Result<Trajectory> {
    check_sim_dims(system, inputs, x0)?;
    if noise.dim() != system.state_dim() {
        return Err(dim_err("simulate noise", system.state_dim(), noise.dim()));
    }
    let mut states = Vec::with_capacity(inputs.len() + 1);
    states.push(x0.clone());
    for u in inputs {
        let x = states.last().unwrap();
        states.push(system.a() * x + system.b() * u + noise.sample(rng));
    }
    Trajectory::new(states, inputs.to_vec())
}

/// Noise-free simulation of the same recursion.
pub fn simulate_noiseless(
    system: &LinearSystem,
    inputs: &[DVector<f64>],
    x0: &DVector<f64>,
) -> Result<Trajectory> {
    check_sim_dims(system, inputs, x0)?;
    let mut states = Vec::with_capacity(inputs.len() + 1);
    states.push(x0.clone());
    for u in inputs {
        let x = states.last().unwrap();
        states.push(system.a() * x + system.b() * u);
    }
    Trajectory::new(states, inputs.to_vec())
}

/// Draws `length` inputs i.i.d. `N(0, gamma_u^2 / n_u * I)`, the isotropic
/// excitation that exhausts the power budget in expectation.
pub fn sample_isotropic_input<R: Rng + ?Sized>(
    gamma_u: f64,
    n_u: usize,
    length: usize,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    if !gamma_u.is_finite() || gamma_u <= 0.0 {
        return Err(Error::InvalidArgument("gamma_u must be positive".into()));
    }
    if length == 0 {
        return Err(Error::InvalidArgument(
            "input length must be at least 1".into(),
        ));
    }
    if n_u == 0 {
        return Err(Error::InvalidArgument("n_u must be at least 1".into()));
    }
    let std = gamma_u / (n_u as f64).sqrt();
    Ok((0..length)
        .map(|_| DVector::from_fn(n_u, |_, _| std * rng.sample::<f64, _>(StandardNormal)))
        .collect())
}

/// Precision-weighted squared one-step residual
/// `|| x_next - A x - B u ||^2_{Σ_w^{-1}}` for a single step.
pub fn step_error(
    candidate: &LinearSystem,
    noise: &NoiseModel,
    x: &DVector<f64>,
    u: &DVector<f64>,
    x_next: &DVector<f64>,
) -> f64 {
    let r = x_next - candidate.a() * x - candidate.b() * u;
    (noise.precision() * &r).dot(&r)
}

/// Sum of precision-weighted one-step prediction errors of `candidate` along
/// the trajectory. Additive over trajectory splits.
pub fn prediction_error(
    traj: &Trajectory,
    candidate: &LinearSystem,
    noise: &NoiseModel,
) -> Result<f64> {
    if traj.states()[0].len() != candidate.state_dim() {
        return Err(dim_err(
            "prediction_error states",
            candidate.state_dim(),
            traj.states()[0].len(),
        ));
    }
    if !traj.is_empty() && traj.inputs()[0].len() != candidate.input_dim() {
        return Err(dim_err(
            "prediction_error inputs",
            candidate.input_dim(),
            traj.inputs()[0].len(),
        ));
    }
    let mut total = 0.0;
    for t in 0..traj.len() {
        total += step_error(
            candidate,
            noise,
            &traj.states()[t],
            &traj.inputs()[t],
            &traj.states()[t + 1],
        );
    }
    Ok(total)
}

/// Reproducible randomness for one Monte Carlo run, split into two
/// independent ChaCha streams: one for process noise, one for policy
/// decisions (estimate draws and random excitation). Keeping the noise
/// stream separate gives common random numbers across strategies run with
/// the same seed.
#[derive(Debug, Clone)]
pub struct SimRng {
    noise: ChaCha8Rng,
    policy: ChaCha8Rng,
}

impl SimRng {
    pub fn from_seed(seed: u64) -> Self {
        let mut noise = ChaCha8Rng::seed_from_u64(seed);
        noise.set_stream(0);
        let mut policy = ChaCha8Rng::seed_from_u64(seed);
        policy.set_stream(1);
        Self { noise, policy }
    }

    pub fn noise_rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.noise
    }

    pub fn policy_rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.policy
    }
}
