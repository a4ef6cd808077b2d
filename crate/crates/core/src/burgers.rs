//! One-dimensional forced Burgers test problem: explicit upwind-in-time,
//! centred-in-space model on interior points `x_i = i dx` (`i = 1..=n`) with
//! zero Dirichlet ghost values, its tangent-linear model, and the seeded
//! generation of truth, observations, background and first guess.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{check_len, Error, Result};
use crate::operators::{
    build_sqexp_covariance, log_spaced, BlockDiagonalSpd, CorrelationForm, DenseBlock, ModelBlock,
    SelectionObservation, SpdBlock, StateVector,
};
use crate::problem::{AssimilationProblem, WindowModel};

/// RNG stream identifiers, one per random ingredient.
pub mod streams {
    pub const MODEL_NOISE: u64 = 1;
    pub const OBS_NOISE: u64 = 2;
    pub const BACKGROUND: u64 = 3;
    pub const OBS_INDICES: u64 = 4;
    pub const FIRST_GUESS: u64 = 5;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BurgersConfig {
    pub n: usize,
    pub dx: f64,
    pub dt: f64,
    pub nu: f64,
    pub n_subwindows: usize,
    pub steps_per_subwindow: usize,
    pub k: f64,
    pub obs_per_subwindow: usize,
    pub sigma_m2: f64,
    pub sigma_o2: f64,
    pub sigma_b2: f64,
    pub b_length: f64,
    pub b_alpha: f64,
    pub q_length: f64,
    pub q_alpha: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub correlation: CorrelationForm,
    /// When false no random perturbations are drawn (noiseless twin).
    pub noise: bool,
    pub seed: u64,
}

impl Default for BurgersConfig {
    fn default() -> Self {
        let (t, n_sw) = (0.03, 50);
        Self {
            n: 100,
            dx: 0.01,
            dt: 1e-5,
            nu: 0.25,
            n_subwindows: n_sw,
            steps_per_subwindow: 60,
            k: 0.1,
            obs_per_subwindow: 20,
            sigma_m2: 1e-4 * t / n_sw as f64,
            sigma_o2: 1e-3,
            sigma_b2: 1e-2,
            b_length: 0.25,
            b_alpha: 1e-3,
            q_length: 0.05,
            q_alpha: 1e-2,
            r_min: 1e-3,
            r_max: 1.0,
            correlation: CorrelationForm::Gaussian,
            noise: true,
            seed: 2024,
        }
    }
}

impl BurgersConfig {
    /// Reduced instance on `[0, 1]` for tests and quick examples.
    pub fn small(n: usize, n_subwindows: usize, steps_per_subwindow: usize, obs: usize) -> Self {
        let base = Self::default();
        Self {
            n,
            dx: 1.0 / (n + 1) as f64,
            n_subwindows,
            steps_per_subwindow,
            obs_per_subwindow: obs,
            sigma_m2: 1e-4 * base.dt * (steps_per_subwindow * n_subwindows) as f64 / n_subwindows as f64,
            ..base
        }
    }

    pub fn window_length(&self) -> f64 {
        self.dt * (self.n_subwindows * self.steps_per_subwindow) as f64
    }

    pub fn total_steps(&self) -> usize {
        self.n_subwindows * self.steps_per_subwindow
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.dx, self.dt, self.nu, self.sigma_m2, self.sigma_o2, self.sigma_b2, self.r_min, self.r_max];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Parameter("grid, diffusion and variance parameters must be positive".into()));
        }
        if self.n == 0 || self.n_subwindows == 0 || self.steps_per_subwindow == 0 {
            return Err(Error::Parameter("grid size and window partition must be nonempty".into()));
        }
        if self.obs_per_subwindow > self.n {
            return Err(Error::Parameter("more observations per subwindow than grid points".into()));
        }
        Ok(())
    }
}

/// Forcing term `g(x, t)` of the manufactured Burgers solution.
pub fn burgers_forcing(x: f64, t: f64, k: f64, nu: f64) -> f64 {
    let s = t + 1.0;
    let a = PI * x * s;
    let b = PI * (1.0 - x) * s;
    PI * k * (x + k * s * b.sin()) * a.cos() * b.sin()
        + PI * k * (1.0 - x - k * s * a.sin()) * a.sin() * b.cos()
        + 2.0 * nu * k * k * PI * PI * s * s * (a.sin() * b.sin() + a.cos() * b.cos())
}

fn stencil(cfg: &BurgersConfig) -> (f64, f64) {
    (cfg.dt / (2.0 * cfg.dx), cfg.nu * cfg.dt / (cfg.dx * cfg.dx))
}

/// One explicit time step with forcing values `g` (already sampled at the step time).
fn step_with(u: &[f64], g: &[f64], c: f64, d: f64, dt: f64, out: &mut [f64]) {
    let n = u.len();
    for i in 0..n {
        let um = if i > 0 { u[i - 1] } else { 0.0 };
        let up = if i + 1 < n { u[i + 1] } else { 0.0 };
        out[i] = u[i] - c * u[i] * (up - um) + d * (up - 2.0 * u[i] + um) + dt * g[i];
    }
}

/// One time step of the discretized model at global step index `step`.
pub fn burgers_step(u: &[f64], step: usize, cfg: &BurgersConfig) -> Result<Vec<f64>> {
    check_len("Burgers state", u.len(), cfg.n)?;
    let t = step as f64 * cfg.dt;
    let g: Vec<f64> = (1..=cfg.n).map(|i| burgers_forcing(i as f64 * cfg.dx, t, cfg.k, cfg.nu)).collect();
    let (c, d) = stencil(cfg);
    let mut out = vec![0.0; cfg.n];
    step_with(u, &g, c, d, cfg.dt, &mut out);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Instability { step });
    }
    Ok(out)
}

/// Tridiagonal step Jacobian at `u`: `(lower, diag, upper)` where row `i`
/// couples to `u_{i-1}`, `u_i`, `u_{i+1}`.
fn step_jacobian(u: &[f64], c: f64, d: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = u.len();
    let mut lo = vec![0.0; n];
    let mut di = vec![0.0; n];
    let mut up = vec![0.0; n];
    for i in 0..n {
        let um = if i > 0 { u[i - 1] } else { 0.0 };
        let upv = if i + 1 < n { u[i + 1] } else { 0.0 };
        lo[i] = c * u[i] + d;
        di[i] = 1.0 - c * (upv - um) - 2.0 * d;
        up[i] = -c * u[i] + d;
    }
    (lo, di, up)
}

fn tri_apply(lo: &[f64], di: &[f64], up: &[f64], v: &[f64], out: &mut [f64]) {
    let n = v.len();
    for i in 0..n {
        let mut s = di[i] * v[i];
        if i > 0 {
            s += lo[i] * v[i - 1];
        }
        if i + 1 < n {
            s += up[i] * v[i + 1];
        }
        out[i] = s;
    }
}

fn tri_apply_t(lo: &[f64], di: &[f64], up: &[f64], w: &[f64], out: &mut [f64]) {
    let n = w.len();
    for k in 0..n {
        let mut s = di[k] * w[k];
        if k > 0 {
            s += up[k - 1] * w[k - 1];
        }
        if k + 1 < n {
            s += lo[k + 1] * w[k + 1];
        }
        out[k] = s;
    }
}

/// Burgers model split into subwindows, with forcing values cached per step.
#[derive(Clone, Debug)]
pub struct BurgersModel {
    cfg: BurgersConfig,
    forcing: Vec<f64>,
}

impl BurgersModel {
    pub fn new(cfg: BurgersConfig) -> Result<Self> {
        cfg.validate()?;
        let mut forcing = Vec::with_capacity(cfg.total_steps() * cfg.n);
        for step in 0..cfg.total_steps() {
            let t = step as f64 * cfg.dt;
            forcing.extend((1..=cfg.n).map(|i| burgers_forcing(i as f64 * cfg.dx, t, cfg.k, cfg.nu)));
        }
        Ok(Self { cfg, forcing })
    }

    pub fn config(&self) -> &BurgersConfig {
        &self.cfg
    }

    fn first_step(&self, j: usize) -> Result<usize> {
        if j == 0 || j > self.cfg.n_subwindows {
            return Err(Error::Parameter(format!("subwindow {j} outside 1..={}", self.cfg.n_subwindows)));
        }
        Ok((j - 1) * self.cfg.steps_per_subwindow)
    }

    /// Runs subwindow `j` from `x`, returning the states entering each step
    /// and the final state.
    fn trajectory(&self, j: usize, x: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        check_len("Burgers state", x.len(), self.cfg.n)?;
        let first = self.first_step(j)?;
        let n = self.cfg.n;
        let (c, d) = stencil(&self.cfg);
        let mut states = Vec::with_capacity(self.cfg.steps_per_subwindow);
        let mut u = x.to_vec();
        let mut next = vec![0.0; n];
        for step in first..first + self.cfg.steps_per_subwindow {
            step_with(&u, &self.forcing[step * n..(step + 1) * n], c, d, self.cfg.dt, &mut next);
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Instability { step });
            }
            states.push(std::mem::replace(&mut u, next.clone()));
        }
        Ok((states, u))
    }

    /// Matrix-free tangent-linear model of subwindow `j` around `x`.
    pub fn tlm(&self, j: usize, x: &[f64]) -> Result<BurgersTlm> {
        let (states, _) = self.trajectory(j, x)?;
        let (c, d) = stencil(&self.cfg);
        Ok(BurgersTlm { n: self.cfg.n, steps: states.iter().map(|u| step_jacobian(u, c, d)).collect() })
    }

    /// Runs the full window from `x0` without model error.
    pub fn run_window(&self, x0: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut out = vec![x0.to_vec()];
        for j in 1..=self.cfg.n_subwindows {
            let next = self.propagate(j, out.last().unwrap())?;
            out.push(next);
        }
        Ok(out)
    }
}

impl WindowModel for BurgersModel {
    fn state_dim(&self) -> usize {
        self.cfg.n
    }

    fn n_subwindows(&self) -> usize {
        self.cfg.n_subwindows
    }

    fn propagate(&self, j: usize, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.trajectory(j, x)?.1)
    }

    fn linearize(&self, j: usize, x: &[f64]) -> Result<(Vec<f64>, Arc<dyn ModelBlock>)> {
        let (states, end) = self.trajectory(j, x)?;
        let n = self.cfg.n;
        let (c, d) = stencil(&self.cfg);
        // Propagate the identity column by column through the step Jacobians.
        let mut a = DMatrix::<f64>::identity(n, n);
        let mut col = vec![0.0; n];
        for u in &states {
            let (lo, di, up) = step_jacobian(u, c, d);
            for mut column in a.column_iter_mut() {
                tri_apply(&lo, &di, &up, column.as_slice(), &mut col);
                column.as_mut_slice().copy_from_slice(&col);
            }
        }
        Ok((end, Arc::new(DenseBlock(a))))
    }
}

/// Tangent-linear model over one subwindow as a product of stored step
/// Jacobians; the adjoint applies their transposes in reverse order.
#[derive(Clone, Debug)]
pub struct BurgersTlm {
    n: usize,
    steps: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>,
}

impl ModelBlock for BurgersTlm {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let mut cur = v.to_vec();
        for (lo, di, up) in &self.steps {
            tri_apply(lo, di, up, &cur, out);
            cur.copy_from_slice(out);
        }
        out.copy_from_slice(&cur);
    }

    fn apply_transpose(&self, v: &[f64], out: &mut [f64]) {
        let mut cur = v.to_vec();
        for (lo, di, up) in self.steps.iter().rev() {
            tri_apply_t(lo, di, up, &cur, out);
            cur.copy_from_slice(out);
        }
        out.copy_from_slice(&cur);
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn gaussian(rng: &mut ChaCha8Rng, len: usize, variance: f64, enabled: bool) -> Vec<f64> {
    let sd = variance.sqrt();
    (0..len)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            if enabled {
                sd * z
            } else {
                0.0
            }
        })
        .collect()
}

/// `k sin(2 pi x)` on the interior grid.
pub fn initial_truth(cfg: &BurgersConfig) -> Vec<f64> {
    (1..=cfg.n).map(|i| cfg.k * (2.0 * PI * i as f64 * cfg.dx).sin()).collect()
}

/// Twin-experiment problem: truth with model error, observations of randomly
/// selected components at every subwindow end, perturbed background, and a
/// first guess obtained by integrating from the background with model noise.
pub fn generate_problem(cfg: &BurgersConfig) -> Result<AssimilationProblem> {
    let model = Arc::new(BurgersModel::new(cfg.clone())?);
    let (n, n_sw, m) = (cfg.n, cfg.n_subwindows, cfg.obs_per_subwindow);

    let mut model_rng = rng(cfg.seed, streams::MODEL_NOISE);
    let mut truth = vec![initial_truth(cfg)];
    for j in 1..=n_sw {
        let mut x = model.propagate(j, &truth[j - 1])?;
        for (xi, e) in x.iter_mut().zip(gaussian(&mut model_rng, n, cfg.sigma_m2, cfg.noise)) {
            *xi += e;
        }
        truth.push(x);
    }

    let mut idx_rng = rng(cfg.seed, streams::OBS_INDICES);
    let mut indices = vec![Vec::new()];
    for _ in 1..=n_sw {
        let mut idx = rand::seq::index::sample(&mut idx_rng, n, m).into_vec();
        idx.sort_unstable();
        indices.push(idx);
    }
    let h = SelectionObservation::new(n, indices)?;

    let mut obs_rng = rng(cfg.seed, streams::OBS_NOISE);
    let mut observations = Vec::with_capacity(h.obs_len());
    for (j, xj) in truth.iter().enumerate().skip(1) {
        let noise = gaussian(&mut obs_rng, m, cfg.sigma_o2, cfg.noise);
        observations.extend(h.apply_block(j, xj).iter().zip(noise).map(|(y, e)| y + e));
    }

    let mut bg_rng = rng(cfg.seed, streams::BACKGROUND);
    let background: Vec<f64> = truth[0]
        .iter()
        .zip(gaussian(&mut bg_rng, n, cfg.sigma_b2, cfg.noise))
        .map(|(x, e)| x + e)
        .collect();

    let mut fg_rng = rng(cfg.seed, streams::FIRST_GUESS);
    let mut first_guess = vec![background.clone()];
    for j in 1..=n_sw {
        let mut x = model.propagate(j, &first_guess[j - 1])?;
        for (xi, e) in x.iter_mut().zip(gaussian(&mut fg_rng, n, cfg.sigma_m2, cfg.noise)) {
            *xi += e;
        }
        first_guess.push(x);
    }

    let b = build_sqexp_covariance(n, cfg.sigma_b2, cfg.b_length, cfg.b_alpha, cfg.dx, cfg.correlation)?;
    let q = build_sqexp_covariance(n, cfg.sigma_m2, cfg.q_length, cfg.q_alpha, cfg.dx, cfg.correlation)?;
    let q = Arc::new(SpdBlock::new(q)?);
    let mut d_blocks = vec![Arc::new(SpdBlock::new(b)?)];
    d_blocks.extend(std::iter::repeat_n(q, n_sw));
    let r_j = Arc::new(SpdBlock::diagonal(&log_spaced(m, cfg.r_min, cfg.r_max))?);
    let mut r_blocks = vec![Arc::new(SpdBlock::diagonal(&[])?)];
    r_blocks.extend(std::iter::repeat_n(r_j, n_sw));

    let mut problem = AssimilationProblem::new(
        model,
        background,
        observations,
        h,
        BlockDiagonalSpd::new(d_blocks),
        BlockDiagonalSpd::new(r_blocks),
        StateVector::from_blocks(&first_guess)?,
    )?;
    problem.truth = Some(StateVector::from_blocks(&truth)?);
    Ok(problem)
}

/// Hex SHA-256 of the little-endian bytes of `values`.
pub fn digest_f64(values: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

pub const PROBLEM_SCHEMA: &str = "wc4dvar.problem/1";

/// Replayable description of a generated problem: the configuration (which
/// fixes every random draw) and digests of the generated arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemDescriptor {
    pub schema: String,
    pub generator: String,
    pub rng: String,
    pub config: BurgersConfig,
    pub n_observations: usize,
    pub digests: ProblemDigests,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemDigests {
    pub truth: String,
    pub background: String,
    pub observations: String,
    pub obs_indices: String,
    pub first_guess: String,
}

impl ProblemDescriptor {
    pub fn describe(cfg: &BurgersConfig, problem: &AssimilationProblem) -> Self {
        let idx: Vec<f64> = problem.obs_operator.indices().iter().flatten().map(|&i| i as f64).collect();
        Self {
            schema: PROBLEM_SCHEMA.into(),
            generator: format!("wc4dvar {}", env!("CARGO_PKG_VERSION")),
            rng: "ChaCha8 (seed_from_u64, one stream per ingredient)".into(),
            config: cfg.clone(),
            n_observations: problem.obs_len(),
            digests: ProblemDigests {
                truth: problem.truth.as_deref().map(digest_f64).unwrap_or_default(),
                background: digest_f64(&problem.background),
                observations: digest_f64(&problem.observations),
                obs_indices: digest_f64(&idx),
                first_guess: digest_f64(&problem.first_guess),
            },
        }
    }

    /// Regenerates the problem and checks every digest.
    pub fn regenerate(&self) -> Result<AssimilationProblem> {
        if self.schema != PROBLEM_SCHEMA {
            return Err(Error::Format(format!("unsupported problem schema `{}`", self.schema)));
        }
        let problem = generate_problem(&self.config)?;
        let again = Self::describe(&self.config, &problem);
        if again.digests != self.digests {
            return Err(Error::Format("regenerated problem does not match stored digests".into()));
        }
        Ok(problem)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forcing_at_origin() {
        let g = burgers_forcing(0.0, 0.0, 0.1, 0.25);
        assert!((g + 2.0 * 0.25 * 0.01 * PI * PI).abs() < 1e-15);
        assert!((g + 0.049348).abs() < 1e-6);
    }

    #[test]
    fn forcing_at_right_end() {
        // At x = 1, t = 0: a = pi, b = 0, so only the cos(a)cos(b) part survives.
        let g = burgers_forcing(1.0, 0.0, 0.1, 0.25);
        assert!((g + 2.0 * 0.25 * 0.01 * PI * PI).abs() < 1e-15);
    }

    #[test]
    fn three_point_step_by_hand() {
        let cfg = BurgersConfig { n: 3, dx: 0.25, dt: 1e-3, nu: 0.1, k: 0.0, ..BurgersConfig::default() };
        let u = [0.3, -0.2, 0.5];
        let out = burgers_step(&u, 0, &cfg).unwrap();
        let (c, d) = (1e-3 / 0.5, 0.1 * 1e-3 / 0.0625);
        let e0 = 0.3 - c * 0.3 * (-0.2 - 0.0) + d * (-0.2 - 0.6 + 0.0);
        let e1 = -0.2 - c * -0.2 * (0.5 - 0.3) + d * (0.5 + 0.4 + 0.3);
        let e2 = 0.5 - c * 0.5 * (0.0 + 0.2) + d * (0.0 - 1.0 - 0.2);
        for (o, e) in out.iter().zip([e0, e1, e2]) {
            assert!((o - e).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_state_zero_forcing_stays_zero() {
        let cfg = BurgersConfig { n: 5, k: 0.0, ..BurgersConfig::default() };
        assert_eq!(burgers_step(&[0.0; 5], 7, &cfg).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn instability_is_reported() {
        let cfg = BurgersConfig { n: 3, ..BurgersConfig::default() };
        assert!(matches!(burgers_step(&[f64::INFINITY, 0.0, 0.0], 3, &cfg), Err(Error::Instability { step: 3 })));
    }

    #[test]
    fn dense_and_matrix_free_tlm_agree() {
        let cfg = BurgersConfig::small(12, 3, 20, 4);
        let model = BurgersModel::new(cfg.clone()).unwrap();
        let x = initial_truth(&cfg);
        let (_, dense) = model.linearize(2, &x).unwrap();
        let free = model.tlm(2, &x).unwrap();
        let v: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin()).collect();
        let (mut a, mut b) = (vec![0.0; 12], vec![0.0; 12]);
        dense.apply(&v, &mut a);
        free.apply(&v, &mut b);
        assert!(crate::linalg::max_abs_diff(&a, &b) < 1e-14);
        dense.apply_transpose(&v, &mut a);
        free.apply_transpose(&v, &mut b);
        assert!(crate::linalg::max_abs_diff(&a, &b) < 1e-14);
    }

    #[test]
    fn generation_counts_and_reproducibility() {
        let cfg = BurgersConfig::small(10, 4, 10, 3);
        let p1 = generate_problem(&cfg).unwrap();
        let p2 = generate_problem(&cfg).unwrap();
        assert_eq!(p1.obs_len(), 12);
        assert_eq!(p1.observations, p2.observations);
        assert_eq!(*p1.first_guess, *p2.first_guess);
        let d = ProblemDescriptor::describe(&cfg, &p1);
        assert!(d.regenerate().is_ok());
    }

    #[test]
    fn noiseless_truth_has_zero_cost() {
        let cfg = BurgersConfig { noise: false, ..BurgersConfig::small(10, 4, 10, 3) };
        let p = generate_problem(&cfg).unwrap();
        assert_eq!(p.cost(p.truth.as_ref().unwrap()).unwrap(), 0.0);
    }
}
