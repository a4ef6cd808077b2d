//! The nonlinear weak-constraint problem: a window model split into
//! subwindows, background, observations and the covariance blocks.
//!
//! `J(x) = 1/2 |x_0 - x_b|^2_{B^-1} + 1/2 sum_j |H_j x_j - y_j|^2_{R_j^-1}
//!        + 1/2 sum_j |x_j - M_j(x_{j-1})|^2_{Q_j^-1}`

use std::sync::Arc;

use crate::error::{check_len, Error, Result};
use crate::linalg::dot;
use crate::operators::{BlockBidiagonal, BlockDiagonalSpd, ModelBlock, SelectionObservation, StateVector};

/// Nonlinear propagation over each subwindow and its linearization.
pub trait WindowModel: Send + Sync {
    fn state_dim(&self) -> usize;
    fn n_subwindows(&self) -> usize;
    /// `M_j(x)` for `j` in `1..=N`.
    fn propagate(&self, j: usize, x: &[f64]) -> Result<Vec<f64>>;
    /// `M_j(x)` together with the tangent-linear block at `x`.
    fn linearize(&self, j: usize, x: &[f64]) -> Result<(Vec<f64>, Arc<dyn ModelBlock>)>;
}

/// Separate terms of the objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostTerms {
    pub background: f64,
    pub observation: f64,
    pub model_error: f64,
}

impl CostTerms {
    pub fn total(&self) -> f64 {
        self.background + self.observation + self.model_error
    }
}

#[derive(Clone)]
pub struct AssimilationProblem {
    pub model: Arc<dyn WindowModel>,
    pub background: Vec<f64>,
    /// Stacked observations, laid out as `obs_operator` ranges.
    pub observations: Vec<f64>,
    pub obs_operator: SelectionObservation,
    /// `diag(B, Q_1, .., Q_N)`
    pub d_cov: BlockDiagonalSpd,
    /// `diag(R_0, .., R_N)`; `R_0` may be empty.
    pub r_cov: BlockDiagonalSpd,
    pub first_guess: StateVector,
    pub truth: Option<StateVector>,
}

impl AssimilationProblem {
    pub fn new(
        model: Arc<dyn WindowModel>,
        background: Vec<f64>,
        observations: Vec<f64>,
        obs_operator: SelectionObservation,
        d_cov: BlockDiagonalSpd,
        r_cov: BlockDiagonalSpd,
        first_guess: StateVector,
    ) -> Result<Self> {
        let n = model.state_dim();
        let s = n * (model.n_subwindows() + 1);
        check_len("background", background.len(), n)?;
        check_len("observation operator state space", obs_operator.state_len(), s)?;
        check_len("observations", observations.len(), obs_operator.obs_len())?;
        check_len("D", d_cov.len(), s)?;
        check_len("R", r_cov.len(), obs_operator.obs_len())?;
        check_len("first guess", first_guess.len(), s)?;
        if first_guess.block_len() != n {
            return Err(Error::Dimension("first guess block length".into()));
        }
        Ok(Self { model, background, observations, obs_operator, d_cov, r_cov, first_guess, truth: None })
    }

    pub fn state_dim(&self) -> usize {
        self.model.state_dim()
    }

    pub fn n_subwindows(&self) -> usize {
        self.model.n_subwindows()
    }

    pub fn state_len(&self) -> usize {
        self.state_dim() * (self.n_subwindows() + 1)
    }

    pub fn obs_len(&self) -> usize {
        self.obs_operator.obs_len()
    }

    fn check_state(&self, x: &[f64]) -> Result<()> {
        check_len("state", x.len(), self.state_len())
    }

    /// Misfits `b` (with `b_0 = x_b - x_0`, `c_j = M_j(x_{j-1}) - x_j`) and
    /// `d_j = y_j - H_j x_j`.
    pub fn misfits(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_state(x)?;
        let n = self.state_dim();
        let mut b = vec![0.0; x.len()];
        for i in 0..n {
            b[i] = self.background[i] - x[i];
        }
        for j in 1..=self.n_subwindows() {
            let m = self.model.propagate(j, &x[(j - 1) * n..j * n])?;
            for i in 0..n {
                b[j * n + i] = m[i] - x[j * n + i];
            }
        }
        Ok((b, self.obs_misfit(x)?))
    }

    fn obs_misfit(&self, x: &[f64]) -> Result<Vec<f64>> {
        let hx = self.obs_operator.apply(x)?;
        Ok(self.observations.iter().zip(&hx).map(|(y, h)| y - h).collect())
    }

    /// Misfits together with the tangent-linear operator `L` at `x`.
    pub fn linearize(&self, x: &[f64]) -> Result<(BlockBidiagonal, Vec<f64>, Vec<f64>)> {
        self.check_state(x)?;
        let n = self.state_dim();
        let mut b = vec![0.0; x.len()];
        for i in 0..n {
            b[i] = self.background[i] - x[i];
        }
        let mut blocks = Vec::with_capacity(self.n_subwindows());
        for j in 1..=self.n_subwindows() {
            let (m, block) = self.model.linearize(j, &x[(j - 1) * n..j * n])?;
            for i in 0..n {
                b[j * n + i] = m[i] - x[j * n + i];
            }
            blocks.push(block);
        }
        let l = BlockBidiagonal::from_blocks(n, blocks)?;
        Ok((l, b, self.obs_misfit(x)?))
    }

    /// The three objective terms evaluated directly with exact inverses.
    pub fn cost_terms(&self, x: &[f64]) -> Result<CostTerms> {
        let (b, d) = self.misfits(x)?;
        let n = self.state_dim();
        let dinv_b = self.d_cov.with_mode(crate::operators::InverseMode::Exact).apply_inverse(&b)?;
        let rinv_d = self.r_cov.with_mode(crate::operators::InverseMode::Exact).apply_inverse(&d)?;
        Ok(CostTerms {
            background: 0.5 * dot(&b[..n], &dinv_b[..n]),
            observation: 0.5 * dot(&d, &rinv_d),
            model_error: 0.5 * dot(&b[n..], &dinv_b[n..]),
        })
    }

    pub fn cost(&self, x: &[f64]) -> Result<f64> {
        Ok(self.cost_terms(x)?.total())
    }

    /// Gradient of `J` assembled term by term from the adjoint blocks,
    /// independently of the `L` operator algebra.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (l, b, d) = self.linearize(x)?;
        Ok(self.gradient_from(&l, &b, &d, &self.d_cov)?.0)
    }

    pub(crate) fn gradient_from(
        &self,
        l: &BlockBidiagonal,
        b: &[f64],
        d: &[f64],
        d_cov: &BlockDiagonalSpd,
    ) -> Result<(Vec<f64>, f64)> {
        let n = self.state_dim();
        let w = d_cov.apply_inverse(b)?;
        let rd = self.obs_operator.apply_transpose(&self.r_cov.apply_inverse(d)?)?;
        let mut g: Vec<f64> = w.iter().zip(&rd).map(|(a, c)| -a - c).collect();
        // Componentwise magnitude of the summands: the scale against which
        // rounding in g is measured once the terms cancel.
        let mut mag: Vec<f64> = w.iter().zip(&rd).map(|(a, c)| a.abs() + c.abs()).collect();
        let mut tmp = vec![0.0; n];
        for (j, block) in l.blocks().iter().enumerate() {
            block.apply_transpose(&w[(j + 1) * n..(j + 2) * n], &mut tmp);
            for i in 0..n {
                g[j * n + i] += tmp[i];
                mag[j * n + i] += tmp[i].abs();
            }
        }
        Ok((g, crate::linalg::norm(&mag)))
    }
}
