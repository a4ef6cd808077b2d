//! Structured linear operators: the block bidiagonal `L`, block diagonal SPD
//! covariances (`D`, `R`) and the selection observation operator `H`.

use std::fmt;
use std::ops::{Deref, DerefMut};
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::krylov;

/// Block vector `(x_0, ..., x_N)` with `N + 1` blocks of equal length `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n: usize,
    data: Vec<f64>,
}

impl StateVector {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || data.is_empty() || data.len() % n != 0 {
            return Err(Error::Dimension(format!(
                "state vector of length {} cannot be split into blocks of {n}",
                data.len()
            )));
        }
        Ok(Self { n, data })
    }

    pub fn zeros(n: usize, n_subwindows: usize) -> Self {
        Self { n, data: vec![0.0; n * (n_subwindows + 1)] }
    }

    pub fn from_blocks(blocks: &[Vec<f64>]) -> Result<Self> {
        let n = blocks.first().map(|b| b.len()).unwrap_or(0);
        if blocks.iter().any(|b| b.len() != n) {
            return Err(Error::Dimension("blocks of unequal length".into()));
        }
        Self::new(n, blocks.concat())
    }

    pub fn block_len(&self) -> usize {
        self.n
    }

    pub fn n_blocks(&self) -> usize {
        self.data.len() / self.n
    }

    pub fn n_subwindows(&self) -> usize {
        self.n_blocks() - 1
    }

    pub fn block(&self, j: usize) -> &[f64] {
        &self.data[j * self.n..(j + 1) * self.n]
    }

    pub fn block_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.n..(j + 1) * self.n]
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}

impl Deref for StateVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.data
    }
}

impl DerefMut for StateVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// A linear map `R^n -> R^n` together with its transpose.
pub trait ModelBlock: Send + Sync {
    fn dim(&self) -> usize;
    /// `out = M v`
    fn apply(&self, v: &[f64], out: &mut [f64]);
    /// `out = M^T v`
    fn apply_transpose(&self, v: &[f64], out: &mut [f64]);
}

/// Explicitly stored model block.
#[derive(Clone, Debug)]
pub struct DenseBlock(pub DMatrix<f64>);

impl ModelBlock for DenseBlock {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let n = self.0.nrows();
        let mut o = nalgebra::DVectorViewMut::from_slice(out, n);
        o.gemv(1.0, &self.0, &nalgebra::DVectorView::from_slice(v, n), 0.0);
    }

    fn apply_transpose(&self, v: &[f64], out: &mut [f64]) {
        let n = self.0.nrows();
        let mut o = nalgebra::DVectorViewMut::from_slice(out, n);
        o.gemv_tr(1.0, &self.0, &nalgebra::DVectorView::from_slice(v, n), 0.0);
    }
}

/// Choice of model blocks inside `L~`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelApprox {
    /// `M~_j = 0`
    Zero,
    /// `M~_j = I`
    Identity,
    /// `M~_j = M_j`
    Exact,
}

impl ModelApprox {
    pub fn tag(self) -> &'static str {
        match self {
            ModelApprox::Zero => "0",
            ModelApprox::Identity => "I",
            ModelApprox::Exact => "M",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Transpose,
}

/// `L` with identity diagonal blocks and `-M_j` on the block subdiagonal.
#[derive(Clone)]
pub struct BlockBidiagonal {
    n: usize,
    n_sub: usize,
    kind: ModelApprox,
    blocks: Vec<Arc<dyn ModelBlock>>,
}

impl fmt::Debug for BlockBidiagonal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlockBidiagonal")
            .field("n", &self.n)
            .field("n_sub", &self.n_sub)
            .field("kind", &self.kind)
            .finish()
    }
}

impl BlockBidiagonal {
    pub fn from_blocks(n: usize, blocks: Vec<Arc<dyn ModelBlock>>) -> Result<Self> {
        if let Some(b) = blocks.iter().find(|b| b.dim() != n) {
            return Err(Error::Dimension(format!("model block of size {}, expected {n}", b.dim())));
        }
        Ok(Self { n, n_sub: blocks.len(), kind: ModelApprox::Exact, blocks })
    }

    pub fn zero(n: usize, n_sub: usize) -> Self {
        Self { n, n_sub, kind: ModelApprox::Zero, blocks: Vec::new() }
    }

    pub fn identity_blocks(n: usize, n_sub: usize) -> Self {
        Self { n, n_sub, kind: ModelApprox::Identity, blocks: Vec::new() }
    }

    /// `L~` built from this operator's blocks.
    pub fn approximate(&self, approx: ModelApprox) -> Self {
        match approx {
            ModelApprox::Zero => Self::zero(self.n, self.n_sub),
            ModelApprox::Identity => Self::identity_blocks(self.n, self.n_sub),
            ModelApprox::Exact => self.clone(),
        }
    }

    pub fn kind(&self) -> ModelApprox {
        self.kind
    }

    pub fn block_len(&self) -> usize {
        self.n
    }

    pub fn n_subwindows(&self) -> usize {
        self.n_sub
    }

    pub fn len(&self) -> usize {
        self.n * (self.n_sub + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn blocks(&self) -> &[Arc<dyn ModelBlock>] {
        &self.blocks
    }

    /// `out = M_j v` for `j` in `1..=N`.
    fn model(&self, j: usize, v: &[f64], out: &mut [f64]) {
        match self.kind {
            ModelApprox::Zero => out.fill(0.0),
            ModelApprox::Identity => out.copy_from_slice(v),
            ModelApprox::Exact => self.blocks[j - 1].apply(v, out),
        }
    }

    fn model_t(&self, j: usize, v: &[f64], out: &mut [f64]) {
        match self.kind {
            ModelApprox::Zero => out.fill(0.0),
            ModelApprox::Identity => out.copy_from_slice(v),
            ModelApprox::Exact => self.blocks[j - 1].apply_transpose(v, out),
        }
    }

    pub fn apply(&self, dir: Direction, v: &[f64]) -> Result<Vec<f64>> {
        check_len("bidiagonal operand", v.len(), self.len())?;
        let n = self.n;
        let mut out = v.to_vec();
        if self.kind == ModelApprox::Zero {
            return Ok(out);
        }
        let mut tmp = vec![0.0; n];
        for j in 1..=self.n_sub {
            match dir {
                Direction::Forward => {
                    self.model(j, &v[(j - 1) * n..j * n], &mut tmp);
                    sub_assign(&mut out[j * n..(j + 1) * n], &tmp);
                }
                Direction::Transpose => {
                    self.model_t(j, &v[j * n..(j + 1) * n], &mut tmp);
                    sub_assign(&mut out[(j - 1) * n..j * n], &tmp);
                }
            }
        }
        Ok(out)
    }

    pub fn solve(&self, dir: Direction, v: &[f64]) -> Result<Vec<f64>> {
        check_len("bidiagonal right-hand side", v.len(), self.len())?;
        let n = self.n;
        let mut u = v.to_vec();
        if self.kind == ModelApprox::Zero {
            return Ok(u);
        }
        let mut tmp = vec![0.0; n];
        match dir {
            Direction::Forward => {
                for j in 1..=self.n_sub {
                    let (prev, cur) = u.split_at_mut(j * n);
                    self.model(j, &prev[(j - 1) * n..], &mut tmp);
                    add_assign(&mut cur[..n], &tmp);
                }
            }
            Direction::Transpose => {
                for j in (1..=self.n_sub).rev() {
                    let (head, next) = u.split_at_mut(j * n);
                    self.model_t(j, &next[..n], &mut tmp);
                    add_assign(&mut head[(j - 1) * n..], &tmp);
                }
            }
        }
        Ok(u)
    }
}

fn sub_assign(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x -= y;
    }
}

fn add_assign(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

/// One SPD block with its cached Cholesky factor.
#[derive(Clone, Debug)]
pub struct SpdBlock {
    matrix: DMatrix<f64>,
    chol: Option<Cholesky<f64, Dyn>>,
}

impl SpdBlock {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Dimension("covariance block is not square".into()));
        }
        let n = matrix.nrows();
        if n == 0 {
            return Ok(Self { matrix, chol: None });
        }
        let scale = matrix.amax();
        if (&matrix - matrix.transpose()).amax() > 1e-12 * scale {
            return Err(Error::NotSpd("block is not symmetric".into()));
        }
        let chol = Cholesky::new(matrix.clone())
            .ok_or_else(|| Error::NotSpd("Cholesky factorization failed".into()))?;
        Ok(Self { matrix, chol: Some(chol) })
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(values)))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        let n = self.dim();
        if n == 0 {
            return;
        }
        let mut o = nalgebra::DVectorViewMut::from_slice(out, n);
        o.gemv(1.0, &self.matrix, &nalgebra::DVectorView::from_slice(v, n), 0.0);
    }

    pub fn solve(&self, v: &[f64], out: &mut [f64]) {
        if let Some(chol) = &self.chol {
            let x = chol.solve(&DVector::from_column_slice(v));
            out.copy_from_slice(x.as_slice());
        }
    }
}

/// How `C^{-1}` is applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InverseMode {
    Exact,
    /// Fixed number of unpreconditioned CG iterations per block.
    Cg(usize),
}

impl fmt::Display for InverseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InverseMode::Exact => write!(f, "exact"),
            InverseMode::Cg(k) => write!(f, "cg({k})"),
        }
    }
}

/// Block diagonal SPD operator such as `D = diag(B, Q_1, ..)` or `R`.
#[derive(Clone, Debug)]
pub struct BlockDiagonalSpd {
    blocks: Vec<Arc<SpdBlock>>,
    offsets: Vec<usize>,
    mode: InverseMode,
}

impl BlockDiagonalSpd {
    pub fn new(blocks: Vec<Arc<SpdBlock>>) -> Self {
        let mut offsets = Vec::with_capacity(blocks.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for b in &blocks {
            acc += b.dim();
            offsets.push(acc);
        }
        Self { blocks, offsets, mode: InverseMode::Exact }
    }

    pub fn with_mode(&self, mode: InverseMode) -> Self {
        Self { mode, ..self.clone() }
    }

    pub fn mode(&self) -> InverseMode {
        self.mode
    }

    pub fn blocks(&self) -> &[Arc<SpdBlock>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("covariance operand", v.len(), self.len())?;
        let mut out = vec![0.0; v.len()];
        for (j, b) in self.blocks.iter().enumerate() {
            let r = self.offsets[j]..self.offsets[j + 1];
            b.apply(&v[r.clone()], &mut out[r]);
        }
        Ok(out)
    }

    pub fn apply_inverse(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("covariance operand", v.len(), self.len())?;
        let mut out = vec![0.0; v.len()];
        for (j, b) in self.blocks.iter().enumerate() {
            let r = self.offsets[j]..self.offsets[j + 1];
            match self.mode {
                InverseMode::Exact => b.solve(&v[r.clone()], &mut out[r]),
                InverseMode::Cg(k) => {
                    if b.dim() == 0 {
                        continue;
                    }
                    let m = b.matrix();
                    let x = krylov::cg(
                        |p: &[f64]| {
                            let mut y = vec![0.0; p.len()];
                            b.apply(p, &mut y);
                            Ok(y)
                        },
                        &v[r.clone()],
                        k,
                    )
                    .map_err(|e| Error::NotSpd(format!("cg on block {j} ({}x{}): {e}", m.nrows(), m.ncols())))?;
                    out[r].copy_from_slice(&x);
                }
            }
        }
        Ok(out)
    }
}

/// Selection of `m_j` state components at every subwindow boundary `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionObservation {
    n: usize,
    indices: Vec<Vec<usize>>,
    offsets: Vec<usize>,
}

impl SelectionObservation {
    pub fn new(n: usize, mut indices: Vec<Vec<usize>>) -> Result<Self> {
        let mut offsets = vec![0];
        for idx in indices.iter_mut() {
            idx.sort_unstable();
            if idx.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Parameter("duplicate observation index".into()));
            }
            if idx.last().is_some_and(|&i| i >= n) {
                return Err(Error::Parameter(format!("observation index out of range [0, {n})")));
            }
            offsets.push(offsets.last().unwrap() + idx.len());
        }
        Ok(Self { n, indices, offsets })
    }

    pub fn indices(&self) -> &[Vec<usize>] {
        &self.indices
    }

    pub fn block_len(&self) -> usize {
        self.n
    }

    pub fn state_len(&self) -> usize {
        self.n * self.indices.len()
    }

    /// Total number of observations `m`.
    pub fn obs_len(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn obs_counts(&self) -> Vec<usize> {
        self.indices.iter().map(Vec::len).collect()
    }

    pub fn obs_range(&self, j: usize) -> std::ops::Range<usize> {
        self.offsets[j]..self.offsets[j + 1]
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("observation operand", x.len(), self.state_len())?;
        let mut out = Vec::with_capacity(self.obs_len());
        for (j, idx) in self.indices.iter().enumerate() {
            out.extend(idx.iter().map(|&i| x[j * self.n + i]));
        }
        Ok(out)
    }

    pub fn apply_block(&self, j: usize, xj: &[f64]) -> Vec<f64> {
        self.indices[j].iter().map(|&i| xj[i]).collect()
    }

    pub fn apply_transpose(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len("observation-space operand", y.len(), self.obs_len())?;
        let mut out = vec![0.0; self.state_len()];
        for (j, idx) in self.indices.iter().enumerate() {
            for (k, &i) in idx.iter().enumerate() {
                out[j * self.n + i] = y[self.offsets[j] + k];
            }
        }
        Ok(out)
    }
}

/// Shape of the squared-exponential correlation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrelationForm {
    /// `exp(-d^2 / (2 L^2))`
    #[default]
    Gaussian,
    /// `exp(-d^2 / L^2)`
    UnitExponent,
}

/// `sigma2 * (alpha I + (1 - alpha) C)` with `C_ij` the squared-exponential
/// correlation of the grid distance `|i - j| dx`.
pub fn build_sqexp_covariance(
    n: usize,
    sigma2: f64,
    length_scale: f64,
    alpha: f64,
    dx: f64,
    form: CorrelationForm,
) -> Result<DMatrix<f64>> {
    if !(sigma2 > 0.0) || !(length_scale > 0.0) {
        return Err(Error::Parameter("variance and length scale must be positive".into()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Parameter(format!("alpha = {alpha} outside [0, 1]")));
    }
    let denom = match form {
        CorrelationForm::Gaussian => 2.0 * length_scale * length_scale,
        CorrelationForm::UnitExponent => length_scale * length_scale,
    };
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let d = (i as f64 - j as f64).abs() * dx;
        let c = (-d * d / denom).exp();
        sigma2 * ((1.0 - alpha) * c + if i == j { alpha } else { 0.0 })
    }))
}

/// `m` values logarithmically equally spaced between `lo` and `hi`.
pub fn log_spaced(m: usize, lo: f64, hi: f64) -> Vec<f64> {
    if m == 1 {
        return vec![hi];
    }
    let ratio = hi / lo;
    (0..m)
        .map(|i| match i {
            0 => lo,
            _ if i == m - 1 => hi,
            _ => lo * ratio.powf(i as f64 / (m - 1) as f64),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{condition_number, dot, max_abs_diff};

    fn scalar_l() -> BlockBidiagonal {
        let m: Arc<dyn ModelBlock> = Arc::new(DenseBlock(DMatrix::from_element(1, 1, 2.0)));
        BlockBidiagonal::from_blocks(1, vec![m]).unwrap()
    }

    #[test]
    fn scalar_bidiagonal_examples() {
        let l = scalar_l();
        assert_eq!(l.apply(Direction::Forward, &[1.0, 1.0]).unwrap(), vec![1.0, -1.0]);
        assert_eq!(l.apply(Direction::Transpose, &[1.0, 1.0]).unwrap(), vec![-1.0, 1.0]);
        assert_eq!(l.solve(Direction::Forward, &[1.0, 1.0]).unwrap(), vec![1.0, 3.0]);
    }

    #[test]
    fn zero_blocks_give_identity() {
        let l = BlockBidiagonal::zero(3, 2);
        let v: Vec<f64> = (0..9).map(|i| i as f64 - 4.0).collect();
        for dir in [Direction::Forward, Direction::Transpose] {
            assert_eq!(l.apply(dir, &v).unwrap(), v);
            assert_eq!(l.solve(dir, &v).unwrap(), v);
        }
    }

    #[test]
    fn block_count_mismatch_is_rejected() {
        assert!(matches!(scalar_l().apply(Direction::Forward, &[1.0; 3]), Err(Error::Dimension(_))));
    }

    #[test]
    fn covariance_matches_double_loop() {
        let (n, s2, l, a, dx) = (7, 0.3, 0.02, 0.1, 0.01);
        let m = build_sqexp_covariance(n, s2, l, a, dx, CorrelationForm::UnitExponent).unwrap();
        for i in 0..n {
            for j in 0..n {
                let d = ((i as f64) - (j as f64)).abs() * dx;
                let mut e = (1.0 - a) * (-(d * d) / (l * l)).exp();
                if i == j {
                    e += a;
                }
                assert!((m[(i, j)] - s2 * e).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn alpha_one_is_scaled_identity() {
        let m = build_sqexp_covariance(5, 2.0, 0.1, 1.0, 0.01, CorrelationForm::Gaussian).unwrap();
        assert_eq!(m, DMatrix::identity(5, 5) * 2.0);
    }

    #[test]
    fn covariance_parameter_errors() {
        assert!(build_sqexp_covariance(5, 0.0, 0.1, 0.5, 0.01, CorrelationForm::Gaussian).is_err());
        assert!(build_sqexp_covariance(5, 1.0, -0.1, 0.5, 0.01, CorrelationForm::Gaussian).is_err());
    }

    #[test]
    fn burgers_covariance_conditioning() {
        // Gaussian form keeps both blocks inside the target conditioning bands.
        let b = build_sqexp_covariance(100, 1e-2, 0.25, 1e-3, 0.01, CorrelationForm::Gaussian).unwrap();
        let q = build_sqexp_covariance(100, 6e-8, 0.05, 1e-2, 0.01, CorrelationForm::Gaussian).unwrap();
        let (cb, cq) = (condition_number(&b), condition_number(&q));
        assert!((5e4..=2e5).contains(&cb), "cond(B) = {cb:e}");
        assert!((1e3..=3e3).contains(&cq), "cond(Q) = {cq:e}");
        // The unit-exponent form gives noticeably better conditioned blocks.
        let b1 = build_sqexp_covariance(100, 1e-2, 0.25, 1e-3, 0.01, CorrelationForm::UnitExponent).unwrap();
        let q1 = build_sqexp_covariance(100, 1.0, 0.05, 1e-2, 0.01, CorrelationForm::UnitExponent).unwrap();
        assert!((condition_number(&b1) - 3.98e4).abs() < 0.01e4);
        assert!((condition_number(&q1) - 873.0).abs() < 5.0);
    }

    #[test]
    fn log_spaced_endpoints_and_ratio() {
        let r = log_spaced(20, 1e-3, 1.0);
        assert!((r[0] - 1e-3).abs() < 1e-15 && (r[19] - 1.0).abs() < 1e-12);
        assert!((r[19] / r[0] - 1e3).abs() < 1e-8);
    }

    #[test]
    fn spd_exact_inverse_roundtrip() {
        let b = build_sqexp_covariance(30, 1.0, 0.05, 0.01, 0.01, CorrelationForm::Gaussian).unwrap();
        let d = BlockDiagonalSpd::new(vec![Arc::new(SpdBlock::new(b).unwrap()); 3]);
        let v: Vec<f64> = (0..90).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let back = d.apply_inverse(&d.apply(&v).unwrap()).unwrap();
        assert!(max_abs_diff(&back, &v) < 1e-10 * 5.0);
    }

    #[test]
    fn non_spd_block_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(SpdBlock::new(m), Err(Error::NotSpd(_))));
    }

    #[test]
    fn selection_adjoint_identity() {
        let h = SelectionObservation::new(5, vec![vec![], vec![4, 1], vec![0, 2, 3]]).unwrap();
        let x: Vec<f64> = (0..15).map(|i| (i as f64).sin()).collect();
        let y: Vec<f64> = (0..5).map(|i| (i as f64).cos()).collect();
        let lhs = dot(&h.apply(&x).unwrap(), &y);
        let rhs = dot(&x, &h.apply_transpose(&y).unwrap());
        assert_eq!(lhs, rhs);
        assert_eq!(h.obs_counts(), vec![0, 2, 3]);
    }
}
