//! Learning the sparsifying transform.
//!
//! The learner alternates two exact-or-descending steps on the objective
//!
//! ```text
//!   || W X - A ||_F^2  +  beta1 * Omega(W)
//!   Omega(W) = ||W||_F^2 / beta11
//!            + ||W W^T - I||_F^2 / beta12
//!            - log|det(W^T W)| / beta13
//! ```
//!
//! subject to a hard per-column sparsity budget on `A`: the codebook step
//! keeps the `s_x` largest-magnitude coefficients of each projected column
//! (the exact constrained minimizer), and the transform step is projected
//! gradient descent with a backtracking line search. The log-determinant
//! barrier keeps `W` away from rank deficiency, which both the decoder and
//! the regularizer itself require.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::codec::SparseCode;
use crate::error::{Error, Result};
use crate::matrix::{derive_seed, DataMatrix};
use crate::stats::kahan_sum;

/// Smallest singular value of `W` below which the transform is treated as
/// rank deficient.
const SINGULARITY_THRESHOLD: f64 = 1e-10;

/// Sufficient-decrease constant for the Armijo backtracking test.
const ARMIJO_C: f64 = 1e-4;

/// Maximum number of step halvings before a line search gives up.
const MAX_HALVINGS: u32 = 30;

/// How encoding selects the surviving coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EncodingPolicy {
    /// Keep the `s_x` largest-magnitude coefficients (ties to lower index).
    TopS { s_x: usize },
    /// Keep every coefficient with magnitude at least `lambda`.
    Threshold { lambda: f64 },
}

/// A learned (or hand-built) linear map together with its encoding policy.
/// The matrix is `L x N`: code length by signal dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsifyingTransform {
    w: DMatrix<f64>,
    policy: EncodingPolicy,
}

impl SparsifyingTransform {
    /// Validates the matrix (finite, nonempty, numerically full rank) and
    /// the policy bounds.
    pub fn new(w: DMatrix<f64>, policy: EncodingPolicy) -> Result<Self> {
        if w.nrows() == 0 || w.ncols() == 0 {
            return Err(Error::InvalidParameter {
                name: "transform matrix",
                reason: format!("needs at least one row and column, got {}x{}", w.nrows(), w.ncols()),
            });
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "transform matrix entries",
            });
        }
        let sigma_min = smallest_singular_value(&w);
        if sigma_min <= SINGULARITY_THRESHOLD {
            return Err(Error::SingularTransform { sigma_min });
        }
        match policy {
            EncodingPolicy::TopS { s_x } => {
                if s_x == 0 || s_x > w.nrows() {
                    return Err(Error::InvalidParameter {
                        name: "s_x",
                        reason: format!("must be in 1..={}, got {s_x}", w.nrows()),
                    });
                }
            }
            EncodingPolicy::Threshold { lambda } => {
                if !lambda.is_finite() || lambda < 0.0 {
                    return Err(Error::InvalidParameter {
                        name: "lambda",
                        reason: format!("must be nonnegative and finite, got {lambda}"),
                    });
                }
            }
        }
        Ok(Self { w, policy })
    }

    /// Code length `L` (rows of the matrix).
    pub fn code_len(&self) -> usize {
        self.w.nrows()
    }

    /// Signal dimension `N` (columns of the matrix).
    pub fn n_dims(&self) -> usize {
        self.w.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn policy(&self) -> &EncodingPolicy {
        &self.policy
    }

    /// Same matrix under a different encoding policy.
    pub fn with_policy(&self, policy: EncodingPolicy) -> Result<Self> {
        Self::new(self.w.clone(), policy)
    }
}

/// One sparse code per data column.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    code_len: usize,
    columns: Vec<SparseCode>,
}

impl Codebook {
    pub fn from_columns(code_len: usize, columns: Vec<SparseCode>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::EmptyCodebook {
                context: "codebook needs at least one column",
            });
        }
        for c in &columns {
            if c.code_len() != code_len {
                return Err(Error::DimensionMismatch {
                    context: "codebook column length",
                    expected: code_len,
                    got: c.code_len(),
                });
            }
        }
        Ok(Self { code_len, columns })
    }

    pub fn code_len(&self) -> usize {
        self.code_len
    }

    pub fn n_points(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[SparseCode] {
        &self.columns
    }

    pub fn column(&self, m: usize) -> &SparseCode {
        &self.columns[m]
    }

    /// Checks the exact-sparsity contract of budgeted codebooks: every
    /// column carries exactly `min(s_x, L)` nonzeros.
    pub fn validate_top_s(&self, s_x: usize) -> Result<()> {
        let expected = s_x.min(self.code_len);
        for (m, c) in self.columns.iter().enumerate() {
            if c.nnz() != expected {
                return Err(Error::InfeasibleCodebook {
                    column: m,
                    nnz: c.nnz(),
                    expected,
                });
            }
        }
        Ok(())
    }

    /// Dense `L x M` copy.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.code_len, self.columns.len());
        for (m, c) in self.columns.iter().enumerate() {
            for &(l, v) in c.entries() {
                out[(l, m)] = v;
            }
        }
        out
    }
}

/// Weights and knobs for the alternating learner.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningConfig {
    /// Weight of the regularizer block against the data term.
    pub beta1: f64,
    /// Reserved weight for a soft sparsity penalty. The sparsity budget is
    /// enforced as a hard constraint, so this value is currently unused.
    pub beta2: f64,
    /// Inverse weight of the Frobenius-norm term.
    pub beta11: f64,
    /// Inverse weight of the row-orthonormality term.
    pub beta12: f64,
    /// Inverse weight of the log-determinant barrier.
    pub beta13: f64,
    /// Per-column sparsity budget.
    pub s_x: usize,
    /// Maximum number of alternations.
    pub max_iters: usize,
    /// Initial step size for the first line search; later searches reuse
    /// (and grow from) the last accepted step.
    pub step_init: f64,
    /// Stop when the relative objective decrease falls below this.
    pub obj_tol: f64,
    /// Gradient steps on `W` per alternation.
    pub inner_steps: usize,
    /// Seed for the transform initialization.
    pub rng_seed: u64,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            beta1: 1.0,
            beta2: 1.0,
            beta11: 1.0,
            beta12: 1.0,
            beta13: 1.0,
            s_x: 1,
            max_iters: 200,
            step_init: 1.0,
            obj_tol: 1e-6,
            inner_steps: 1,
            rng_seed: 0,
        }
    }
}

impl LearningConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be nonnegative and finite, got {v}"),
                });
            }
        }
        for (name, v) in [
            ("beta11", self.beta11),
            ("beta12", self.beta12),
            ("beta13", self.beta13),
            ("step_init", self.step_init),
            ("obj_tol", self.obj_tol),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive and finite, got {v}"),
                });
            }
        }
        if self.s_x == 0 {
            return Err(Error::InvalidParameter {
                name: "s_x",
                reason: "must be at least 1".into(),
            });
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter {
                name: "max_iters",
                reason: "must be at least 1".into(),
            });
        }
        if self.inner_steps == 0 {
            return Err(Error::InvalidParameter {
                name: "inner_steps",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

fn smallest_singular_value(w: &DMatrix<f64>) -> f64 {
    w.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

fn check_dims(w: &DMatrix<f64>, a: &Codebook, x: &DataMatrix) -> Result<()> {
    if x.n_dims() != w.ncols() {
        return Err(Error::DimensionMismatch {
            context: "data dimension vs transform columns",
            expected: w.ncols(),
            got: x.n_dims(),
        });
    }
    if a.code_len() != w.nrows() {
        return Err(Error::DimensionMismatch {
            context: "codebook length vs transform rows",
            expected: w.nrows(),
            got: a.code_len(),
        });
    }
    if a.n_points() != x.n_points() {
        return Err(Error::DimensionMismatch {
            context: "codebook columns vs data columns",
            expected: x.n_points(),
            got: a.n_points(),
        });
    }
    Ok(())
}

/// Transform regularizer: Frobenius energy, row-orthonormality defect, and
/// a log-determinant barrier, weighted by the inverse `beta1*` knobs.
///
/// Defined only for matrices with at least as many rows as columns (the
/// determinant of `W^T W` vanishes otherwise) and full numerical rank.
pub fn omega1(w: &DMatrix<f64>, cfg: &LearningConfig) -> Result<f64> {
    cfg.validate()?;
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "transform matrix entries",
        });
    }
    let (l, n) = (w.nrows(), w.ncols());
    if l < n {
        return Err(Error::ShapeUnsupported {
            context: "transform regularizer",
            required: "code_len >= n_dims".into(),
            got: format!("code_len {l}, n_dims {n}"),
        });
    }
    let sv = w.clone().svd(false, false).singular_values;
    let sigma_min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if sigma_min <= SINGULARITY_THRESHOLD {
        return Err(Error::SingularTransform { sigma_min });
    }
    let frob_sq = kahan_sum(w.iter().map(|v| v * v));
    let wwt = w * w.transpose();
    let ortho_defect = kahan_sum((0..l).flat_map(|i| {
        let wwt = &wwt;
        (0..l).map(move |j| {
            let d = wwt[(i, j)] - if i == j { 1.0 } else { 0.0 };
            d * d
        })
    }));
    // log|det(W^T W)| = 2 * sum(log sigma_i)
    let log_det = 2.0 * kahan_sum(sv.iter().map(|s| s.ln()));
    Ok(frob_sq / cfg.beta11 + ortho_defect / cfg.beta12 - log_det / cfg.beta13)
}

fn residual_sq(w: &DMatrix<f64>, a: &Codebook, x: &DataMatrix) -> f64 {
    let p = w * x.as_dmatrix();
    kahan_sum((0..x.n_points()).map(|m| {
        let col = p.column(m);
        let code = a.column(m);
        kahan_sum((0..w.nrows()).map(|l| {
            let d = col[l] - code.value_at(l);
            d * d
        }))
    }))
}

/// Full learning objective: squared sparsification residual plus the
/// weighted regularizer. Codebooks must satisfy the exact sparsity budget
/// in `cfg.s_x`; when `beta1 == 0` the regularizer (and its rank
/// requirement) is skipped entirely.
pub fn objective(w: &DMatrix<f64>, a: &Codebook, x: &DataMatrix, cfg: &LearningConfig) -> Result<f64> {
    cfg.validate()?;
    check_dims(w, a, x)?;
    a.validate_top_s(cfg.s_x)?;
    let data = residual_sq(w, a, x);
    if cfg.beta1 == 0.0 {
        Ok(data)
    } else {
        Ok(data + cfg.beta1 * omega1(w, cfg)?)
    }
}

/// Exact minimizer of the data term over budgeted codebooks: per column,
/// project and keep the `s_x` largest-magnitude coefficients.
pub fn sparse_coding_step(w: &DMatrix<f64>, x: &DataMatrix, s_x: usize) -> Result<Codebook> {
    let (book, _) = sparse_coding_with_residual(w, x, s_x)?;
    Ok(book)
}

/// Same as [`sparse_coding_step`] but also returns the squared residual
/// `||W X - A||_F^2`, accumulated from the dropped coefficients so no
/// second pass over the data is needed.
fn sparse_coding_with_residual(
    w: &DMatrix<f64>,
    x: &DataMatrix,
    s_x: usize,
) -> Result<(Codebook, f64)> {
    if x.n_dims() != w.ncols() {
        return Err(Error::DimensionMismatch {
            context: "data dimension vs transform columns",
            expected: w.ncols(),
            got: x.n_dims(),
        });
    }
    if s_x == 0 || s_x > w.nrows() {
        return Err(Error::InvalidParameter {
            name: "s_x",
            reason: format!("must be in 1..={}, got {s_x}", w.nrows()),
        });
    }
    let p = w * x.as_dmatrix();
    let mut columns = Vec::with_capacity(x.n_points());
    let mut dropped = Vec::with_capacity(x.n_points());
    for m in 0..x.n_points() {
        let col = p.column(m);
        let code = SparseCode::top_s_of_dense(&col, s_x);
        // kept coefficients match the projection exactly, so the residual
        // is the energy of the dropped ones
        let kept: Vec<usize> = code.support();
        dropped.push(kahan_sum((0..w.nrows()).filter_map(|l| {
            if kept.binary_search(&l).is_ok() {
                None
            } else {
                Some(col[l] * col[l])
            }
        })));
        columns.push(code);
    }
    Ok((Codebook::from_columns(w.nrows(), columns)?, kahan_sum(dropped)))
}

/// Gradient of [`objective`] in the transform matrix.
pub fn objective_gradient_w(
    w: &DMatrix<f64>,
    a: &Codebook,
    x: &DataMatrix,
    cfg: &LearningConfig,
) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    check_dims(w, a, x)?;
    let resid = w * x.as_dmatrix() - a.to_dense();
    let mut grad = resid * x.as_dmatrix().transpose() * 2.0;
    if cfg.beta1 > 0.0 {
        grad += regularizer_gradient(w, cfg)?;
    }
    Ok(grad)
}

/// `beta1 * d Omega / d W`; requires full column rank.
fn regularizer_gradient(w: &DMatrix<f64>, cfg: &LearningConfig) -> Result<DMatrix<f64>> {
    let (l, n) = (w.nrows(), w.ncols());
    if l < n {
        return Err(Error::ShapeUnsupported {
            context: "transform regularizer",
            required: "code_len >= n_dims".into(),
            got: format!("code_len {l}, n_dims {n}"),
        });
    }
    let sigma_min = smallest_singular_value(w);
    if sigma_min <= SINGULARITY_THRESHOLD {
        return Err(Error::SingularTransform { sigma_min });
    }
    let gram = w.transpose() * w;
    let chol = gram
        .cholesky()
        .ok_or(Error::SingularTransform { sigma_min })?;
    // W (W^T W)^{-1} = (solve(gram, W^T))^T because the gram is symmetric
    let w_gram_inv = chol.solve(&w.transpose()).transpose();
    let mut wwt = w * w.transpose();
    for i in 0..l {
        wwt[(i, i)] -= 1.0;
    }
    let ortho = wwt * w;
    Ok(cfg.beta1
        * (w * (2.0 / cfg.beta11) + ortho * (4.0 / cfg.beta12) - w_gram_inv * (2.0 / cfg.beta13)))
}

/// Result of one transform update.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// Updated transform matrix (unchanged on a failed line search).
    pub w: DMatrix<f64>,
    /// Objective value at the returned matrix.
    pub objective: f64,
    /// Step size accepted by the last successful line search.
    pub accepted_step: f64,
    /// True if some inner step exhausted its halvings without a decrease.
    pub line_search_failed: bool,
}

/// Backtracking gradient descent on a generic objective; shared by the
/// public update step (plain objective) and the learner (cached objective).
/// `eval` may fail on a trial point (e.g. a singular trial matrix), which
/// counts as "no decrease" and halves the step.
fn armijo_descent(
    w0: &DMatrix<f64>,
    f0: f64,
    grad: impl Fn(&DMatrix<f64>) -> Result<DMatrix<f64>>,
    eval: impl Fn(&DMatrix<f64>) -> Result<f64>,
    step_init: f64,
    inner_steps: usize,
) -> Result<StepOutcome> {
    let mut w = w0.clone();
    let mut f = f0;
    let mut step = step_init;
    let mut failed = false;
    for _ in 0..inner_steps {
        let g = grad(&w)?;
        let g_norm_sq = g.norm_squared();
        if g_norm_sq == 0.0 {
            break;
        }
        let mut t = step;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let trial = &w - &g * t;
            if let Ok(ft) = eval(&trial) {
                if ft <= f - ARMIJO_C * t * g_norm_sq {
                    w = trial;
                    f = ft;
                    step = (t * 2.0).min(1e9);
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            failed = true;
            break;
        }
    }
    Ok(StepOutcome {
        w,
        objective: f,
        accepted_step: step,
        line_search_failed: failed,
    })
}

/// One (or `cfg.inner_steps`) gradient descent steps on the transform with
/// the codebook held fixed. The returned matrix never has a larger
/// objective value than the input; if no decrease is found within the
/// halving budget the input matrix is returned with the failure flag set.
pub fn transform_update_step(
    w: &DMatrix<f64>,
    a: &Codebook,
    x: &DataMatrix,
    cfg: &LearningConfig,
) -> Result<StepOutcome> {
    let f0 = objective(w, a, x, cfg)?;
    armijo_descent(
        w,
        f0,
        |wt| objective_gradient_w(wt, a, x, cfg),
        |wt| objective(wt, a, x, cfg),
        cfg.step_init,
        cfg.inner_steps,
    )
}

/// Product of the alternating learner.
#[derive(Debug, Clone)]
pub struct LearnOutcome {
    pub transform: SparsifyingTransform,
    pub codebook: Codebook,
    /// Objective after initialization and after every alternation;
    /// non-increasing by construction.
    pub objective_trace: Vec<f64>,
    /// Alternations whose line search found no acceptable step.
    pub line_search_failures: usize,
}

/// Cached quantities that make the inner line search independent of the
/// number of data points: with `S1 = X X^T` and `S2 = A X^T` fixed,
/// `||W X - A||^2 = tr(W S1 W^T) - 2 tr(W S2^T ...)` collapses to two
/// small matrix products.
struct WStepCache {
    s1: DMatrix<f64>,
    axt: DMatrix<f64>,
    a_norm_sq: f64,
}

impl WStepCache {
    fn new(x: &DataMatrix, a: &Codebook) -> Self {
        let s1 = x.as_dmatrix() * x.as_dmatrix().transpose();
        let mut axt = DMatrix::zeros(a.code_len(), x.n_dims());
        for (m, code) in a.columns().iter().enumerate() {
            let xm = x.column(m);
            for &(row, val) in code.entries() {
                for col in 0..x.n_dims() {
                    axt[(row, col)] += val * xm[col];
                }
            }
        }
        let a_norm_sq = kahan_sum(
            a.columns()
                .iter()
                .flat_map(|c| c.entries().iter().map(|&(_, v)| v * v)),
        );
        Self { s1, axt, a_norm_sq }
    }

    fn data_term(&self, w: &DMatrix<f64>) -> f64 {
        let ws1 = w * &self.s1;
        ws1.dot(w) - 2.0 * w.dot(&self.axt) + self.a_norm_sq
    }

    fn data_grad(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        (w * &self.s1 - &self.axt) * 2.0
    }
}

/// Random transform with (near-)orthonormal rows: a full orthogonal factor
/// when the matrix is square, unit-normalized Gaussian rows otherwise.
fn init_transform(l: usize, n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(l, n, |_, _| StandardNormal.sample(&mut rng));
    if l == n {
        g.qr().q()
    } else {
        let mut w = g;
        for i in 0..l {
            let norm = w.row(i).norm();
            if norm > 0.0 {
                let scaled = w.row(i) / norm;
                w.set_row(i, &scaled);
            }
        }
        w
    }
}

/// Alternating minimization of the transform-learning objective.
///
/// Requires `code_len >= n_dims` (the barrier term is undefined otherwise)
/// and `cfg.s_x <= code_len`. Initialization retries up to five reseeds if
/// the random start is numerically singular. The outcome's trace holds the
/// objective after initialization and after each alternation; a recorded
/// value never exceeds its predecessor.
pub fn learn_transform(x: &DataMatrix, code_len: usize, cfg: &LearningConfig) -> Result<LearnOutcome> {
    cfg.validate()?;
    let n = x.n_dims();
    if code_len < n {
        return Err(Error::ShapeUnsupported {
            context: "transform learning",
            required: "code_len >= n_dims".into(),
            got: format!("code_len {code_len}, n_dims {n}"),
        });
    }
    if cfg.s_x > code_len {
        return Err(Error::InvalidParameter {
            name: "s_x",
            reason: format!("must be at most code_len {code_len}, got {}", cfg.s_x),
        });
    }

    let mut w = init_transform(code_len, n, derive_seed(cfg.rng_seed, 0));
    let mut sigma_min = smallest_singular_value(&w);
    let mut attempt = 1;
    while sigma_min <= SINGULARITY_THRESHOLD && attempt <= 5 {
        w = init_transform(code_len, n, derive_seed(cfg.rng_seed, attempt));
        sigma_min = smallest_singular_value(&w);
        attempt += 1;
    }
    if sigma_min <= SINGULARITY_THRESHOLD {
        return Err(Error::SingularTransform { sigma_min });
    }

    let reg = |wt: &DMatrix<f64>| -> Result<f64> {
        if cfg.beta1 == 0.0 {
            Ok(0.0)
        } else {
            Ok(cfg.beta1 * omega1(wt, cfg)?)
        }
    };

    let (mut a, data0) = sparse_coding_with_residual(&w, x, cfg.s_x)?;
    let mut obj = data0 + reg(&w)?;
    let mut trace = vec![obj];
    let mut step = cfg.step_init;
    let mut failures = 0;

    for _ in 0..cfg.max_iters {
        let cache = WStepCache::new(x, &a);
        let outcome = armijo_descent(
            &w,
            cache.data_term(&w) + reg(&w)?,
            |wt| {
                let mut g = cache.data_grad(wt);
                if cfg.beta1 > 0.0 {
                    g += regularizer_gradient(wt, cfg)?;
                }
                Ok(g)
            },
            |wt| Ok(cache.data_term(wt) + reg(wt)?),
            step,
            cfg.inner_steps,
        )?;
        if outcome.line_search_failed {
            failures += 1;
        }
        step = outcome.accepted_step;

        let (a_next, data_next) = sparse_coding_with_residual(&outcome.w, x, cfg.s_x)?;
        let obj_next = data_next + reg(&outcome.w)?;
        if obj_next > obj {
            // at the numerical floor the recomputed value can tick up by
            // rounding noise; keep the previous iterate and stop
            break;
        }
        w = outcome.w;
        a = a_next;
        trace.push(obj_next);
        let rel = (obj - obj_next) / obj.abs().max(1e-12);
        obj = obj_next;
        if rel < cfg.obj_tol {
            break;
        }
    }

    let transform = SparsifyingTransform::new(w, EncodingPolicy::TopS { s_x: cfg.s_x })?;
    Ok(LearnOutcome {
        transform,
        codebook: a,
        objective_trace: trace,
        line_search_failures: failures,
    })
}

/// Dense reconstruction of `W x` for a single column; test support.
pub fn project(w: &DMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    w * x
}
