//! Sparse code types and the encode / decode / purify operations.
//!
//! A code is a sparse vector of length `L` stored as `(index, value)` pairs
//! with strictly increasing indices and nonzero finite values. Encoding
//! projects a point through the transform and keeps either the `S_x`
//! largest-magnitude coefficients or every coefficient at least `lambda` in
//! magnitude. Decoding multiplies by a learned right-inverse-like matrix
//! `R`; purification restricts a noisy code to a trusted support.

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::ambiguation::AmbiguatedCode;
use crate::error::{Error, Result};
use crate::matrix::DataMatrix;
use crate::transform::{Codebook, EncodingPolicy, SparsifyingTransform};

/// Sparse vector of fixed length with sorted, unique indices and nonzero,
/// finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    code_len: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseCode {
    /// Validates and wraps an entry list. Entries must be sorted by index,
    /// strictly increasing, in range, and nonzero finite.
    pub fn new(code_len: usize, entries: Vec<(usize, f64)>) -> Result<Self> {
        if code_len == 0 {
            return Err(Error::InvalidParameter {
                name: "code_len",
                reason: "must be at least 1".into(),
            });
        }
        let mut prev: Option<usize> = None;
        for &(idx, val) in &entries {
            if idx >= code_len {
                return Err(Error::InvalidParameter {
                    name: "entry index",
                    reason: format!("index {idx} out of range for code length {code_len}"),
                });
            }
            if let Some(p) = prev {
                if idx <= p {
                    return Err(Error::InvalidParameter {
                        name: "entry index",
                        reason: format!("indices must be strictly increasing, saw {p} then {idx}"),
                    });
                }
            }
            if val == 0.0 || !val.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "entry value",
                    reason: format!("values must be nonzero and finite, got {val} at index {idx}"),
                });
            }
            prev = Some(idx);
        }
        Ok(Self { code_len, entries })
    }

    /// Empty code of the given length.
    pub fn empty(code_len: usize) -> Self {
        Self {
            code_len,
            entries: Vec::new(),
        }
    }

    /// Keeps the `s` largest-magnitude entries of a dense vector; magnitude
    /// ties go to the lower index, exact zeros are never stored.
    pub fn top_s_of_dense(dense: &DVectorView<'_, f64>, s: usize) -> Self {
        let l = dense.len();
        let mut order: Vec<usize> = (0..l).collect();
        order.sort_by(|&i, &j| {
            dense[j]
                .abs()
                .total_cmp(&dense[i].abs())
                .then(i.cmp(&j))
        });
        let mut kept: Vec<(usize, f64)> = order
            .into_iter()
            .take(s)
            .filter(|&i| dense[i] != 0.0)
            .map(|i| (i, dense[i]))
            .collect();
        kept.sort_unstable_by_key(|&(i, _)| i);
        Self {
            code_len: l,
            entries: kept,
        }
    }

    /// Keeps every entry with magnitude at least `lambda`; exact zeros are
    /// never stored.
    pub fn threshold_of_dense(dense: &DVectorView<'_, f64>, lambda: f64) -> Self {
        let entries: Vec<(usize, f64)> = dense
            .iter()
            .enumerate()
            .filter(|&(_, &v)| v != 0.0 && v.abs() >= lambda)
            .map(|(i, &v)| (i, v))
            .collect();
        Self {
            code_len: dense.len(),
            entries,
        }
    }

    pub fn code_len(&self) -> usize {
        self.code_len
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entry list, sorted by index.
    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    /// Sorted support indices.
    pub fn support(&self) -> Vec<usize> {
        self.entries.iter().map(|&(i, _)| i).collect()
    }

    /// Value at position `l`, zero when `l` is not in the support.
    pub fn value_at(&self, l: usize) -> f64 {
        match self.entries.binary_search_by_key(&l, |&(i, _)| i) {
            Ok(pos) => self.entries[pos].1,
            Err(_) => 0.0,
        }
    }

    /// Dense copy of the code.
    pub fn to_dense(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.code_len);
        for &(i, val) in &self.entries {
            v[i] = val;
        }
        v
    }

    /// Size of the support intersection with another code.
    pub fn support_overlap(&self, other: &SparseCode) -> usize {
        let mut i = 0;
        let mut j = 0;
        let mut n = 0;
        while i < self.entries.len() && j < other.entries.len() {
            match self.entries[i].0.cmp(&other.entries[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }
}

/// Sparse code whose values are all `+1` or `-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TernaryCode(SparseCode);

impl TernaryCode {
    pub fn new(code: SparseCode) -> Result<Self> {
        if code.entries().iter().any(|&(_, v)| v != 1.0 && v != -1.0) {
            return Err(Error::InvalidParameter {
                name: "ternary code",
                reason: "values must be exactly +1 or -1".into(),
            });
        }
        Ok(Self(code))
    }

    pub fn code(&self) -> &SparseCode {
        &self.0
    }

    pub fn into_code(self) -> SparseCode {
        self.0
    }
}

/// Projects a point through the transform and sparsifies per the
/// transform's policy.
pub fn encode(t: &SparsifyingTransform, x: &DVectorView<'_, f64>) -> Result<SparseCode> {
    if x.len() != t.n_dims() {
        return Err(Error::DimensionMismatch {
            context: "encode input dimension",
            expected: t.n_dims(),
            got: x.len(),
        });
    }
    let f = t.matrix() * x;
    Ok(match *t.policy() {
        EncodingPolicy::TopS { s_x } => SparseCode::top_s_of_dense(&f.as_view(), s_x),
        EncodingPolicy::Threshold { lambda } => SparseCode::threshold_of_dense(&f.as_view(), lambda),
    })
}

/// Like [`encode`] but keeps only coefficient signs. The support is the
/// same one `encode` would select; a coefficient that is exactly zero can
/// never be selected, so every kept sign is well defined.
pub fn encode_ternary(t: &SparsifyingTransform, x: &DVectorView<'_, f64>) -> Result<TernaryCode> {
    let real = encode(t, x)?;
    let entries = real
        .entries()
        .iter()
        .map(|&(i, v)| (i, if v > 0.0 { 1.0 } else { -1.0 }))
        .collect();
    TernaryCode::new(SparseCode::new(real.code_len(), entries)?)
}

/// How the reconstruction matrix is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecoderMode {
    /// Orthonormal-column `R` from the closed-form trace maximization;
    /// needs `L <= N`.
    Orthonormal,
    /// Regularized pseudo-inverse `R = (W^T W + beta I)^{-1} W^T`.
    Ridge,
}

impl DecoderMode {
    /// Orthonormal whenever the shape allows it, ridge otherwise.
    pub fn auto_for(code_len: usize, n_dims: usize) -> Self {
        if code_len <= n_dims {
            DecoderMode::Orthonormal
        } else {
            DecoderMode::Ridge
        }
    }
}

/// Linear reconstruction map from codes back to signal space.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    r: DMatrix<f64>,
    mode: DecoderMode,
    beta_r: f64,
    beta: f64,
}

impl Decoder {
    /// Reconstruction matrix, `N x L`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn mode(&self) -> DecoderMode {
        self.mode
    }

    pub fn n_dims(&self) -> usize {
        self.r.nrows()
    }

    pub fn code_len(&self) -> usize {
        self.r.ncols()
    }
}

/// Regularized pseudo-inverse `(W^T W + beta I)^{-1} W^T`, shape `N x L`.
fn ridge_inverse(w: &DMatrix<f64>, beta: f64) -> Result<DMatrix<f64>> {
    let n = w.ncols();
    let mut gram = w.transpose() * w;
    for i in 0..n {
        gram[(i, i)] += beta;
    }
    let chol = gram.cholesky().ok_or(Error::SingularSystem {
        context: "regularized gram matrix",
    })?;
    Ok(chol.solve(&w.transpose()))
}

/// Fits the reconstruction matrix for a transform / codebook / data triple.
///
/// In [`DecoderMode::Orthonormal`] the result is the orthonormal-column
/// maximizer of `tr[(A X^T + beta_r C^T) R]`, obtained from a thin SVD; in
/// [`DecoderMode::Ridge`] it is the regularized pseudo-inverse itself.
pub fn learn_decoder(
    w: &DMatrix<f64>,
    a: &Codebook,
    x: &DataMatrix,
    beta_r: f64,
    beta: f64,
    mode: DecoderMode,
) -> Result<Decoder> {
    let (l, n) = (w.nrows(), w.ncols());
    if x.n_dims() != n {
        return Err(Error::DimensionMismatch {
            context: "decoder data dimension",
            expected: n,
            got: x.n_dims(),
        });
    }
    if a.code_len() != l {
        return Err(Error::DimensionMismatch {
            context: "decoder codebook length",
            expected: l,
            got: a.code_len(),
        });
    }
    if a.n_points() != x.n_points() {
        return Err(Error::DimensionMismatch {
            context: "decoder codebook size",
            expected: x.n_points(),
            got: a.n_points(),
        });
    }
    for (name, v) in [("beta_r", beta_r), ("beta", beta)] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidParameter {
                name,
                reason: format!("must be nonnegative and finite, got {v}"),
            });
        }
    }
    let c = ridge_inverse(w, beta)?;
    match mode {
        DecoderMode::Ridge => Ok(Decoder {
            r: c,
            mode,
            beta_r,
            beta,
        }),
        DecoderMode::Orthonormal => {
            if l > n {
                return Err(Error::ShapeUnsupported {
                    context: "orthonormal decoder",
                    required: "code_len <= n_dims".into(),
                    got: format!("code_len {l}, n_dims {n}"),
                });
            }
            // G = A X^T + beta_r C^T, accumulated sparsely over codebook entries
            let mut g = c.transpose() * beta_r;
            for (m, code) in a.columns().iter().enumerate() {
                let xm = x.column(m);
                for &(row, val) in code.entries() {
                    for col in 0..n {
                        g[(row, col)] += val * xm[col];
                    }
                }
            }
            let svd = g.svd(true, true);
            let u = svd.u.expect("svd requested u");
            let v_t = svd.v_t.expect("svd requested v_t");
            let r = v_t.transpose() * u.transpose();
            Ok(Decoder {
                r,
                mode,
                beta_r,
                beta,
            })
        }
    }
}

/// Ridge decoder from the transform alone: no codebook or training data
/// required, so any party holding the public transform can build it.
pub fn ridge_decoder(w: &DMatrix<f64>, beta: f64) -> Result<Decoder> {
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::InvalidParameter {
            name: "beta",
            reason: format!("must be nonnegative and finite, got {beta}"),
        });
    }
    Ok(Decoder {
        r: ridge_inverse(w, beta)?,
        mode: DecoderMode::Ridge,
        beta_r: 0.0,
        beta,
    })
}

/// Linear reconstruction `R a` of a code.
pub fn decode(d: &Decoder, code: &SparseCode) -> Result<DVector<f64>> {
    if code.code_len() != d.code_len() {
        return Err(Error::DimensionMismatch {
            context: "decode code length",
            expected: d.code_len(),
            got: code.code_len(),
        });
    }
    let mut out = DVector::zeros(d.n_dims());
    for &(l, v) in code.entries() {
        out.axpy(v, &d.r.column(l), 1.0);
    }
    Ok(out)
}

/// Restricts an ambiguated code to a trusted support. Entries whose index
/// is outside `key_support` are dropped; surviving entries keep their exact
/// stored values, so purifying a code with the support it was built from
/// reproduces the original bit for bit.
pub fn purify(p: &AmbiguatedCode, key_support: &[usize]) -> SparseCode {
    let mut key: Vec<usize> = key_support.to_vec();
    key.sort_unstable();
    key.dedup();
    let entries: Vec<(usize, f64)> = p
        .code()
        .entries()
        .iter()
        .filter(|&&(i, _)| key.binary_search(&i).is_ok())
        .copied()
        .collect();
    SparseCode {
        code_len: p.code().code_len(),
        entries,
    }
}

/// Least-squares scalar `alpha` minimizing `||x - alpha * xhat||`; zero when
/// `xhat` is the zero vector. Useful as an opt-in evaluation rescale for
/// sign-only codes.
pub fn least_squares_scale(xhat: &DVector<f64>, x: &DVector<f64>) -> f64 {
    let denom = xhat.norm_squared();
    if denom == 0.0 {
        0.0
    } else {
        xhat.dot(x) / denom
    }
}
