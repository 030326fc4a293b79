//! Numeric foundations: the design matrix container, column normalization,
//! matrix norms, restricted Gram matrices, and a small dense SPD solver.
//!
//! Everything here is dense `f64`; the problem sizes this crate targets
//! (p up to a few thousand) do not warrant sparse formats.

use ndarray::{Array2, ArrayView1, ShapeBuilder};

use crate::error::{Error, Result};

/// Relative tolerance on squared column norms for the `normalized` invariant.
pub const NORMALIZATION_TOL: f64 = 1e-8;

/// Absolute entrywise tolerance when checking symmetry.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Column-normalized n x p predictor matrix.
///
/// When `normalized` is true every column satisfies `|‖X_j‖² − n| ≤ 1e-8·n`,
/// which the fitting routines rely on. Construct via [`normalize_columns`]
/// (or [`DesignMatrix::from_raw`] for an unnormalized matrix).
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix {
    values: Array2<f64>,
    normalized: bool,
}

impl DesignMatrix {
    /// Wraps a raw matrix without normalizing. Rejects empty or non-finite
    /// input. Storage is column-major: every hot kernel walks columns.
    pub fn from_raw(values: Array2<f64>) -> Result<Self> {
        validate_matrix(&values, "design matrix")?;
        Ok(DesignMatrix {
            values: to_column_major(&values),
            normalized: false,
        })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.values.column(j)
    }

    /// `X β` for a coefficient vector of length p.
    pub fn multiply(&self, beta: &[f64]) -> Result<Vec<f64>> {
        if beta.len() != self.p() {
            return Err(Error::DimensionMismatch {
                context: "X * beta".into(),
                expected: self.p(),
                actual: beta.len(),
            });
        }
        let mut out = vec![0.0; self.n()];
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                axpy_view(&mut out, b, self.values.column(j));
            }
        }
        Ok(out)
    }

    /// `X^T v / n` for a vector of length n: the correlation vector used by
    /// the KKT conditions.
    pub fn correlations(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n() {
            return Err(Error::DimensionMismatch {
                context: "X^T v".into(),
                expected: self.n(),
                actual: v.len(),
            });
        }
        let n = self.n() as f64;
        Ok((0..self.p())
            .map(|j| dot_view(self.values.column(j), v) / n)
            .collect())
    }
}

/// Linear model truth: coefficient vector and noise standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct TrueModel {
    pub beta0: Vec<f64>,
    pub sigma: f64,
}

impl TrueModel {
    pub fn new(beta0: Vec<f64>, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise standard deviation must be >= 0, got {sigma}"
            )));
        }
        if beta0.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite {
                context: "beta0".into(),
            });
        }
        Ok(TrueModel { beta0, sigma })
    }
}

fn validate_matrix(a: &Array2<f64>, context: &str) -> Result<()> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::InvalidParameter(format!(
            "{context} must have at least one row and one column"
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: context.into(),
        });
    }
    Ok(())
}

/// Scales each column to squared norm n. Returns the normalized design and
/// the per-column scale factors `√n / ‖X_j‖₂` (needed to map coefficients
/// back to the raw column scale).
pub fn normalize_columns_scaled(raw: &Array2<f64>) -> Result<(DesignMatrix, Vec<f64>)> {
    validate_matrix(raw, "design matrix")?;
    let n = raw.nrows() as f64;
    let mut values = Array2::<f64>::zeros(raw.raw_dim().f());
    let mut scales = Vec::with_capacity(raw.ncols());
    for j in 0..raw.ncols() {
        let sq: f64 = raw.column(j).iter().map(|v| v * v).sum();
        if sq == 0.0 {
            return Err(Error::ZeroNormColumn { column: j + 1 });
        }
        let scale = (n / sq).sqrt();
        scales.push(scale);
        values
            .column_mut(j)
            .iter_mut()
            .zip(raw.column(j))
            .for_each(|(out, &v)| *out = v * scale);
    }
    Ok((
        DesignMatrix {
            values,
            normalized: true,
        },
        scales,
    ))
}

fn to_column_major(a: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros(a.raw_dim().f());
    out.assign(a);
    out
}

/// Scales each column of a raw matrix so that `‖X_j‖₂² = n`.
pub fn normalize_columns(raw: &Array2<f64>) -> Result<DesignMatrix> {
    normalize_columns_scaled(raw).map(|(x, _)| x)
}

/// Maximum absolute row sum. Returns 0 for a 0x0 matrix.
pub fn infinity_operator_norm(a: &Array2<f64>) -> Result<f64> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "infinity operator norm input".into(),
        });
    }
    Ok(a.rows()
        .into_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max))
}

/// Largest absolute eigenvalue of a symmetric matrix, by power iteration with
/// a fixed-seed start vector. Relative tolerance 1e-10, iteration cap 10000.
pub fn spectral_norm(a: &Array2<f64>) -> Result<f64> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "spectral norm input".into(),
        });
    }
    let k = a.nrows();
    if k != a.ncols() {
        return Err(Error::DimensionMismatch {
            context: "spectral norm requires a square matrix".into(),
            expected: k,
            actual: a.ncols(),
        });
    }
    for i in 0..k {
        for j in (i + 1)..k {
            let dev = (a[[i, j]] - a[[j, i]]).abs();
            if dev > SYMMETRY_TOL {
                return Err(Error::NotSymmetric {
                    row: i,
                    col: j,
                    deviation: dev,
                });
            }
        }
    }
    if k == 0 {
        return Ok(0.0);
    }

    const MAX_ITER: usize = 10_000;
    const REL_TOL: f64 = 1e-10;

    // Fixed-seed start vector keeps the result deterministic.
    let mut rng = crate::rng::Rng::new(0x9e37_79b9_7f4a_7c15, 0);
    let mut x: Vec<f64> = (0..k).map(|_| rng.normal(1.0)).collect();
    let norm = l2_norm(&x);
    for v in &mut x {
        *v /= norm;
    }

    // The norm-ratio estimate ‖Ax‖/‖x‖ converges to |λ_max| even when the
    // extreme eigenvalues come in a ±λ pair, where the Rayleigh quotient
    // would oscillate.
    let mut estimate = 0.0;
    for iter in 0..MAX_ITER {
        let ax = mat_vec(a, &x);
        let ax_norm = l2_norm(&ax);
        if ax_norm == 0.0 {
            // x is (numerically) in the nullspace; with a random start this
            // means A is the zero matrix.
            return Ok(0.0);
        }
        let prev = estimate;
        estimate = ax_norm;
        x = ax;
        for v in &mut x {
            *v /= ax_norm;
        }
        if iter > 0 && (estimate - prev).abs() <= REL_TOL * estimate.max(f64::MIN_POSITIVE) {
            return Ok(estimate);
        }
    }
    Err(Error::PowerIterationNoConvergence {
        iterations: MAX_ITER,
        last_estimate: estimate,
    })
}

/// Restricted Gram matrix `X_E^T X_E / n` over the (0-based) index set `E`.
/// Returns the 0x0 matrix for an empty set.
pub fn restricted_gram(x: &DesignMatrix, e: &[usize]) -> Result<Array2<f64>> {
    for &j in e {
        if j >= x.p() {
            return Err(Error::IndexOutOfRange {
                index: j,
                size: x.p(),
                context: "restricted Gram column set".into(),
            });
        }
    }
    let k = e.len();
    let n = x.n() as f64;
    let mut g = Array2::<f64>::zeros((k, k));
    for a in 0..k {
        for b in a..k {
            let v = dot_views(x.column(e[a]), x.column(e[b])) / n;
            g[[a, b]] = v;
            g[[b, a]] = v;
        }
    }
    Ok(g)
}

/// Solves `A v = b` for symmetric positive definite `A` by Cholesky
/// factorization. `ridge` is reported in the error diagnostics when the
/// factorization breaks down.
pub fn spd_solve(a: &Array2<f64>, b: &[f64], ridge: f64) -> Result<Vec<f64>> {
    let k = a.nrows();
    if a.ncols() != k {
        return Err(Error::DimensionMismatch {
            context: "SPD solve requires a square matrix".into(),
            expected: k,
            actual: a.ncols(),
        });
    }
    if b.len() != k {
        return Err(Error::DimensionMismatch {
            context: "SPD solve right-hand side".into(),
            expected: k,
            actual: b.len(),
        });
    }
    if k == 0 {
        return Ok(Vec::new());
    }

    // Lower-triangular Cholesky factor, in place.
    let mut l = a.clone();
    for i in 0..k {
        for j in 0..=i {
            let mut sum = l[[i, j]];
            for m in 0..j {
                sum -= l[[i, m]] * l[[j, m]];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::FactorizationFailure {
                        row: i,
                        pivot: sum,
                        dim: k,
                        ridge,
                    });
                }
                l[[i, j]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }

    // Forward then backward substitution.
    let mut v = b.to_vec();
    for i in 0..k {
        let mut sum = v[i];
        for m in 0..i {
            sum -= l[[i, m]] * v[m];
        }
        v[i] = sum / l[[i, i]];
    }
    for i in (0..k).rev() {
        let mut sum = v[i];
        for m in (i + 1)..k {
            sum -= l[[m, i]] * v[m];
        }
        v[i] = sum / l[[i, i]];
    }
    Ok(v)
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn l1_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dot product of a (typically contiguous) column view against a slice.
pub(crate) fn dot_view(a: ArrayView1<'_, f64>, b: &[f64]) -> f64 {
    match a.as_slice() {
        Some(s) => dot(s, b),
        None => a.iter().zip(b).map(|(x, y)| x * y).sum(),
    }
}

pub(crate) fn dot_views(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    match (a.as_slice(), b.as_slice()) {
        (Some(x), Some(y)) => dot(x, y),
        _ => a.iter().zip(b.iter()).map(|(x, y)| x * y).sum(),
    }
}

/// `out += c * column`, with a contiguous fast path.
pub(crate) fn axpy_view(out: &mut [f64], c: f64, column: ArrayView1<'_, f64>) {
    match column.as_slice() {
        Some(s) => {
            for (o, &v) in out.iter_mut().zip(s) {
                *o += c * v;
            }
        }
        None => {
            for (o, &v) in out.iter_mut().zip(column) {
                *o += c * v;
            }
        }
    }
}

fn mat_vec(a: &Array2<f64>, x: &[f64]) -> Vec<f64> {
    a.rows()
        .into_iter()
        .map(|row| row.iter().zip(x).map(|(v, y)| v * y).sum())
        .collect()
}
