//! Penalty grids, the theoretical tuning rule, and K-fold cross-validation.
//!
//! Grids are logarithmically spaced over three decades: the first-stage
//! penalty from `‖X^T y‖_∞/n` down to a thousandth of it, the second-stage
//! penalty from `n` down to `10⁻³ n`. Cross-validation searches the grid an
//! estimator strategy declares, re-normalizing the training rows of every
//! fold so the solver's normalization contract keeps holding on subsets.

use ndarray::{Array2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::Estimator;
use crate::lasso::LassoSettings;
use crate::linalg::{inf_norm, normalize_columns_scaled, DesignMatrix};
use crate::rng::Rng;

/// A search grid. `lambda_r_values` is empty for single-parameter searches.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub lambda_l_values: Vec<f64>,
    pub lambda_r_values: Vec<f64>,
}

impl Grid {
    pub fn validate(&self) -> Result<()> {
        validate_descending("lambda_l", &self.lambda_l_values)?;
        if !self.lambda_r_values.is_empty() {
            validate_descending("lambda_r", &self.lambda_r_values)?;
        }
        Ok(())
    }

    /// Number of λ_R slots per λ_L value (1 when the second axis is absent).
    pub fn r_len(&self) -> usize {
        self.lambda_r_values.len().max(1)
    }

    pub fn n_cells(&self) -> usize {
        self.lambda_l_values.len() * self.r_len()
    }
}

fn validate_descending(name: &str, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::InvalidGrid(format!("{name} grid is empty")));
    }
    if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidGrid(format!(
            "{name} grid must be strictly positive"
        )));
    }
    for w in values.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::InvalidGrid(format!(
                "{name} grid must be strictly decreasing: {} then {}",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

fn log_spaced_descending(max: f64, min: f64, count: usize) -> Vec<f64> {
    let log_max = max.ln();
    let log_min = min.ln();
    (0..count)
        .map(|i| {
            let t = i as f64 / (count - 1) as f64;
            (log_max + t * (log_min - log_max)).exp()
        })
        .collect()
}

/// First-stage grid: `count` log-spaced values from `‖X^T y‖_∞/n` down to
/// `10⁻³ ‖X^T y‖_∞/n`, inclusive, descending.
pub fn lambda_l_grid(x: &DesignMatrix, y: &[f64], count: usize) -> Result<Vec<f64>> {
    if count < 2 {
        return Err(Error::InvalidParameter(format!(
            "grid count must be at least 2, got {count}"
        )));
    }
    let lambda_max = inf_norm(&x.correlations(y)?);
    if lambda_max == 0.0 {
        return Err(Error::DegenerateGrid);
    }
    Ok(log_spaced_descending(lambda_max, 1e-3 * lambda_max, count))
}

/// Second-stage grid: `count` log-spaced values from `n` down to `10⁻³ n`.
pub fn lambda_r_grid(n: usize, count: usize) -> Result<Vec<f64>> {
    if count < 2 {
        return Err(Error::InvalidParameter(format!(
            "grid count must be at least 2, got {count}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    let n_f = n as f64;
    Ok(log_spaced_descending(n_f, 1e-3 * n_f, count))
}

/// Theoretical first-stage penalty `3σ√(2 log(2p/α)/n)`.
pub fn theoretical_lambda_l(sigma: f64, n: usize, p: usize, alpha: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sigma must be strictly positive, got {sigma}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    if n == 0 || p == 0 {
        return Err(Error::InvalidParameter("n and p must be positive".into()));
    }
    Ok(3.0 * sigma * (2.0 * (2.0 * p as f64 / alpha).ln() / n as f64).sqrt())
}

/// Picks one cell among minimizers: the largest λ_L, then the largest λ_R —
/// the most-regularized model. Cells are `(lambda_l index, lambda_r index)`
/// into descending grids, so this is the lexicographic minimum.
pub fn tie_break(minimizers: &[(usize, usize)]) -> (usize, usize) {
    assert!(!minimizers.is_empty(), "tie_break requires candidates");
    *minimizers
        .iter()
        .min_by_key(|(il, ir)| (*il, *ir))
        .expect("nonempty")
}

/// Cross-validation outcome: the selected penalties, the full error surface,
/// the fold assignment used, and the final full-data fit.
#[derive(Clone, Debug)]
pub struct CvResult {
    pub best_lambda_l: f64,
    /// Present only for two-parameter estimators.
    pub best_lambda_r: Option<f64>,
    /// Mean validation MSE, indexed `[lambda_l index, lambda_r index]`
    /// (a single column when the estimator has no second parameter).
    pub cv_error_surface: Array2<f64>,
    /// Fold id per observation.
    pub fold_assignment: Vec<usize>,
    /// Cells whose fold fit did not converge: `(fold, lambda_l idx, lambda_r idx)`.
    /// Their validation error is still recorded.
    pub non_converged: Vec<(usize, usize, usize)>,
    /// Coefficients of the final model, refit on the full data at the
    /// selected penalties (in the coordinates of the design passed in).
    pub final_beta: Vec<f64>,
    pub final_converged: bool,
}

/// K-fold cross-validation of an estimator strategy over its grid.
///
/// Folds come from a seeded shuffled partition with sizes differing by at
/// most one. Each fold's training rows are re-normalized on their own
/// column norms; validation predictions are mapped back to the coordinates
/// of the input design, so no fold statistics leak into validation rows.
/// Fold evaluation runs in parallel; the surface is aggregated by cell
/// index, never by completion order.
pub fn cross_validate(
    x: &DesignMatrix,
    y: &[f64],
    grid: &Grid,
    folds: usize,
    rng: &mut Rng,
    estimator: &dyn Estimator,
    settings: &LassoSettings,
) -> Result<CvResult> {
    grid.validate()?;
    let n = x.n();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            context: "response length".into(),
            expected: n,
            actual: y.len(),
        });
    }
    if folds < 2 {
        return Err(Error::InvalidParameter(format!(
            "folds must be at least 2, got {folds}"
        )));
    }
    if n < folds {
        return Err(Error::InvalidParameter(format!(
            "need at least as many observations as folds ({n} < {folds})"
        )));
    }
    if estimator.uses_lambda_r() != !grid.lambda_r_values.is_empty() {
        return Err(Error::InvalidGrid(format!(
            "estimator {:?} and grid disagree about the second parameter",
            estimator.name()
        )));
    }

    // Seeded shuffled partition; observation perm[i] goes to fold i mod k.
    let mut perm: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut perm);
    let mut fold_assignment = vec![0usize; n];
    for (i, &obs) in perm.iter().enumerate() {
        fold_assignment[obs] = i % folds;
    }

    let per_fold: Vec<Result<(Vec<f64>, Vec<bool>)>> = (0..folds)
        .into_par_iter()
        .map(|fold| evaluate_fold(x, y, grid, &fold_assignment, fold, estimator, settings))
        .collect();

    let len_l = grid.lambda_l_values.len();
    let len_r = grid.r_len();
    let mut surface = Array2::<f64>::zeros((len_l, len_r));
    let mut non_converged = Vec::new();
    for (fold, outcome) in per_fold.into_iter().enumerate() {
        let (mses, converged) = outcome?;
        for il in 0..len_l {
            for ir in 0..len_r {
                let cell = il * len_r + ir;
                surface[[il, ir]] += mses[cell];
                if !converged[cell] {
                    non_converged.push((fold, il, ir));
                }
            }
        }
    }
    surface.mapv_inplace(|v| v / folds as f64);

    let min_value = surface.iter().copied().fold(f64::INFINITY, f64::min);
    if !min_value.is_finite() {
        return Err(Error::NonFinite {
            context: "cross-validation error surface".into(),
        });
    }
    let minimizers: Vec<(usize, usize)> = surface
        .indexed_iter()
        .filter(|(_, v)| **v == min_value)
        .map(|((il, ir), _)| (il, ir))
        .collect();
    let (best_il, best_ir) = tie_break(&minimizers);
    let best_lambda_l = grid.lambda_l_values[best_il];
    let best_lambda_r = if grid.lambda_r_values.is_empty() {
        None
    } else {
        Some(grid.lambda_r_values[best_ir])
    };

    let final_fit = estimator.fit_at(x, y, best_lambda_l, best_lambda_r, settings)?;

    Ok(CvResult {
        best_lambda_l,
        best_lambda_r,
        cv_error_surface: surface,
        fold_assignment,
        non_converged,
        final_beta: final_fit.beta,
        final_converged: final_fit.converged,
    })
}

fn evaluate_fold(
    x: &DesignMatrix,
    y: &[f64],
    grid: &Grid,
    fold_assignment: &[usize],
    fold: usize,
    estimator: &dyn Estimator,
    settings: &LassoSettings,
) -> Result<(Vec<f64>, Vec<bool>)> {
    let train_rows: Vec<usize> = (0..x.n()).filter(|i| fold_assignment[*i] != fold).collect();
    let val_rows: Vec<usize> = (0..x.n()).filter(|i| fold_assignment[*i] == fold).collect();
    if val_rows.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "fold {fold} has no validation rows"
        )));
    }

    let x_train_raw = x.values().select(Axis(0), &train_rows);
    let (x_train, scales) = normalize_columns_scaled(&x_train_raw)?;
    let y_train: Vec<f64> = train_rows.iter().map(|&i| y[i]).collect();

    let cells = estimator.fit_cells(&x_train, &y_train, grid, settings)?;

    let mut mses = Vec::with_capacity(cells.len());
    let mut converged = Vec::with_capacity(cells.len());
    for cell in &cells {
        // Map back to the coordinates of the full design before predicting.
        let beta_orig: Vec<f64> = cell.beta.iter().zip(&scales).map(|(b, c)| b * c).collect();
        let mut sse = 0.0;
        for &i in &val_rows {
            let pred: f64 = x
                .values()
                .row(i)
                .iter()
                .zip(&beta_orig)
                .map(|(v, b)| v * b)
                .sum();
            let diff = y[i] - pred;
            sse += diff * diff;
        }
        mses.push(sse / val_rows.len() as f64);
        converged.push(cell.converged);
    }
    Ok((mses, converged))
}
