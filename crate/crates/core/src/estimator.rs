//! Estimator strategies behind a common trait, registered by name.
//!
//! The benchmark compares interchangeable estimators — plain Lasso and the
//! ridge-refitted Lasso — under one cross-validation protocol. Each variant
//! implements [`Estimator`]: it declares its own search grid and knows how
//! to fit every grid cell. The CLI and the simulation engine select
//! strategies at runtime via [`create`].

use crate::error::{Error, Result};
use crate::lasso::{fit_lasso, lasso_path, LassoSettings};
use crate::linalg::DesignMatrix;
use crate::refit::{refit_closed_form, RefitBasis};
use crate::tuning::{lambda_l_grid, lambda_r_grid, Grid};

/// Default size of the first-stage penalty grid.
pub const DEFAULT_LAMBDA_L_COUNT: usize = 20;
/// Default size of the second-stage penalty grid.
pub const DEFAULT_LAMBDA_R_COUNT: usize = 10;

/// Coefficients fitted at one grid cell.
#[derive(Clone, Debug)]
pub struct CellFit {
    pub beta: Vec<f64>,
    pub converged: bool,
}

/// One estimator variant: grid construction plus fitting, in the coordinate
/// system of whatever (normalized) design it is handed.
pub trait Estimator: Send + Sync {
    /// Registry name, e.g. `"lasso"`.
    fn name(&self) -> &'static str;

    /// Whether the strategy searches a second penalty.
    fn uses_lambda_r(&self) -> bool;

    /// Builds the search grid from the full training data.
    fn build_grid(&self, x: &DesignMatrix, y: &[f64]) -> Result<Grid>;

    /// Fits every grid cell on `(x, y)`. Cells are laid out λ_L-major:
    /// `cell = il * grid.r_len() + ir`.
    fn fit_cells(
        &self,
        x: &DesignMatrix,
        y: &[f64],
        grid: &Grid,
        settings: &LassoSettings,
    ) -> Result<Vec<CellFit>>;

    /// Fits at a single selected cell (used for the final full-data model).
    fn fit_at(
        &self,
        x: &DesignMatrix,
        y: &[f64],
        lambda_l: f64,
        lambda_r: Option<f64>,
        settings: &LassoSettings,
    ) -> Result<CellFit>;
}

/// Plain Lasso, tuned over the first-stage grid only.
#[derive(Clone, Debug)]
pub struct LassoEstimator {
    pub lambda_l_count: usize,
}

impl Default for LassoEstimator {
    fn default() -> Self {
        LassoEstimator {
            lambda_l_count: DEFAULT_LAMBDA_L_COUNT,
        }
    }
}

impl Estimator for LassoEstimator {
    fn name(&self) -> &'static str {
        "lasso"
    }

    fn uses_lambda_r(&self) -> bool {
        false
    }

    fn build_grid(&self, x: &DesignMatrix, y: &[f64]) -> Result<Grid> {
        Ok(Grid {
            lambda_l_values: lambda_l_grid(x, y, self.lambda_l_count)?,
            lambda_r_values: Vec::new(),
        })
    }

    fn fit_cells(
        &self,
        x: &DesignMatrix,
        y: &[f64],
        grid: &Grid,
        settings: &LassoSettings,
    ) -> Result<Vec<CellFit>> {
        let fits = lasso_path(x, y, &grid.lambda_l_values, settings)?;
        Ok(fits
            .into_iter()
            .map(|f| CellFit {
                beta: f.beta,
                converged: f.converged,
            })
            .collect())
    }

    fn fit_at(
        &self,
        x: &DesignMatrix,
        y: &[f64],
        lambda_l: f64,
        _lambda_r: Option<f64>,
        settings: &LassoSettings,
    ) -> Result<CellFit> {
        let fit = fit_lasso(x, y, lambda_l, settings)?;
        Ok(CellFit {
            beta: fit.beta,
            converged: fit.converged,
        })
    }
}

/// Lasso followed by a ridge correction on the equicorrelation set, tuned
/// over the joint (λ_L, λ_R) grid. Unsafe λ_R cells are still evaluated —
/// cross-validation is free to pick them — the safety flag only affects the
/// theoretical certificates.
#[derive(Clone, Debug)]
pub struct LassoRidgeEstimator {
    pub lambda_l_count: usize,
    pub lambda_r_count: usize,
}

impl Default for LassoRidgeEstimator {
    fn default() -> Self {
        LassoRidgeEstimator {
            lambda_l_count: DEFAULT_LAMBDA_L_COUNT,
            lambda_r_count: DEFAULT_LAMBDA_R_COUNT,
        }
    }
}

impl Estimator for LassoRidgeEstimator {
    fn name(&self) -> &'static str {
        "lasso-ridge"
    }

    fn uses_lambda_r(&self) -> bool {
        true
    }

    fn build_grid(&self, x: &DesignMatrix, y: &[f64]) -> Result<Grid> {
        Ok(Grid {
            lambda_l_values: lambda_l_grid(x, y, self.lambda_l_count)?,
            lambda_r_values: lambda_r_grid(x.n(), self.lambda_r_count)?,
        })
    }

    fn fit_cells(
        &self,
        x: &DesignMatrix,
        y: &[f64],
        grid: &Grid,
        settings: &LassoSettings,
    ) -> Result<Vec<CellFit>> {
        let fits = lasso_path(x, y, &grid.lambda_l_values, settings)?;
        let mut cells = Vec::with_capacity(grid.n_cells());
        for fit in &fits {
            // One restricted Gram per fit covers the whole lambda_r column.
            let basis = RefitBasis::new(x, fit)?;
            for &lambda_r in &grid.lambda_r_values {
                let refit = basis.refit(fit, lambda_r)?;
                cells.push(CellFit {
                    beta: refit.beta_r,
                    converged: fit.converged,
                });
            }
        }
        Ok(cells)
    }

    fn fit_at(
        &self,
        x: &DesignMatrix,
        y: &[f64],
        lambda_l: f64,
        lambda_r: Option<f64>,
        settings: &LassoSettings,
    ) -> Result<CellFit> {
        let lambda_r = lambda_r.ok_or_else(|| {
            Error::InvalidParameter("lasso-ridge requires a lambda_r value".into())
        })?;
        let fit = fit_lasso(x, y, lambda_l, settings)?;
        let refit = refit_closed_form(x, &fit, lambda_r)?;
        Ok(CellFit {
            beta: refit.beta_r,
            converged: fit.converged,
        })
    }
}

type Constructor = fn() -> Box<dyn Estimator>;

/// Name → constructor table for every registered strategy.
pub static REGISTRY: &[(&str, Constructor)] = &[
    ("lasso", || Box::new(LassoEstimator::default())),
    ("lasso-ridge", || Box::new(LassoRidgeEstimator::default())),
];

/// Registered strategy names, in registry order.
pub fn names() -> Vec<&'static str> {
    REGISTRY.iter().map(|(name, _)| *name).collect()
}

/// Instantiates a strategy by registry name.
pub fn create(name: &str) -> Result<Box<dyn Estimator>> {
    REGISTRY
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, make)| make())
        .ok_or_else(|| Error::UnknownEstimator(name.to_string()))
}
