//! Cyclic coordinate-descent Lasso solver with a KKT optimality certificate.
//!
//! The solver minimizes `(1/2n)‖y − Xβ‖² + λ‖β‖₁` on a column-normalized
//! design. Beyond the coefficients it reports the equicorrelation set `E`
//! (the indices whose absolute correlation with the residual attains λ, up
//! to the KKT tolerance), the equicorrelation signs, and the largest KKT
//! violation — the certificate that downstream refitting relies on.

use crate::error::{Error, Result};
use crate::linalg::{dot_view, DesignMatrix};

/// Solver tolerances. Defaults are chosen at double-precision comfort level.
#[derive(Clone, Debug)]
pub struct LassoSettings {
    /// Cap on full coordinate sweeps.
    pub max_iterations: usize,
    /// Sweep stopping rule: largest coefficient change in one sweep.
    pub coordinate_tolerance: f64,
    /// Absolute tolerance on `| |X_j^T r|/n − λ |` for the KKT certificate
    /// and for equicorrelation membership.
    pub kkt_tolerance: f64,
    /// Coefficients below this magnitude count as zero when reporting the
    /// numeric support.
    pub active_set_tolerance: f64,
}

impl Default for LassoSettings {
    fn default() -> Self {
        LassoSettings {
            max_iterations: 100_000,
            coordinate_tolerance: 1e-10,
            kkt_tolerance: 1e-7,
            active_set_tolerance: 1e-9,
        }
    }
}

impl LassoSettings {
    fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter(
                "max_iterations must be positive".into(),
            ));
        }
        for (name, v) in [
            ("coordinate_tolerance", self.coordinate_tolerance),
            ("kkt_tolerance", self.kkt_tolerance),
            ("active_set_tolerance", self.active_set_tolerance),
        ] {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// A Lasso solution together with its optimality certificate.
#[derive(Clone, Debug)]
pub struct LassoFit {
    pub beta: Vec<f64>,
    pub lambda: f64,
    /// Equicorrelation set E, ordered ascending, 0-based. Defined by the KKT
    /// equality within tolerance, not by nonzeroness of `beta`.
    pub active_set: Vec<usize>,
    /// Equicorrelation signs, aligned with `active_set`; entries are ±1.
    pub signs: Vec<f64>,
    /// `y − Xβ`, recomputed exactly from the final coefficients.
    pub residual: Vec<f64>,
    /// Largest violation of the KKT conditions at the returned solution.
    pub kkt_slack: f64,
    /// Full coordinate sweeps performed.
    pub iterations: usize,
    /// True iff both the sweep tolerance and the KKT tolerance were met.
    pub converged: bool,
}

impl LassoFit {
    /// Indices with `|beta_j|` above the active-set tolerance.
    pub fn numeric_support(&self, settings: &LassoSettings) -> Vec<usize> {
        self.beta
            .iter()
            .enumerate()
            .filter(|(_, b)| b.abs() > settings.active_set_tolerance)
            .map(|(j, _)| j)
            .collect()
    }

    /// Numerically-nonzero coefficients that the KKT rule did not place in E.
    /// Empty for converged fits; reported rather than silently reconciled.
    pub fn support_disagreement(&self, settings: &LassoSettings) -> Vec<usize> {
        self.numeric_support(settings)
            .into_iter()
            .filter(|j| !self.active_set.contains(j))
            .collect()
    }
}

/// `sign(z) · max(|z| − t, 0)`.
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// `(1/2n)‖y − Xβ‖² + λ‖β‖₁`.
pub fn lasso_objective(x: &DesignMatrix, y: &[f64], beta: &[f64], lambda: f64) -> Result<f64> {
    let fitted = x.multiply(beta)?;
    let n = x.n() as f64;
    let rss: f64 = y
        .iter()
        .zip(&fitted)
        .map(|(yi, fi)| (yi - fi) * (yi - fi))
        .sum();
    Ok(rss / (2.0 * n) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>())
}

/// Fits the Lasso at a single penalty by cyclic coordinate descent.
pub fn fit_lasso(
    x: &DesignMatrix,
    y: &[f64],
    lambda: f64,
    settings: &LassoSettings,
) -> Result<LassoFit> {
    fit_lasso_warm(x, y, lambda, settings, None)
}

/// Like [`fit_lasso`] but optionally warm-started from a previous solution.
pub fn fit_lasso_warm(
    x: &DesignMatrix,
    y: &[f64],
    lambda: f64,
    settings: &LassoSettings,
    warm: Option<&[f64]>,
) -> Result<LassoFit> {
    settings.validate()?;
    if !x.is_normalized() {
        return Err(Error::NotNormalized);
    }
    if y.len() != x.n() {
        return Err(Error::DimensionMismatch {
            context: "response length".into(),
            expected: x.n(),
            actual: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "response vector".into(),
        });
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "lambda must be strictly positive, got {lambda}"
        )));
    }

    let n = x.n();
    let p = x.p();
    let n_f = n as f64;

    let mut beta = match warm {
        Some(w) => {
            if w.len() != p {
                return Err(Error::DimensionMismatch {
                    context: "warm start length".into(),
                    expected: p,
                    actual: w.len(),
                });
            }
            w.to_vec()
        }
        None => vec![0.0; p],
    };

    // Diagonal of the Gram matrix; ≈1 on a normalized design but used
    // exactly so the coordinate minimizer is exact.
    let col_sq: Vec<f64> = (0..p)
        .map(|j| x.column(j).iter().map(|v| v * v).sum::<f64>() / n_f)
        .collect();

    let mut residual = compute_residual(x, y, &beta);
    let mut iterations = 0;
    let mut converged = false;

    #[cfg(debug_assertions)]
    let mut prev_objective = f64::INFINITY;

    // One coordinate update; returns |change|.
    let sweep = |indices: &mut dyn Iterator<Item = usize>,
                     beta: &mut [f64],
                     residual: &mut [f64]|
     -> f64 {
        let mut max_delta: f64 = 0.0;
        for j in indices {
            let col = x.column(j);
            let old = beta[j];
            let rho = dot_view(col, residual) / n_f + col_sq[j] * old;
            let new = soft_threshold(rho, lambda) / col_sq[j];
            if new != old {
                crate::linalg::axpy_view(residual, old - new, col);
                beta[j] = new;
                max_delta = max_delta.max((new - old).abs());
            }
        }
        max_delta
    };

    // Full sweeps establish global optimality; in between, restricted sweeps
    // over the current support do the bulk of the work at O(n·|support|).
    while iterations < settings.max_iterations {
        let max_delta = sweep(&mut (0..p), &mut beta, &mut residual);
        iterations += 1;

        #[cfg(debug_assertions)]
        {
            // Coordinate descent never increases the objective; a violation
            // here means the incremental residual has gone wrong.
            let obj = residual.iter().map(|r| r * r).sum::<f64>() / (2.0 * n_f)
                + lambda * beta.iter().map(|b| b.abs()).sum::<f64>();
            debug_assert!(
                obj <= prev_objective + 1e-10 * (1.0 + prev_objective.abs()),
                "objective increased across sweep: {prev_objective} -> {obj}"
            );
            prev_objective = obj;
        }

        if max_delta <= settings.coordinate_tolerance {
            // Refresh the residual before certifying; incremental updates
            // drift over many sweeps.
            residual = compute_residual(x, y, &beta);
            let slack = kkt_slack(x, &beta, &residual, lambda);
            if slack <= settings.kkt_tolerance {
                converged = true;
                break;
            }
            continue;
        }

        let support: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
        if support.len() == p {
            continue;
        }
        while iterations < settings.max_iterations {
            let delta = sweep(&mut support.iter().copied(), &mut beta, &mut residual);
            iterations += 1;
            if delta <= settings.coordinate_tolerance {
                break;
            }
        }
    }

    residual = compute_residual(x, y, &beta);
    let slack = kkt_slack(x, &beta, &residual, lambda);
    let (active_set, signs) = equicorrelation_from_residual(x, &residual, lambda, settings);

    Ok(LassoFit {
        beta,
        lambda,
        active_set,
        signs,
        residual,
        kkt_slack: slack,
        iterations,
        converged: converged && slack <= settings.kkt_tolerance,
    })
}

/// Recomputes the equicorrelation set and signs from the residual of a fit.
///
/// This is the canonical definition of E: the indices whose absolute
/// correlation with the residual attains λ within the KKT tolerance. It
/// overrides the solver's incidental support, so a coefficient that
/// coordinate descent left at exactly zero on the equicorrelation boundary
/// is still reported as selected.
pub fn equicorrelation(fit: &LassoFit, x: &DesignMatrix, y: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let residual = compute_residual(x, y, &fit.beta);
    equicorrelation_from_residual(x, &residual, fit.lambda, &LassoSettings::default())
}

fn equicorrelation_from_residual(
    x: &DesignMatrix,
    residual: &[f64],
    lambda: f64,
    settings: &LassoSettings,
) -> (Vec<usize>, Vec<f64>) {
    let n_f = x.n() as f64;
    let mut active = Vec::new();
    let mut signs = Vec::new();
    for j in 0..x.p() {
        let corr = dot_view(x.column(j), residual) / n_f;
        if (corr.abs() - lambda).abs() <= settings.kkt_tolerance {
            active.push(j);
            signs.push(if corr < 0.0 { -1.0 } else { 1.0 });
        }
    }
    (active, signs)
}

/// Largest violation of the Lasso KKT conditions at `beta`:
/// active coordinates must have correlation exactly `λ·sign(β_j)`, inactive
/// ones at most λ in absolute value.
pub fn kkt_slack(x: &DesignMatrix, beta: &[f64], residual: &[f64], lambda: f64) -> f64 {
    let n_f = x.n() as f64;
    let mut worst: f64 = 0.0;
    for j in 0..x.p() {
        let corr = dot_view(x.column(j), residual) / n_f;
        let violation = if beta[j] != 0.0 {
            (corr - lambda * beta[j].signum()).abs()
        } else {
            (corr.abs() - lambda).max(0.0)
        };
        worst = worst.max(violation);
    }
    worst
}

/// Fits a strictly decreasing penalty grid, warm-starting each fit from the
/// previous solution.
pub fn lasso_path(
    x: &DesignMatrix,
    y: &[f64],
    lambdas: &[f64],
    settings: &LassoSettings,
) -> Result<Vec<LassoFit>> {
    if lambdas.is_empty() {
        return Err(Error::InvalidGrid("empty lambda grid".into()));
    }
    for w in lambdas.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::InvalidGrid(format!(
                "expected strictly decreasing values, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    let mut fits: Vec<LassoFit> = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let warm = fits.last().map(|f| f.beta.as_slice());
        fits.push(fit_lasso_warm(x, y, lambda, settings, warm)?);
    }
    Ok(fits)
}

pub(crate) fn compute_residual(x: &DesignMatrix, y: &[f64], beta: &[f64]) -> Vec<f64> {
    let fitted = x.multiply(beta).expect("dimensions checked by caller");
    y.iter().zip(&fitted).map(|(yi, fi)| yi - fi).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{normalize_columns, inf_norm};
    use crate::rng::{gaussian_vector, Rng};
    use ndarray::Array2;

    fn random_design(rng: &mut Rng, n: usize, p: usize) -> DesignMatrix {
        let raw = Array2::from_shape_fn((n, p), |_| rng.normal(1.0));
        normalize_columns(&raw).unwrap()
    }

    /// Orthogonal design with X^T X / n = I, built by Gram-Schmidt and
    /// rescaling columns to norm sqrt(n). Requires p <= n.
    fn orthogonal_design(rng: &mut Rng, n: usize, p: usize) -> DesignMatrix {
        assert!(p <= n);
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(p);
        while cols.len() < p {
            let mut v = gaussian_vector(rng, n, 1.0).unwrap();
            for u in &cols {
                let proj: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi -= proj * ui;
                }
            }
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-8 {
                continue;
            }
            for vi in &mut v {
                *vi /= norm;
            }
            cols.push(v);
        }
        let scale = (n as f64).sqrt();
        let raw = Array2::from_shape_fn((n, p), |(i, j)| cols[j][i] * scale);
        let x = DesignMatrix::from_raw(raw).unwrap();
        // columns already have squared norm n
        normalize_columns(x.values()).unwrap()
    }

    /// Subgradient-method reference solver: diminishing steps, best iterate
    /// kept. Slow but entirely independent of coordinate descent.
    fn subgradient_reference(
        x: &DesignMatrix,
        y: &[f64],
        lambda: f64,
        iterations: usize,
    ) -> (Vec<f64>, f64) {
        let n = x.n() as f64;
        let p = x.p();
        let mut beta = vec![0.0; p];
        let mut best = beta.clone();
        let mut best_obj = lasso_objective(x, y, &beta, lambda).unwrap();
        for t in 1..=iterations {
            let residual = compute_residual(x, y, &beta);
            let step = 0.5 / (t as f64).sqrt();
            for j in 0..p {
                let grad = -dot_view(x.column(j), &residual) / n
                    + lambda * if beta[j] > 0.0 {
                        1.0
                    } else if beta[j] < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                beta[j] -= step * grad;
            }
            let obj = lasso_objective(x, y, &beta, lambda).unwrap();
            if obj < best_obj {
                best_obj = obj;
                best = beta.clone();
            }
        }
        (best, best_obj)
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(5.0, 2.0), 3.0);
        assert_eq!(soft_threshold(-1.0, 2.0), 0.0);
        assert_eq!(soft_threshold(-5.0, 2.0), -3.0);
        assert_eq!(soft_threshold(0.0, 0.0), 0.0);
    }

    #[test]
    fn large_lambda_gives_zero_solution_with_empty_set() {
        let mut rng = Rng::new(31, 0);
        let x = random_design(&mut rng, 10, 4);
        let y = gaussian_vector(&mut rng, 10, 1.0).unwrap();
        let lambda_max = inf_norm(&x.correlations(&y).unwrap());
        // strictly above the threshold: at equality the argmax column is,
        // by definition, in the equicorrelation set
        let fit = fit_lasso(&x, &y, lambda_max * 1.1, &LassoSettings::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.beta.iter().all(|&b| b == 0.0));
        assert!(fit.active_set.is_empty());
        assert!(fit.signs.is_empty());

        // at the threshold itself the solution is still zero
        let fit_eq = fit_lasso(&x, &y, lambda_max, &LassoSettings::default()).unwrap();
        assert!(fit_eq.beta.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn orthogonal_design_matches_soft_thresholding_closed_form() {
        let mut rng = Rng::new(5, 0);
        for trial in 0..5 {
            let n = 16;
            let p = 8;
            let x = orthogonal_design(&mut rng, n, p);
            let y = gaussian_vector(&mut rng, n, 2.0).unwrap();
            let corr = x.correlations(&y).unwrap();
            let lambda = 0.1 + 0.2 * trial as f64;
            let fit = fit_lasso(&x, &y, lambda, &LassoSettings::default()).unwrap();
            assert!(fit.converged);
            for j in 0..p {
                let expected = soft_threshold(corr[j], lambda);
                assert!(
                    (fit.beta[j] - expected).abs() <= 1e-9,
                    "trial {trial} coord {j}: {} vs {}",
                    fit.beta[j],
                    expected
                );
            }
        }
    }

    #[test]
    fn beats_random_candidates_and_subgradient_reference() {
        let mut rng = Rng::new(1234, 0);
        let x = random_design(&mut rng, 10, 3);
        let y = gaussian_vector(&mut rng, 10, 1.0).unwrap();
        let lambda = 0.3;
        let fit = fit_lasso(&x, &y, lambda, &LassoSettings::default()).unwrap();
        assert!(fit.converged);
        let ours = lasso_objective(&x, &y, &fit.beta, lambda).unwrap();

        for _ in 0..10_000 {
            let cand: Vec<f64> = (0..3).map(|_| rng.normal(1.0)).collect();
            let obj = lasso_objective(&x, &y, &cand, lambda).unwrap();
            assert!(ours <= obj + 1e-8);
        }

        let (_, ref_obj) = subgradient_reference(&x, &y, lambda, 1_000_000);
        assert!(
            ours <= ref_obj + 1e-8,
            "coordinate descent {ours} vs reference {ref_obj}"
        );
    }

    #[test]
    fn kkt_certificate_holds_on_random_instances() {
        let mut rng = Rng::new(99, 0);
        let settings = LassoSettings::default();
        for trial in 0..25 {
            let n = 15 + trial % 10;
            let p = 5 + trial % 20;
            let x = random_design(&mut rng, n, p);
            let y = gaussian_vector(&mut rng, n, 1.0).unwrap();
            let lambda_max = inf_norm(&x.correlations(&y).unwrap());
            let lambda = lambda_max * (0.05 + 0.9 * (trial as f64 / 25.0));
            let fit = fit_lasso(&x, &y, lambda, &settings).unwrap();
            assert!(fit.converged, "trial {trial}");
            assert!(fit.kkt_slack <= settings.kkt_tolerance);

            let corr = x.correlations(&fit.residual).unwrap();
            for j in 0..p {
                assert!(corr[j].abs() <= lambda + 1e-7, "trial {trial} coord {j}");
                if fit.beta[j].abs() > settings.active_set_tolerance {
                    assert!(
                        (corr[j] - lambda * fit.beta[j].signum()).abs() <= 1e-7,
                        "trial {trial} coord {j}"
                    );
                }
            }
            // every numerically nonzero coefficient is in the KKT-defined set
            assert!(fit.support_disagreement(&settings).is_empty());
        }
    }

    #[test]
    fn equicorrelation_recomputes_set_and_signs() {
        let mut rng = Rng::new(7, 0);
        let x = random_design(&mut rng, 30, 6);
        let mut beta0 = vec![0.0; 6];
        beta0[1] = 2.0;
        beta0[4] = -1.5;
        let eps = gaussian_vector(&mut rng, 30, 0.05).unwrap();
        let signal = x.multiply(&beta0).unwrap();
        let y: Vec<f64> = signal.iter().zip(&eps).map(|(s, e)| s + e).collect();
        let fit = fit_lasso(&x, &y, 0.1, &LassoSettings::default()).unwrap();
        let (e, s) = equicorrelation(&fit, &x, &y);
        assert_eq!(e, fit.active_set);
        assert_eq!(s, fit.signs);
        // signs match the coefficients on clearly nonzero coordinates
        for (&j, &sj) in e.iter().zip(&s) {
            if fit.beta[j].abs() > 1e-6 {
                assert_eq!(sj, fit.beta[j].signum());
            }
        }
        // a strict-inequality zero solution has an empty set
        let lambda_max = inf_norm(&x.correlations(&y).unwrap());
        let zero_fit = fit_lasso(&x, &y, lambda_max * 2.0, &LassoSettings::default()).unwrap();
        let (e0, s0) = equicorrelation(&zero_fit, &x, &y);
        assert!(e0.is_empty());
        assert!(s0.is_empty());
    }

    #[test]
    fn single_active_coordinate_has_positive_sign() {
        let mut rng = Rng::new(17, 0);
        let x = random_design(&mut rng, 40, 3);
        // response aligned with column 0
        let y: Vec<f64> = x.column(0).iter().map(|v| 1.5 * v).collect();
        let lambda_max = inf_norm(&x.correlations(&y).unwrap());
        let fit = fit_lasso(&x, &y, lambda_max * 0.8, &LassoSettings::default()).unwrap();
        assert!(fit.active_set.contains(&0));
        let pos = fit.active_set.iter().position(|&j| j == 0).unwrap();
        assert_eq!(fit.signs[pos], 1.0);
        assert!(fit.beta[0] > 0.0);
    }

    #[test]
    fn path_matches_cold_starts_and_threshold_case() {
        let mut rng = Rng::new(88, 0);
        let x = random_design(&mut rng, 25, 12);
        let y = gaussian_vector(&mut rng, 25, 1.0).unwrap();
        let settings = LassoSettings::default();
        let lambda_max = inf_norm(&x.correlations(&y).unwrap());
        let grid: Vec<f64> = (0..20)
            .map(|i| lambda_max * 10f64.powf(-3.0 * i as f64 / 19.0))
            .collect();

        let warm = lasso_path(&x, &y, &grid, &settings).unwrap();
        // first grid point sits at the threshold: zero solution
        assert!(warm[0].beta.iter().all(|&b| b == 0.0));

        for (i, fit) in warm.iter().enumerate() {
            let cold = fit_lasso(&x, &y, grid[i], &settings).unwrap();
            let obj_warm = lasso_objective(&x, &y, &fit.beta, grid[i]).unwrap();
            let obj_cold = lasso_objective(&x, &y, &cold.beta, grid[i]).unwrap();
            assert!(
                (obj_warm - obj_cold).abs() <= 1e-8,
                "grid point {i}: {obj_warm} vs {obj_cold}"
            );
        }

        let single = lasso_path(&x, &y, &grid[..1], &settings).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].beta, warm[0].beta);
    }

    #[test]
    fn path_rejects_non_decreasing_grid() {
        let mut rng = Rng::new(8, 0);
        let x = random_design(&mut rng, 10, 2);
        let y = gaussian_vector(&mut rng, 10, 1.0).unwrap();
        assert!(lasso_path(&x, &y, &[0.1, 0.1], &LassoSettings::default()).is_err());
        assert!(lasso_path(&x, &y, &[], &LassoSettings::default()).is_err());
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut rng = Rng::new(4, 0);
        let x = random_design(&mut rng, 10, 2);
        let y = gaussian_vector(&mut rng, 10, 1.0).unwrap();
        let s = LassoSettings::default();
        assert!(matches!(
            fit_lasso(&x, &y, 0.0, &s),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            fit_lasso(&x, &y[..5], 0.1, &s),
            Err(Error::DimensionMismatch { .. })
        ));
        let mut bad = y.clone();
        bad[0] = f64::NAN;
        assert!(matches!(
            fit_lasso(&x, &bad, 0.1, &s),
            Err(Error::NonFinite { .. })
        ));
        let unnorm = DesignMatrix::from_raw(x.values().clone() * 2.0).unwrap();
        assert!(matches!(
            fit_lasso(&unnorm, &y, 0.1, &s),
            Err(Error::NotNormalized)
        ));
    }
}
