//! Ridge correction on the Lasso's equicorrelation set.
//!
//! Given a Lasso fit with equicorrelation set E and signs s, the refitted
//! estimator is `β̂_R = β̂_L + δ̂` where `δ̂` is supported on E and minimizes
//! `(1/2n)‖(y − Xβ̂_L) − Xδ‖² + (λ_R/2)‖δ‖²`. Two independent routes compute
//! it: a closed form that solves `(Σ_{n,E} + λ_R I) δ_E = λ_L s` by Cholesky
//! factorization, and a direct conjugate-gradient minimization of the
//! quadratic that never uses the KKT substitution. The two must agree; the
//! direct solve doubles as the oracle for the closed form.
//!
//! The safety threshold `λ_R > 2‖Σ_{n,E}‖_∞` guarantees sign preservation
//! and the pointwise prediction-improvement inequality; both are exposed as
//! runtime-checkable certificates.

use crate::error::{Error, Result};
use crate::lasso::LassoFit;
use crate::linalg::{
    self, dot, dot_view, inf_norm, infinity_operator_norm, l2_norm, restricted_gram, DesignMatrix,
    TrueModel,
};

/// Magnitudes below this count as zero in sign comparisons.
pub const SIGN_DEAD_ZONE: f64 = 1e-12;

/// Relative slack above the safety threshold used when no `λ_R` is given:
/// the theorem requires a strict inequality.
pub const DEFAULT_SAFETY_MARGIN: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefitMethod {
    ClosedForm,
    DirectSolve,
}

/// The correction `δ̂` and refitted estimator `β̂_R`, with the safety margin
/// diagnostics for the `λ_R` that produced them.
#[derive(Clone, Debug)]
pub struct RefitResult {
    /// Correction vector, exactly zero outside the equicorrelation set.
    pub delta: Vec<f64>,
    /// `β̂_L + δ̂`.
    pub beta_r: Vec<f64>,
    pub lambda_r: f64,
    /// `2‖Σ_{n,E}‖_∞`; zero for an empty equicorrelation set.
    pub min_safe_lambda_r: f64,
    /// `lambda_r > min_safe_lambda_r` (strict).
    pub safe: bool,
    pub method: RefitMethod,
}

/// Safety threshold `2‖Σ_{n,E}‖_∞` for the second-stage penalty.
pub fn min_safe_lambda_r(x: &DesignMatrix, e: &[usize]) -> Result<f64> {
    let gram = restricted_gram(x, e)?;
    Ok(2.0 * infinity_operator_norm(&gram)?)
}

/// Smallest safe `λ_R`, with strict-inequality slack.
pub fn default_lambda_r(x: &DesignMatrix, e: &[usize]) -> Result<f64> {
    let min_safe = min_safe_lambda_r(x, e)?;
    if min_safe == 0.0 {
        // Empty E: any positive value works and the correction is zero anyway.
        Ok(1.0)
    } else {
        Ok(min_safe * (1.0 + DEFAULT_SAFETY_MARGIN))
    }
}

fn validate_lambda_r(lambda_r: f64) -> Result<()> {
    if !(lambda_r > 0.0) || !lambda_r.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "lambda_r must be strictly positive, got {lambda_r}"
        )));
    }
    Ok(())
}

/// Precomputed restricted Gram data for refitting one Lasso fit at many
/// second-stage penalties (the grid search solves the same system with
/// different ridges).
pub struct RefitBasis {
    gram: ndarray::Array2<f64>,
    min_safe: f64,
}

impl RefitBasis {
    pub fn new(x: &DesignMatrix, fit: &LassoFit) -> Result<RefitBasis> {
        check_fit_shape(x, fit)?;
        let gram = restricted_gram(x, &fit.active_set)?;
        let min_safe = 2.0 * infinity_operator_norm(&gram)?;
        Ok(RefitBasis { gram, min_safe })
    }

    pub fn min_safe_lambda_r(&self) -> f64 {
        self.min_safe
    }

    /// Closed-form refit at one penalty: solves
    /// `(Σ_{n,E} + λ_R I) δ_E = λ_L s` by Cholesky factorization. No explicit
    /// inverse is formed.
    pub fn refit(&self, fit: &LassoFit, lambda_r: f64) -> Result<RefitResult> {
        validate_lambda_r(lambda_r)?;
        let e = &fit.active_set;
        let delta_e = if e.is_empty() {
            Vec::new()
        } else {
            let k = e.len();
            let mut a = self.gram.clone();
            for i in 0..k {
                a[[i, i]] += lambda_r;
            }
            let rhs: Vec<f64> = fit.signs.iter().map(|s| fit.lambda * s).collect();
            linalg::spd_solve(&a, &rhs, lambda_r)?
        };
        Ok(assemble(
            fit,
            e,
            &delta_e,
            lambda_r,
            self.min_safe,
            RefitMethod::ClosedForm,
        ))
    }
}

/// Computes the correction from the closed form at a single penalty.
pub fn refit_closed_form(
    x: &DesignMatrix,
    fit: &LassoFit,
    lambda_r: f64,
) -> Result<RefitResult> {
    RefitBasis::new(x, fit)?.refit(fit, lambda_r)
}

/// Computes the correction by directly minimizing the strictly convex
/// quadratic over the coordinates in E, using conjugate gradients down to
/// gradient norm 1e-10. Independent of the closed form: the right-hand side
/// comes from the actual residual correlations, not the KKT substitution,
/// and the operator is applied through `X_E` rather than the Gram matrix.
pub fn refit_direct_solve(
    x: &DesignMatrix,
    y: &[f64],
    fit: &LassoFit,
    lambda_r: f64,
) -> Result<RefitResult> {
    validate_lambda_r(lambda_r)?;
    check_fit_shape(x, fit)?;
    if y.len() != x.n() {
        return Err(Error::DimensionMismatch {
            context: "response length".into(),
            expected: x.n(),
            actual: y.len(),
        });
    }
    let e = &fit.active_set;
    let gram = restricted_gram(x, e)?;
    let min_safe = 2.0 * infinity_operator_norm(&gram)?;

    let delta_e = if e.is_empty() {
        Vec::new()
    } else {
        let n_f = x.n() as f64;
        let residual = crate::lasso::compute_residual(x, y, &fit.beta);
        // b = X_E^T r_L / n, the gradient of the data term at δ = 0.
        let b: Vec<f64> = e
            .iter()
            .map(|&j| dot_view(x.column(j), &residual) / n_f)
            .collect();

        // A v = X_E^T (X_E v) / n + λ_R v, applied matrix-free.
        let apply = |v: &[f64]| -> Vec<f64> {
            let mut xv = vec![0.0; x.n()];
            for (idx, &j) in e.iter().enumerate() {
                let c = v[idx];
                if c != 0.0 {
                    for (acc, &entry) in xv.iter_mut().zip(x.column(j)) {
                        *acc += entry * c;
                    }
                }
            }
            e.iter()
                .enumerate()
                .map(|(idx, &j)| dot_view(x.column(j), &xv) / n_f + lambda_r * v[idx])
                .collect()
        };

        conjugate_gradient(apply, &b, 1e-10, 20 * e.len() + 200)?
    };

    Ok(assemble(fit, e, &delta_e, lambda_r, min_safe, RefitMethod::DirectSolve))
}

fn assemble(
    fit: &LassoFit,
    e: &[usize],
    delta_e: &[f64],
    lambda_r: f64,
    min_safe: f64,
    method: RefitMethod,
) -> RefitResult {
    let mut delta = vec![0.0; fit.beta.len()];
    for (&j, &d) in e.iter().zip(delta_e) {
        delta[j] = d;
    }
    let beta_r: Vec<f64> = fit.beta.iter().zip(&delta).map(|(b, d)| b + d).collect();
    RefitResult {
        delta,
        beta_r,
        lambda_r,
        min_safe_lambda_r: min_safe,
        safe: lambda_r > min_safe,
        method,
    }
}

fn check_fit_shape(x: &DesignMatrix, fit: &LassoFit) -> Result<()> {
    if fit.beta.len() != x.p() {
        return Err(Error::DimensionMismatch {
            context: "fit coefficient length".into(),
            expected: x.p(),
            actual: fit.beta.len(),
        });
    }
    if fit.active_set.len() != fit.signs.len() {
        return Err(Error::DimensionMismatch {
            context: "active set vs signs".into(),
            expected: fit.active_set.len(),
            actual: fit.signs.len(),
        });
    }
    Ok(())
}

fn conjugate_gradient<F>(apply: F, b: &[f64], grad_tol: f64, max_iter: usize) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let k = b.len();
    let mut v = vec![0.0; k];
    let mut r = b.to_vec(); // r = b − A v
    let mut grad_norm = l2_norm(&r);
    if grad_norm <= grad_tol {
        return Ok(v);
    }
    let mut d = r.clone();
    let mut rs = dot(&r, &r);
    for _ in 0..max_iter {
        let ad = apply(&d);
        let dad = dot(&d, &ad);
        if dad <= 0.0 {
            // Cannot happen for a positive definite operator; bail honestly.
            return Err(Error::SolveNoConvergence {
                gradient_norm: grad_norm,
                iterations: max_iter,
            });
        }
        let alpha = rs / dad;
        for i in 0..k {
            v[i] += alpha * d[i];
            r[i] -= alpha * ad[i];
        }
        grad_norm = l2_norm(&r);
        if grad_norm <= grad_tol {
            return Ok(v);
        }
        let rs_new = dot(&r, &r);
        let beta = rs_new / rs;
        rs = rs_new;
        for i in 0..k {
            d[i] = r[i] + beta * d[i];
        }
    }
    // Recompute the true gradient before giving up; the recurrence drifts.
    let av = apply(&v);
    let true_grad: Vec<f64> = b.iter().zip(&av).map(|(bi, ai)| bi - ai).collect();
    grad_norm = l2_norm(&true_grad);
    if grad_norm <= grad_tol {
        return Ok(v);
    }
    Err(Error::SolveNoConvergence {
        gradient_norm: grad_norm,
        iterations: max_iter,
    })
}

/// Whether the refit reduced the empirical risk, and by how much.
#[derive(Clone, Copy, Debug)]
pub struct RiskReduction {
    pub holds: bool,
    /// `‖y − Xβ̂_L‖₂ − ‖y − Xβ̂_R‖₂`; nonnegative up to numerical slack.
    pub gap: f64,
}

/// Checks `‖y − Xβ̂_R‖₂ ≤ ‖y − Xβ̂_L‖₂`, which holds unconditionally for the
/// refitted estimator.
pub fn empirical_risk_reduction_check(
    x: &DesignMatrix,
    y: &[f64],
    fit: &LassoFit,
    refit: &RefitResult,
) -> Result<RiskReduction> {
    let r_l = residual_norm(x, y, &fit.beta)?;
    let r_r = residual_norm(x, y, &refit.beta_r)?;
    let gap = r_l - r_r;
    Ok(RiskReduction {
        holds: gap >= -1e-9,
        gap,
    })
}

fn residual_norm(x: &DesignMatrix, y: &[f64], beta: &[f64]) -> Result<f64> {
    let fitted = x.multiply(beta)?;
    Ok(y.iter()
        .zip(&fitted)
        .map(|(yi, fi)| (yi - fi) * (yi - fi))
        .sum::<f64>()
        .sqrt())
}

/// Evaluation of the pointwise prediction-improvement inequality on a
/// simulated instance where the truth and the noise are known.
#[derive(Clone, Copy, Debug)]
pub struct ImprovementCertificate {
    /// `(1/2n)‖Xβ̂_L − Xβ⁰‖² − (1/2n)‖Xβ̂_R − Xβ⁰‖²`.
    pub lhs_gap: f64,
    /// `(λ_R/2λ_L)(λ_L − 3‖X^Tε/n‖_∞)‖δ̂‖₂²`.
    pub remainder: f64,
    /// `‖X^Tε/n‖_∞`.
    pub noise_sup: f64,
    /// `λ_L ≥ 3·noise_sup`.
    pub condition_met: bool,
}

/// Fills the certificate from its definitions. Pure diagnostics: when the
/// penalty is safe and the noise condition holds, `lhs_gap ≥ remainder`.
pub fn improvement_certificate(
    x: &DesignMatrix,
    truth: &TrueModel,
    eps: &[f64],
    fit: &LassoFit,
    refit: &RefitResult,
) -> Result<ImprovementCertificate> {
    if truth.beta0.len() != x.p() {
        return Err(Error::DimensionMismatch {
            context: "beta0 length".into(),
            expected: x.p(),
            actual: truth.beta0.len(),
        });
    }
    let n_f = x.n() as f64;
    let signal = x.multiply(&truth.beta0)?;
    let fit_l = x.multiply(&fit.beta)?;
    let fit_r = x.multiply(&refit.beta_r)?;
    let sq = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>()
    };
    let lhs_gap = (sq(&fit_l, &signal) - sq(&fit_r, &signal)) / (2.0 * n_f);

    let noise_sup = inf_norm(&x.correlations(eps)?);
    let delta_sq: f64 = refit.delta.iter().map(|d| d * d).sum();
    let remainder =
        refit.lambda_r / (2.0 * fit.lambda) * (fit.lambda - 3.0 * noise_sup) * delta_sq;

    Ok(ImprovementCertificate {
        lhs_gap,
        remainder,
        noise_sup,
        condition_met: fit.lambda >= 3.0 * noise_sup,
    })
}

/// Verifies the sign-preservation guarantees of a safe refit: on E the signs
/// of `β̂_R` match those of `β̂_L` (zero coefficients on the equicorrelation
/// boundary are skipped — their Lasso sign is undefined), and the correction
/// signs match the equicorrelation signs exactly.
pub fn sign_preservation_check(fit: &LassoFit, refit: &RefitResult) -> bool {
    let sign = |v: f64| -> f64 {
        if v.abs() < SIGN_DEAD_ZONE {
            0.0
        } else {
            v.signum()
        }
    };
    for (&j, &s) in fit.active_set.iter().zip(&fit.signs) {
        let d = sign(refit.delta[j]);
        if d != 0.0 && d != s {
            return false;
        }
        let b_l = sign(fit.beta[j]);
        if b_l != 0.0 && sign(refit.beta_r[j]) != b_l {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lasso::{fit_lasso, LassoSettings};
    use crate::linalg::{l1_norm, normalize_columns};
    use crate::rng::{gaussian_vector, Rng};
    use ndarray::{array, Array2};

    struct Instance {
        x: DesignMatrix,
        y: Vec<f64>,
        beta0: Vec<f64>,
        eps: Vec<f64>,
        fit: LassoFit,
    }

    /// Random sparse instance with the Lasso fitted at a mid-grid penalty.
    fn random_instance(rng: &mut Rng, n: usize, p: usize, s: usize, sigma: f64) -> Instance {
        let raw = Array2::from_shape_fn((n, p), |_| rng.normal(1.0));
        let x = normalize_columns(&raw).unwrap();
        let mut beta0 = vec![0.0; p];
        for b in beta0.iter_mut().take(s) {
            *b = 1.0;
        }
        let eps = gaussian_vector(rng, n, sigma).unwrap();
        let signal = x.multiply(&beta0).unwrap();
        let y: Vec<f64> = signal.iter().zip(&eps).map(|(a, b)| a + b).collect();
        let lambda_max = crate::linalg::inf_norm(&x.correlations(&y).unwrap());
        let lambda = lambda_max * 0.3;
        let fit = fit_lasso(&x, &y, lambda, &LassoSettings::default()).unwrap();
        assert!(fit.converged);
        Instance {
            x,
            y,
            beta0,
            eps,
            fit,
        }
    }

    #[test]
    fn min_safe_lambda_r_cases() {
        // empty set
        let x = normalize_columns(&array![[1.0, 0.5], [0.5, 1.0]]).unwrap();
        assert_eq!(min_safe_lambda_r(&x, &[]).unwrap(), 0.0);
        // singleton on a normalized design: gram is [1], so 2
        assert!((min_safe_lambda_r(&x, &[0]).unwrap() - 2.0).abs() <= 1e-12);
        // correlation 0.5 pair: max row sum 1.5, doubled
        let raw = array![
            [2f64.sqrt(), 2f64.sqrt() * 0.5],
            [0.0, 2f64.sqrt() * 0.75f64.sqrt()]
        ];
        let x2 = DesignMatrix::from_raw(raw).unwrap();
        let g = restricted_gram(&x2, &[0, 1]).unwrap();
        assert!((g[[0, 1]] - 0.5).abs() <= 1e-12);
        assert!((min_safe_lambda_r(&x2, &[0, 1]).unwrap() - 3.0).abs() <= 1e-12);
    }

    #[test]
    fn closed_form_scalar_case() {
        // |E| = 1 with s = +1: the correction is lambda_l / (1 + lambda_r)
        let mut rng = Rng::new(21, 0);
        let raw = Array2::from_shape_fn((40, 3), |_| rng.normal(1.0));
        let x = normalize_columns(&raw).unwrap();
        let y: Vec<f64> = x.column(0).iter().map(|v| 2.0 * v).collect();
        let lambda_max = crate::linalg::inf_norm(&x.correlations(&y).unwrap());
        let fit = fit_lasso(&x, &y, lambda_max * 0.9, &LassoSettings::default()).unwrap();
        assert_eq!(fit.active_set, vec![0]);
        assert_eq!(fit.signs, vec![1.0]);
        let lambda_r = 3.0;
        let refit = refit_closed_form(&x, &fit, lambda_r).unwrap();
        let g = restricted_gram(&x, &[0]).unwrap()[[0, 0]];
        let expected = fit.lambda / (g + lambda_r);
        assert!((refit.delta[0] - expected).abs() <= 1e-12);
        assert_eq!(refit.delta[1], 0.0);
        assert_eq!(refit.delta[2], 0.0);
        assert!(refit.delta[0] > 0.0);
        assert!(refit.safe);
        assert_eq!(refit.method, RefitMethod::ClosedForm);
    }

    #[test]
    fn empty_set_leaves_lasso_untouched() {
        let mut rng = Rng::new(33, 0);
        let raw = Array2::from_shape_fn((15, 4), |_| rng.normal(1.0));
        let x = normalize_columns(&raw).unwrap();
        let y = gaussian_vector(&mut rng, 15, 1.0).unwrap();
        let lambda_max = crate::linalg::inf_norm(&x.correlations(&y).unwrap());
        let fit = fit_lasso(&x, &y, lambda_max * 1.5, &LassoSettings::default()).unwrap();
        assert!(fit.active_set.is_empty());

        let refit = refit_closed_form(&x, &fit, 0.7).unwrap();
        assert!(refit.delta.iter().all(|&d| d == 0.0));
        assert_eq!(refit.beta_r, fit.beta);
        assert_eq!(refit.min_safe_lambda_r, 0.0);
        assert!(refit.safe);

        let direct = refit_direct_solve(&x, &y, &fit, 0.7).unwrap();
        assert_eq!(direct.beta_r, fit.beta);

        let rr = empirical_risk_reduction_check(&x, &y, &fit, &refit).unwrap();
        assert!(rr.holds);
        assert_eq!(rr.gap, 0.0);
        assert!(sign_preservation_check(&fit, &refit));
    }

    #[test]
    fn closed_form_agrees_with_direct_solve() {
        let mut rng = Rng::new(101, 0);
        for trial in 0..100 {
            let n = 20 + trial % 30;
            let p = 5 + trial % 40;
            let s = (trial % 4).min(p);
            let inst = random_instance(&mut rng, n, p, s, 0.5);
            let lambda_r = default_lambda_r(&inst.x, &inst.fit.active_set).unwrap();
            let cf = refit_closed_form(&inst.x, &inst.fit, lambda_r).unwrap();
            let ds = refit_direct_solve(&inst.x, &inst.y, &inst.fit, lambda_r).unwrap();
            for j in 0..p {
                assert!(
                    (cf.delta[j] - ds.delta[j]).abs() <= 1e-8,
                    "trial {trial} coord {j}: {} vs {}",
                    cf.delta[j],
                    ds.delta[j]
                );
            }
        }
    }

    #[test]
    fn huge_lambda_r_vanishes_and_tiny_lambda_r_is_least_squares() {
        let mut rng = Rng::new(55, 0);
        let inst = random_instance(&mut rng, 50, 8, 3, 0.3);
        assert!(!inst.fit.active_set.is_empty());

        // lambda_r -> infinity: the refit reduces to the Lasso solution
        let big = refit_direct_solve(&inst.x, &inst.y, &inst.fit, 1e8).unwrap();
        let delta_norm = crate::linalg::l2_norm(&big.delta);
        let bound = inst.fit.lambda * (inst.fit.active_set.len() as f64).sqrt() * 1e-8 * 1.5;
        assert!(delta_norm <= bound, "{delta_norm} > {bound}");
        for (br, bl) in big.beta_r.iter().zip(&inst.fit.beta) {
            assert!((br - bl).abs() <= 1e-7);
        }

        // lambda_r -> 0: least-squares refit on E (normal-equations oracle)
        let small = refit_direct_solve(&inst.x, &inst.y, &inst.fit, 1e-8).unwrap();
        let e = &inst.fit.active_set;
        let gram = restricted_gram(&inst.x, e).unwrap();
        let n_f = inst.x.n() as f64;
        let resid = crate::lasso::compute_residual(&inst.x, &inst.y, &inst.fit.beta);
        let rhs: Vec<f64> = e
            .iter()
            .map(|&j| crate::linalg::dot_view(inst.x.column(j), &resid) / n_f)
            .collect();
        let ls = crate::linalg::spd_solve(&gram, &rhs, 0.0).unwrap();
        for (idx, &j) in e.iter().enumerate() {
            assert!(
                (small.delta[j] - ls[idx]).abs() <= 1e-5 * (1.0 + ls[idx].abs()),
                "coord {j}: {} vs {}",
                small.delta[j],
                ls[idx]
            );
        }
    }

    #[test]
    fn risk_reduction_and_appendix_inequality() {
        let mut rng = Rng::new(202, 0);
        for trial in 0..50 {
            let inst = random_instance(&mut rng, 30, 20, 3, 1.0);
            let lambda_r = default_lambda_r(&inst.x, &inst.fit.active_set).unwrap();
            let refit = refit_closed_form(&inst.x, &inst.fit, lambda_r).unwrap();
            let rr = empirical_risk_reduction_check(&inst.x, &inst.y, &inst.fit, &refit).unwrap();
            assert!(rr.holds, "trial {trial}: gap {}", rr.gap);

            // the optimality inequality behind it: refit objective with the
            // ridge term still beats the zero correction
            let n_f = inst.x.n() as f64;
            let r_l = crate::lasso::compute_residual(&inst.x, &inst.y, &inst.fit.beta);
            let r_r = crate::lasso::compute_residual(&inst.x, &inst.y, &refit.beta_r);
            let sq = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>();
            let lhs = sq(&r_r) / (2.0 * n_f)
                + refit.lambda_r / 2.0 * refit.delta.iter().map(|d| d * d).sum::<f64>();
            let rhs = sq(&r_l) / (2.0 * n_f);
            assert!(lhs <= rhs + 1e-9, "trial {trial}: {lhs} > {rhs}");
        }
    }

    #[test]
    fn certificate_zero_delta_and_boundary()  {
        let mut rng = Rng::new(77, 0);
        let inst = random_instance(&mut rng, 25, 10, 2, 0.5);
        let truth = TrueModel::new(inst.beta0.clone(), 0.5).unwrap();

        // empty correction: both sides vanish
        let lambda_max = crate::linalg::inf_norm(&inst.x.correlations(&inst.y).unwrap());
        let zero_fit = fit_lasso(&inst.x, &inst.y, lambda_max * 2.0, &LassoSettings::default()).unwrap();
        let refit0 = refit_closed_form(&inst.x, &zero_fit, 1.0).unwrap();
        let cert0 =
            improvement_certificate(&inst.x, &truth, &inst.eps, &zero_fit, &refit0).unwrap();
        assert_eq!(cert0.remainder, 0.0);
        assert_eq!(cert0.lhs_gap, 0.0);

        // lambda_l exactly at 3 * noise_sup: the remainder vanishes
        let noise_sup = crate::linalg::inf_norm(&inst.x.correlations(&inst.eps).unwrap());
        let fit_b = fit_lasso(
            &inst.x,
            &inst.y,
            3.0 * noise_sup,
            &LassoSettings::default(),
        )
        .unwrap();
        let lambda_r = default_lambda_r(&inst.x, &fit_b.active_set).unwrap();
        let refit_b = refit_closed_form(&inst.x, &fit_b, lambda_r).unwrap();
        let cert_b =
            improvement_certificate(&inst.x, &truth, &inst.eps, &fit_b, &refit_b).unwrap();
        assert_eq!(cert_b.remainder, 0.0);
        assert!(cert_b.condition_met);
    }

    #[test]
    fn certificate_improvement_holds_when_condition_met() {
        let mut rng = Rng::new(404, 0);
        for trial in 0..50 {
            let n = 30 + trial % 20;
            let p = 10 + trial % 30;
            let raw = Array2::from_shape_fn((n, p), |_| rng.normal(1.0));
            let x = normalize_columns(&raw).unwrap();
            let mut beta0 = vec![0.0; p];
            for b in beta0.iter_mut().take(3) {
                *b = 1.0;
            }
            let eps = gaussian_vector(&mut rng, n, 0.5).unwrap();
            let signal = x.multiply(&beta0).unwrap();
            let y: Vec<f64> = signal.iter().zip(&eps).map(|(a, b)| a + b).collect();
            let noise_sup = crate::linalg::inf_norm(&x.correlations(&eps).unwrap());
            let lambda_l = 3.0 * noise_sup * 1.5;
            let fit = fit_lasso(&x, &y, lambda_l, &LassoSettings::default()).unwrap();
            let lambda_r = default_lambda_r(&x, &fit.active_set).unwrap();
            let refit = refit_closed_form(&x, &fit, lambda_r).unwrap();
            assert!(refit.safe);
            let truth = TrueModel::new(beta0, 0.5).unwrap();
            let cert = improvement_certificate(&x, &truth, &eps, &fit, &refit).unwrap();
            assert!(cert.condition_met);
            assert!(cert.remainder >= 0.0);
            assert!(
                cert.lhs_gap >= cert.remainder - 1e-9,
                "trial {trial}: gap {} < remainder {}",
                cert.lhs_gap,
                cert.remainder
            );
        }
    }

    #[test]
    fn sign_preservation_on_safe_instances() {
        let mut rng = Rng::new(909, 0);
        let mut unsafe_flips = 0usize;
        for trial in 0..100 {
            let n = 20 + trial % 25;
            let p = 8 + trial % 25;
            let inst = random_instance(&mut rng, n, p, 2 + trial % 3, 0.8);
            let e = inst.fit.active_set.clone();
            let lambda_r = default_lambda_r(&inst.x, &e).unwrap();
            let refit = refit_closed_form(&inst.x, &inst.fit, lambda_r).unwrap();
            assert!(refit.safe);
            assert!(
                sign_preservation_check(&inst.fit, &refit),
                "trial {trial}: sign flipped under a safe penalty"
            );
            // the strong form: sign(delta_E) equals the equicorrelation signs
            for (&j, &s) in e.iter().zip(&inst.fit.signs) {
                if refit.delta[j].abs() >= SIGN_DEAD_ZONE {
                    assert_eq!(refit.delta[j].signum(), s, "trial {trial} coord {j}");
                }
            }

            // Below the threshold the guarantee is one-directional: flips are
            // allowed to occur; count them without asserting either way.
            if !e.is_empty() {
                let unsafe_lambda = refit.min_safe_lambda_r * 0.05;
                if unsafe_lambda > 0.0 {
                    let r2 = refit_closed_form(&inst.x, &inst.fit, unsafe_lambda).unwrap();
                    assert!(!r2.safe);
                    if !sign_preservation_check(&inst.fit, &r2) {
                        unsafe_flips += 1;
                    }
                }
            }
        }
        // informational only; keeps the one-directional reading visible
        println!("unsafe-penalty sign flips observed: {unsafe_flips}/100");
    }

    #[test]
    fn norm_inequality_under_safe_penalty() {
        // lambda_l * ||delta||_1 / 3 <= lambda_r * ||delta||_2^2 / 2
        let mut rng = Rng::new(606, 0);
        for trial in 0..100 {
            let inst = random_instance(&mut rng, 25 + trial % 20, 10 + trial % 20, 3, 0.7);
            let lambda_r = default_lambda_r(&inst.x, &inst.fit.active_set).unwrap();
            let refit = refit_closed_form(&inst.x, &inst.fit, lambda_r).unwrap();
            let lhs = inst.fit.lambda * l1_norm(&refit.delta) / 3.0;
            let rhs = lambda_r * refit.delta.iter().map(|d| d * d).sum::<f64>() / 2.0;
            assert!(lhs <= rhs + 1e-12, "trial {trial}: {lhs} > {rhs}");
        }
    }

    #[test]
    fn delta_norm_shrinks_as_lambda_r_grows() {
        let mut rng = Rng::new(240, 0);
        let inst = random_instance(&mut rng, 40, 15, 4, 0.5);
        assert!(!inst.fit.active_set.is_empty());
        let base = default_lambda_r(&inst.x, &inst.fit.active_set).unwrap();
        let mut last = f64::INFINITY;
        for k in 0..6 {
            let lambda_r = base * 10f64.powi(k);
            let refit = refit_closed_form(&inst.x, &inst.fit, lambda_r).unwrap();
            let norm = crate::linalg::l2_norm(&refit.delta);
            assert!(norm <= last + 1e-12, "norm grew at step {k}");
            last = norm;
        }
        // and at the top of that range the estimator has collapsed onto the Lasso
        let top = refit_closed_form(&inst.x, &inst.fit, base * 1e8).unwrap();
        for (br, bl) in top.beta_r.iter().zip(&inst.fit.beta) {
            assert!((br - bl).abs() <= 1e-6);
        }
    }

    #[test]
    fn rejects_invalid_lambda_r() {
        let mut rng = Rng::new(7, 0);
        let inst = random_instance(&mut rng, 15, 5, 2, 0.5);
        assert!(refit_closed_form(&inst.x, &inst.fit, 0.0).is_err());
        assert!(refit_closed_form(&inst.x, &inst.fit, -1.0).is_err());
        assert!(refit_direct_solve(&inst.x, &inst.y, &inst.fit, f64::NAN).is_err());
    }
}
