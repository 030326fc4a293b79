//! Experiment engine: synthetic AR(1) scenarios, the semi-synthetic
//! fixed-design protocol, and the real-data train/test protocol.
//!
//! Every replication draws from its own `(seed, stream)` pair, so runs are
//! reproducible bit-for-bit and replications can execute in parallel.
//! Results are aggregated by replication index, never by completion order.

use ndarray::{Array2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::{
    Estimator, LassoEstimator, LassoRidgeEstimator, DEFAULT_LAMBDA_L_COUNT,
    DEFAULT_LAMBDA_R_COUNT,
};
use crate::lasso::LassoSettings;
use crate::linalg::{normalize_columns_scaled, DesignMatrix};
use crate::rng::{gaussian_vector, Rng};
use crate::tuning::cross_validate;

/// Streams reserved per replication: design, noise, folds, test design.
const STREAMS_PER_REP: u64 = 8;

/// How the true coefficient vector of a synthetic scenario is built.
#[derive(Clone, Debug, PartialEq)]
pub enum BetaScheme {
    /// Ones on the first `s_true` coordinates, zeros elsewhere.
    UnitFirstS,
    /// Arbitrary vector of length p.
    Custom(Vec<f64>),
}

/// One cell of the simulation grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub n: usize,
    pub p: usize,
    pub s_true: usize,
    pub rho: f64,
    pub sigma: f64,
    pub replications: usize,
    pub folds: usize,
    pub seed: u64,
    pub beta_scheme: BetaScheme,
    /// Reuse one fold assignment for both estimators within a replication.
    pub shared_cv_folds: bool,
    /// Evaluate prediction error on a fresh design instead of in-sample.
    pub out_of_sample: bool,
    pub lambda_l_count: usize,
    pub lambda_r_count: usize,
}

impl ScenarioConfig {
    pub fn new(n: usize, p: usize, s_true: usize, rho: f64, sigma: f64) -> ScenarioConfig {
        ScenarioConfig {
            n,
            p,
            s_true,
            rho,
            sigma,
            replications: 100,
            folds: 5,
            seed: 0,
            beta_scheme: BetaScheme::UnitFirstS,
            shared_cv_folds: true,
            out_of_sample: false,
            lambda_l_count: DEFAULT_LAMBDA_L_COUNT,
            lambda_r_count: DEFAULT_LAMBDA_R_COUNT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::InvalidParameter("n and p must be positive".into()));
        }
        if self.s_true > self.p {
            return Err(Error::InvalidParameter(format!(
                "s_true ({}) cannot exceed p ({})",
                self.s_true, self.p
            )));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "rho must satisfy |rho| < 1, got {}",
                self.rho
            )));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be >= 0, got {}",
                self.sigma
            )));
        }
        if self.replications == 0 {
            return Err(Error::InvalidParameter(
                "replications must be at least 1".into(),
            ));
        }
        if self.folds < 2 || self.n < self.folds {
            return Err(Error::InvalidParameter(format!(
                "need 2 <= folds <= n, got folds={} n={}",
                self.folds, self.n
            )));
        }
        if let BetaScheme::Custom(v) = &self.beta_scheme {
            if v.len() != self.p {
                return Err(Error::DimensionMismatch {
                    context: "custom beta vector".into(),
                    expected: self.p,
                    actual: v.len(),
                });
            }
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        format!(
            "n={} p={} s={} rho={} sigma={}",
            self.n, self.p, self.s_true, self.rho, self.sigma
        )
    }
}

/// Which prediction-error metric a report carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PredictionMetric {
    /// `(1/n)‖X(β̂ − β⁰)‖²` on the training design.
    InSampleSignal,
    /// The same signal error on a freshly drawn design.
    OutOfSampleSignal,
    /// Mean squared prediction error on held-out rows.
    TestSet,
}

impl PredictionMetric {
    pub fn as_str(&self) -> &'static str {
        match self {
            PredictionMetric::InSampleSignal => "in-sample-signal",
            PredictionMetric::OutOfSampleSignal => "out-of-sample-signal",
            PredictionMetric::TestSet => "test-set-mse",
        }
    }
}

/// Per-replication outcome. Failures are recorded, not fatal.
#[derive(Clone, Debug, PartialEq)]
pub enum ReplicationOutcome {
    Success {
        pred_mse_lasso: f64,
        pred_mse_new: f64,
        est_mse_lasso: Option<f64>,
        est_mse_new: Option<f64>,
        lambda_l_lasso: f64,
        lambda_l_new: f64,
        lambda_r_new: Option<f64>,
    },
    Failed(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub outcome: ReplicationOutcome,
}

/// Identifies a synthetic grid cell for table layout.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellKey {
    pub n: usize,
    pub p: usize,
    pub s_true: usize,
    pub rho: f64,
    pub sigma: f64,
}

/// Aggregated comparison of the two estimators over replications.
///
/// The improvement percentages are `100·(mean_lasso/mean_new − 1)`, computed
/// exactly from the stored means; `None` with the degenerate flag set when
/// the denominator vanishes.
#[derive(Clone, Debug, PartialEq)]
pub struct ImprovementReport {
    pub label: String,
    pub metric: PredictionMetric,
    pub cell: Option<CellKey>,
    pub mean_pred_mse_lasso: f64,
    pub mean_pred_mse_new: f64,
    pub sd_pred_mse_lasso: f64,
    pub sd_pred_mse_new: f64,
    pub pred_improvement_pct: Option<f64>,
    pub mean_est_mse_lasso: Option<f64>,
    pub mean_est_mse_new: Option<f64>,
    pub sd_est_mse_lasso: Option<f64>,
    pub sd_est_mse_new: Option<f64>,
    pub est_improvement_pct: Option<f64>,
    pub degenerate_pred: bool,
    pub degenerate_est: bool,
    pub per_replication: Vec<ReplicationRecord>,
    pub failures: usize,
}

/// Raw AR(1) rows: each row follows `x_j = ρ x_{j−1} + √(1−ρ²) z_j`, which
/// realizes the covariance `Σ_{jk} = ρ^{|j−k|}` exactly.
pub fn ar1_raw(rng: &mut Rng, n: usize, p: usize, rho: f64) -> Result<Array2<f64>> {
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "rho must satisfy |rho| < 1, got {rho}"
        )));
    }
    if n == 0 || p == 0 {
        return Err(Error::InvalidParameter("n and p must be positive".into()));
    }
    let carry = (1.0 - rho * rho).sqrt();
    let mut values = Array2::<f64>::zeros((n, p));
    for i in 0..n {
        let mut prev = rng.normal(1.0);
        values[[i, 0]] = prev;
        for j in 1..p {
            let z = rng.normal(1.0);
            prev = rho * prev + carry * z;
            values[[i, j]] = prev;
        }
    }
    Ok(values)
}

/// Column-normalized AR(1) design.
pub fn ar1_design(rng: &mut Rng, n: usize, p: usize, rho: f64) -> Result<DesignMatrix> {
    let raw = ar1_raw(rng, n, p, rho)?;
    Ok(normalize_columns_scaled(&raw)?.0)
}

/// True coefficient vector for a synthetic scenario.
pub fn true_beta(scheme: &BetaScheme, p: usize, s_true: usize) -> Result<Vec<f64>> {
    match scheme {
        BetaScheme::UnitFirstS => {
            if s_true > p {
                return Err(Error::InvalidParameter(format!(
                    "s_true ({s_true}) cannot exceed p ({p})"
                )));
            }
            let mut beta = vec![0.0; p];
            for b in beta.iter_mut().take(s_true) {
                *b = 1.0;
            }
            Ok(beta)
        }
        BetaScheme::Custom(v) => {
            if v.len() != p {
                return Err(Error::DimensionMismatch {
                    context: "custom beta vector".into(),
                    expected: p,
                    actual: v.len(),
                });
            }
            Ok(v.clone())
        }
    }
}

/// Sparse signal structure for the semi-synthetic protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BetaCase {
    /// First five coordinates Unif(3,4), next five Unif(1,2).
    Case1,
    /// `5/√j` for j = 1..10.
    Case2,
    /// First twenty coordinates Unif(1,2).
    Case3,
}

impl BetaCase {
    pub fn parse(raw: &str) -> Result<BetaCase> {
        match raw {
            "1" | "case1" => Ok(BetaCase::Case1),
            "2" | "case2" => Ok(BetaCase::Case2),
            "3" | "case3" => Ok(BetaCase::Case3),
            other => Err(Error::InvalidParameter(format!(
                "unknown beta case {other:?}; expected 1, 2, or 3"
            ))),
        }
    }

    fn min_p(&self) -> usize {
        match self {
            BetaCase::Case1 | BetaCase::Case2 => 10,
            BetaCase::Case3 => 20,
        }
    }
}

/// True coefficients for one semi-synthetic case; entries beyond the active
/// block are zero.
pub fn beta_case_semi(case: BetaCase, p: usize, rng: &mut Rng) -> Result<Vec<f64>> {
    if p < case.min_p() {
        return Err(Error::InvalidParameter(format!(
            "beta case {case:?} needs p >= {}, got {p}",
            case.min_p()
        )));
    }
    let mut beta = vec![0.0; p];
    match case {
        BetaCase::Case1 => {
            for b in beta.iter_mut().take(5) {
                *b = rng.uniform(3.0, 4.0);
            }
            for b in beta.iter_mut().skip(5).take(5) {
                *b = rng.uniform(1.0, 2.0);
            }
        }
        BetaCase::Case2 => {
            for (j, b) in beta.iter_mut().take(10).enumerate() {
                *b = 5.0 / ((j + 1) as f64).sqrt();
            }
        }
        BetaCase::Case3 => {
            for b in beta.iter_mut().take(20) {
                *b = rng.uniform(1.0, 2.0);
            }
        }
    }
    Ok(beta)
}

struct FittedPair {
    beta_lasso: Vec<f64>,
    beta_new: Vec<f64>,
    lambda_l_lasso: f64,
    lambda_l_new: f64,
    lambda_r_new: Option<f64>,
}

/// Runs both estimators through cross-validation on one data set. A design
/// whose correlation with the response is identically zero short-circuits:
/// the zero vector is the exact solution for both estimators at any penalty.
fn fit_both(
    x: &DesignMatrix,
    y: &[f64],
    folds: usize,
    rng_cv: &mut Rng,
    shared_folds: bool,
    lambda_l_count: usize,
    lambda_r_count: usize,
    settings: &LassoSettings,
) -> Result<FittedPair> {
    let lasso = LassoEstimator { lambda_l_count };
    let ridge = LassoRidgeEstimator {
        lambda_l_count,
        lambda_r_count,
    };
    let grid_l = match lasso.build_grid(x, y) {
        Err(Error::DegenerateGrid) => {
            return Ok(FittedPair {
                beta_lasso: vec![0.0; x.p()],
                beta_new: vec![0.0; x.p()],
                lambda_l_lasso: f64::NAN,
                lambda_l_new: f64::NAN,
                lambda_r_new: None,
            });
        }
        other => other?,
    };
    let grid_r = ridge.build_grid(x, y)?;

    // The +2 offset stays inside the per-replication stream block.
    let mut rng_second = if shared_folds {
        rng_cv.clone()
    } else {
        rng_cv.substream(rng_cv.stream() + 2)
    };
    let cv_l = cross_validate(x, y, &grid_l, folds, rng_cv, &lasso, settings)?;
    let cv_r = cross_validate(x, y, &grid_r, folds, &mut rng_second, &ridge, settings)?;

    Ok(FittedPair {
        beta_lasso: cv_l.final_beta,
        beta_new: cv_r.final_beta,
        lambda_l_lasso: cv_l.best_lambda_l,
        lambda_l_new: cv_r.best_lambda_l,
        lambda_r_new: cv_r.best_lambda_r,
    })
}

fn signal_error(x: &DesignMatrix, beta: &[f64], beta0: &[f64]) -> Result<f64> {
    let diff: Vec<f64> = beta.iter().zip(beta0).map(|(a, b)| a - b).collect();
    let proj = x.multiply(&diff)?;
    Ok(proj.iter().map(|v| v * v).sum::<f64>() / x.n() as f64)
}

fn estimation_error(beta: &[f64], beta0: &[f64]) -> f64 {
    beta.iter()
        .zip(beta0)
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// In debug builds, re-derive the refit certificates at the selected
/// penalties and assert the unconditional and safe-penalty guarantees.
#[cfg(debug_assertions)]
fn debug_assert_refit_invariants(
    x: &DesignMatrix,
    y: &[f64],
    lambda_l: f64,
    lambda_r: f64,
    settings: &LassoSettings,
) {
    use crate::refit;

    let fit = match crate::lasso::fit_lasso(x, y, lambda_l, settings) {
        Ok(f) if f.converged => f,
        _ => return,
    };
    let cf = refit::refit_closed_form(x, &fit, lambda_r).expect("closed-form refit");
    let ds = refit::refit_direct_solve(x, y, &fit, lambda_r).expect("direct refit");
    for (a, b) in cf.delta.iter().zip(&ds.delta) {
        debug_assert!((a - b).abs() <= 1e-8, "refit routes disagree: {a} vs {b}");
    }
    let rr = refit::empirical_risk_reduction_check(x, y, &fit, &cf).expect("risk check");
    debug_assert!(rr.holds, "empirical risk increased: gap {}", rr.gap);
    if cf.safe {
        debug_assert!(refit::sign_preservation_check(&fit, &cf));
        let lhs = fit.lambda * crate::linalg::l1_norm(&cf.delta) / 3.0;
        let rhs = lambda_r * cf.delta.iter().map(|d| d * d).sum::<f64>() / 2.0;
        debug_assert!(lhs <= rhs + 1e-12, "norm inequality violated: {lhs} > {rhs}");
    }
}

fn run_one_replication(cfg: &ScenarioConfig, rep: usize) -> Result<ReplicationOutcome> {
    let base = rep as u64 * STREAMS_PER_REP;
    let mut rng_design = Rng::new(cfg.seed, base);
    let raw = ar1_raw(&mut rng_design, cfg.n, cfg.p, cfg.rho)?;
    let (x, scales) = normalize_columns_scaled(&raw)?;
    let beta0 = true_beta(&cfg.beta_scheme, cfg.p, cfg.s_true)?;

    let mut rng_noise = Rng::new(cfg.seed, base + 1);
    let eps = gaussian_vector(&mut rng_noise, cfg.n, cfg.sigma)?;
    let signal = x.multiply(&beta0)?;
    let y: Vec<f64> = signal.iter().zip(&eps).map(|(s, e)| s + e).collect();

    let settings = LassoSettings::default();
    let mut rng_cv = Rng::new(cfg.seed, base + 2);
    let pair = fit_both(
        &x,
        &y,
        cfg.folds,
        &mut rng_cv,
        cfg.shared_cv_folds,
        cfg.lambda_l_count,
        cfg.lambda_r_count,
        &settings,
    )?;

    let (pred_lasso, pred_new) = if cfg.out_of_sample {
        // Fresh rows from the same distribution, mapped through the training
        // normalization so the coefficients stay in one coordinate system.
        let mut rng_test = Rng::new(cfg.seed, base + 3);
        let fresh = ar1_raw(&mut rng_test, cfg.n, cfg.p, cfg.rho)?;
        let mut scaled = fresh;
        for (j, &c) in scales.iter().enumerate() {
            scaled.column_mut(j).mapv_inplace(|v| v * c);
        }
        let x_test = DesignMatrix::from_raw(scaled)?;
        (
            signal_error(&x_test, &pair.beta_lasso, &beta0)?,
            signal_error(&x_test, &pair.beta_new, &beta0)?,
        )
    } else {
        (
            signal_error(&x, &pair.beta_lasso, &beta0)?,
            signal_error(&x, &pair.beta_new, &beta0)?,
        )
    };

    #[cfg(debug_assertions)]
    if let Some(lr) = pair.lambda_r_new {
        if pair.lambda_l_new.is_finite() {
            debug_assert_refit_invariants(&x, &y, pair.lambda_l_new, lr, &settings);
        }
    }

    Ok(ReplicationOutcome::Success {
        pred_mse_lasso: pred_lasso,
        pred_mse_new: pred_new,
        est_mse_lasso: Some(estimation_error(&pair.beta_lasso, &beta0)),
        est_mse_new: Some(estimation_error(&pair.beta_new, &beta0)),
        lambda_l_lasso: pair.lambda_l_lasso,
        lambda_l_new: pair.lambda_l_new,
        lambda_r_new: pair.lambda_r_new,
    })
}

/// Runs a full synthetic scenario: fresh design, noise, and response per
/// replication, cross-validated selection for both estimators, aggregated
/// improvement metrics. Deterministic given the config.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ImprovementReport> {
    cfg.validate()?;
    let records: Vec<ReplicationRecord> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| ReplicationRecord {
            replication: rep,
            outcome: match run_one_replication(cfg, rep) {
                Ok(outcome) => outcome,
                Err(e) => ReplicationOutcome::Failed(e.to_string()),
            },
        })
        .collect();

    aggregate(
        cfg.label(),
        if cfg.out_of_sample {
            PredictionMetric::OutOfSampleSignal
        } else {
            PredictionMetric::InSampleSignal
        },
        Some(CellKey {
            n: cfg.n,
            p: cfg.p,
            s_true: cfg.s_true,
            rho: cfg.rho,
            sigma: cfg.sigma,
        }),
        records,
    )
}

fn sample_sd(values: &[f64], mean: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    (values
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / (values.len() - 1) as f64)
        .sqrt()
}

fn improvement(mean_lasso: f64, mean_new: f64) -> (Option<f64>, bool) {
    if mean_new == 0.0 {
        (None, true)
    } else {
        (Some(100.0 * (mean_lasso / mean_new - 1.0)), false)
    }
}

fn aggregate(
    label: String,
    metric: PredictionMetric,
    cell: Option<CellKey>,
    records: Vec<ReplicationRecord>,
) -> Result<ImprovementReport> {
    let mut pred_lasso = Vec::new();
    let mut pred_new = Vec::new();
    let mut est_lasso = Vec::new();
    let mut est_new = Vec::new();
    let mut failures = 0usize;
    for rec in &records {
        match &rec.outcome {
            ReplicationOutcome::Success {
                pred_mse_lasso,
                pred_mse_new,
                est_mse_lasso,
                est_mse_new,
                ..
            } => {
                pred_lasso.push(*pred_mse_lasso);
                pred_new.push(*pred_mse_new);
                if let Some(v) = est_mse_lasso {
                    est_lasso.push(*v);
                }
                if let Some(v) = est_mse_new {
                    est_new.push(*v);
                }
            }
            ReplicationOutcome::Failed(_) => failures += 1,
        }
    }
    if pred_lasso.is_empty() {
        let detail = records
            .iter()
            .find_map(|r| match &r.outcome {
                ReplicationOutcome::Failed(msg) => Some(msg.clone()),
                _ => None,
            })
            .unwrap_or_default();
        return Err(Error::InvalidParameter(format!(
            "all {} replications failed ({label}): {detail}",
            records.len()
        )));
    }

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mean_pred_lasso = mean(&pred_lasso);
    let mean_pred_new = mean(&pred_new);
    let (pred_impr, degenerate_pred) = improvement(mean_pred_lasso, mean_pred_new);

    let (mean_est_lasso, sd_est_lasso, mean_est_new, sd_est_new, est_impr, degenerate_est) =
        if est_lasso.is_empty() {
            (None, None, None, None, None, false)
        } else {
            let ml = mean(&est_lasso);
            let mn = mean(&est_new);
            let (impr, degenerate) = improvement(ml, mn);
            (
                Some(ml),
                Some(sample_sd(&est_lasso, ml)),
                Some(mn),
                Some(sample_sd(&est_new, mn)),
                impr,
                degenerate,
            )
        };

    Ok(ImprovementReport {
        label,
        metric,
        cell,
        mean_pred_mse_lasso: mean_pred_lasso,
        mean_pred_mse_new: mean_pred_new,
        sd_pred_mse_lasso: sample_sd(&pred_lasso, mean_pred_lasso),
        sd_pred_mse_new: sample_sd(&pred_new, mean_pred_new),
        pred_improvement_pct: pred_impr,
        mean_est_mse_lasso: mean_est_lasso,
        mean_est_mse_new: mean_est_new,
        sd_est_mse_lasso: sd_est_lasso,
        sd_est_mse_new: sd_est_new,
        est_improvement_pct: est_impr,
        degenerate_pred,
        degenerate_est,
        per_replication: records,
        failures,
    })
}

/// Semi-synthetic protocol: a fixed design from file, synthetic sparse truth
/// drawn once, fresh noise and train/test split per round.
#[derive(Clone, Debug)]
pub struct SemiSyntheticSpec {
    pub design: Array2<f64>,
    pub design_label: String,
    pub beta_case: BetaCase,
    pub noise_sd: f64,
    pub train_fraction: f64,
    pub rounds: usize,
    pub folds: usize,
    pub seed: u64,
    pub shared_cv_folds: bool,
    pub lambda_l_count: usize,
    pub lambda_r_count: usize,
}

impl SemiSyntheticSpec {
    pub fn new(design: Array2<f64>, beta_case: BetaCase) -> SemiSyntheticSpec {
        SemiSyntheticSpec {
            design,
            design_label: String::from("design"),
            beta_case,
            noise_sd: 1.0,
            train_fraction: 0.7,
            rounds: 100,
            folds: 5,
            seed: 0,
            shared_cv_folds: true,
            lambda_l_count: DEFAULT_LAMBDA_L_COUNT,
            lambda_r_count: DEFAULT_LAMBDA_R_COUNT,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.design.nrows() < 10 {
            return Err(Error::InvalidParameter(format!(
                "semi-synthetic design needs at least 10 rows, got {}",
                self.design.nrows()
            )));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "train fraction must lie strictly inside (0,1), got {}",
                self.train_fraction
            )));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise sd must be >= 0, got {}",
                self.noise_sd
            )));
        }
        if self.rounds == 0 {
            return Err(Error::InvalidParameter("rounds must be at least 1".into()));
        }
        Ok(())
    }
}

/// Splits row indices into a shuffled train/test partition.
fn split_rows(rng: &mut Rng, n: usize, train_fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let n_train = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);
    let train = order[..n_train].to_vec();
    let test = order[n_train..].to_vec();
    (train, test)
}

fn run_semi_round(spec: &SemiSyntheticSpec, beta0: &[f64], round: usize) -> Result<ReplicationOutcome> {
    let n = spec.design.nrows();
    let base = 1 + round as u64 * STREAMS_PER_REP;
    let mut rng_noise = Rng::new(spec.seed, base);
    let eps = gaussian_vector(&mut rng_noise, n, spec.noise_sd)?;
    let mut y = vec![0.0; n];
    for i in 0..n {
        let row = spec.design.row(i);
        y[i] = row.iter().zip(beta0).map(|(x, b)| x * b).sum::<f64>() + eps[i];
    }

    let mut rng_split = Rng::new(spec.seed, base + 1);
    let (train_rows, test_rows) = split_rows(&mut rng_split, n, spec.train_fraction);

    let x_train_raw = spec.design.select(Axis(0), &train_rows);
    let (x_train, scales) = normalize_columns_scaled(&x_train_raw)?;
    let y_train: Vec<f64> = train_rows.iter().map(|&i| y[i]).collect();

    let settings = LassoSettings::default();
    let mut rng_cv = Rng::new(spec.seed, base + 2);
    let pair = fit_both(
        &x_train,
        &y_train,
        spec.folds,
        &mut rng_cv,
        spec.shared_cv_folds,
        spec.lambda_l_count,
        spec.lambda_r_count,
        &settings,
    )?;

    // Map coefficients back to the raw column scale once, then predict.
    let to_raw = |beta: &[f64]| -> Vec<f64> {
        beta.iter().zip(&scales).map(|(b, c)| b * c).collect()
    };
    let beta_lasso_raw = to_raw(&pair.beta_lasso);
    let beta_new_raw = to_raw(&pair.beta_new);

    let test_mse = |beta_raw: &[f64]| -> f64 {
        let mut sse = 0.0;
        for &i in &test_rows {
            let pred: f64 = spec
                .design
                .row(i)
                .iter()
                .zip(beta_raw)
                .map(|(x, b)| x * b)
                .sum();
            let d = y[i] - pred;
            sse += d * d;
        }
        sse / test_rows.len() as f64
    };

    Ok(ReplicationOutcome::Success {
        pred_mse_lasso: test_mse(&beta_lasso_raw),
        pred_mse_new: test_mse(&beta_new_raw),
        est_mse_lasso: Some(estimation_error(&beta_lasso_raw, beta0)),
        est_mse_new: Some(estimation_error(&beta_new_raw, beta0)),
        lambda_l_lasso: pair.lambda_l_lasso,
        lambda_l_new: pair.lambda_l_new,
        lambda_r_new: pair.lambda_r_new,
    })
}

/// Runs the semi-synthetic protocol. The truth is drawn once from the case
/// before any rounds; each round generates fresh noise, a fresh split, and a
/// fresh cross-validation. Reports test-set MSE for both estimators.
pub fn run_semi_synthetic(spec: &SemiSyntheticSpec) -> Result<ImprovementReport> {
    spec.validate()?;
    let mut rng_beta = Rng::new(spec.seed, 0);
    let beta0 = beta_case_semi(spec.beta_case, spec.design.ncols(), &mut rng_beta)?;

    let records: Vec<ReplicationRecord> = (0..spec.rounds)
        .into_par_iter()
        .map(|round| ReplicationRecord {
            replication: round,
            outcome: match run_semi_round(spec, &beta0, round) {
                Ok(outcome) => outcome,
                Err(e) => ReplicationOutcome::Failed(e.to_string()),
            },
        })
        .collect();

    aggregate(
        format!(
            "semi-synthetic {} ({}x{}) case {:?}",
            spec.design_label,
            spec.design.nrows(),
            spec.design.ncols(),
            spec.beta_case
        ),
        PredictionMetric::TestSet,
        None,
        records,
    )
}

/// Real-data protocol: repeated random train/test splits of an observed
/// design and response.
#[derive(Clone, Debug)]
pub struct RealDataSpec {
    pub design: Array2<f64>,
    pub response: Vec<f64>,
    pub label: String,
    pub train_fraction: f64,
    pub rounds: usize,
    pub folds: usize,
    pub seed: u64,
    pub shared_cv_folds: bool,
    pub lambda_l_count: usize,
    pub lambda_r_count: usize,
}

impl RealDataSpec {
    pub fn new(design: Array2<f64>, response: Vec<f64>) -> RealDataSpec {
        RealDataSpec {
            design,
            response,
            label: String::from("real-data"),
            train_fraction: 0.7,
            rounds: 100,
            folds: 5,
            seed: 0,
            shared_cv_folds: true,
            lambda_l_count: DEFAULT_LAMBDA_L_COUNT,
            lambda_r_count: DEFAULT_LAMBDA_R_COUNT,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.response.len() != self.design.nrows() {
            return Err(Error::DimensionMismatch {
                context: "response length".into(),
                expected: self.design.nrows(),
                actual: self.response.len(),
            });
        }
        if self.response.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "response".into(),
            });
        }
        if self.design.nrows() < 10 {
            return Err(Error::InvalidParameter(format!(
                "real-data protocol needs at least 10 rows, got {}",
                self.design.nrows()
            )));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "train fraction must lie strictly inside (0,1), got {}",
                self.train_fraction
            )));
        }
        if self.rounds == 0 {
            return Err(Error::InvalidParameter("rounds must be at least 1".into()));
        }
        Ok(())
    }
}

fn run_real_round(spec: &RealDataSpec, round: usize) -> Result<ReplicationOutcome> {
    let n = spec.design.nrows();
    let p = spec.design.ncols();
    let base = round as u64 * STREAMS_PER_REP;
    let mut rng_split = Rng::new(spec.seed, base);
    let (train_rows, test_rows) = split_rows(&mut rng_split, n, spec.train_fraction);

    // The model carries no intercept; center the training block (and the
    // response) on training means, which is equivalent to an unpenalized
    // intercept and keeps a constant response exactly fittable.
    let col_means: Vec<f64> = (0..p)
        .map(|j| {
            train_rows
                .iter()
                .map(|&i| spec.design[[i, j]])
                .sum::<f64>()
                / train_rows.len() as f64
        })
        .collect();
    let y_mean =
        train_rows.iter().map(|&i| spec.response[i]).sum::<f64>() / train_rows.len() as f64;

    let mut x_train_raw = Array2::<f64>::zeros((train_rows.len(), p));
    for (r, &i) in train_rows.iter().enumerate() {
        for j in 0..p {
            x_train_raw[[r, j]] = spec.design[[i, j]] - col_means[j];
        }
    }
    let y_train: Vec<f64> = train_rows.iter().map(|&i| spec.response[i] - y_mean).collect();

    let (x_train, scales) = normalize_columns_scaled(&x_train_raw)?;

    let settings = LassoSettings::default();
    let mut rng_cv = Rng::new(spec.seed, base + 1);
    let pair = fit_both(
        &x_train,
        &y_train,
        spec.folds,
        &mut rng_cv,
        spec.shared_cv_folds,
        spec.lambda_l_count,
        spec.lambda_r_count,
        &settings,
    )?;

    let test_mse = |beta: &[f64]| -> f64 {
        let mut sse = 0.0;
        for &i in &test_rows {
            let mut pred = y_mean;
            for j in 0..p {
                pred += (spec.design[[i, j]] - col_means[j]) * scales[j] * beta[j];
            }
            let d = spec.response[i] - pred;
            sse += d * d;
        }
        sse / test_rows.len() as f64
    };

    Ok(ReplicationOutcome::Success {
        pred_mse_lasso: test_mse(&pair.beta_lasso),
        pred_mse_new: test_mse(&pair.beta_new),
        est_mse_lasso: None,
        est_mse_new: None,
        lambda_l_lasso: pair.lambda_l_lasso,
        lambda_l_new: pair.lambda_l_new,
        lambda_r_new: pair.lambda_r_new,
    })
}

/// Runs the real-data protocol and reports test-set MSE for both estimators.
pub fn run_real_data(spec: &RealDataSpec) -> Result<ImprovementReport> {
    spec.validate()?;
    let records: Vec<ReplicationRecord> = (0..spec.rounds)
        .into_par_iter()
        .map(|round| ReplicationRecord {
            replication: round,
            outcome: match run_real_round(spec, round) {
                Ok(outcome) => outcome,
                Err(e) => ReplicationOutcome::Failed(e.to_string()),
            },
        })
        .collect();

    aggregate(
        format!(
            "{} ({}x{})",
            spec.label,
            spec.design.nrows(),
            spec.design.ncols()
        ),
        PredictionMetric::TestSet,
        None,
        records,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::new(30, 10, 2, 0.0, 0.5);
        cfg.replications = 3;
        cfg.folds = 3;
        cfg.seed = 11;
        cfg.lambda_l_count = 8;
        cfg.lambda_r_count = 4;
        cfg
    }

    #[test]
    fn ar1_with_zero_rho_is_iid_standard_normal() {
        let n = 6;
        let p = 5;
        let raw = ar1_raw(&mut Rng::new(9, 0), n, p, 0.0).unwrap();
        // the recursion degenerates to the raw draws, in draw order
        let mut rng = Rng::new(9, 0);
        let draws = gaussian_vector(&mut rng, n * p, 1.0).unwrap();
        for i in 0..n {
            for j in 0..p {
                assert_eq!(raw[[i, j]], draws[i * p + j]);
            }
        }
    }

    #[test]
    fn ar1_lag_one_correlation_matches_rho() {
        let n = 5000;
        let raw = ar1_raw(&mut Rng::new(17, 0), n, 3, 0.5).unwrap();
        for j in 0..2 {
            let a = raw.column(j);
            let b = raw.column(j + 1);
            let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            let corr = dot / (na * nb);
            assert!((corr - 0.5).abs() < 0.05, "lag-1 corr {corr}");
        }
    }

    #[test]
    fn ar1_design_is_seed_reproducible_and_normalized() {
        let a = ar1_design(&mut Rng::new(3, 7), 20, 6, 0.5).unwrap();
        let b = ar1_design(&mut Rng::new(3, 7), 20, 6, 0.5).unwrap();
        assert_eq!(a, b);
        assert!(a.is_normalized());
        assert!(ar1_raw(&mut Rng::new(0, 0), 5, 5, 1.0).is_err());
    }

    #[test]
    fn true_beta_schemes() {
        assert_eq!(
            true_beta(&BetaScheme::UnitFirstS, 5, 2).unwrap(),
            vec![1.0, 1.0, 0.0, 0.0, 0.0]
        );
        assert_eq!(true_beta(&BetaScheme::UnitFirstS, 3, 0).unwrap(), vec![0.0; 3]);
        assert!(true_beta(&BetaScheme::UnitFirstS, 3, 4).is_err());
        assert_eq!(
            true_beta(&BetaScheme::Custom(vec![3.0, -1.0]), 2, 0).unwrap(),
            vec![3.0, -1.0]
        );
        assert!(true_beta(&BetaScheme::Custom(vec![3.0, -1.0]), 5, 0).is_err());
    }

    #[test]
    fn beta_cases_match_protocol() {
        let mut rng = Rng::new(5, 0);
        let b1 = beta_case_semi(BetaCase::Case1, 30, &mut rng).unwrap();
        for (j, v) in b1.iter().enumerate() {
            match j {
                0..=4 => assert!((3.0..4.0).contains(v)),
                5..=9 => assert!((1.0..2.0).contains(v)),
                _ => assert_eq!(*v, 0.0),
            }
        }

        let b2 = beta_case_semi(BetaCase::Case2, 15, &mut rng).unwrap();
        assert_eq!(b2[3], 2.5); // 5 / sqrt(4)
        assert_eq!(b2[0], 5.0);
        assert!(b2.iter().skip(10).all(|&v| v == 0.0));

        let b3 = beta_case_semi(BetaCase::Case3, 25, &mut rng).unwrap();
        assert_eq!(b3.iter().filter(|&&v| v != 0.0).count(), 20);
        assert!(b3.iter().take(20).all(|v| (1.0..2.0).contains(v)));

        assert!(beta_case_semi(BetaCase::Case3, 19, &mut rng).is_err());
        assert!(beta_case_semi(BetaCase::Case1, 9, &mut rng).is_err());
    }

    #[test]
    fn beta_case_parse() {
        assert_eq!(BetaCase::parse("1").unwrap(), BetaCase::Case1);
        assert_eq!(BetaCase::parse("case2").unwrap(), BetaCase::Case2);
        assert!(BetaCase::parse("4").is_err());
    }

    #[test]
    fn scenario_is_deterministic_given_seed() {
        let cfg = small_config();
        let a = run_scenario(&cfg).unwrap();
        let b = run_scenario(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.failures, 0);
        // the improvement identity holds exactly on the stored means
        let expected = 100.0 * (a.mean_pred_mse_lasso / a.mean_pred_mse_new - 1.0);
        assert_eq!(a.pred_improvement_pct, Some(expected));
    }

    #[test]
    fn degenerate_scenario_is_flagged_not_infinite() {
        let mut cfg = small_config();
        cfg.sigma = 0.0;
        cfg.s_true = 0;
        let report = run_scenario(&cfg).unwrap();
        assert!(report.degenerate_pred);
        assert_eq!(report.pred_improvement_pct, None);
        assert_eq!(report.mean_pred_mse_lasso, 0.0);
        assert_eq!(report.mean_pred_mse_new, 0.0);
    }

    #[test]
    fn improvement_formula() {
        assert_eq!(improvement(2.0, 1.0), (Some(100.0), false));
        assert_eq!(improvement(1.0, 2.0), (Some(-50.0), false));
        assert_eq!(improvement(1.0, 0.0), (None, true));
    }

    #[test]
    fn scenario_validation() {
        let mut cfg = small_config();
        cfg.rho = 1.5;
        assert!(cfg.validate().is_err());
        cfg = small_config();
        cfg.s_true = 99;
        assert!(cfg.validate().is_err());
        cfg = small_config();
        cfg.replications = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn semi_synthetic_rejects_full_train_fraction_and_reproduces() {
        let design = ar1_raw(&mut Rng::new(1, 0), 30, 25, 0.0).unwrap();
        let mut spec = SemiSyntheticSpec::new(design, BetaCase::Case2);
        spec.rounds = 2;
        spec.folds = 3;
        spec.seed = 4;
        spec.lambda_l_count = 6;
        spec.lambda_r_count = 3;

        let mut bad = spec.clone();
        bad.train_fraction = 1.0;
        assert!(run_semi_synthetic(&bad).is_err());

        let a = run_semi_synthetic(&spec).unwrap();
        let b = run_semi_synthetic(&spec).unwrap();
        assert_eq!(a.mean_pred_mse_lasso, b.mean_pred_mse_lasso);
        assert_eq!(a.mean_pred_mse_new, b.mean_pred_mse_new);
        assert_eq!(a.metric, PredictionMetric::TestSet);
        assert_eq!(a.failures, 0);
    }

    #[test]
    fn real_data_constant_response_predicts_the_constant() {
        let design = ar1_raw(&mut Rng::new(2, 0), 24, 4, 0.0).unwrap();
        let response = vec![3.0; 24];
        let mut spec = RealDataSpec::new(design, response);
        spec.rounds = 2;
        spec.folds = 3;
        spec.seed = 9;
        spec.lambda_l_count = 5;
        spec.lambda_r_count = 3;
        let report = run_real_data(&spec).unwrap();
        assert_eq!(report.failures, 0);
        // both methods fall back to the training mean: zero test error
        assert_eq!(report.mean_pred_mse_lasso, 0.0);
        assert_eq!(report.mean_pred_mse_new, 0.0);
        assert!(report.mean_est_mse_lasso.is_none());
    }

    #[test]
    fn real_data_is_seed_reproducible() {
        let mut rng = Rng::new(88, 0);
        let design = ar1_raw(&mut rng, 40, 6, 0.3).unwrap();
        let beta = vec![1.0, -0.5, 0.0, 0.0, 0.0, 0.0];
        let noise = gaussian_vector(&mut rng, 40, 0.2).unwrap();
        let response: Vec<f64> = (0..40)
            .map(|i| {
                design
                    .row(i)
                    .iter()
                    .zip(&beta)
                    .map(|(x, b)| x * b)
                    .sum::<f64>()
                    + noise[i]
            })
            .collect();
        let mut spec = RealDataSpec::new(design, response);
        spec.rounds = 3;
        spec.folds = 3;
        spec.seed = 123;
        spec.lambda_l_count = 6;
        spec.lambda_r_count = 3;
        let a = run_real_data(&spec).unwrap();
        let b = run_real_data(&spec).unwrap();
        assert_eq!(a, b);
        assert!(a.mean_pred_mse_lasso.is_finite());
        assert!(a.mean_pred_mse_new.is_finite());
    }
}
