//! Sequential Bayes estimation of the time-varying graph weights: Gaussian
//! one-step prediction through the random-walk state equation, a
//! Laplace-approximated filter update found by damped Newton-Raphson, and the
//! per-step marginal log-likelihood approximation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ising::{BinaryPattern, FeatureTable, GraphMatrix};
use crate::linalg;

/// Whether a Gaussian belief is the one-step prediction or the filtered
/// posterior for its time bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateKind {
    Predicted,
    Filtered,
}

/// Gaussian belief over the weight vector at one time bin.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    kind: StateKind,
    time_index: usize,
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
}

impl NetworkState {
    pub fn new(
        kind: StateKind,
        time_index: usize,
        mean: DVector<f64>,
        covariance: DMatrix<f64>,
    ) -> Result<Self> {
        if time_index < 1 {
            return Err(Error::invalid("time index must be at least 1"));
        }
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::dims(format!(
                "covariance is {}x{}, expected {d}x{d}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        if mean.iter().any(|v| !v.is_finite()) || covariance.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("state entries must be finite"));
        }
        if (&covariance - covariance.transpose()).amax() > 1e-9 {
            return Err(Error::numeric("state covariance is not symmetric"));
        }
        if nalgebra::Cholesky::new(covariance.clone()).is_none() {
            return Err(Error::numeric("state covariance is not positive definite"));
        }
        Ok(Self {
            kind,
            time_index,
            mean,
            covariance,
        })
    }

    pub fn kind(&self) -> StateKind {
        self.kind
    }

    pub fn time_index(&self) -> usize {
        self.time_index
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub(crate) fn with_scaled_components(&self, scales: &[f64]) -> Result<Self> {
        let mut mean = self.mean.clone();
        let mut cov = self.covariance.clone();
        for (k, &s) in scales.iter().enumerate() {
            mean[k] *= s;
        }
        for a in 0..scales.len() {
            for b in 0..scales.len() {
                cov[(a, b)] *= scales[a] * scales[b];
            }
        }
        NetworkState::new(self.kind, self.time_index, mean, cov)
    }
}

/// Configuration of the filter: state-noise precision, Gaussian prior for the
/// first bin, and the Newton stopping rule.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    lambda: f64,
    prior_mean: DVector<f64>,
    prior_cov: DMatrix<f64>,
    newton_tol: f64,
    newton_max_iter: usize,
}

/// Default Newton stopping tolerance on the gradient infinity norm.
pub const DEFAULT_NEWTON_TOL: f64 = 1e-8;
/// Default cap on Newton iterations per filter update.
pub const DEFAULT_NEWTON_MAX_ITER: usize = 100;

impl FilterConfig {
    pub fn new(
        lambda: f64,
        prior_mean: DVector<f64>,
        prior_cov: DMatrix<f64>,
        newton_tol: f64,
        newton_max_iter: usize,
    ) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid("lambda must be positive and finite"));
        }
        if !(newton_tol > 0.0 && newton_tol.is_finite()) {
            return Err(Error::invalid("newton_tol must be positive and finite"));
        }
        if newton_max_iter < 1 {
            return Err(Error::invalid("newton_max_iter must be at least 1"));
        }
        let d = prior_mean.len();
        if prior_cov.nrows() != d || prior_cov.ncols() != d {
            return Err(Error::dims("prior covariance shape disagrees with the mean"));
        }
        if (&prior_cov - prior_cov.transpose()).amax() > 1e-9
            || nalgebra::Cholesky::new(prior_cov.clone()).is_none()
        {
            return Err(Error::numeric(
                "prior covariance must be symmetric positive definite",
            ));
        }
        Ok(Self {
            lambda,
            prior_mean,
            prior_cov,
            newton_tol,
            newton_max_iter,
        })
    }

    /// Neutral configuration for `dim` weights: zero prior mean, identity
    /// prior covariance, default Newton rule.
    pub fn with_dim(dim: usize, lambda: f64) -> Result<Self> {
        Self::new(
            lambda,
            DVector::zeros(dim),
            DMatrix::identity(dim, dim),
            DEFAULT_NEWTON_TOL,
            DEFAULT_NEWTON_MAX_ITER,
        )
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn dim(&self) -> usize {
        self.prior_mean.len()
    }

    pub fn newton_tol(&self) -> f64 {
        self.newton_tol
    }

    pub fn newton_max_iter(&self) -> usize {
        self.newton_max_iter
    }

    /// The prior for the first bin, playing the role of the one-step
    /// prediction at t = 1.
    pub fn initial_state(&self) -> Result<NetworkState> {
        NetworkState::new(
            StateKind::Predicted,
            1,
            self.prior_mean.clone(),
            self.prior_cov.clone(),
        )
    }
}

/// Scalar filter settings that broadcast to any weight dimension; convenient
/// for sweeps where the dimension varies per candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSettings {
    pub lambda: f64,
    pub prior_mean: f64,
    pub prior_var: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl FilterSettings {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            prior_mean: 0.0,
            prior_var: 1.0,
            newton_tol: DEFAULT_NEWTON_TOL,
            newton_max_iter: DEFAULT_NEWTON_MAX_ITER,
        }
    }

    pub fn config_for(&self, dim: usize) -> Result<FilterConfig> {
        FilterConfig::new(
            self.lambda,
            DVector::from_element(dim, self.prior_mean),
            DMatrix::from_diagonal(&DVector::from_element(dim, self.prior_var)),
            self.newton_tol,
            self.newton_max_iter,
        )
    }
}

/// Propagate a filtered state through the random-walk state equation: the
/// mean is unchanged and the covariance grows by lambda^-1 I.
pub fn one_step_predict(prev: &NetworkState, lambda: f64) -> Result<NetworkState> {
    if prev.kind() != StateKind::Filtered {
        return Err(Error::invalid("one-step prediction starts from a filtered state"));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("lambda must be positive and finite"));
    }
    let mut cov = prev.covariance.clone();
    let noise = lambda.recip();
    for i in 0..cov.nrows() {
        cov[(i, i)] += noise;
    }
    NetworkState::new(
        StateKind::Predicted,
        prev.time_index + 1,
        prev.mean.clone(),
        cov,
    )
}

fn check_predicted(pred: &NetworkState, graphs: &GraphMatrix) -> Result<()> {
    if pred.kind() != StateKind::Predicted {
        return Err(Error::invalid("expected a predicted state"));
    }
    if pred.dim() != graphs.graph_count() {
        return Err(Error::dims(format!(
            "state has {} weights, graphs have {} columns",
            pred.dim(),
            graphs.graph_count()
        )));
    }
    Ok(())
}

/// Log posterior of the weights at one bin, up to an additive constant:
/// the multi-graph log-likelihood of the observed pattern plus the Gaussian
/// one-step-prediction log-density.
pub fn log_posterior(
    theta: &DVector<f64>,
    x: &BinaryPattern,
    graphs: &GraphMatrix,
    pred: &NetworkState,
) -> Result<f64> {
    check_predicted(pred, graphs)?;
    if x.node_count() != graphs.node_count() {
        return Err(Error::dims("pattern and graphs disagree on the node count"));
    }
    let table = FeatureTable::new(graphs)?;
    let f_obs = table.feature(x.code());
    objective(&table, &f_obs, theta, pred)
}

fn objective(
    table: &FeatureTable,
    f_obs: &DVector<f64>,
    theta: &DVector<f64>,
    pred: &NetworkState,
) -> Result<f64> {
    let psi = table.log_partition(theta)?;
    let diff = theta - &pred.mean;
    let quad = linalg::spd_inv_quadratic(&pred.covariance, &diff, "predicted covariance")?;
    Ok(theta.dot(f_obs) - psi - 0.5 * quad)
}

/// Filter update: Laplace approximation of the posterior at its mode. The
/// mode is found by Newton-Raphson with step halving whenever a full step
/// fails to increase the log posterior; the returned covariance is the
/// inverse of the negated Hessian at the mode.
pub fn filter_update(
    pred: &NetworkState,
    x: &BinaryPattern,
    graphs: &GraphMatrix,
    cfg: &FilterConfig,
) -> Result<NetworkState> {
    if x.node_count() != graphs.node_count() {
        return Err(Error::dims("pattern and graphs disagree on the node count"));
    }
    let table = FeatureTable::new(graphs)?;
    filter_update_with(&table, pred, x.code(), cfg)
}

/// [`filter_update`] against a prebuilt feature table; the online loop reuses
/// one table for as long as the graphs stay unchanged.
pub(crate) fn filter_update_with(
    table: &FeatureTable,
    pred: &NetworkState,
    x_code: u32,
    cfg: &FilterConfig,
) -> Result<NetworkState> {
    if pred.kind() != StateKind::Predicted {
        return Err(Error::invalid("expected a predicted state"));
    }
    if pred.dim() != table.graph_count() {
        return Err(Error::dims(format!(
            "state has {} weights, graphs have {} columns",
            pred.dim(),
            table.graph_count()
        )));
    }
    if cfg.dim() != pred.dim() {
        return Err(Error::dims("config dimension disagrees with the state"));
    }
    let f_obs = table.feature(x_code);
    let w_inv = linalg::spd_inverse(&pred.covariance, "predicted covariance")?;

    let mut theta = pred.mean.clone();
    let mut stats = table.stats(&theta)?;
    let mut obj = theta.dot(&f_obs) - stats.log_partition
        - 0.5 * (&theta - &pred.mean).dot(&(&w_inv * (&theta - &pred.mean)));
    let mut grad_norm = f64::INFINITY;

    let finish = |theta: DVector<f64>, stats: &crate::ising::ProjectedStats| {
        let neg_hessian = &stats.fisher + &w_inv;
        let cov = linalg::symmetrize(&linalg::spd_inverse(&neg_hessian, "filtered covariance")?);
        NetworkState::new(StateKind::Filtered, pred.time_index, theta, cov)
    };

    // Below this gradient norm the iterate is inside the quadratic basin:
    // take pure Newton steps there, since the objective improvements are too
    // small for a line search on f64 values to resolve.
    let basin = 1e-6f64.max(cfg.newton_tol);

    for iteration in 0..=cfg.newton_max_iter {
        let grad = &f_obs - &stats.moments - &w_inv * (&theta - &pred.mean);
        grad_norm = grad.amax();
        if grad_norm < cfg.newton_tol {
            return finish(theta, &stats);
        }
        if iteration == cfg.newton_max_iter {
            break;
        }
        let neg_hessian = &stats.fisher + &w_inv;
        let chol = linalg::spd_cholesky(&neg_hessian, "Newton step")?;
        let step = chol.solve(&grad);

        if grad_norm < basin {
            if step.amax() <= f64::EPSILON * theta.amax().max(1.0) {
                // The remaining step is below the resolution of theta.
                return finish(theta, &stats);
            }
            theta += &step;
            stats = table.stats(&theta)?;
            obj = theta.dot(&f_obs) - stats.log_partition
                - 0.5 * (&theta - &pred.mean).dot(&(&w_inv * (&theta - &pred.mean)));
            continue;
        }

        // Global phase: halve the step until the objective increases.
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let candidate = &theta + alpha * &step;
            let cand_obj = candidate.dot(&f_obs) - table.log_partition(&candidate)?
                - 0.5
                    * (&candidate - &pred.mean)
                        .dot(&(&w_inv * (&candidate - &pred.mean)));
            if cand_obj > obj {
                theta = candidate;
                stats = table.stats(&theta)?;
                obj = cand_obj;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // Strict concavity means a failed line search can only happen at
            // the numerical optimum: no representable step improves the
            // objective. The gradient tolerance itself may be unreachable
            // when the prediction covariance is so small that the quadratic
            // term quantizes more coarsely than the tolerance.
            return finish(theta, &stats);
        }
    }
    Err(Error::NoConvergence {
        iterations: cfg.newton_max_iter,
        grad_norm,
        last_mean: theta.iter().copied().collect(),
    })
}

/// Per-step marginal log-likelihood approximation built from the filtered
/// and predicted states of the same bin.
pub fn marginal_loglik_step(
    filtered: &NetworkState,
    pred: &NetworkState,
    x: &BinaryPattern,
    graphs: &GraphMatrix,
) -> Result<f64> {
    if filtered.kind() != StateKind::Filtered || pred.kind() != StateKind::Predicted {
        return Err(Error::invalid(
            "marginal likelihood needs a filtered and a predicted state",
        ));
    }
    if filtered.time_index != pred.time_index {
        return Err(Error::invalid(
            "filtered and predicted states must share the time bin",
        ));
    }
    if filtered.dim() != pred.dim() || filtered.dim() != graphs.graph_count() {
        return Err(Error::dims("state and graph dimensions disagree"));
    }
    let table = FeatureTable::new(graphs)?;
    marginal_loglik_with(&table, filtered, pred, x.code())
}

pub(crate) fn marginal_loglik_with(
    table: &FeatureTable,
    filtered: &NetworkState,
    pred: &NetworkState,
    x_code: u32,
) -> Result<f64> {
    let f_obs = table.feature(x_code);
    let psi = table.log_partition(&filtered.mean)?;
    let fit_term = filtered.mean.dot(&f_obs) - psi;

    let diff = &filtered.mean - &pred.mean;
    let quad = linalg::spd_inv_quadratic(&pred.covariance, &diff, "predicted covariance")?;

    let log_det_filtered = linalg::spd_log_det(&filtered.covariance, "filtered covariance")?;
    let log_det_pred = linalg::spd_log_det(&pred.covariance, "predicted covariance")?;

    Ok(fit_term - 0.5 * quad + 0.5 * (log_det_filtered - log_det_pred))
}
