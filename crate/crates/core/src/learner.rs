//! Online maximum-likelihood learning of the graph matrix by stochastic
//! gradient ascent on the per-step expected complete-data log-likelihood,
//! plus the full online loop combining it with the sequential Bayes filter.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::filter::{one_step_predict, FilterConfig, NetworkState};
use crate::ising::{feature_vector, moments, BinaryPattern, GraphMatrix, GraphVector};
use crate::linalg;
use crate::raster::BinaryRaster;
use crate::seed::derive_seed;
use crate::trace::{FitRecord, FitTrace};

/// Entrywise magnitude cap applied to the gradient before each update.
pub const GRADIENT_CLIP: f64 = 1e3;

/// Configuration of the online graph learner.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    /// Learning rate for the graph update. Zero disables learning, which
    /// turns the run into pure filtering.
    pub epsilon: f64,
    /// Posterior samples for the gradient expectation; 0 means a single
    /// plug-in evaluation at the filtered mean.
    pub mc_samples: usize,
    /// Rescale every graph column to unit variance after each update.
    pub scale_columns: bool,
    /// When rescaling, counter-scale the weight state so the combined graph
    /// is preserved.
    pub compensate_state: bool,
    /// Base seed for graph initialization and posterior sampling.
    pub seed: u64,
    /// Store a graph snapshot every this many bins.
    pub snapshot_every: Option<usize>,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            mc_samples: 100,
            scale_columns: true,
            compensate_state: true,
            seed: 0,
            snapshot_every: None,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid("epsilon must be finite and non-negative"));
        }
        if self.snapshot_every == Some(0) {
            return Err(Error::invalid("snapshot interval must be positive"));
        }
        Ok(())
    }
}

/// Initial graphs for a run: an explicit matrix or a seed for i.i.d.
/// standard-normal entries.
#[derive(Debug, Clone)]
pub enum GraphInit {
    Matrix(GraphMatrix),
    Seed(u64),
}

/// Output of one online run.
#[derive(Debug, Clone)]
pub struct OnlineResult {
    pub trace: FitTrace,
    pub final_graphs: GraphMatrix,
    pub graph_snapshots: Vec<(usize, GraphMatrix)>,
}

/// Everything the online loop produced for one bin; handed to observers for
/// diagnostics and invariant checks.
pub struct StepView<'a> {
    pub time_index: usize,
    pub predicted: &'a NetworkState,
    pub filtered: &'a NetworkState,
    pub graphs: &'a GraphMatrix,
    pub gradient: &'a DMatrix<f64>,
}

/// Gradient of the per-step expected complete-data log-likelihood with
/// respect to the graph matrix, averaged over explicit weight samples:
/// mean over samples of (F(x) - eta(J theta)) theta'.
pub fn q_gradient_at(
    x: &BinaryPattern,
    thetas: &[DVector<f64>],
    graphs: &GraphMatrix,
) -> Result<DMatrix<f64>> {
    if thetas.is_empty() {
        return Err(Error::invalid("at least one weight sample required"));
    }
    if x.node_count() != graphs.node_count() {
        return Err(Error::dims("pattern and graphs disagree on the node count"));
    }
    let fx = feature_vector(x);
    let mut grad = DMatrix::zeros(graphs.param_dim(), graphs.graph_count());
    for theta in thetas {
        let eta = moments(&graphs.combine(theta)?)?;
        grad += (&fx - eta.values()) * theta.transpose();
    }
    Ok(grad / thetas.len() as f64)
}

/// The sampled objective whose gradient [`q_gradient_at`] computes: mean over
/// samples of theta'J'F(x) - psi(J theta).
pub fn sampled_q_objective(
    x: &BinaryPattern,
    thetas: &[DVector<f64>],
    graphs: &GraphMatrix,
) -> Result<f64> {
    if thetas.is_empty() {
        return Err(Error::invalid("at least one weight sample required"));
    }
    let fx = feature_vector(x);
    let mut total = 0.0;
    for theta in thetas {
        let combined = graphs.combine(theta)?;
        total += combined.values().dot(&fx) - crate::ising::log_partition(&combined)?;
    }
    Ok(total / thetas.len() as f64)
}

/// Draw the weight samples the gradient expectation uses: `mc_samples` draws
/// from the filtered Gaussian (per-step substream of `seed`), or the plain
/// filtered mean when `mc_samples` is 0.
pub fn posterior_samples(
    filtered: &NetworkState,
    mc_samples: usize,
    seed: u64,
) -> Result<Vec<DVector<f64>>> {
    if mc_samples == 0 {
        return Ok(vec![filtered.mean().clone()]);
    }
    let chol = Cholesky::new(filtered.covariance().clone())
        .ok_or_else(|| Error::numeric("filtered covariance is not positive definite"))?;
    let l = chol.l();
    let d = filtered.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, filtered.time_index() as u64));
    let mut out = Vec::with_capacity(mc_samples);
    for _ in 0..mc_samples {
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        out.push(filtered.mean() + &l * z);
    }
    Ok(out)
}

/// Per-step gradient of the expected complete-data log-likelihood, with the
/// expectation taken under the filtered state per the learner configuration.
/// Deterministic given the seed and the state's time index.
pub fn q_gradient(
    x: &BinaryPattern,
    filtered: &NetworkState,
    graphs: &GraphMatrix,
    cfg: &LearnerConfig,
) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    if filtered.dim() != graphs.graph_count() {
        return Err(Error::dims("state and graphs disagree on the graph count"));
    }
    let thetas = posterior_samples(filtered, cfg.mc_samples, cfg.seed)?;
    q_gradient_at(x, &thetas, graphs)
}

/// Gradient-ascent update of the graph matrix.
pub fn update_graphs(
    graphs: &GraphMatrix,
    gradient: &DMatrix<f64>,
    epsilon: f64,
) -> Result<GraphMatrix> {
    if gradient.nrows() != graphs.param_dim() || gradient.ncols() != graphs.graph_count() {
        return Err(Error::dims("gradient shape disagrees with the graphs"));
    }
    if gradient.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("gradient entries must be finite"));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid("epsilon must be finite and non-negative"));
    }
    GraphMatrix::new(graphs.node_count(), graphs.values() + epsilon * gradient)
}

/// Rescale every graph column to unit sample variance (denominator d - 1).
/// With `compensate`, the state is counter-scaled so the combined graph
/// J theta is preserved; without it the state passes through unchanged.
pub fn rescale_columns(
    graphs: &GraphMatrix,
    state: &NetworkState,
    compensate: bool,
) -> Result<(GraphMatrix, NetworkState)> {
    let d = graphs.param_dim();
    if d < 2 {
        return Err(Error::invalid(
            "column variance needs at least two graph entries",
        ));
    }
    if state.dim() != graphs.graph_count() {
        return Err(Error::dims("state and graphs disagree on the graph count"));
    }
    let mut scales = Vec::with_capacity(graphs.graph_count());
    let mut values = graphs.values().clone();
    for k in 0..graphs.graph_count() {
        let col = values.column(k);
        let mean = col.sum() / d as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (d as f64 - 1.0);
        if var <= f64::MIN_POSITIVE {
            return Err(Error::DegenerateColumn { column: k });
        }
        let s = var.sqrt();
        values.column_mut(k).scale_mut(s.recip());
        scales.push(s);
    }
    let rescaled = GraphMatrix::new(graphs.node_count(), values)?;
    let new_state = if compensate {
        state.with_scaled_components(&scales)?
    } else {
        state.clone()
    };
    Ok((rescaled, new_state))
}

/// Cosine similarity of two graphs. The scale-free stand-in for the
/// correlation between a fitted and a reference column.
pub fn column_correlation(a: &GraphVector, b: &GraphVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::dims("graph vectors differ in length"));
    }
    let (na, nb) = (a.values().norm(), b.values().norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::invalid("correlation of a zero graph is undefined"));
    }
    Ok((a.values().dot(b.values()) / (na * nb)).clamp(-1.0, 1.0))
}

/// One matched pair from [`match_graph_columns`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnMatch {
    pub learned: usize,
    pub reference: usize,
    pub correlation: f64,
}

/// Greedy one-to-one assignment of learned columns to reference columns by
/// correlation magnitude; reports the signed correlation of each pair.
pub fn match_graph_columns(
    learned: &GraphMatrix,
    reference: &GraphMatrix,
) -> Result<Vec<ColumnMatch>> {
    if learned.param_dim() != reference.param_dim() {
        return Err(Error::dims("graph matrices differ in parameter length"));
    }
    let scores = DMatrix::from_fn(learned.graph_count(), reference.graph_count(), |i, j| {
        column_correlation(&learned.column(i).unwrap(), &reference.column(j).unwrap())
            .unwrap_or(0.0)
    });
    Ok(linalg::greedy_abs_assignment(&scores)
        .into_iter()
        .map(|(i, j)| ColumnMatch {
            learned: i,
            reference: j,
            correlation: scores[(i, j)],
        })
        .collect())
}

fn clip_gradient(gradient: &mut DMatrix<f64>, clip_count: &mut usize) {
    for v in gradient.iter_mut() {
        if v.abs() > GRADIENT_CLIP {
            if *clip_count == 0 {
                log::warn!(
                    "gradient entry {v:.3e} clipped to magnitude {GRADIENT_CLIP:e}; \
                     further clips this run are counted silently"
                );
            }
            *clip_count += 1;
            *v = v.signum() * GRADIENT_CLIP;
        }
    }
}

/// The full online loop. Per bin: filter the weights under the current
/// graphs, record the trace row, take one stochastic gradient step on the
/// graphs, optionally rescale columns, then advance the prediction.
/// Deterministic given the data, seeds and configuration.
pub fn run_online(
    data: &BinaryRaster,
    graph_count: usize,
    fcfg: &FilterConfig,
    lcfg: &LearnerConfig,
    init: GraphInit,
) -> Result<OnlineResult> {
    run_online_observed(data, graph_count, fcfg, lcfg, init, |_| {})
}

/// [`run_online`] with a per-bin observer hook for diagnostics.
pub fn run_online_observed(
    data: &BinaryRaster,
    graph_count: usize,
    fcfg: &FilterConfig,
    lcfg: &LearnerConfig,
    init: GraphInit,
    mut observer: impl FnMut(StepView<'_>),
) -> Result<OnlineResult> {
    lcfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyRaster);
    }
    let n = data.node_count();
    crate::ising::check_enum_limit(n)?;
    if fcfg.dim() != graph_count {
        return Err(Error::dims(format!(
            "filter config is for {} weights, requested {graph_count} graphs",
            fcfg.dim()
        )));
    }

    let mut graphs = match init {
        GraphInit::Matrix(m) => {
            if m.node_count() != n || m.graph_count() != graph_count {
                return Err(Error::dims("initial graphs disagree with data or graph count"));
            }
            m
        }
        GraphInit::Seed(seed) => GraphMatrix::random_gaussian(n, graph_count, seed)?,
    };

    let mut trace = FitTrace::new(graph_count);
    let mut snapshots = Vec::new();
    let mut pred = fcfg.initial_state()?;
    let mut clip_count = 0usize;
    // One feature table per distinct graph matrix; with learning off and no
    // rescaling the graphs never change and the table is built once.
    let mut table = crate::ising::FeatureTable::new(&graphs)?;
    let graphs_static = lcfg.epsilon == 0.0 && !lcfg.scale_columns;

    for t in 1..=data.len() {
        let x = data.pattern(t - 1).map_err(|e| e.at_time(t))?;
        let filtered = crate::filter::filter_update_with(&table, &pred, x.code(), fcfg)
            .map_err(|e| e.at_time(t))?;
        let loglik = crate::filter::marginal_loglik_with(&table, &filtered, &pred, x.code())
            .map_err(|e| e.at_time(t))?;
        trace.push(FitRecord {
            time_index: t,
            weight_mean: filtered.mean().clone(),
            weight_var: filtered.covariance().diagonal(),
            loglik,
        })?;

        let mut gradient = if lcfg.epsilon == 0.0 {
            DMatrix::zeros(graphs.param_dim(), graph_count)
        } else {
            q_gradient(&x, &filtered, &graphs, lcfg).map_err(|e| e.at_time(t))?
        };
        clip_gradient(&mut gradient, &mut clip_count);

        observer(StepView {
            time_index: t,
            predicted: &pred,
            filtered: &filtered,
            graphs: &graphs,
            gradient: &gradient,
        });

        let mut next_graphs = update_graphs(&graphs, &gradient, lcfg.epsilon)
            .map_err(|e| e.at_time(t))?;
        let mut carry = filtered;
        if lcfg.scale_columns {
            let (rescaled, state) =
                rescale_columns(&next_graphs, &carry, lcfg.compensate_state)
                    .map_err(|e| e.at_time(t))?;
            next_graphs = rescaled;
            carry = state;
        }
        if let Some(every) = lcfg.snapshot_every {
            if t % every == 0 {
                snapshots.push((t, next_graphs.clone()));
            }
        }
        if !graphs_static {
            table = crate::ising::FeatureTable::new(&next_graphs).map_err(|e| e.at_time(t))?;
        }
        graphs = next_graphs;
        pred = one_step_predict(&carry, fcfg.lambda()).map_err(|e| e.at_time(t))?;
    }

    if clip_count > 0 {
        log::warn!("{clip_count} gradient entries were clipped during the run");
    }
    Ok(OnlineResult {
        trace,
        final_graphs: graphs,
        graph_snapshots: snapshots,
    })
}
