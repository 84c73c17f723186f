//! Ground-truth synthetic datasets: fixed graphs, periodic weight schedules,
//! exact per-bin sampling.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ising::{sample_patterns, GraphMatrix, GraphVector};
use crate::raster::BinaryRaster;
use crate::seed::derive_seed;

/// Time series of generative weights, one column per graph, structured in
/// epochs of a fixed length.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSchedule {
    values: DMatrix<f64>,
    epoch_len: usize,
}

impl WeightSchedule {
    pub fn new(values: DMatrix<f64>, epoch_len: usize) -> Result<Self> {
        if epoch_len == 0 {
            return Err(Error::invalid("epoch length must be positive"));
        }
        if values.nrows() == 0 || !values.nrows().is_multiple_of(epoch_len) {
            return Err(Error::invalid(format!(
                "schedule length {} is not a whole number of epochs of {epoch_len}",
                values.nrows()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("schedule values must be finite"));
        }
        Ok(Self { values, epoch_len })
    }

    /// Constant schedule at one weight vector.
    pub fn constant(theta: &DVector<f64>, epoch_len: usize, epochs: usize) -> Result<Self> {
        if epochs == 0 {
            return Err(Error::invalid("at least one epoch required"));
        }
        let values = DMatrix::from_fn(epoch_len * epochs, theta.len(), |_, k| theta[k]);
        Self::new(values, epoch_len)
    }

    /// Piecewise-constant schedule: each row of `levels` is held for
    /// `epoch_len` bins in turn.
    pub fn piecewise_constant(levels: &DMatrix<f64>, epoch_len: usize) -> Result<Self> {
        if levels.nrows() == 0 {
            return Err(Error::invalid("at least one level required"));
        }
        let values = DMatrix::from_fn(levels.nrows() * epoch_len, levels.ncols(), |t, k| {
            levels[(t / epoch_len, k)]
        });
        Self::new(values, epoch_len)
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn graph_count(&self) -> usize {
        self.values.ncols()
    }

    pub fn epoch_len(&self) -> usize {
        self.epoch_len
    }

    pub fn epochs(&self) -> usize {
        self.len() / self.epoch_len
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Weight vector at bin `t`, 1-based.
    pub fn theta_at(&self, t: usize) -> Result<DVector<f64>> {
        if t < 1 || t > self.len() {
            return Err(Error::invalid(format!(
                "time bin {t} out of range 1..={}",
                self.len()
            )));
        }
        Ok(self.values.row(t - 1).transpose())
    }
}

/// Sinusoidal schedule: weight k at bin t (1-based) is
/// baseline + amplitude * sin(2 pi t / epoch_len + phase_k).
pub fn sinusoid_weights(
    epoch_len: usize,
    epochs: usize,
    baseline: f64,
    amplitude: f64,
    phases: &[f64],
) -> Result<WeightSchedule> {
    if epoch_len < 2 {
        return Err(Error::invalid("epoch length must be at least 2"));
    }
    if epochs == 0 {
        return Err(Error::invalid("at least one epoch required"));
    }
    if phases.is_empty() {
        return Err(Error::invalid("at least one phase required"));
    }
    if !baseline.is_finite() || !amplitude.is_finite() || phases.iter().any(|p| !p.is_finite()) {
        return Err(Error::invalid("schedule parameters must be finite"));
    }
    let t_total = epoch_len * epochs;
    let omega = 2.0 * std::f64::consts::PI / epoch_len as f64;
    let values = DMatrix::from_fn(t_total, phases.len(), |t0, k| {
        baseline + amplitude * (omega * (t0 + 1) as f64 + phases[k]).sin()
    });
    WeightSchedule::new(values, epoch_len)
}

/// A generated dataset together with everything needed to score a fit
/// against it.
#[derive(Debug, Clone)]
pub struct GroundTruthBundle {
    pub graphs: GraphMatrix,
    pub schedule: WeightSchedule,
    pub raster: BinaryRaster,
    pub seed: u64,
}

/// Draw one exact sample per bin from the multi-graph model with the
/// schedule's weights. Deterministic given the seed; each bin uses its own
/// derived substream.
pub fn generate_dataset(
    graphs: &GraphMatrix,
    schedule: &WeightSchedule,
    seed: u64,
) -> Result<GroundTruthBundle> {
    if schedule.graph_count() != graphs.graph_count() {
        return Err(Error::dims(format!(
            "schedule drives {} graphs, matrix has {}",
            schedule.graph_count(),
            graphs.graph_count()
        )));
    }
    crate::ising::check_enum_limit(graphs.node_count())?;
    let mut rows = Vec::with_capacity(schedule.len());
    for t in 1..=schedule.len() {
        let theta = schedule.theta_at(t)?;
        let pattern = sample_patterns(&theta, graphs, 1, derive_seed(seed, t as u64))
            .map_err(|e| e.at_time(t))?
            .pop()
            .expect("one sample requested");
        rows.push(pattern.bits().to_vec());
    }
    Ok(GroundTruthBundle {
        graphs: graphs.clone(),
        schedule: schedule.clone(),
        raster: BinaryRaster::from_rows(&rows, None)?,
        seed,
    })
}

/// The two 9-node demonstration graphs on a 3x3 pixel grid. Under either
/// single graph the most probable pattern is a plus sign or a letter T;
/// every column is scaled to unit sample variance.
///
/// Grid numbering (1-based, row major):
/// ```text
/// 1 2 3
/// 4 5 6
/// 7 8 9
/// ```
pub fn plus_t_graphs() -> GraphMatrix {
    let build = |on: &[usize], strokes: &[(usize, usize)]| -> GraphVector {
        let mut g = GraphVector::zeros(9);
        for i in 1..=9 {
            let bias = if on.contains(&i) { 1.0 } else { -1.0 };
            g.set_bias(i, bias).expect("valid node id");
        }
        for i in 1..=9usize {
            for j in (i + 1)..=9 {
                let coupling = if strokes.contains(&(i, j)) { 0.8 } else { -0.2 };
                g.set_coupling(i, j, coupling).expect("valid pair");
            }
        }
        g
    };
    let plus = build(&[2, 4, 5, 6, 8], &[(2, 5), (4, 5), (5, 6), (5, 8)]);
    let tee = build(&[1, 2, 3, 5, 8], &[(1, 2), (2, 3), (2, 5), (5, 8)]);
    let graphs = GraphMatrix::from_columns(&[plus, tee]).expect("consistent columns");

    // Unit column variance so generative weights live on the same scale as
    // a fit whose columns are rescaled every bin.
    let d = graphs.param_dim();
    let mut values = graphs.values().clone();
    for k in 0..2 {
        let col = values.column(k);
        let mean = col.sum() / d as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (d as f64 - 1.0);
        values.column_mut(k).scale_mut(var.sqrt().recip());
    }
    GraphMatrix::new(9, values).expect("rescaled columns stay valid")
}

/// Code of the most probable pattern under a single stationary graph.
pub fn most_probable_pattern(graph: &GraphVector) -> Result<u32> {
    let probs = crate::ising::pattern_probabilities(graph)?;
    Ok(probs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(code, _)| code as u32)
        .expect("at least one pattern"))
}
