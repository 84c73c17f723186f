//! Model comparison across graph counts: windowed likelihoods, AIC, candidate
//! sweeps, the time-dependent full Ising baseline, and a PCA baseline.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::filter::FilterSettings;
use crate::ising::{param_dim, GraphMatrix, GraphVector};
use crate::learner::{
    column_correlation, run_online, GraphInit, LearnerConfig, OnlineResult,
};
use crate::linalg;
use crate::raster::BinaryRaster;
use crate::trace::FitTrace;

/// Evaluation window for the AIC log-likelihood sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalWindow {
    /// The last `epoch_len` bins.
    LastEpoch { epoch_len: usize },
    /// All bins after the midpoint.
    LatterHalf,
}

impl fmt::Display for EvalWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalWindow::LastEpoch { epoch_len } => write!(f, "last-epoch({epoch_len})"),
            EvalWindow::LatterHalf => write!(f, "latter-half"),
        }
    }
}

/// Per-epoch averages of the per-step marginal log-likelihoods. A trailing
/// partial epoch is dropped with a warning.
pub fn epoch_average_loglik(trace: &FitTrace, epoch_len: usize) -> Result<Vec<f64>> {
    if epoch_len == 0 {
        return Err(Error::invalid("epoch length must be positive"));
    }
    let logliks = trace.logliks();
    let epochs = logliks.len() / epoch_len;
    if !logliks.len().is_multiple_of(epoch_len) {
        log::warn!(
            "dropping a trailing partial epoch of {} bins",
            logliks.len() % epoch_len
        );
    }
    Ok((0..epochs)
        .map(|r| logliks[r * epoch_len..(r + 1) * epoch_len].iter().sum::<f64>() / epoch_len as f64)
        .collect())
}

/// Sum of the per-step log-likelihoods over the evaluation window.
pub fn window_loglik(trace: &FitTrace, window: EvalWindow) -> Result<f64> {
    let logliks = trace.logliks();
    if logliks.is_empty() {
        return Err(Error::invalid("trace is empty"));
    }
    let start = match window {
        EvalWindow::LastEpoch { epoch_len } => {
            if epoch_len == 0 || epoch_len > logliks.len() {
                return Err(Error::invalid(format!(
                    "window of {epoch_len} bins does not fit a trace of {}",
                    logliks.len()
                )));
            }
            logliks.len() - epoch_len
        }
        EvalWindow::LatterHalf => logliks.len() / 2,
    };
    Ok(logliks[start..].iter().sum())
}

/// Akaike information criterion: -2 l + 2 m. Smaller is better.
pub fn aic(window_loglik: f64, free_params: usize) -> f64 {
    assert!(free_params >= 1, "free parameter count must be positive");
    -2.0 * window_loglik + 2.0 * free_params as f64
}

/// One candidate's entry in a [`SelectionReport`].
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRow {
    pub graph_count: usize,
    pub free_params: usize,
    pub window_loglik: Option<f64>,
    pub aic: Option<f64>,
    pub error: Option<String>,
}

/// Outcome of a candidate sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionReport {
    pub rows: Vec<SelectionRow>,
    pub chosen: Option<usize>,
    pub window: EvalWindow,
}

impl fmt::Display for SelectionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>4} {:>8} {:>16} {:>16}", "D", "m", "loglik", "AIC")?;
        for row in &self.rows {
            match (row.window_loglik, row.aic) {
                (Some(l), Some(a)) => writeln!(
                    f,
                    "{:>4} {:>8} {:>16.4} {:>16.4}",
                    row.graph_count, row.free_params, l, a
                )?,
                _ => writeln!(
                    f,
                    "{:>4} {:>8} {:>16} {:>16}  # {}",
                    row.graph_count,
                    row.free_params,
                    "-",
                    "-",
                    row.error.as_deref().unwrap_or("failed")
                )?,
            }
        }
        match self.chosen {
            Some(d) => writeln!(f, "chosen D = {d} (window: {})", self.window),
            None => writeln!(f, "no candidate completed (window: {})", self.window),
        }
    }
}

/// Fit every candidate graph count with identical seeds and settings, score
/// each by windowed AIC, and pick the argmin (ties to the smaller count).
/// Per-candidate failures are recorded in the report without aborting the
/// other candidates.
pub fn sweep(
    data: &BinaryRaster,
    candidates: &[usize],
    settings: &FilterSettings,
    lcfg: &LearnerConfig,
    window: EvalWindow,
) -> Result<SelectionReport> {
    if candidates.is_empty() {
        return Err(Error::invalid("at least one candidate graph count required"));
    }
    let n = data.node_count();
    let m_per_graph = param_dim(n);

    let mut rows: Vec<Option<SelectionRow>> = candidates.iter().map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut handles = Vec::with_capacity(candidates.len());
        for &d_graphs in candidates {
            handles.push(scope.spawn(move || -> SelectionRow {
                let free_params = d_graphs * m_per_graph;
                let fitted = settings
                    .config_for(d_graphs)
                    .and_then(|fcfg| {
                        run_online(data, d_graphs, &fcfg, lcfg, GraphInit::Seed(lcfg.seed))
                    })
                    .and_then(|result| window_loglik(&result.trace, window));
                match fitted {
                    Ok(loglik) => SelectionRow {
                        graph_count: d_graphs,
                        free_params,
                        window_loglik: Some(loglik),
                        aic: Some(aic(loglik, free_params)),
                        error: None,
                    },
                    Err(e) => SelectionRow {
                        graph_count: d_graphs,
                        free_params,
                        window_loglik: None,
                        aic: None,
                        error: Some(e.to_string()),
                    },
                }
            }));
        }
        for (slot, handle) in rows.iter_mut().zip(handles) {
            *slot = Some(handle.join().expect("candidate thread panicked"));
        }
    });
    let rows: Vec<SelectionRow> = rows.into_iter().map(|r| r.expect("row filled")).collect();

    let chosen = rows
        .iter()
        .filter_map(|r| r.aic.map(|a| (a, r.graph_count)))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, d)| d);

    Ok(SelectionReport {
        rows,
        chosen,
        window,
    })
}

/// Fit the time-dependent full Ising model: the filter over all d natural
/// parameters with the identity graph matrix and no graph learning. The AIC
/// free-parameter count for this model is d.
///
/// Memory grows as 2^N x d, so this is practical only well below the
/// enumeration cap.
pub fn fit_full_model(data: &BinaryRaster, settings: &FilterSettings) -> Result<FitTrace> {
    let n = data.node_count();
    crate::ising::check_enum_limit(n)?;
    let d = param_dim(n);
    let fcfg = settings.config_for(d)?;
    let lcfg = LearnerConfig {
        epsilon: 0.0,
        mc_samples: 0,
        scale_columns: false,
        compensate_state: false,
        seed: 0,
        snapshot_every: None,
    };
    let init = GraphInit::Matrix(GraphMatrix::identity(n)?);
    run_online(data, d, &fcfg, &lcfg, init).map(|result: OnlineResult| result.trace)
}

/// Principal components of a trace of filtered means.
#[derive(Debug, Clone)]
pub struct PcaResult {
    /// Explained variances, non-increasing.
    pub variances: Vec<f64>,
    /// Unit-norm components, one column each, ordered like `variances`.
    pub components: DMatrix<f64>,
}

/// Top principal components of the T x d matrix of filtered means. Requests
/// beyond the numerical rank are truncated with a warning.
pub fn pca_components(trace: &FitTrace, max_components: usize) -> Result<PcaResult> {
    if trace.is_empty() {
        return Err(Error::invalid("trace is empty"));
    }
    let d = trace.graph_count();
    if max_components == 0 || max_components > d {
        return Err(Error::invalid(format!(
            "component count must lie in 1..={d}"
        )));
    }
    if trace.len() < 2 {
        return Err(Error::invalid("need at least two trace rows"));
    }
    let mut x = trace.means_matrix();
    for k in 0..d {
        let mean = x.column(k).sum() / x.nrows() as f64;
        x.column_mut(k).add_scalar_mut(-mean);
    }
    let cov = x.transpose() * &x / (x.nrows() as f64 - 1.0);
    let eig = nalgebra::SymmetricEigen::new(linalg::symmetrize(&cov));

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let max_eigen = eig.eigenvalues[order[0]].max(0.0);
    let rank = order
        .iter()
        .take_while(|&&i| eig.eigenvalues[i] > max_eigen * 1e-12 && eig.eigenvalues[i] > 0.0)
        .count();
    let keep = max_components.min(rank);
    if keep < max_components {
        log::warn!(
            "trace covariance has rank {rank}; returning {keep} of {max_components} components"
        );
    }
    if keep == 0 {
        return Err(Error::numeric("trace has no variance to decompose"));
    }
    let variances: Vec<f64> = order[..keep].iter().map(|&i| eig.eigenvalues[i]).collect();
    let components = DMatrix::from_fn(d, keep, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(PcaResult {
        variances,
        components,
    })
}

/// PCA baseline: extract the top components of a full-model trace and score
/// each against the reference graph columns by greedy best |correlation|
/// assignment without reuse. Returns one |correlation| per component.
pub fn pca_baseline(
    trace: &FitTrace,
    components: usize,
    reference: &GraphMatrix,
) -> Result<Vec<f64>> {
    if trace.graph_count() != reference.param_dim() {
        return Err(Error::dims(
            "trace dimension disagrees with the reference parameter length; \
             the PCA baseline expects a full-model trace",
        ));
    }
    let pca = pca_components(trace, components)?;
    let n = reference.node_count();
    let keep = pca.components.ncols();

    let scores = DMatrix::from_fn(keep, reference.graph_count(), |i, j| {
        let pc = GraphVector::new(n, pca.components.column(i).into_owned())
            .expect("unit-norm component is a valid graph");
        match reference.column(j) {
            Ok(col) => column_correlation(&pc, &col).unwrap_or(0.0),
            Err(_) => 0.0,
        }
    });
    let assigned = linalg::greedy_abs_assignment(&scores);
    let mut out = vec![0.0; keep];
    for (i, j) in assigned {
        out[i] = scores[(i, j)].abs();
    }
    if keep > reference.graph_count() {
        log::warn!(
            "{} components but only {} reference columns; extra components score 0",
            keep,
            reference.graph_count()
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::FilterConfig;
    use crate::trace::FitRecord;
    use nalgebra::DVector;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trace_from_logliks(values: &[f64]) -> FitTrace {
        let mut trace = FitTrace::new(1);
        for (t, &v) in values.iter().enumerate() {
            trace
                .push(FitRecord {
                    time_index: t + 1,
                    weight_mean: DVector::from_vec(vec![v]),
                    weight_var: DVector::from_vec(vec![0.1]),
                    loglik: v,
                })
                .unwrap();
        }
        trace
    }

    #[test]
    fn epoch_average_examples() {
        let trace = trace_from_logliks(&[1.0, 3.0, 5.0, 7.0]);
        assert_eq!(epoch_average_loglik(&trace, 2).unwrap(), vec![2.0, 6.0]);

        let constant = trace_from_logliks(&[0.7; 9]);
        for avg in epoch_average_loglik(&constant, 3).unwrap() {
            assert_abs_diff_eq!(avg, 0.7, epsilon = 1e-15);
        }

        // Trailing partial epoch dropped.
        let trace = trace_from_logliks(&[1.0, 1.0, 1.0, 9.0]);
        assert_eq!(epoch_average_loglik(&trace, 3).unwrap().len(), 1);
        assert!(epoch_average_loglik(&trace, 0).is_err());
    }

    #[test]
    fn epoch_average_matches_independent_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let values: Vec<f64> = (0..60).map(|_| rng.random::<f64>() - 0.5).collect();
        let trace = trace_from_logliks(&values);
        let averages = epoch_average_loglik(&trace, 15).unwrap();
        for (r, avg) in averages.iter().enumerate() {
            let acc: f64 = values[r * 15..(r + 1) * 15].iter().sum();
            assert_abs_diff_eq!(*avg, acc / 15.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn aic_examples() {
        assert_eq!(aic(0.0, 5), 10.0);
        assert_eq!(aic(-13641.0, 45), 27372.0);
        assert_eq!(2 * param_dim(9), 90);
    }

    #[test]
    fn aic_monotonicity() {
        assert!(aic(-10.0, 3) > aic(-9.0, 3));
        assert!(aic(-10.0, 4) > aic(-10.0, 3));
    }

    #[test]
    fn window_selection() {
        let trace = trace_from_logliks(&[1.0, 2.0, 3.0, 4.0]);
        assert_abs_diff_eq!(
            window_loglik(&trace, EvalWindow::LastEpoch { epoch_len: 2 }).unwrap(),
            7.0
        );
        assert_abs_diff_eq!(window_loglik(&trace, EvalWindow::LatterHalf).unwrap(), 7.0);
        let odd = trace_from_logliks(&[1.0, 2.0, 3.0]);
        assert_abs_diff_eq!(window_loglik(&odd, EvalWindow::LatterHalf).unwrap(), 5.0);
        assert!(window_loglik(&trace, EvalWindow::LastEpoch { epoch_len: 9 }).is_err());
    }

    fn small_data(seed: u64) -> BinaryRaster {
        let graphs = crate::ising::GraphMatrix::random_gaussian(3, 2, seed).unwrap();
        let schedule = crate::synth::sinusoid_weights(
            30,
            2,
            0.5,
            0.5,
            &[0.0, std::f64::consts::PI],
        )
        .unwrap();
        crate::synth::generate_dataset(&graphs, &schedule, seed)
            .unwrap()
            .raster
    }

    #[test]
    fn sweep_single_candidate_and_determinism() {
        let data = small_data(2);
        let settings = FilterSettings::new(100.0);
        let lcfg = LearnerConfig {
            epsilon: 1e-3,
            mc_samples: 0,
            seed: 5,
            ..LearnerConfig::default()
        };
        let report = sweep(
            &data,
            &[2],
            &settings,
            &lcfg,
            EvalWindow::LastEpoch { epoch_len: 30 },
        )
        .unwrap();
        assert_eq!(report.chosen, Some(2));
        assert_eq!(report.rows[0].free_params, 2 * param_dim(3));

        let again = sweep(
            &data,
            &[2],
            &settings,
            &lcfg,
            EvalWindow::LastEpoch { epoch_len: 30 },
        )
        .unwrap();
        assert_eq!(report.rows[0].aic, again.rows[0].aic);
    }

    #[test]
    fn sweep_choice_is_order_invariant_and_records_failures() {
        let data = small_data(4);
        let settings = FilterSettings::new(100.0);
        let lcfg = LearnerConfig {
            epsilon: 1e-3,
            mc_samples: 0,
            seed: 1,
            ..LearnerConfig::default()
        };
        // Candidate 7 exceeds d = 6 and must fail without sinking the sweep.
        let window = EvalWindow::LatterHalf;
        let fwd = sweep(&data, &[1, 2, 7], &settings, &lcfg, window).unwrap();
        let rev = sweep(&data, &[7, 2, 1], &settings, &lcfg, window).unwrap();
        assert_eq!(fwd.chosen, rev.chosen);
        assert!(fwd.rows.iter().any(|r| r.error.is_some()));
        let table = fwd.to_string();
        assert!(table.contains("chosen D"));
    }

    #[test]
    fn full_model_is_pure_filtering_with_identity_graphs() {
        let data = small_data(6);
        let settings = FilterSettings::new(100.0);
        let full = fit_full_model(&data, &settings).unwrap();

        // Step-for-step manual filter recursion over the identity graphs.
        let d = param_dim(3);
        let fcfg: FilterConfig = settings.config_for(d).unwrap();
        let identity = crate::ising::GraphMatrix::identity(3).unwrap();
        let mut pred = fcfg.initial_state().unwrap();
        for (t0, rec) in full.records().iter().enumerate() {
            let x = data.pattern(t0).unwrap();
            let filtered =
                crate::filter::filter_update(&pred, &x, &identity, &fcfg).unwrap();
            let loglik =
                crate::filter::marginal_loglik_step(&filtered, &pred, &x, &identity).unwrap();
            assert_eq!(rec.weight_mean, *filtered.mean());
            assert_eq!(rec.weight_var, filtered.covariance().diagonal());
            assert_eq!(rec.loglik, loglik);
            pred = crate::filter::one_step_predict(&filtered, fcfg.lambda()).unwrap();
        }

        // And the run_online route with learning disabled is the same path.
        let lcfg = LearnerConfig {
            epsilon: 0.0,
            mc_samples: 0,
            scale_columns: false,
            compensate_state: false,
            seed: 0,
            snapshot_every: None,
        };
        let manual = run_online(
            &data,
            d,
            &fcfg,
            &lcfg,
            GraphInit::Matrix(identity),
        )
        .unwrap();
        assert_eq!(full.records(), manual.trace.records());
    }

    #[test]
    fn full_model_recovers_stationary_parameters() {
        // Stationary data from a fixed graph: the time-averaged full-model
        // MAP over the last quarter should sit near the generative graph.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let graphs = crate::ising::GraphMatrix::random_gaussian(3, 1, rng.random()).unwrap();
        let theta = DVector::from_vec(vec![1.0]);
        let schedule = crate::synth::WeightSchedule::constant(&theta, 500, 10).unwrap();
        let bundle = crate::synth::generate_dataset(&graphs, &schedule, 21).unwrap();

        let settings = FilterSettings::new(1000.0);
        let trace = fit_full_model(&bundle.raster, &settings).unwrap();
        let true_graph = graphs.combine(&theta).unwrap();

        let t_total = trace.len();
        let start = t_total - t_total / 4;
        let mut avg = DVector::zeros(param_dim(3));
        for rec in &trace.records()[start..] {
            avg += &rec.weight_mean;
        }
        avg /= (t_total - start) as f64;
        for i in 0..param_dim(3) {
            assert!(
                (avg[i] - true_graph.values()[i]).abs() < 0.2,
                "parameter {i}: {} vs {}",
                avg[i],
                true_graph.values()[i]
            );
        }
    }

    #[test]
    fn pca_rank_one_trace_recovers_the_direction() {
        // Trace that moves along one fixed direction.
        let direction = DVector::from_vec(vec![0.6, -0.3, 0.4, 0.1, -0.2, 0.5]);
        let mut trace = FitTrace::new(6);
        for t in 1..=50 {
            let scale = (t as f64 * 0.3).sin();
            trace
                .push(FitRecord {
                    time_index: t,
                    weight_mean: scale * &direction,
                    weight_var: DVector::from_element(6, 0.1),
                    loglik: 0.0,
                })
                .unwrap();
        }
        let reference = crate::ising::GraphMatrix::new(
            3,
            DMatrix::from_columns(std::slice::from_ref(&direction)),
        )
        .unwrap();
        let correlations = pca_baseline(&trace, 1, &reference).unwrap();
        assert_abs_diff_eq!(correlations[0], 1.0, epsilon = 1e-10);

        // Requesting more components than the rank truncates.
        let truncated = pca_baseline(&trace, 3, &reference).unwrap();
        assert_eq!(truncated.len(), 1);
    }

    #[test]
    fn pca_orthogonal_reference_scores_zero() {
        let mut trace = FitTrace::new(3);
        for t in 1..=40 {
            let s = (t as f64 * 0.2).cos();
            trace
                .push(FitRecord {
                    time_index: t,
                    weight_mean: DVector::from_vec(vec![s, 0.0, 0.0]),
                    weight_var: DVector::from_element(3, 0.1),
                    loglik: 0.0,
                })
                .unwrap();
        }
        let reference = crate::ising::GraphMatrix::new(
            2,
            DMatrix::from_columns(&[DVector::from_vec(vec![0.0, 1.0, 0.0])]),
        )
        .unwrap();
        let correlations = pca_baseline(&trace, 1, &reference).unwrap();
        assert_abs_diff_eq!(correlations[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn pca_components_are_orthonormal_with_sorted_variances() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut trace = FitTrace::new(4);
        for t in 1..=200 {
            trace
                .push(FitRecord {
                    time_index: t,
                    weight_mean: DVector::from_fn(4, |_, _| rng.random::<f64>()),
                    weight_var: DVector::from_element(4, 0.1),
                    loglik: 0.0,
                })
                .unwrap();
        }
        let pca = pca_components(&trace, 4).unwrap();
        let gram = pca.components.transpose() * &pca.components;
        assert!((gram - DMatrix::identity(4, 4)).amax() < 1e-10);
        for pair in pca.variances.windows(2) {
            assert!(pair[0] >= pair[1]);
        }
    }
}
