//! Exact computations for the stationary and multi-graph Ising models by
//! enumeration over all 2^N binary patterns.
//!
//! A graph is the full natural-parameter vector of an Ising model over N
//! binary nodes: the N per-node biases followed by the N(N-1)/2 pairwise
//! couplings in canonical order. A graph matrix stacks D such graphs as
//! columns; weighting its columns by a vector of weights yields a combined
//! Ising model whose natural parameter is the weighted sum of the columns.
//!
//! Everything here enumerates the 2^N pattern space exactly, which caps the
//! node count at [`MAX_ENUM_NODES`]. Enumeration always walks patterns in
//! ascending integer-code order so results are bit-reproducible.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Hard cap on the node count for exact enumeration.
pub const MAX_ENUM_NODES: usize = 20;

/// Length of the natural-parameter vector for `node_count` nodes:
/// N biases plus N(N-1)/2 couplings.
pub fn param_dim(node_count: usize) -> usize {
    node_count + node_count * (node_count - 1) / 2
}

pub(crate) fn check_enum_limit(node_count: usize) -> Result<()> {
    if node_count > MAX_ENUM_NODES {
        return Err(Error::EnumerationLimit {
            node_count,
            max: MAX_ENUM_NODES,
        });
    }
    Ok(())
}

/// Offset of the pair (i0, j0), 0-based with i0 < j0, among all pairs in
/// lexicographic (i-major) order.
#[inline]
fn pair_offset(i0: usize, j0: usize, node_count: usize) -> usize {
    i0 * node_count - i0 * (i0 + 1) / 2 + (j0 - i0 - 1)
}

/// Position of a parameter in the canonical ordering: biases for nodes 1..N
/// first, then couplings (i, j) with i < j in lexicographic (i-major) order.
/// Node ids are 1-based.
pub fn canonical_index(i: usize, j: usize, node_count: usize) -> Result<usize> {
    if i < 1 || j < 1 || i > node_count || j > node_count {
        return Err(Error::invalid(format!(
            "node ids ({i}, {j}) out of range 1..={node_count}"
        )));
    }
    if i >= j {
        return Err(Error::invalid(format!(
            "pair ({i}, {j}) requires i < j"
        )));
    }
    Ok(node_count + pair_offset(i - 1, j - 1, node_count))
}

/// One binary pattern over N nodes, entries in {0, 1}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryPattern {
    bits: Vec<u8>,
}

impl BinaryPattern {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.is_empty() || bits.len() > MAX_ENUM_NODES {
            return Err(Error::invalid(format!(
                "pattern length {} outside 1..={MAX_ENUM_NODES}",
                bits.len()
            )));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::invalid("pattern entries must be 0 or 1"));
        }
        Ok(Self { bits })
    }

    /// Pattern from its integer code: bit i of `code` is the state of node
    /// i + 1.
    pub fn from_code(code: u32, node_count: usize) -> Result<Self> {
        if node_count == 0 || node_count > MAX_ENUM_NODES {
            return Err(Error::invalid(format!(
                "node count {node_count} outside 1..={MAX_ENUM_NODES}"
            )));
        }
        if node_count < 32 && code >= (1u32 << node_count) {
            return Err(Error::invalid(format!(
                "code {code} out of range for {node_count} nodes"
            )));
        }
        let bits = (0..node_count).map(|i| ((code >> i) & 1) as u8).collect();
        Ok(Self { bits })
    }

    pub fn node_count(&self) -> usize {
        self.bits.len()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    /// Integer code of the pattern (inverse of [`BinaryPattern::from_code`]).
    pub fn code(&self) -> u32 {
        self.bits
            .iter()
            .enumerate()
            .fold(0u32, |acc, (i, &b)| acc | (u32::from(b) << i))
    }
}

/// Natural-parameter vector of one Ising graph in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphVector {
    node_count: usize,
    values: DVector<f64>,
}

impl GraphVector {
    pub fn new(node_count: usize, values: DVector<f64>) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::invalid("node count must be positive"));
        }
        let d = param_dim(node_count);
        if values.len() != d {
            return Err(Error::dims(format!(
                "graph vector has {} entries, expected {d} for {node_count} nodes",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("graph entries must be finite"));
        }
        Ok(Self { node_count, values })
    }

    pub fn zeros(node_count: usize) -> Self {
        Self {
            node_count,
            values: DVector::zeros(param_dim(node_count)),
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn into_values(self) -> DVector<f64> {
        self.values
    }

    /// Set the bias of node `i` (1-based).
    pub fn set_bias(&mut self, i: usize, value: f64) -> Result<()> {
        if i < 1 || i > self.node_count {
            return Err(Error::invalid(format!(
                "node id {i} out of range 1..={}",
                self.node_count
            )));
        }
        self.values[i - 1] = value;
        Ok(())
    }

    /// Set the coupling of the pair (i, j), 1-based, i < j.
    pub fn set_coupling(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        let idx = canonical_index(i, j, self.node_count)?;
        self.values[idx] = value;
        Ok(())
    }
}

/// D Ising graphs over a common node set, stored as the columns of a d x D
/// matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphMatrix {
    node_count: usize,
    values: DMatrix<f64>,
}

impl GraphMatrix {
    pub fn new(node_count: usize, values: DMatrix<f64>) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::invalid("node count must be positive"));
        }
        let d = param_dim(node_count);
        if values.nrows() != d {
            return Err(Error::dims(format!(
                "graph matrix has {} rows, expected {d} for {node_count} nodes",
                values.nrows()
            )));
        }
        if values.ncols() < 1 || values.ncols() > d {
            return Err(Error::invalid(format!(
                "graph count {} outside 1..={d}",
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("graph entries must be finite"));
        }
        Ok(Self { node_count, values })
    }

    pub fn from_columns(columns: &[GraphVector]) -> Result<Self> {
        let first = columns
            .first()
            .ok_or_else(|| Error::invalid("at least one graph column required"))?;
        let n = first.node_count();
        if columns.iter().any(|c| c.node_count() != n) {
            return Err(Error::dims("graph columns disagree on the node count"));
        }
        let values = DMatrix::from_columns(
            &columns.iter().map(|c| c.values().clone()).collect::<Vec<_>>(),
        );
        Self::new(n, values)
    }

    /// The d x d identity matrix: one standard-basis graph per parameter.
    /// Weighting these columns reproduces the full Ising model directly.
    pub fn identity(node_count: usize) -> Result<Self> {
        let d = param_dim(node_count);
        Self::new(node_count, DMatrix::identity(d, d))
    }

    /// Graph matrix with i.i.d. standard normal entries.
    pub fn random_gaussian(node_count: usize, graph_count: usize, seed: u64) -> Result<Self> {
        let d = param_dim(node_count);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values =
            DMatrix::from_fn(d, graph_count, |_, _| rng.sample::<f64, _>(StandardNormal));
        Self::new(node_count, values)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn graph_count(&self) -> usize {
        self.values.ncols()
    }

    pub fn param_dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn column(&self, k: usize) -> Result<GraphVector> {
        if k >= self.graph_count() {
            return Err(Error::invalid(format!(
                "column {k} out of range 0..{}",
                self.graph_count()
            )));
        }
        GraphVector::new(self.node_count, self.values.column(k).into_owned())
    }

    /// The single combined graph J theta.
    pub fn combine(&self, theta: &DVector<f64>) -> Result<GraphVector> {
        if theta.len() != self.graph_count() {
            return Err(Error::dims(format!(
                "weight vector has {} entries, expected {}",
                theta.len(),
                self.graph_count()
            )));
        }
        GraphVector::new(self.node_count, &self.values * theta)
    }
}

/// Expected feature vector of an Ising model: per-node activation
/// probabilities followed by pairwise co-activation probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentVector {
    node_count: usize,
    values: DVector<f64>,
}

impl MomentVector {
    /// Validation tolerance for the probability-range invariants.
    const TOL: f64 = 1e-9;

    pub fn new(node_count: usize, values: DVector<f64>) -> Result<Self> {
        let d = param_dim(node_count);
        if values.len() != d {
            return Err(Error::dims(format!(
                "moment vector has {} entries, expected {d}",
                values.len()
            )));
        }
        if values.iter().any(|&v| !(-Self::TOL..=1.0 + Self::TOL).contains(&v)) {
            return Err(Error::numeric("moment entries must lie in [0, 1]"));
        }
        for i in 0..node_count {
            for j in (i + 1)..node_count {
                let pair = values[node_count + pair_offset(i, j, node_count)];
                if pair > values[i].min(values[j]) + Self::TOL {
                    return Err(Error::numeric(format!(
                        "co-activation probability of ({}, {}) exceeds its marginals",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(Self { node_count, values })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn into_values(self) -> DVector<f64> {
        self.values
    }
}

/// Covariance of the feature vector under an Ising model (the Hessian of the
/// log partition).
#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix {
    node_count: usize,
    values: DMatrix<f64>,
}

impl FisherMatrix {
    const SYMMETRY_TOL: f64 = 1e-12;
    const PSD_TOL: f64 = -1e-10;

    pub fn new(node_count: usize, values: DMatrix<f64>) -> Result<Self> {
        let d = param_dim(node_count);
        if values.nrows() != d || values.ncols() != d {
            return Err(Error::dims(format!(
                "Fisher matrix is {}x{}, expected {d}x{d}",
                values.nrows(),
                values.ncols()
            )));
        }
        if (&values - values.transpose()).amax() > Self::SYMMETRY_TOL {
            return Err(Error::numeric("Fisher matrix is not symmetric"));
        }
        if crate::linalg::min_symmetric_eigenvalue(&values) < Self::PSD_TOL {
            return Err(Error::numeric("Fisher matrix is not positive semidefinite"));
        }
        Ok(Self { node_count, values })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }
}

/// Feature vector of a pattern: the N node states followed by the N(N-1)/2
/// pairwise products in canonical order.
pub fn feature_vector(x: &BinaryPattern) -> DVector<f64> {
    let n = x.node_count();
    let mut out = DVector::zeros(param_dim(n));
    for i in 0..n {
        out[i] = f64::from(x.bits[i]);
    }
    for i in 0..n {
        if x.bits[i] == 0 {
            continue;
        }
        for j in (i + 1)..n {
            if x.bits[j] == 1 {
                out[n + pair_offset(i, j, n)] = 1.0;
            }
        }
    }
    out
}

/// Active feature indices of the pattern with the given code, written into
/// `buf`; returns the number of active features.
#[inline]
fn active_features(code: u32, node_count: usize, buf: &mut [usize]) -> usize {
    let mut bits = [0usize; MAX_ENUM_NODES];
    let mut nbits = 0;
    let mut m = code;
    while m != 0 {
        bits[nbits] = m.trailing_zeros() as usize;
        nbits += 1;
        m &= m - 1;
    }
    let mut k = 0;
    for a in 0..nbits {
        buf[k] = bits[a];
        k += 1;
    }
    for a in 0..nbits {
        for b in (a + 1)..nbits {
            buf[k] = node_count + pair_offset(bits[a], bits[b], node_count);
            k += 1;
        }
    }
    k
}

/// j'F(x) for the pattern with the given code.
#[inline]
fn pattern_energy(values: &DVector<f64>, node_count: usize, code: u32) -> f64 {
    let mut bits = [0usize; MAX_ENUM_NODES];
    let mut nbits = 0;
    let mut m = code;
    while m != 0 {
        bits[nbits] = m.trailing_zeros() as usize;
        nbits += 1;
        m &= m - 1;
    }
    let mut e = 0.0;
    for a in 0..nbits {
        e += values[bits[a]];
        for b in (a + 1)..nbits {
            e += values[node_count + pair_offset(bits[a], bits[b], node_count)];
        }
    }
    e
}

/// j'F(x) for every pattern, indexed by code.
fn energies(graph: &GraphVector) -> Vec<f64> {
    let n = graph.node_count();
    (0..1u32 << n)
        .map(|code| pattern_energy(graph.values(), n, code))
        .collect()
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Log normalizer psi(j) = log sum_x exp(j'F(x)), computed with a stable
/// log-sum-exp over all 2^N patterns.
pub fn log_partition(graph: &GraphVector) -> Result<f64> {
    check_enum_limit(graph.node_count())?;
    Ok(log_sum_exp(&energies(graph)))
}

/// Probability of every pattern, indexed by code. Sums to 1 up to rounding.
pub fn pattern_probabilities(graph: &GraphVector) -> Result<Vec<f64>> {
    check_enum_limit(graph.node_count())?;
    let e = energies(graph);
    let psi = log_sum_exp(&e);
    Ok(e.into_iter().map(|v| (v - psi).exp()).collect())
}

/// Expected feature vector under p(x | j); equals the gradient of
/// [`log_partition`] at j.
pub fn moments(graph: &GraphVector) -> Result<MomentVector> {
    let n = graph.node_count();
    let probs = pattern_probabilities(graph)?;
    let mut eta = DVector::zeros(param_dim(n));
    let mut feats = [0usize; MAX_ENUM_NODES * (MAX_ENUM_NODES + 1) / 2];
    for (code, &p) in probs.iter().enumerate() {
        let k = active_features(code as u32, n, &mut feats);
        for &f in &feats[..k] {
            eta[f] += p;
        }
    }
    MomentVector::new(n, eta)
}

/// Feature covariance under p(x | j); equals the Hessian of
/// [`log_partition`] at j. Symmetric positive semidefinite.
pub fn fisher_info(graph: &GraphVector) -> Result<FisherMatrix> {
    let n = graph.node_count();
    let d = param_dim(n);
    let probs = pattern_probabilities(graph)?;
    let mut second = DMatrix::<f64>::zeros(d, d);
    let mut eta = DVector::<f64>::zeros(d);
    let mut feats = [0usize; MAX_ENUM_NODES * (MAX_ENUM_NODES + 1) / 2];
    for (code, &p) in probs.iter().enumerate() {
        let k = active_features(code as u32, n, &mut feats);
        for a in 0..k {
            let fa = feats[a];
            eta[fa] += p;
            for &fb in &feats[a..k] {
                second[(fa, fb)] += p;
            }
        }
    }
    let mut g = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in a..d {
            let centered = second[(a, b)] - eta[a] * eta[b];
            g[(a, b)] = centered;
            g[(b, a)] = centered;
        }
    }
    FisherMatrix::new(n, g)
}

/// log p(x | theta, J) of the multi-graph model: theta'J'F(x) minus the log
/// normalizer of the combined graph J theta.
pub fn multi_graph_log_prob(
    x: &BinaryPattern,
    theta: &DVector<f64>,
    graphs: &GraphMatrix,
) -> Result<f64> {
    if x.node_count() != graphs.node_count() {
        return Err(Error::dims(format!(
            "pattern has {} nodes, graphs have {}",
            x.node_count(),
            graphs.node_count()
        )));
    }
    let combined = graphs.combine(theta)?;
    let psi = log_partition(&combined)?;
    Ok(pattern_energy(combined.values(), x.node_count(), x.code()) - psi)
}

/// Expectation of the projected feature vector J'F(x): the projection
/// J' of the combined model's moments.
pub fn multi_graph_moments(theta: &DVector<f64>, graphs: &GraphMatrix) -> Result<DVector<f64>> {
    let combined = graphs.combine(theta)?;
    let eta = moments(&combined)?;
    Ok(graphs.values().transpose() * eta.values())
}

/// Covariance of the projected feature vector J'F(x): the congruence
/// J' G J of the combined model's feature covariance. D x D, symmetric PSD.
pub fn multi_graph_fisher(theta: &DVector<f64>, graphs: &GraphMatrix) -> Result<DMatrix<f64>> {
    let combined = graphs.combine(theta)?;
    let g = fisher_info(&combined)?;
    let projected = graphs.values().transpose() * g.values() * graphs.values();
    Ok(crate::linalg::symmetrize(&projected))
}

/// Exact i.i.d. samples from the multi-graph model, drawn by inverse CDF over
/// the enumerated pattern distribution. Deterministic given the seed.
pub fn sample_patterns(
    theta: &DVector<f64>,
    graphs: &GraphMatrix,
    count: usize,
    seed: u64,
) -> Result<Vec<BinaryPattern>> {
    if count == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let combined = graphs.combine(theta)?;
    let probs = pattern_probabilities(&combined)?;
    let mut cumulative = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for &p in &probs {
        acc += p;
        cumulative.push(acc);
    }
    let n = graphs.node_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let u: f64 = rng.random();
        let idx = cumulative
            .partition_point(|&c| c <= u)
            .min(cumulative.len() - 1);
        out.push(BinaryPattern::from_code(idx as u32, n)?);
    }
    Ok(out)
}

/// Projected features F(x, J) = J'F(x) tabulated for every pattern of one
/// graph matrix. Caches the 2^N x D table so that repeated evaluations
/// against the same graphs (as in the filter recursion) stay cheap.
///
/// For the identity graph matrix the projected features are the raw 0/1
/// feature vectors; those are kept in a sparse index list instead, which
/// makes the full-model filter practical.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    node_count: usize,
    features: DMatrix<f64>,
    /// Active feature indices per pattern (CSR) when the graphs are the
    /// identity matrix.
    sparse: Option<SparseFeatures>,
}

#[derive(Debug, Clone)]
struct SparseFeatures {
    offsets: Vec<u32>,
    indices: Vec<u32>,
}

/// Log normalizer, projected moments and projected feature covariance of the
/// combined model at one weight vector.
#[derive(Debug, Clone)]
pub struct ProjectedStats {
    pub log_partition: f64,
    pub moments: DVector<f64>,
    pub fisher: DMatrix<f64>,
}

impl FeatureTable {
    pub fn new(graphs: &GraphMatrix) -> Result<Self> {
        let n = graphs.node_count();
        check_enum_limit(n)?;
        let d = param_dim(n);
        let d_graphs = graphs.graph_count();
        let values = graphs.values();
        let is_identity = d_graphs == d
            && (0..d).all(|r| {
                (0..d).all(|c| values[(r, c)] == if r == c { 1.0 } else { 0.0 })
            });

        let mut features = DMatrix::<f64>::zeros(1usize << n, d_graphs);
        let mut sparse = is_identity.then(|| SparseFeatures {
            offsets: Vec::with_capacity((1usize << n) + 1),
            indices: Vec::new(),
        });
        if let Some(ref mut s) = sparse {
            s.offsets.push(0);
        }
        let mut feats = [0usize; MAX_ENUM_NODES * (MAX_ENUM_NODES + 1) / 2];
        for code in 0..(1usize << n) {
            let k = active_features(code as u32, n, &mut feats);
            for &f in &feats[..k] {
                for c in 0..d_graphs {
                    features[(code, c)] += values[(f, c)];
                }
            }
            if let Some(ref mut s) = sparse {
                s.indices.extend(feats[..k].iter().map(|&f| f as u32));
                s.offsets.push(s.indices.len() as u32);
            }
        }
        Ok(Self {
            node_count: n,
            features,
            sparse,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn graph_count(&self) -> usize {
        self.features.ncols()
    }

    pub fn pattern_count(&self) -> usize {
        self.features.nrows()
    }

    /// F(x, J) for the pattern with the given code.
    pub fn feature(&self, code: u32) -> DVector<f64> {
        self.features.row(code as usize).transpose()
    }

    /// psi(theta, J) over the tabulated patterns.
    pub fn log_partition(&self, theta: &DVector<f64>) -> Result<f64> {
        Ok(log_sum_exp(self.energies(theta)?.as_slice()))
    }

    /// Moments and feature covariance by direct enumeration of F(x, J); the
    /// algebraically equivalent route to [`multi_graph_moments`] and
    /// [`multi_graph_fisher`].
    pub fn stats(&self, theta: &DVector<f64>) -> Result<ProjectedStats> {
        let energies = self.energies(theta)?;
        let psi = log_sum_exp(energies.as_slice());
        let d_graphs = self.graph_count();
        let mut eta = DVector::<f64>::zeros(d_graphs);
        let mut second = DMatrix::<f64>::zeros(d_graphs, d_graphs);
        if let Some(ref s) = self.sparse {
            for code in 0..self.pattern_count() {
                let p = (energies[code] - psi).exp();
                let active =
                    &s.indices[s.offsets[code] as usize..s.offsets[code + 1] as usize];
                for (i, &fa) in active.iter().enumerate() {
                    let fa = fa as usize;
                    eta[fa] += p;
                    for &fb in &active[i..] {
                        second[(fa, fb as usize)] += p;
                    }
                }
            }
        } else {
            for code in 0..self.pattern_count() {
                let p = (energies[code] - psi).exp();
                for a in 0..d_graphs {
                    let fa = self.features[(code, a)];
                    eta[a] += p * fa;
                    for b in a..d_graphs {
                        second[(a, b)] += p * fa * self.features[(code, b)];
                    }
                }
            }
        }
        let mut fisher = DMatrix::zeros(d_graphs, d_graphs);
        for a in 0..d_graphs {
            for b in a..d_graphs {
                let v = second[(a, b)] - eta[a] * eta[b];
                fisher[(a, b)] = v;
                fisher[(b, a)] = v;
            }
        }
        Ok(ProjectedStats {
            log_partition: psi,
            moments: eta,
            fisher,
        })
    }

    fn energies(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        if theta.len() != self.graph_count() {
            return Err(Error::dims(format!(
                "weight vector has {} entries, expected {}",
                theta.len(),
                self.graph_count()
            )));
        }
        if let Some(ref s) = self.sparse {
            let mut out = DVector::<f64>::zeros(self.pattern_count());
            for code in 0..self.pattern_count() {
                let active =
                    &s.indices[s.offsets[code] as usize..s.offsets[code + 1] as usize];
                out[code] = active.iter().map(|&f| theta[f as usize]).sum();
            }
            return Ok(out);
        }
        Ok(&self.features * theta)
    }
}
