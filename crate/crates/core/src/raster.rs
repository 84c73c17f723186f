//! Binary rasters (time bins x nodes) and spike-time ingestion.

use crate::error::{Error, Result};
use crate::ising::BinaryPattern;

/// T x N matrix of {0, 1} observations, one pattern per time bin, with
/// optional node labels.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryRaster {
    node_count: usize,
    data: Vec<u8>,
    labels: Option<Vec<String>>,
}

impl BinaryRaster {
    pub fn new(node_count: usize, data: Vec<u8>, labels: Option<Vec<String>>) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::invalid("raster needs at least one node"));
        }
        if data.is_empty() || !data.len().is_multiple_of(node_count) {
            return Err(Error::dims(format!(
                "raster data of {} entries is not a whole number of rows of {node_count}",
                data.len()
            )));
        }
        if data.iter().any(|&b| b > 1) {
            return Err(Error::invalid("raster entries must be 0 or 1"));
        }
        if let Some(ref l) = labels {
            if l.len() != node_count {
                return Err(Error::dims("label count disagrees with the node count"));
            }
        }
        Ok(Self {
            node_count,
            data,
            labels,
        })
    }

    pub fn from_rows(rows: &[Vec<u8>], labels: Option<Vec<String>>) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::invalid("raster needs at least one row"))?;
        let n = first.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::dims("raster rows differ in length"));
        }
        Self::new(n, rows.concat(), labels)
    }

    /// Number of time bins.
    pub fn len(&self) -> usize {
        self.data.len() / self.node_count
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Entry at 0-based bin `t` and node column `i`.
    pub fn value(&self, t: usize, i: usize) -> u8 {
        self.data[t * self.node_count + i]
    }

    /// Row at 0-based bin `t`.
    pub fn row(&self, t: usize) -> &[u8] {
        &self.data[t * self.node_count..(t + 1) * self.node_count]
    }

    /// Pattern at 0-based bin `t`.
    pub fn pattern(&self, t: usize) -> Result<BinaryPattern> {
        if t >= self.len() {
            return Err(Error::invalid(format!(
                "bin {t} out of range 0..{}",
                self.len()
            )));
        }
        BinaryPattern::new(self.row(t).to_vec())
    }

    /// Per-column activation rate.
    pub fn column_means(&self) -> Vec<f64> {
        let t_total = self.len() as f64;
        (0..self.node_count)
            .map(|i| {
                (0..self.len())
                    .map(|t| f64::from(self.value(t, i)))
                    .sum::<f64>()
                    / t_total
            })
            .collect()
    }
}

/// One spike event: a unit id and a time in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpikeEvent {
    pub unit: u32,
    pub time_s: f64,
}

/// Outcome of spike binning: the raster plus the number of events that fell
/// outside the requested range.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedSpikes {
    pub raster: BinaryRaster,
    pub dropped: usize,
}

/// Bin spike times into a binary raster. Bins are half-open
/// [t_start + k w, t_start + (k + 1) w); any spike in a bin sets the entry to
/// 1 (saturating, not counting). Events outside [t_start, t_end) are dropped
/// and counted. Columns are the units with at least one in-range event,
/// sorted by id, labeled by id.
pub fn bin_spike_times(
    events: &[SpikeEvent],
    bin_width: f64,
    t_start: f64,
    t_end: f64,
) -> Result<BinnedSpikes> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::invalid("bin width must be positive and finite"));
    }
    if t_start >= t_end || !t_start.is_finite() || !t_end.is_finite() {
        return Err(Error::invalid("need finite t_start < t_end"));
    }
    let n_bins = ((t_end - t_start) / bin_width).ceil() as usize;

    let mut in_range: Vec<&SpikeEvent> = Vec::with_capacity(events.len());
    let mut dropped = 0usize;
    for e in events {
        if e.time_s >= t_start && e.time_s < t_end {
            in_range.push(e);
        } else {
            dropped += 1;
        }
    }
    if in_range.is_empty() {
        return Err(Error::EmptyRaster);
    }

    let mut units: Vec<u32> = in_range.iter().map(|e| e.unit).collect();
    units.sort_unstable();
    units.dedup();
    let column_of = |unit: u32| units.binary_search(&unit).expect("unit is present");

    let n = units.len();
    let mut data = vec![0u8; n_bins * n];
    for e in &in_range {
        let bin = ((e.time_s - t_start) / bin_width).floor() as usize;
        if bin >= n_bins {
            dropped += 1;
            continue;
        }
        data[bin * n + column_of(e.unit)] = 1;
    }
    let labels = units.iter().map(|u| u.to_string()).collect();
    Ok(BinnedSpikes {
        raster: BinaryRaster::new(n, data, Some(labels))?,
        dropped,
    })
}

/// Keep the k columns with the highest activation rate; ties go to the lower
/// original column index, and the surviving columns keep their original
/// order and labels.
pub fn select_top_units(raster: &BinaryRaster, k: usize) -> Result<BinaryRaster> {
    if k == 0 {
        return Err(Error::invalid("must keep at least one unit"));
    }
    if k > raster.node_count() {
        return Err(Error::invalid(format!(
            "cannot keep {k} of {} units",
            raster.node_count()
        )));
    }
    if k == raster.node_count() {
        return Ok(raster.clone());
    }
    let means = raster.column_means();
    let mut order: Vec<usize> = (0..raster.node_count()).collect();
    order.sort_by(|&a, &b| means[b].total_cmp(&means[a]).then(a.cmp(&b)));
    let mut keep: Vec<usize> = order.into_iter().take(k).collect();
    keep.sort_unstable();

    let mut data = Vec::with_capacity(raster.len() * k);
    for t in 0..raster.len() {
        for &i in &keep {
            data.push(raster.value(t, i));
        }
    }
    let labels = raster
        .labels()
        .map(|l| keep.iter().map(|&i| l[i].clone()).collect());
    BinaryRaster::new(k, data, labels)
}
