use serde::{Deserialize, Serialize};

use super::BncError;
use crate::features::{BeatFeatures, Feature};

/// Equal-frequency binning of the nine features.
///
/// Feature `i` has `edges[i].len() + 1` bins for finite values plus one
/// reserved bin, the last, for missing or non-finite values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    pub edges: Vec<Vec<f64>>,
    /// Requested number of finite bins; constant or tied features get fewer.
    pub n_bins: usize,
}

/// Strictly increasing equal-frequency cut points of `values`.
///
/// The k-th cut sits halfway between the sorted values on either side of
/// the k/n_bins quantile position. Cuts falling inside a run of equal
/// values are dropped.
pub fn equal_frequency_edges(values: &[f64], n_bins: usize) -> Vec<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mut edges: Vec<f64> = Vec::new();
    if n < 2 {
        return edges;
    }
    for k in 1..n_bins {
        let pos = k * n / n_bins;
        if pos == 0 || pos >= n || v[pos - 1] == v[pos] {
            continue;
        }
        let e = 0.5 * (v[pos - 1] + v[pos]);
        if edges.last().is_none_or(|&last| e > last) {
            edges.push(e);
        }
    }
    edges
}

impl Discretizer {
    pub fn fit(corpus: &[BeatFeatures], n_bins: usize) -> Result<Self, BncError> {
        if corpus.is_empty() {
            return Err(BncError::EmptyCorpus);
        }
        if n_bins < 2 {
            return Err(BncError::InvalidConfig(format!(
                "n_bins must be at least 2, got {n_bins}"
            )));
        }
        let edges = Feature::ALL
            .iter()
            .map(|&f| {
                let vals: Vec<f64> = corpus.iter().filter_map(|b| b.get(f)).collect();
                equal_frequency_edges(&vals, n_bins)
            })
            .collect();
        Ok(Discretizer { edges, n_bins })
    }

    /// Number of states of the feature's node, the missing bin included.
    pub fn cardinality(&self, f: Feature) -> usize {
        self.edges[f.index()].len() + 2
    }

    pub fn missing_bin(&self, f: Feature) -> usize {
        self.edges[f.index()].len() + 1
    }

    /// A value equal to an edge falls in the lower bin.
    pub fn bin(&self, f: Feature, value: Option<f64>) -> usize {
        match value {
            Some(x) if x.is_finite() => self.edges[f.index()].partition_point(|&e| e < x),
            _ => self.missing_bin(f),
        }
    }

    pub fn bins(&self, values: &[Option<f64>; 9]) -> [usize; 9] {
        std::array::from_fn(|i| self.bin(Feature::ALL[i], values[i]))
    }

    pub(crate) fn validate(&self) -> Result<(), BncError> {
        if self.edges.len() != Feature::ALL.len() {
            return Err(BncError::InvalidModel(format!(
                "{} edge lists, expected 9",
                self.edges.len()
            )));
        }
        for (f, e) in Feature::ALL.iter().zip(&self.edges) {
            if e.windows(2).any(|w| !(w[0] < w[1])) || e.iter().any(|x| !x.is_finite()) {
                return Err(BncError::InvalidModel(format!("edges of {f} not strictly increasing")));
            }
        }
        Ok(())
    }
}
