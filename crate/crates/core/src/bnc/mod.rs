//! Discrete Bayesian network classifier over the class node and the nine
//! beat features.
//!
//! Features are discretized by equal-frequency bins with a reserved bin for
//! missing values. Conditional tables are Laplace-smoothed counts. The
//! default graph is naive Bayes (class to every feature); any acyclic edge
//! set over the ten nodes may be supplied instead.

mod discretize;
mod network;

use std::hash::{DefaultHasher, Hash, Hasher};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use discretize::{equal_frequency_edges, Discretizer};
pub use network::{normalize_log, topological_order, Network, Node};

use crate::features::{BeatFeatures, Feature};
use crate::wfdb::AnomalyClass;

#[derive(Debug, Error)]
pub enum BncError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("beat {beat} of record {record:?} has no class label")]
    UnlabeledBeat { record: String, beat: usize },
    #[error("structure is cyclic: {0}")]
    CyclicStructure(String),
    #[error("invalid structure: {0}")]
    InvalidStructure(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("model JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Index of the class node; feature `f` is node `f.index() + 1`.
pub const CLASS_NODE: usize = 0;

pub fn node_name(i: usize) -> &'static str {
    if i == CLASS_NODE {
        "class"
    } else {
        Feature::ALL[i - 1].name()
    }
}

fn node_index(name: &str) -> Option<usize> {
    if name.eq_ignore_ascii_case("class") {
        Some(CLASS_NODE)
    } else {
        name.parse::<Feature>().ok().map(|f| f.index() + 1)
    }
}

/// Graph of the network.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    /// Class is the only parent of every feature.
    #[default]
    Naive,
    /// Explicit `(parent, child)` edges between node names.
    Custom(Vec<(String, String)>),
}

impl Structure {
    /// Parent lists of the ten nodes.
    pub fn parents(&self) -> Result<Vec<Vec<usize>>, BncError> {
        let mut parents = vec![Vec::new(); Feature::ALL.len() + 1];
        match self {
            Structure::Naive => {
                for p in parents.iter_mut().skip(1) {
                    p.push(CLASS_NODE);
                }
            }
            Structure::Custom(edges) => {
                for (a, b) in edges {
                    let find = |n: &str| {
                        node_index(n).ok_or_else(|| BncError::InvalidStructure(format!("unknown node {n:?}")))
                    };
                    let (pa, ch) = (find(a)?, find(b)?);
                    if pa == ch {
                        return Err(BncError::CyclicStructure(format!("self loop on {a}")));
                    }
                    if !parents[ch].contains(&pa) {
                        parents[ch].push(pa);
                    }
                }
            }
        }
        topological_order(&parents)?;
        Ok(parents)
    }
}

/// `naive`, or comma separated `parent->child` edges.
impl FromStr for Structure {
    type Err = BncError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("naive") {
            return Ok(Structure::Naive);
        }
        let edges = s
            .split([',', ';'])
            .map(str::trim)
            .filter(|e| !e.is_empty())
            .map(|e| {
                e.split_once("->")
                    .map(|(a, b)| (a.trim().to_string(), b.trim().to_string()))
                    .ok_or_else(|| BncError::InvalidStructure(format!("edge {e:?} is not parent->child")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let st = Structure::Custom(edges);
        st.parents()?;
        Ok(st)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub n_bins: usize,
    pub alpha: f64,
    pub structure: Structure,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_bins: 8,
            alpha: 1.0,
            structure: Structure::Naive,
        }
    }
}

/// Class distribution of one beat.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    /// Indexed by [`AnomalyClass::index`].
    pub probabilities: [f64; 4],
    pub predicted: AnomalyClass,
}

impl Posterior {
    /// Normalises log joints; the first class in the fixed order wins ties.
    pub fn from_log_joint(logs: [f64; 4]) -> Self {
        let p = normalize_log(&logs);
        let probabilities = [p[0], p[1], p[2], p[3]];
        let best = (1..4).fold(0, |b, i| if probabilities[i] > probabilities[b] { i } else { b });
        Posterior {
            probabilities,
            predicted: AnomalyClass::ALL[best],
        }
    }

    pub fn probability(&self, c: AnomalyClass) -> f64 {
        self.probabilities[c.index()]
    }
}

/// A trained classifier. Counts are kept so the model can be updated.
#[derive(Debug, Clone, PartialEq)]
pub struct BncModel {
    network: Network,
    counts: Vec<Vec<u64>>,
    discretizer: Discretizer,
    alpha: f64,
}

fn label(b: &BeatFeatures) -> Result<AnomalyClass, BncError> {
    b.true_class.ok_or_else(|| BncError::UnlabeledBeat {
        record: b.record.clone(),
        beat: b.beat,
    })
}

/// Laplace-smoothed rows `(count + alpha) / (row_total + alpha * card)` of a
/// count table laid out `card` entries per row.
pub fn laplace_table(counts: &[u64], card: usize, alpha: f64) -> Vec<f64> {
    counts
        .chunks(card)
        .flat_map(|row| {
            let total: u64 = row.iter().sum();
            let denom = total as f64 + alpha * card as f64;
            row.iter().map(move |&c| (c as f64 + alpha) / denom)
        })
        .collect()
}

impl BncModel {
    /// Fit the discretizer and the tables on a labelled corpus.
    pub fn fit(corpus: &[BeatFeatures], cfg: &TrainConfig) -> Result<Self, BncError> {
        let disc = Discretizer::fit(corpus, cfg.n_bins)?;
        Self::train(corpus, disc, &cfg.structure, cfg.alpha)
    }

    /// Tables from a fixed discretizer.
    pub fn train(
        corpus: &[BeatFeatures],
        discretizer: Discretizer,
        structure: &Structure,
        alpha: f64,
    ) -> Result<Self, BncError> {
        if corpus.is_empty() {
            return Err(BncError::EmptyCorpus);
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(BncError::InvalidConfig(format!("alpha must be positive, got {alpha}")));
        }
        discretizer.validate()?;
        let parents = structure.parents()?;
        let cards: Vec<usize> = (0..parents.len())
            .map(|i| {
                if i == CLASS_NODE {
                    AnomalyClass::ALL.len()
                } else {
                    discretizer.cardinality(Feature::ALL[i - 1])
                }
            })
            .collect();
        let counts = parents
            .iter()
            .enumerate()
            .map(|(i, ps)| vec![0u64; ps.iter().map(|&p| cards[p]).product::<usize>() * cards[i]])
            .collect();
        // uniform tables for now; replaced by the counts below
        let nodes = parents
            .into_iter()
            .enumerate()
            .map(|(i, ps)| {
                let rows: usize = ps.iter().map(|&p| cards[p]).product();
                Node {
                    name: node_name(i).to_string(),
                    cardinality: cards[i],
                    parents: ps,
                    cpt: vec![1.0 / cards[i] as f64; rows * cards[i]],
                }
            })
            .collect();
        let model = BncModel {
            network: Network::new(nodes)?,
            counts,
            discretizer,
            alpha,
        };
        model.update(corpus)
    }

    /// Values of all ten nodes for one beat, class included.
    fn assignment(&self, class: AnomalyClass, values: &[Option<f64>; 9]) -> Vec<usize> {
        let mut a = Vec::with_capacity(10);
        a.push(class.index());
        a.extend(self.discretizer.bins(values));
        a
    }

    /// Add the beats to the counts and recompute the tables. The
    /// discretizer is left as it is.
    pub fn update(&self, beats: &[BeatFeatures]) -> Result<Self, BncError> {
        let mut next = self.clone();
        if beats.is_empty() {
            return Ok(next);
        }
        for b in beats {
            let a = next.assignment(label(b)?, &b.values);
            for (i, n) in next.network.nodes().iter().enumerate() {
                let cell = next.network.parent_config(i, &a) * n.cardinality + a[i];
                next.counts[i][cell] += 1;
            }
        }
        let nodes = next
            .network
            .nodes()
            .iter()
            .zip(&next.counts)
            .map(|(n, c)| Node {
                cpt: laplace_table(c, n.cardinality, next.alpha),
                ..n.clone()
            })
            .collect();
        next.network = Network::new(nodes)?;
        Ok(next)
    }

    pub fn posterior(&self, beat: &BeatFeatures) -> Posterior {
        self.posterior_values(&beat.values)
    }

    pub fn posterior_values(&self, values: &[Option<f64>; 9]) -> Posterior {
        let p = self
            .network
            .posterior(CLASS_NODE, &self.assignment(AnomalyClass::Normal, values));
        let logs = [p[0].ln(), p[1].ln(), p[2].ln(), p[3].ln()];
        Posterior::from_log_joint(logs)
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn discretizer(&self) -> &Discretizer {
        &self.discretizer
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Count table of node `i`, laid out like its CPT.
    pub fn counts(&self, i: usize) -> &[u64] {
        &self.counts[i]
    }

    /// Class prior, indexed by [`AnomalyClass::index`].
    pub fn class_prior(&self) -> Vec<f64> {
        let n = &self.network.nodes()[CLASS_NODE];
        if n.parents.is_empty() {
            n.cpt.clone()
        } else {
            let c = &self.counts[CLASS_NODE];
            let mut tot = vec![0u64; 4];
            for (k, v) in c.iter().enumerate() {
                tot[k % 4] += v;
            }
            laplace_table(&tot, 4, self.alpha)
        }
    }

    pub fn to_json(&self) -> String {
        let doc = ModelDocument {
            format: FORMAT.into(),
            version: VERSION,
            class_order: AnomalyClass::ALL.iter().map(|c| c.name().to_string()).collect(),
            alpha: self.alpha,
            discretizer: self.discretizer.clone(),
            nodes: self
                .network
                .nodes()
                .iter()
                .zip(&self.counts)
                .map(|(n, c)| NodeDocument {
                    name: n.name.clone(),
                    cardinality: n.cardinality,
                    parents: n.parents.iter().map(|&p| node_name(p).to_string()).collect(),
                    counts: c.clone(),
                    cpt: n.cpt.clone(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, BncError> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        if doc.format != FORMAT || doc.version != VERSION {
            return Err(BncError::InvalidModel(format!(
                "unsupported document {} version {}",
                doc.format, doc.version
            )));
        }
        let order: Vec<&str> = AnomalyClass::ALL.iter().map(|c| c.name()).collect();
        if doc.class_order != order {
            return Err(BncError::InvalidModel(format!("class order {:?}", doc.class_order)));
        }
        if !(doc.alpha > 0.0) {
            return Err(BncError::InvalidModel(format!("alpha {}", doc.alpha)));
        }
        doc.discretizer.validate()?;
        if doc.nodes.len() != Feature::ALL.len() + 1 {
            return Err(BncError::InvalidModel(format!(
                "{} nodes, expected 10",
                doc.nodes.len()
            )));
        }
        let mut counts = Vec::new();
        let mut nodes = Vec::new();
        for (i, n) in doc.nodes.into_iter().enumerate() {
            let want = if i == CLASS_NODE {
                4
            } else {
                doc.discretizer.cardinality(Feature::ALL[i - 1])
            };
            if n.name != node_name(i) || n.cardinality != want {
                return Err(BncError::InvalidModel(format!(
                    "node {i} is {} with {} states",
                    n.name, n.cardinality
                )));
            }
            if n.counts.len() != n.cpt.len() {
                return Err(BncError::InvalidModel(format!(
                    "count table of {} has the wrong size",
                    n.name
                )));
            }
            let parents = n
                .parents
                .iter()
                .map(|p| node_index(p).ok_or_else(|| BncError::InvalidModel(format!("unknown parent {p}"))))
                .collect::<Result<_, _>>()?;
            counts.push(n.counts);
            nodes.push(Node {
                name: n.name,
                cardinality: n.cardinality,
                parents,
                cpt: n.cpt,
            });
        }
        Ok(BncModel {
            network: Network::new(nodes)?,
            counts,
            discretizer: doc.discretizer,
            alpha: doc.alpha,
        })
    }

    /// Hash of the serialized model; equal models hash equally.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.to_json().hash(&mut h);
        h.finish()
    }
}

const FORMAT: &str = "cardiowatch-bnc";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format: String,
    version: u32,
    class_order: Vec<String>,
    alpha: f64,
    discretizer: Discretizer,
    nodes: Vec<NodeDocument>,
}

#[derive(Serialize, Deserialize)]
struct NodeDocument {
    name: String,
    cardinality: usize,
    parents: Vec<String>,
    counts: Vec<u64>,
    cpt: Vec<f64>,
}
