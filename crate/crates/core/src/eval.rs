//! Corpora, train/test experiments and the evaluation metrics.
//!
//! Each result row is a one-vs-rest view of a four-class experiment: the
//! target class is positive, every other class negative. Results are
//! reported for the raw network output and with the boxplot screen applied.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bnc::{BncError, BncModel, TrainConfig};
use crate::delineate::DelineationConfig;
use crate::features::{record_features, BeatFeatures, FeatureError};
use crate::preprocess::PreprocessConfig;
use crate::tukey::{TukeyConfig, TukeyError, TukeyState};
use crate::wfdb::{read_record, AnomalyClass, EcgRecord, WfdbError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("confusion counts are all zero")]
    EmptyCounts,
    #[error("no annotated beats in {0}")]
    NoAnnotatedBeats(String),
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] BncError),
    #[error(transparent)]
    Tukey(#[from] TukeyError),
    #[error(transparent)]
    Wfdb(#[from] WfdbError),
}

/// The seven leads shared by both databases.
pub const SHARED_LEADS: [&str; 7] = ["I", "III", "V1", "V2", "V3", "V4", "V5"];

/// Lead name without the database's prefix conventions (`MLIII` -> `III`).
pub fn canonical_lead(name: &str) -> String {
    let up = name.trim().to_ascii_uppercase();
    let stripped = up
        .strip_prefix("ML")
        .or_else(|| {
            up.strip_prefix('D')
                .filter(|r| !r.is_empty() && r.chars().all(|c| c == 'I'))
        })
        .unwrap_or(&up);
    stripped.to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Database {
    Edb,
    Incart,
    Synthetic,
}

impl std::str::FromStr for Database {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "edb" => Ok(Database::Edb),
            "incart" | "incartdb" => Ok(Database::Incart),
            "synthetic" | "synth" => Ok(Database::Synthetic),
            other => Err(format!("unknown database {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceEntry {
    pub class: AnomalyClass,
    pub kept: usize,
    pub dropped: usize,
}

/// Labelled beats of one lead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub lead: String,
    pub database: Database,
    pub rows: Vec<BeatFeatures>,
    pub balancing: Vec<BalanceEntry>,
    pub seed: Option<u64>,
}

impl Corpus {
    pub fn class_counts(&self) -> [usize; 4] {
        let mut c = [0; 4];
        for r in &self.rows {
            if let Some(k) = r.true_class {
                c[k.index()] += 1;
            }
        }
        c
    }
}

/// Undersample the largest class to the size of the next largest, keeping
/// the original row order. Every other row is kept.
pub fn balance(rows: Vec<BeatFeatures>, seed: u64) -> (Vec<BeatFeatures>, Vec<BalanceEntry>) {
    let mut counts = [0usize; 4];
    for r in &rows {
        if let Some(c) = r.true_class {
            counts[c.index()] += 1;
        }
    }
    let major = (0..4).fold(0, |b, i| if counts[i] > counts[b] { i } else { b });
    let target = (0..4).filter(|&i| i != major).map(|i| counts[i]).max().unwrap_or(0);
    let mut entries: Vec<BalanceEntry> = AnomalyClass::ALL
        .iter()
        .filter(|c| counts[c.index()] > 0)
        .map(|&c| BalanceEntry {
            class: c,
            kept: counts[c.index()],
            dropped: 0,
        })
        .collect();
    if target == 0 || counts[major] <= target {
        return (rows, entries);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; counts[major]];
    for k in sample(&mut rng, counts[major], target) {
        keep[k] = true;
    }
    let mut seen = 0;
    let out = rows
        .into_iter()
        .filter(|r| {
            if r.true_class.map(AnomalyClass::index) != Some(major) {
                return true;
            }
            seen += 1;
            keep[seen - 1]
        })
        .collect();
    for e in entries.iter_mut().filter(|e| e.class.index() == major) {
        e.kept = target;
        e.dropped = counts[major] - target;
    }
    (out, entries)
}

/// Group labelled beats by lead. Unlabelled beats are discarded; only the
/// listed leads are kept (all seven shared leads when `leads` is empty).
/// With a seed, each lead's majority class is undersampled.
pub fn build_corpus(
    beats: Vec<BeatFeatures>,
    database: Database,
    leads: &[String],
    balance_seed: Option<u64>,
) -> Result<Vec<Corpus>, EvalError> {
    let wanted: Vec<String> = if leads.is_empty() {
        SHARED_LEADS.iter().map(|s| s.to_string()).collect()
    } else {
        leads.iter().map(|l| canonical_lead(l)).collect()
    };
    let mut groups: BTreeMap<String, Vec<BeatFeatures>> = BTreeMap::new();
    for b in beats.into_iter().filter(|b| b.true_class.is_some()) {
        let lead = canonical_lead(&b.lead);
        if wanted.contains(&lead) {
            groups.entry(lead).or_default().push(b);
        }
    }
    if groups.is_empty() {
        return Err(EvalError::NoAnnotatedBeats(format!("leads {}", wanted.join(","))));
    }
    Ok(wanted
        .iter()
        .filter_map(|l| groups.remove(l).map(|rows| (l.clone(), rows)))
        .map(|(lead, rows)| {
            let (rows, balancing) = match balance_seed {
                Some(s) => balance(rows, s),
                None => {
                    let c = Corpus {
                        lead: lead.clone(),
                        database,
                        rows,
                        balancing: vec![],
                        seed: None,
                    };
                    let counts = c.class_counts();
                    let e = AnomalyClass::ALL
                        .iter()
                        .filter(|k| counts[k.index()] > 0)
                        .map(|&k| BalanceEntry {
                            class: k,
                            kept: counts[k.index()],
                            dropped: 0,
                        })
                        .collect();
                    (c.rows, e)
                }
            };
            Corpus {
                lead,
                database,
                rows,
                balancing,
                seed: balance_seed,
            }
        })
        .collect())
}

/// Labelled feature rows of the selected leads of one record.
pub fn record_rows(
    record: &EcgRecord,
    leads: &[String],
    pre: &PreprocessConfig,
    cfg: &DelineationConfig,
) -> Result<Vec<BeatFeatures>, EvalError> {
    let wanted: Vec<String> = if leads.is_empty() {
        SHARED_LEADS.iter().map(|s| s.to_string()).collect()
    } else {
        leads.iter().map(|l| canonical_lead(l)).collect()
    };
    let mut rows = Vec::new();
    for name in record.lead_names() {
        if wanted.contains(&canonical_lead(name)) {
            rows.extend(
                record_features(record, name, pre, cfg)?
                    .into_iter()
                    .filter(|b| b.true_class.is_some()),
            );
        }
    }
    if rows.is_empty() {
        return Err(EvalError::NoAnnotatedBeats(record.name().to_string()));
    }
    Ok(rows)
}

/// Rows of every record (`.hea` file) in a directory, in name order.
/// Records without a matching annotated beat are skipped with a warning.
pub fn directory_rows(
    dir: &Path,
    annotator: &str,
    leads: &[String],
    pre: &PreprocessConfig,
    cfg: &DelineationConfig,
) -> Result<Vec<BeatFeatures>, EvalError> {
    let mut stems: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| WfdbError::Io {
            path: dir.to_path_buf(),
            message: e.to_string(),
        })?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "hea"))
        .map(|p| p.with_extension(""))
        .collect();
    stems.sort();
    let mut rows = Vec::new();
    for stem in stems {
        let rec = read_record(&stem, annotator)?;
        match record_rows(&rec, leads, pre, cfg) {
            Ok(r) => rows.extend(r),
            Err(EvalError::NoAnnotatedBeats(name)) => log::warn!("{name}: no annotated beats in the selected leads"),
            Err(e) => return Err(e),
        }
    }
    Ok(rows)
}

/// Labelled lead-III rows from synthetic records, `per_class` beats of each
/// class. Ectopic records alternate Normal and ectopic beats, so Normal rows
/// come from every morphology.
pub fn synthetic_corpus(
    per_class: usize,
    noise_sigma: f64,
    seed: u64,
    pre: &PreprocessConfig,
    cfg: &DelineationConfig,
) -> Result<Corpus, EvalError> {
    let mut by_class: [Vec<BeatFeatures>; 4] = Default::default();
    let mut k = 0u64;
    let mut m = 0;
    while by_class.iter().any(|v| v.len() < per_class) {
        let morph = crate::synth::Morphology::ALL[m % 4];
        m += 1;
        let want = morph.class();
        if by_class[want.index()].len() >= per_class {
            continue;
        }
        let spec = crate::synth::SyntheticSpec {
            beats: 60,
            morphology: morph,
            noise_sigma,
            drift_amplitude: if noise_sigma > 0.0 { 0.1 } else { 0.0 },
            seed: seed.wrapping_mul(1_000_003).wrapping_add(k),
            name: format!("synth{k}"),
            ..Default::default()
        };
        k += 1;
        let s = crate::synth::generate(&spec);
        for b in record_features(&s.record, &spec.lead, pre, cfg)? {
            if let Some(c) = b.true_class {
                if by_class[c.index()].len() < per_class {
                    by_class[c.index()].push(b);
                }
            }
        }
        if k > 100_000 {
            return Err(EvalError::NoAnnotatedBeats("synthetic records".into()));
        }
    }
    Ok(Corpus {
        lead: "III".into(),
        database: Database::Synthetic,
        rows: by_class.into_iter().flatten().collect(),
        balancing: vec![],
        seed: Some(seed),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    /// One-vs-rest counts for `target` from `(truth, prediction)` pairs.
    pub fn one_vs_rest(pairs: impl IntoIterator<Item = (AnomalyClass, AnomalyClass)>, target: AnomalyClass) -> Self {
        let mut c = ConfusionCounts::default();
        for (t, p) in pairs {
            match (t == target, p == target) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// The six rates of one confusion table. A ratio whose denominator is zero
/// is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub lead: String,
    pub class: AnomalyClass,
    pub variant: Variant,
    pub acc: f64,
    pub err: f64,
    pub se: Option<f64>,
    pub far: Option<f64>,
    pub spec: Option<f64>,
    pub prec: Option<f64>,
    pub counts: ConfusionCounts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Network output as is.
    Bnc,
    /// Abnormal predictions inside every fence turned back to Normal.
    BncTukey,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Bnc => "bnc",
            Variant::BncTukey => "bnc+tukey",
        }
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Accuracy, error, sensitivity, false alarm rate, specificity and precision.
pub type Rates = (f64, f64, Option<f64>, Option<f64>, Option<f64>, Option<f64>);

pub fn metrics(counts: ConfusionCounts) -> Result<Rates, EvalError> {
    let ConfusionCounts { tp, tn, fp, fn_ } = counts;
    let total = counts.total();
    if total == 0 {
        return Err(EvalError::EmptyCounts);
    }
    let acc = (tp + tn) as f64 / total as f64;
    let err = (fp + fn_) as f64 / total as f64;
    Ok((
        acc,
        err,
        ratio(tp, tp + fn_),
        ratio(fp, fp + tn),
        ratio(tn, tn + fp),
        ratio(tp, tp + fp),
    ))
}

impl MetricsRow {
    pub fn new(lead: &str, class: AnomalyClass, variant: Variant, counts: ConfusionCounts) -> Result<Self, EvalError> {
        let (acc, err, se, far, spec, prec) = metrics(counts)?;
        Ok(MetricsRow {
            lead: lead.to_string(),
            class,
            variant,
            acc,
            err,
            se,
            far,
            spec,
            prec,
            counts,
        })
    }
}

/// `Lead,Acc,Err,Class,Se,Far,Prec,Variant`; rates as fractions, `NA` when undefined.
pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["Lead", "Acc", "Err", "Class", "Se", "Far", "Prec", "Variant"])?;
    let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"));
    for r in rows {
        w.write_record([
            r.lead.clone(),
            format!("{:.6}", r.acc),
            format!("{:.6}", r.err),
            r.class.name().to_string(),
            opt(r.se),
            opt(r.far),
            opt(r.prec),
            r.variant.name().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// A beat counts as positive when its score is above the threshold; a
/// threshold of 0 accepts every beat.
fn is_positive(score: f64, threshold: f64) -> bool {
    threshold <= 0.0 || score > threshold
}

/// ROC points for thresholds 0, 0.01, ..., 1 and every distinct score,
/// in increasing threshold order. Needs both classes present.
pub fn roc_curve(scores: &[(f64, bool)]) -> Result<Vec<RocPoint>, EvalError> {
    let pos = scores.iter().filter(|s| s.1).count();
    let neg = scores.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::DegenerateSplit(
            "ROC needs positive and negative beats".into(),
        ));
    }
    let mut ts: Vec<f64> = (0..=100).map(|k| f64::from(k) / 100.0).collect();
    ts.extend(scores.iter().map(|s| s.0).filter(|s| (0.0..=1.0).contains(s)));
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    Ok(ts
        .into_iter()
        .map(|t| {
            let (mut tp, mut fp) = (0usize, 0usize);
            for &(s, y) in scores {
                if is_positive(s, t) {
                    if y {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                }
            }
            RocPoint {
                threshold: t,
                fpr: fp as f64 / neg as f64,
                tpr: tp as f64 / pos as f64,
            }
        })
        .collect())
}

/// Trapezoid area under the curve, with the ends pinned at (0,0) and (1,1).
pub fn roc_auc(points: &[RocPoint]) -> f64 {
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p.fpr, p.tpr)).collect();
    pts.push((0.0, 0.0));
    pts.push((1.0, 1.0));
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

pub fn write_roc_csv<W: Write>(points: &[RocPoint], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["threshold", "fpr", "tpr"])?;
    for p in points {
        w.write_record([p.threshold.to_string(), p.fpr.to_string(), p.tpr.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Stratified split: a `train_fraction` share of each class, rounded,
/// goes to training. Row order within each side is preserved.
pub fn stratified_split(
    rows: &[BeatFeatures],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<BeatFeatures>, Vec<BeatFeatures>), EvalError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(EvalError::InvalidConfig(format!(
            "split {train_fraction} outside (0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; rows.len()];
    for c in AnomalyClass::ALL {
        let mut idx: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].true_class == Some(c)).collect();
        if idx.is_empty() {
            continue;
        }
        let n_train = (idx.len() as f64 * train_fraction).round() as usize;
        if n_train == 0 || n_train == idx.len() {
            return Err(EvalError::DegenerateSplit(format!(
                "class {c} has {} beats, leaving one side empty",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for &i in &idx[..n_train] {
            in_train[i] = true;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (r, t) in rows.iter().zip(in_train) {
        if r.true_class.is_none() {
            return Err(EvalError::Model(BncError::UnlabeledBeat {
                record: r.record.clone(),
                beat: r.beat,
            }));
        }
        if t {
            train.push(r.clone());
        } else {
            test.push(r.clone());
        }
    }
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub tukey: TukeyConfig,
    pub split: f64,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            train: TrainConfig::default(),
            tukey: TukeyConfig::default(),
            split: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassResult {
    pub class: AnomalyClass,
    pub bnc: MetricsRow,
    pub tukey: MetricsRow,
    pub roc: Vec<RocPoint>,
    pub auc: f64,
}

/// Predictions on the test side, raw and screened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestPrediction {
    pub truth: AnomalyClass,
    pub bnc: AnomalyClass,
    pub screened: AnomalyClass,
    pub probabilities: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub lead: String,
    pub train_size: usize,
    pub test_size: usize,
    pub classes: Vec<ClassResult>,
    /// Normal beats predicted abnormal by the raw network.
    pub false_alarms_bnc: usize,
    /// The same after the boxplot screen.
    pub false_alarms_tukey: usize,
    pub predictions: Vec<TestPrediction>,
}

impl ExperimentResult {
    pub fn rows(&self) -> Vec<MetricsRow> {
        self.classes
            .iter()
            .flat_map(|c| [c.bnc.clone(), c.tukey.clone()])
            .collect()
    }
}

/// Train on a stratified share of the corpus and score the rest.
///
/// The boxplot reference is the most recent training Normal beats, up to
/// the configured window.
pub fn run_experiment(corpus: &Corpus, cfg: &ExperimentConfig) -> Result<ExperimentResult, EvalError> {
    let (train, test) = stratified_split(&corpus.rows, cfg.split, cfg.seed)?;
    let model = BncModel::fit(&train, &cfg.train)?;
    let tukey = TukeyState::warm(cfg.tukey, &train)?;
    let stats = tukey.stats();
    let predictions = test
        .iter()
        .map(|b| {
            let p = model.posterior(b);
            let screened = if p.predicted.is_abnormal() && !stats.check_beat(b)?.any_deviation {
                AnomalyClass::Normal
            } else {
                p.predicted
            };
            Ok(TestPrediction {
                truth: b.true_class.expect("split keeps labelled beats"),
                bnc: p.predicted,
                screened,
                probabilities: p.probabilities,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    let present = corpus.class_counts();
    let mut classes = Vec::new();
    for c in AnomalyClass::ALL.into_iter().filter(|c| present[c.index()] > 0) {
        let raw = ConfusionCounts::one_vs_rest(predictions.iter().map(|p| (p.truth, p.bnc)), c);
        let scr = ConfusionCounts::one_vs_rest(predictions.iter().map(|p| (p.truth, p.screened)), c);
        let scores: Vec<(f64, bool)> = predictions
            .iter()
            .map(|p| (p.probabilities[c.index()], p.truth == c))
            .collect();
        let roc = roc_curve(&scores)?;
        classes.push(ClassResult {
            class: c,
            bnc: MetricsRow::new(&corpus.lead, c, Variant::Bnc, raw)?,
            tukey: MetricsRow::new(&corpus.lead, c, Variant::BncTukey, scr)?,
            auc: roc_auc(&roc),
            roc,
        });
    }
    let fa = |f: fn(&TestPrediction) -> AnomalyClass| {
        predictions
            .iter()
            .filter(|p| p.truth == AnomalyClass::Normal && f(p).is_abnormal())
            .count()
    };
    Ok(ExperimentResult {
        lead: corpus.lead.clone(),
        train_size: train.len(),
        test_size: test.len(),
        classes,
        false_alarms_bnc: fa(|p| p.bnc),
        false_alarms_tukey: fa(|p| p.screened),
        predictions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn beat(i: usize, class: AnomalyClass, x: f64) -> BeatFeatures {
        BeatFeatures {
            record: "t".into(),
            lead: "III".into(),
            beat: i,
            values: [Some(x); 9],
            fiducials: None,
            true_class: Some(class),
        }
    }

    #[test]
    fn perfect_and_symmetric_tables() {
        let m = MetricsRow::new(
            "III",
            AnomalyClass::Mi,
            Variant::Bnc,
            ConfusionCounts {
                tp: 50,
                tn: 50,
                fp: 0,
                fn_: 0,
            },
        )
        .unwrap();
        assert_eq!(
            (m.acc, m.err, m.se, m.far, m.prec),
            (1.0, 0.0, Some(1.0), Some(0.0), Some(1.0))
        );
        let m = MetricsRow::new(
            "III",
            AnomalyClass::Mi,
            Variant::Bnc,
            ConfusionCounts {
                tp: 93,
                tn: 93,
                fp: 7,
                fn_: 7,
            },
        )
        .unwrap();
        assert!((m.acc - 0.93).abs() < 1e-12);
        assert!((m.se.unwrap() - 0.93).abs() < 1e-12);
        assert!((m.far.unwrap() - 0.07).abs() < 1e-12);
        assert!((m.prec.unwrap() - 0.93).abs() < 1e-12);
    }

    #[test]
    fn zero_denominators_are_not_available() {
        let m = MetricsRow::new(
            "I",
            AnomalyClass::Pac,
            Variant::Bnc,
            ConfusionCounts {
                tp: 0,
                tn: 10,
                fp: 0,
                fn_: 3,
            },
        )
        .unwrap();
        assert_eq!(m.prec, None);
        assert_eq!(m.se, Some(0.0));
        assert!(matches!(
            metrics(ConfusionCounts::default()),
            Err(EvalError::EmptyCounts)
        ));
    }

    #[test]
    fn roc_endpoints() {
        let s = [(0.9, true), (0.8, true), (0.3, false), (0.1, false)];
        let roc = roc_curve(&s).unwrap();
        let first = roc.first().unwrap();
        let last = roc.last().unwrap();
        assert_eq!((first.threshold, first.fpr, first.tpr), (0.0, 1.0, 1.0));
        assert_eq!((last.threshold, last.fpr, last.tpr), (1.0, 0.0, 0.0));
        assert!(roc.iter().any(|p| p.fpr == 0.0 && p.tpr == 1.0));
        assert_eq!(roc_auc(&roc), 1.0);
    }

    #[test]
    fn balancing_keeps_minorities_and_is_seeded() {
        let mut rows: Vec<_> = (0..100).map(|i| beat(i, AnomalyClass::Normal, 0.0)).collect();
        rows.extend((100..120).map(|i| beat(i, AnomalyClass::Mi, 1.0)));
        rows.extend((120..130).map(|i| beat(i, AnomalyClass::Pvc, 2.0)));
        let (a, e) = balance(rows.clone(), 5);
        let (b, _) = balance(rows, 5);
        assert_eq!(a, b);
        assert_eq!(a.len(), 20 + 20 + 10);
        assert!(a.windows(2).all(|w| w[0].beat < w[1].beat));
        assert_eq!(
            e[0],
            BalanceEntry {
                class: AnomalyClass::Normal,
                kept: 20,
                dropped: 80
            }
        );
    }

    #[test]
    fn corpus_groups_and_filters_leads() {
        let mut rows = vec![beat(0, AnomalyClass::Normal, 0.0)];
        rows[0].lead = "MLIII".into();
        let mut v4 = beat(1, AnomalyClass::Mi, 0.0);
        v4.lead = "V4".into();
        let mut avr = beat(2, AnomalyClass::Mi, 0.0);
        avr.lead = "aVR".into();
        let mut unl = beat(3, AnomalyClass::Mi, 0.0);
        unl.true_class = None;
        rows.extend([v4, avr, unl]);
        let c = build_corpus(rows.clone(), Database::Incart, &[], None).unwrap();
        let leads: Vec<_> = c.iter().map(|c| c.lead.as_str()).collect();
        assert_eq!(leads, ["III", "V4"]);
        assert_eq!(c[0].rows.len(), 1);
        assert!(matches!(
            build_corpus(rows, Database::Edb, &["V1".into()], None),
            Err(EvalError::NoAnnotatedBeats(_))
        ));
        assert_eq!(canonical_lead("DIII"), "III");
        assert_eq!(canonical_lead("V1"), "V1");
    }

    #[test]
    fn split_is_stratified_and_checked() {
        let mut rows: Vec<_> = (0..40).map(|i| beat(i, AnomalyClass::Normal, 0.0)).collect();
        rows.extend((40..50).map(|i| beat(i, AnomalyClass::Pac, 1.0)));
        let (tr, te) = stratified_split(&rows, 0.3, 1).unwrap();
        let pac = |v: &[BeatFeatures]| v.iter().filter(|b| b.true_class == Some(AnomalyClass::Pac)).count();
        assert_eq!((tr.len(), te.len()), (15, 35));
        assert_eq!((pac(&tr), pac(&te)), (3, 7));
        rows.push(beat(60, AnomalyClass::Mi, 3.0));
        assert!(matches!(
            stratified_split(&rows, 0.5, 1),
            Err(EvalError::DegenerateSplit(_))
        ));
    }

    #[test]
    fn separable_corpus_is_perfect() {
        let mut rows = Vec::new();
        for i in 0..200 {
            let c = AnomalyClass::ALL[i % 4];
            rows.push(beat(i, c, c.index() as f64 * 10.0 + (i % 7) as f64 * 0.1));
        }
        let corpus = Corpus {
            lead: "III".into(),
            database: Database::Synthetic,
            rows,
            balancing: vec![],
            seed: None,
        };
        let r = run_experiment(&corpus, &ExperimentConfig::default()).unwrap();
        assert_eq!(r.classes.len(), 4);
        for c in &r.classes {
            assert_eq!(c.bnc.acc, 1.0);
            assert!(c.roc.iter().any(|p| p.fpr == 0.0 && p.tpr == 1.0));
        }
        let mut buf = Vec::new();
        write_metrics_csv(&r.rows(), &mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("Lead,Acc,Err,Class,Se,Far,Prec,Variant\nIII,1.000000,0.000000,Normal,"));
    }
}
