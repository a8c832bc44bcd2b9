//! Beat-by-beat alarm generation.
//!
//! Each beat is classified by the network. A beat predicted abnormal is then
//! screened against the boxplot of recent Normal beats: if none of its nine
//! parameters leaves the fences it is a false alarm, otherwise it counts
//! towards its class. At the end of each window of `win` beats an alarm is
//! raised for every class whose count exceeds `r`.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bnc::{BncError, BncModel, Posterior};
use crate::delineate::DelineationConfig;
use crate::features::{record_features, BeatFeatures, Feature, FeatureError};
use crate::preprocess::PreprocessConfig;
use crate::tukey::{DeviationReport, TukeyConfig, TukeyError, TukeyState};
use crate::wfdb::{AnomalyClass, EcgRecord};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("boxplot reference window is cold")]
    TukeyCold,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] BncError),
    #[error(transparent)]
    Tukey(#[from] TukeyError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdatePolicy {
    /// The model never changes during a run.
    #[default]
    Frozen,
    /// After each window the model absorbs the window's beats, labelled by
    /// their final verdicts.
    Windowed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Beats per analysis window.
    pub win: usize,
    /// A class raises an alarm when its count in a window exceeds this.
    pub r: usize,
    pub update_policy: UpdatePolicy,
    pub tukey: TukeyConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            win: 20,
            r: 3,
            update_policy: UpdatePolicy::Frozen,
            tukey: TukeyConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.win == 0 {
            return Err(PipelineError::InvalidConfig("win must be at least 1".into()));
        }
        if self.r == 0 {
            return Err(PipelineError::InvalidConfig("r must be at least 1".into()));
        }
        self.tukey.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FinalLabel {
    Class(AnomalyClass),
    FalseAlarm,
}

impl FinalLabel {
    pub fn name(self) -> &'static str {
        match self {
            FinalLabel::Class(c) => c.name(),
            FinalLabel::FalseAlarm => "FalseAlarm",
        }
    }

    /// Class used for model updates and for the Normal reference window.
    pub fn effective_class(self) -> AnomalyClass {
        match self {
            FinalLabel::Class(c) => c,
            FinalLabel::FalseAlarm => AnomalyClass::Normal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatVerdict {
    pub beat: usize,
    pub posterior: Posterior,
    /// `None` when the network predicted Normal and the screen was skipped.
    pub tukey: Option<DeviationReport>,
    pub final_label: FinalLabel,
    /// Parameters outside their fences.
    pub contributing: Vec<Feature>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alarm {
    pub class: AnomalyClass,
    pub window: usize,
    pub count: usize,
    pub beats: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct WindowOutcome {
    pub verdicts: Vec<BeatVerdict>,
    pub alarms: Vec<Alarm>,
    pub model: BncModel,
    pub tukey: TukeyState,
}

/// Classify, screen and count one window of beats.
pub fn process_window(
    beats: &[BeatFeatures],
    window: usize,
    model: &BncModel,
    tukey: &TukeyState,
    cfg: &PipelineConfig,
) -> Result<WindowOutcome, PipelineError> {
    cfg.validate()?;
    let stats = tukey.stats();
    if stats.params.iter().all(Option::is_none) {
        return Err(PipelineError::TukeyCold);
    }
    let mut counts = [0usize; 4];
    let mut members: [Vec<usize>; 4] = Default::default();
    let mut verdicts = Vec::with_capacity(beats.len());
    for b in beats {
        let posterior = model.posterior(b);
        let (report, final_label) = if posterior.predicted.is_abnormal() {
            let rep = stats.check_beat(b)?;
            let label = if rep.any_deviation {
                counts[posterior.predicted.index()] += 1;
                members[posterior.predicted.index()].push(b.beat);
                FinalLabel::Class(posterior.predicted)
            } else {
                FinalLabel::FalseAlarm
            };
            (Some(rep), label)
        } else {
            (None, FinalLabel::Class(AnomalyClass::Normal))
        };
        verdicts.push(BeatVerdict {
            beat: b.beat,
            posterior,
            contributing: report.map(|r| r.deviating()).unwrap_or_default(),
            tukey: report,
            final_label,
        });
    }
    let alarms = AnomalyClass::ALL
        .into_iter()
        .filter(|c| c.is_abnormal() && counts[c.index()] > cfg.r)
        .map(|c| Alarm {
            class: c,
            window,
            count: counts[c.index()],
            beats: members[c.index()].clone(),
        })
        .collect();

    let model = match cfg.update_policy {
        UpdatePolicy::Frozen => model.clone(),
        UpdatePolicy::Windowed => {
            let labelled: Vec<BeatFeatures> = beats
                .iter()
                .zip(&verdicts)
                .map(|(b, v)| BeatFeatures {
                    true_class: Some(v.final_label.effective_class()),
                    ..b.clone()
                })
                .collect();
            model.update(&labelled)?
        }
    };
    let mut tukey = tukey.clone();
    for (b, v) in beats.iter().zip(&verdicts) {
        if v.final_label.effective_class() == AnomalyClass::Normal {
            tukey.push(b);
        }
    }
    Ok(WindowOutcome {
        verdicts,
        alarms,
        model,
        tukey,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub beats: usize,
    pub windows: usize,
    /// Final verdict counts: Normal, PVC, PAC, MI.
    pub class_counts: [usize; 4],
    pub false_alarms: usize,
    pub alarms: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub verdicts: Vec<BeatVerdict>,
    pub alarms: Vec<Alarm>,
    pub summary: RunSummary,
    pub model: BncModel,
}

/// Window-by-window run over a beat stream.
pub fn run_beats(
    beats: &[BeatFeatures],
    model: &BncModel,
    tukey: TukeyState,
    cfg: &PipelineConfig,
) -> Result<RunOutput, PipelineError> {
    cfg.validate()?;
    let mut model = model.clone();
    let mut tukey = tukey;
    let mut verdicts = Vec::with_capacity(beats.len());
    let mut alarms = Vec::new();
    let mut windows = 0;
    for (w, chunk) in beats.chunks(cfg.win).enumerate() {
        let out = process_window(chunk, w, &model, &tukey, cfg)?;
        verdicts.extend(out.verdicts);
        alarms.extend(out.alarms);
        model = out.model;
        tukey = out.tukey;
        windows += 1;
    }
    let mut summary = RunSummary {
        beats: beats.len(),
        windows,
        alarms: alarms.len(),
        ..Default::default()
    };
    for v in &verdicts {
        match v.final_label {
            FinalLabel::Class(c) => summary.class_counts[c.index()] += 1,
            FinalLabel::FalseAlarm => summary.false_alarms += 1,
        }
    }
    Ok(RunOutput {
        verdicts,
        alarms,
        summary,
        model,
    })
}

/// Reference window taken from the beats of the stream itself that the
/// network predicts Normal, for runs without a training corpus at hand.
pub fn self_warm(beats: &[BeatFeatures], model: &BncModel, cfg: TukeyConfig) -> Result<TukeyState, PipelineError> {
    let mut t = TukeyState::new(cfg)?;
    for b in beats {
        if model.posterior(b).predicted == AnomalyClass::Normal {
            t.push(b);
        }
    }
    Ok(t)
}

/// Delineate one lead of a record and run the beats through the pipeline.
pub fn run_record(
    record: &EcgRecord,
    lead: &str,
    model: &BncModel,
    tukey: TukeyState,
    cfg: &PipelineConfig,
    pre: &PreprocessConfig,
    delineation: &DelineationConfig,
) -> Result<RunOutput, PipelineError> {
    let beats = record_features(record, lead, pre, delineation)?;
    run_beats(&beats, model, tukey, cfg)
}

/// `beat,posteriorN,posteriorV,posteriorA,posteriorMI,tukey_flags,final`.
pub fn write_verdicts_csv<W: Write>(verdicts: &[BeatVerdict], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "beat",
        "posteriorN",
        "posteriorV",
        "posteriorA",
        "posteriorMI",
        "tukey_flags",
        "final",
    ])?;
    for v in verdicts {
        let mut row = vec![v.beat.to_string()];
        row.extend(v.posterior.probabilities.iter().map(|p| p.to_string()));
        row.push(v.tukey.map_or_else(|| "bypass".to_string(), |t| t.render()));
        row.push(v.final_label.name().to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One `{"class":..,"window":..,"count":..,"beats":[..]}` object per line.
pub fn write_alarms_jsonl<W: Write>(alarms: &[Alarm], mut out: W) -> std::io::Result<()> {
    for a in alarms {
        let line = serde_json::json!({
            "class": a.class.name(),
            "window": a.window,
            "count": a.count,
            "beats": a.beats,
        });
        writeln!(out, "{line}")?;
    }
    Ok(())
}
