//! The nine per-beat parameters: amplitudes of P, QRS, T and the ST segment,
//! and the P, QRS, T, PR and QT durations.
//!
//! Amplitudes are signed extrema relative to the beat's isoelectric level,
//! the median of the PR segment (or of the 80 ms before QRS onset when the
//! beat has no P wave). A parameter that cannot be measured is `None`.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::delineate::{delineate_record, BeatFiducials, DelineateError, DelineationConfig};
use crate::preprocess::PreprocessConfig;
use crate::wfdb::{AnomalyClass, EcgRecord};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("invalid fiducials: {0}")]
    InvalidFiducials(String),
    #[error(transparent)]
    Delineate(#[from] DelineateError),
    #[error("feature CSV line {line}: {reason}")]
    Csv { line: usize, reason: String },
}

impl From<csv::Error> for FeatureError {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map_or(0, |p| p.line() as usize);
        FeatureError::Csv {
            line,
            reason: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Feature {
    PAmp,
    PDur,
    QrsAmp,
    QrsDur,
    TAmp,
    TDur,
    PrDur,
    StAmp,
    QtDur,
}

impl Feature {
    pub const ALL: [Feature; 9] = [
        Feature::PAmp,
        Feature::PDur,
        Feature::QrsAmp,
        Feature::QrsDur,
        Feature::TAmp,
        Feature::TDur,
        Feature::PrDur,
        Feature::StAmp,
        Feature::QtDur,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Column name used in CSV files and model JSON.
    pub fn name(self) -> &'static str {
        match self {
            Feature::PAmp => "P_amp",
            Feature::PDur => "P_dur",
            Feature::QrsAmp => "QRS_amp",
            Feature::QrsDur => "QRS_dur",
            Feature::TAmp => "T_amp",
            Feature::TDur => "T_dur",
            Feature::PrDur => "PR_dur",
            Feature::StAmp => "ST_amp",
            Feature::QtDur => "QT_dur",
        }
    }

    pub fn is_amplitude(self) -> bool {
        matches!(self, Feature::PAmp | Feature::QrsAmp | Feature::TAmp | Feature::StAmp)
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Feature::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown feature {s:?}"))
    }
}

/// Parameters of one beat; amplitudes in mV, durations in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatFeatures {
    pub record: String,
    pub lead: String,
    pub beat: usize,
    pub values: [Option<f64>; 9],
    /// Absent when the beat was read back from CSV.
    pub fiducials: Option<BeatFiducials>,
    pub true_class: Option<AnomalyClass>,
}

impl BeatFeatures {
    pub fn get(&self, f: Feature) -> Option<f64> {
        self.values[f.index()]
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Value of `x - base` with the largest magnitude on `[lo, hi]`, sign kept.
fn signed_extremum(x: &[f64], lo: usize, hi: usize, base: f64) -> f64 {
    x[lo..=hi]
        .iter()
        .map(|v| v - base)
        .fold(0.0, |best: f64, d| if d.abs() > best.abs() { d } else { best })
}

/// Isoelectric level used as the zero of every amplitude of the beat.
pub fn beat_baseline(x: &[f64], fid: &BeatFiducials, fs: f64) -> f64 {
    match fid.p {
        Some(p) => median(x[p.offset..=fid.qrs_onset].to_vec()),
        None => {
            let span = ((0.080 * fs).round() as usize).max(1);
            let lo = fid.qrs_onset.saturating_sub(span);
            median(x[lo..=fid.qrs_onset].to_vec())
        }
    }
}

/// The nine parameters of one delineated beat.
pub fn extract_features(x: &[f64], fid: &BeatFiducials, fs: f64) -> Result<[Option<f64>; 9], FeatureError> {
    if !fid.is_ordered() {
        return Err(FeatureError::InvalidFiducials(format!("ordering violated: {fid:?}")));
    }
    if !fid.within(x.len()) {
        return Err(FeatureError::InvalidFiducials(format!(
            "index beyond the {}-sample signal",
            x.len()
        )));
    }
    if !(fs > 0.0) {
        return Err(FeatureError::InvalidFiducials(format!("sampling rate {fs}")));
    }
    let base = beat_baseline(x, fid, fs);
    let dur = |on: usize, off: usize| (off - on) as f64 / fs;
    let mut v = [None; 9];
    if let Some(p) = fid.p {
        v[Feature::PAmp.index()] = Some(signed_extremum(x, p.onset, p.offset, base));
        v[Feature::PDur.index()] = Some(dur(p.onset, p.offset));
        v[Feature::PrDur.index()] = Some(dur(p.onset, fid.qrs_onset));
    }
    v[Feature::QrsAmp.index()] = Some(signed_extremum(x, fid.qrs_onset, fid.qrs_offset, base));
    v[Feature::QrsDur.index()] = Some(dur(fid.qrs_onset, fid.qrs_offset));
    if let Some(t) = fid.t {
        v[Feature::TAmp.index()] = Some(signed_extremum(x, t.onset, t.offset, base));
        v[Feature::TDur.index()] = Some(dur(t.onset, t.offset));
        v[Feature::QtDur.index()] = Some(dur(fid.qrs_onset, t.offset));
        // open interval, or its closed hull when QRS offset and T onset touch
        let st = if t.onset > fid.qrs_offset + 1 {
            signed_extremum(x, fid.qrs_offset + 1, t.onset - 1, base)
        } else {
            signed_extremum(x, fid.qrs_offset, t.onset, base)
        };
        v[Feature::StAmp.index()] = Some(st);
    }
    Ok(v)
}

/// For each R peak, the index of the annotation it matches within `tolerance`
/// samples. Each annotation is used at most once; the closer peak wins.
pub fn match_annotations(peaks: &[usize], annotations: &[usize], tolerance: usize) -> Vec<Option<usize>> {
    let mut owner: Vec<Option<(usize, usize)>> = vec![None; annotations.len()];
    for (i, &r) in peaks.iter().enumerate() {
        let pos = annotations.partition_point(|&a| a < r);
        let nearest = [pos.checked_sub(1), Some(pos)]
            .into_iter()
            .flatten()
            .filter(|&k| k < annotations.len())
            .min_by_key(|&k| annotations[k].abs_diff(r));
        if let Some(k) = nearest {
            let d = annotations[k].abs_diff(r);
            if d <= tolerance && owner[k].is_none_or(|(_, od)| d < od) {
                owner[k] = Some((i, d));
            }
        }
    }
    let mut out = vec![None; peaks.len()];
    for (k, o) in owner.iter().enumerate() {
        if let Some((i, _)) = o {
            out[*i] = Some(k);
        }
    }
    out
}

/// Matching tolerance between detected beats and annotations.
pub const MATCH_TOLERANCE_MS: f64 = 75.0;

/// Delineate one lead and extract the features of every beat, labelled with
/// the class of the annotation each beat matches.
pub fn record_features(
    record: &EcgRecord,
    lead: &str,
    pre: &PreprocessConfig,
    cfg: &DelineationConfig,
) -> Result<Vec<BeatFeatures>, FeatureError> {
    let lead_name = record
        .header
        .lead_index(lead)
        .map(|i| record.header.signals[i].lead_name.clone())
        .ok_or_else(|| DelineateError::LeadNotFound(lead.to_string()))?;
    let d = delineate_record(record, lead, pre, cfg)?;
    let Some(signals) = d.signals else {
        return Ok(Vec::new());
    };
    let fs = record.sampling_rate();
    let beats = &d.delineation.beats;
    let labelled: Vec<(usize, AnomalyClass)> = record.labeled_beats().collect();
    let samples: Vec<usize> = labelled.iter().map(|l| l.0).collect();
    let peaks: Vec<usize> = beats.iter().map(|b| b.r).collect();
    let tol = (MATCH_TOLERANCE_MS * fs / 1000.0).round() as usize;
    let matches = match_annotations(&peaks, &samples, tol);
    beats
        .iter()
        .zip(matches)
        .enumerate()
        .map(|(i, (fid, m))| {
            Ok(BeatFeatures {
                record: record.name().to_string(),
                lead: lead_name.clone(),
                beat: i,
                values: extract_features(&signals.filtered, fid, fs)?,
                fiducials: Some(*fid),
                true_class: m.map(|k| labelled[k].1),
            })
        })
        .collect()
}

const NA: &str = "NA";

fn header() -> Vec<&'static str> {
    let mut h = vec!["record", "lead", "beat"];
    h.extend(Feature::ALL.iter().map(|f| f.name()));
    h.push("class");
    h
}

/// `record,lead,beat,P_amp,...,QT_dur,class`; missing values are `NA`.
pub fn write_features_csv<W: Write>(beats: &[BeatFeatures], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header())?;
    for b in beats {
        let mut row = vec![b.record.clone(), b.lead.clone(), b.beat.to_string()];
        row.extend(
            b.values
                .iter()
                .map(|v| v.map_or_else(|| NA.to_string(), |v| v.to_string())),
        );
        row.push(b.true_class.map_or_else(|| NA.to_string(), |c| c.name().to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features_csv<R: Read>(input: R) -> Result<Vec<BeatFeatures>, FeatureError> {
    let mut r = csv::Reader::from_reader(input);
    let expected = header();
    let got: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if got != expected {
        return Err(FeatureError::Csv {
            line: 1,
            reason: format!("expected header {}", expected.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let bad = |reason: String| FeatureError::Csv { line, reason };
        let beat = row[2].parse().map_err(|e| bad(format!("beat: {e}")))?;
        let mut values = [None; 9];
        for (k, v) in values.iter_mut().enumerate() {
            let cell = &row[3 + k];
            if cell != NA {
                let x: f64 = cell.parse().map_err(|e| bad(format!("{}: {e}", Feature::ALL[k])))?;
                *v = Some(x);
            }
        }
        let class = &row[12];
        let true_class = if class == NA || class.is_empty() {
            None
        } else {
            Some(class.parse().map_err(bad)?)
        };
        out.push(BeatFeatures {
            record: row[0].to_string(),
            lead: row[1].to_string(),
            beat,
            values,
            fiducials: None,
            true_class,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delineate::WaveFiducials;
    use crate::synth::{generate, Morphology, SyntheticSpec};

    fn fid() -> BeatFiducials {
        BeatFiducials {
            p: Some(WaveFiducials {
                onset: 100,
                peak: 115,
                offset: 130,
            }),
            qrs_onset: 150,
            q: 155,
            r: 160,
            s: 165,
            qrs_offset: 170,
            t: Some(WaveFiducials {
                onset: 200,
                peak: 230,
                offset: 260,
            }),
        }
    }

    #[test]
    fn durations_are_index_differences() {
        let x = vec![0.0; 300];
        let v = extract_features(&x, &fid(), 250.0).unwrap();
        assert_eq!(v[Feature::PDur.index()], Some(0.12));
        assert_eq!(v[Feature::QrsDur.index()], Some(0.08));
        assert_eq!(v[Feature::TDur.index()], Some(0.24));
        assert_eq!(v[Feature::PrDur.index()], Some(0.2));
        assert_eq!(v[Feature::QtDur.index()], Some(0.44));
        assert_eq!(v[Feature::QrsAmp.index()], Some(0.0));
    }

    #[test]
    fn missing_p_is_not_zero() {
        let mut f = fid();
        f.p = None;
        let v = extract_features(&vec![0.1; 300], &f, 250.0).unwrap();
        assert_eq!(v[Feature::PAmp.index()], None);
        assert_eq!(v[Feature::PDur.index()], None);
        assert_eq!(v[Feature::PrDur.index()], None);
        assert!(v[Feature::QrsDur.index()].is_some());
    }

    #[test]
    fn bad_fiducials_rejected() {
        let mut f = fid();
        f.q = 140;
        assert!(matches!(
            extract_features(&[0.0; 300], &f, 250.0),
            Err(FeatureError::InvalidFiducials(_))
        ));
        assert!(extract_features(&[0.0; 200], &fid(), 250.0).is_err());
    }

    #[test]
    fn st_falls_back_to_closed_interval() {
        let mut f = fid();
        f.t = Some(WaveFiducials {
            onset: 171,
            peak: 230,
            offset: 260,
        });
        let mut x = vec![0.0; 300];
        x[171] = 0.4;
        let v = extract_features(&x, &f, 250.0).unwrap();
        assert_eq!(v[Feature::StAmp.index()], Some(0.4));
    }

    #[test]
    fn synthetic_amplitudes() {
        let s = generate(&SyntheticSpec {
            beats: 6,
            jitter: 0.0,
            ..Default::default()
        });
        let b = &s.beats[2];
        let v = extract_features(&s.clean, &b.fiducials, 250.0).unwrap();
        assert!((v[Feature::QrsAmp.index()].unwrap() - 1.2).abs() < 0.02, "{v:?}");

        let mi = generate(&SyntheticSpec {
            beats: 6,
            morphology: Morphology::Mi,
            ..Default::default()
        });
        for b in &mi.beats {
            let v = extract_features(&mi.clean, &b.fiducials, 250.0).unwrap();
            assert!(v[Feature::StAmp.index()].unwrap() >= 0.5, "{v:?}");
        }
    }

    #[test]
    fn matching_is_one_to_one() {
        let m = match_annotations(&[100, 110, 300, 700], &[105, 290, 500], 19);
        assert_eq!(m, vec![Some(0), None, Some(1), None]);
        let m = match_annotations(&[100, 104], &[105], 19);
        assert_eq!(m, vec![None, Some(0)]);
    }

    #[test]
    fn csv_round_trip() {
        let beats = vec![BeatFeatures {
            record: "r1".into(),
            lead: "III".into(),
            beat: 4,
            values: [
                Some(0.1),
                None,
                Some(1.25),
                Some(0.088),
                Some(-0.3),
                Some(0.2),
                None,
                Some(0.61),
                Some(0.41),
            ],
            fiducials: None,
            true_class: Some(AnomalyClass::Mi),
        }];
        let mut buf = Vec::new();
        write_features_csv(&beats, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(
            text.starts_with("record,lead,beat,P_amp,P_dur,QRS_amp,QRS_dur,T_amp,T_dur,PR_dur,ST_amp,QT_dur,class\n")
        );
        assert!(text.contains(",NA,"));
        assert_eq!(read_features_csv(buf.as_slice()).unwrap(), beats);
    }

    #[test]
    fn labelled_record_features() {
        let s = generate(&SyntheticSpec {
            beats: 12,
            morphology: Morphology::Pvc,
            noise_sigma: 0.01,
            ..Default::default()
        });
        let f = record_features(
            &s.record,
            "iii",
            &PreprocessConfig::default(),
            &DelineationConfig::default(),
        )
        .unwrap();
        assert_eq!(f.len(), 12);
        assert_eq!(f[0].lead, "III");
        let classes: Vec<_> = f.iter().map(|b| b.true_class.unwrap()).collect();
        let truth: Vec<_> = s.beats.iter().map(|b| b.morphology.class()).collect();
        assert_eq!(classes, truth);
        // PVCs carry no P wave
        assert!(f[1].get(Feature::PAmp).is_none());
        assert!(f[0].get(Feature::PAmp).is_some());
    }
}
