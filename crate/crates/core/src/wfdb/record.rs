use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{adc_to_mv, mv_to_adc};
use super::{
    parse_header, read_annotations, read_signal_raw, write_annotations, write_signal_raw, BeatAnnotation, RecordHeader,
    WfdbError,
};

/// The four beat classes handled by the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AnomalyClass {
    Normal,
    Pvc,
    Pac,
    Mi,
}

impl AnomalyClass {
    /// Fixed class order; also the tie-break order for argmax.
    pub const ALL: [AnomalyClass; 4] = [
        AnomalyClass::Normal,
        AnomalyClass::Pvc,
        AnomalyClass::Pac,
        AnomalyClass::Mi,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            AnomalyClass::Normal => "Normal",
            AnomalyClass::Pvc => "PVC",
            AnomalyClass::Pac => "PAC",
            AnomalyClass::Mi => "MI",
        }
    }

    pub fn is_abnormal(self) -> bool {
        self != AnomalyClass::Normal
    }

    /// Annotation symbol written for beats of this class.
    pub fn symbol(self) -> &'static str {
        match self {
            AnomalyClass::Normal => "N",
            AnomalyClass::Pvc => "V",
            AnomalyClass::Pac => "A",
            AnomalyClass::Mi => "s",
        }
    }
}

impl fmt::Display for AnomalyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AnomalyClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" | "n" => Ok(AnomalyClass::Normal),
            "pvc" | "v" => Ok(AnomalyClass::Pvc),
            "pac" | "a" => Ok(AnomalyClass::Pac),
            "mi" => Ok(AnomalyClass::Mi),
            other => Err(format!("unknown class {other:?}")),
        }
    }
}

/// Annotation symbol to class: N, V, A, s and T; everything else is excluded.
pub fn map_class(symbol: &str) -> Option<AnomalyClass> {
    match symbol {
        "N" => Some(AnomalyClass::Normal),
        "V" => Some(AnomalyClass::Pvc),
        "A" => Some(AnomalyClass::Pac),
        "s" | "T" => Some(AnomalyClass::Mi),
        _ => None,
    }
}

/// A calibrated multi-lead record with its retained annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct EcgRecord {
    pub header: RecordHeader,
    /// One millivolt sequence per signal, `header.n_samples` long.
    pub signals: Vec<Vec<f64>>,
    pub annotations: Vec<BeatAnnotation>,
    /// Non-beat annotations dropped while reading.
    pub skipped_annotations: usize,
}

impl EcgRecord {
    pub fn new(
        header: RecordHeader,
        signals: Vec<Vec<f64>>,
        annotations: Vec<BeatAnnotation>,
    ) -> Result<Self, WfdbError> {
        if signals.len() != header.n_signals() {
            return Err(WfdbError::LengthMismatch {
                expected: header.n_signals(),
                found: signals.len(),
            });
        }
        if let Some(bad) = signals.iter().find(|s| s.len() != header.n_samples) {
            return Err(WfdbError::LengthMismatch {
                expected: header.n_samples,
                found: bad.len(),
            });
        }
        for (i, pair) in annotations.windows(2).enumerate() {
            if pair[1].sample_index <= pair[0].sample_index {
                return Err(WfdbError::NonMonotonicAnnotations { index: i + 1 });
            }
        }
        if let Some(a) = annotations.iter().find(|a| a.sample_index >= header.n_samples) {
            return Err(WfdbError::AnnotationOutOfRange {
                sample: a.sample_index,
                n_samples: header.n_samples,
            });
        }
        Ok(Self {
            header,
            signals,
            annotations,
            skipped_annotations: 0,
        })
    }

    pub fn sampling_rate(&self) -> f64 {
        self.header.sampling_rate
    }

    pub fn name(&self) -> &str {
        &self.header.record_name
    }

    pub fn lead_names(&self) -> Vec<&str> {
        self.header.signals.iter().map(|s| s.lead_name.as_str()).collect()
    }

    /// Signal of the named lead (case-insensitive).
    pub fn lead(&self, name: &str) -> Option<&[f64]> {
        self.header.lead_index(name).map(|i| self.signals[i].as_slice())
    }

    /// Annotations that map to one of the four classes.
    pub fn labeled_beats(&self) -> impl Iterator<Item = (usize, AnomalyClass)> + '_ {
        self.annotations
            .iter()
            .filter_map(|a| map_class(&a.symbol()).map(|c| (a.sample_index, c)))
    }
}

fn io_err(path: &Path, e: impl fmt::Display) -> WfdbError {
    WfdbError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Read `<stem>.hea`, the signal file it names, and `<stem>.<annotator>` when present.
pub fn read_record(stem: &Path, annotator: &str) -> Result<EcgRecord, WfdbError> {
    let hea = with_ext(stem, "hea");
    let text = fs::read_to_string(&hea).map_err(|e| io_err(&hea, e))?;
    let header = parse_header(&text)?;
    let dir = stem.parent().unwrap_or_else(|| Path::new(""));
    let dat = dir.join(&header.signals[0].file_name);
    let bytes = fs::read(&dat).map_err(|e| io_err(&dat, e))?;
    let raw = read_signal_raw(&header, &bytes).map_err(|e| match e {
        WfdbError::TruncatedSignal { .. } | WfdbError::LengthMismatch { .. } => io_err(&dat, e),
        other => other,
    })?;
    let signals = raw
        .iter()
        .zip(&header.signals)
        .map(|(lead, spec)| lead.iter().map(|&r| adc_to_mv(r, spec.baseline, spec.gain)).collect())
        .collect();

    let atr = with_ext(stem, annotator);
    let (annotations, skipped) = if atr.exists() {
        let bytes = fs::read(&atr).map_err(|e| io_err(&atr, e))?;
        let set = read_annotations(&bytes).map_err(|e| io_err(&atr, e))?;
        (set.annotations, set.skipped + set.merged)
    } else {
        (Vec::new(), 0)
    };
    let mut record = EcgRecord::new(header, signals, annotations)?;
    record.skipped_annotations = skipped;
    Ok(record)
}

/// Write `<dir>/<name>.hea`, the signal file and `<dir>/<name>.atr`.
pub fn write_record(record: &EcgRecord, dir: &Path) -> Result<(), WfdbError> {
    let header = &record.header;
    let hea = dir.join(format!("{}.hea", header.record_name));
    fs::write(&hea, header.to_text()).map_err(|e| io_err(&hea, e))?;
    let raw: Vec<Vec<i32>> = record
        .signals
        .iter()
        .zip(&header.signals)
        .map(|(lead, spec)| lead.iter().map(|&mv| mv_to_adc(mv, spec.baseline, spec.gain)).collect())
        .collect();
    let dat = dir.join(&header.signals[0].file_name);
    let bytes = write_signal_raw(header, &raw)?;
    fs::write(&dat, bytes).map_err(|e| io_err(&dat, e))?;
    let atr = dir.join(format!("{}.atr", header.record_name));
    let bytes = write_annotations(&record.annotations)?;
    fs::write(&atr, bytes).map_err(|e| io_err(&atr, e))?;
    Ok(())
}

/// `sample_index,code,class` rows; class is empty for excluded codes.
pub fn write_annotation_csv<W: Write>(record: &EcgRecord, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sample_index", "code", "class"])?;
    for a in &record.annotations {
        let sym = a.symbol();
        let class = map_class(&sym).map(|c| c.name()).unwrap_or("");
        w.write_record([a.sample_index.to_string(), sym, class.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wfdb::{SignalFormat, SignalSpec};

    #[test]
    fn class_mapping() {
        assert_eq!(map_class("s"), Some(AnomalyClass::Mi));
        assert_eq!(map_class("T"), Some(AnomalyClass::Mi));
        assert_eq!(map_class("N"), Some(AnomalyClass::Normal));
        assert_eq!(map_class("V"), Some(AnomalyClass::Pvc));
        assert_eq!(map_class("A"), Some(AnomalyClass::Pac));
        for excluded in ["+", "L", "R", "~", "|", "?42", "a"] {
            assert_eq!(map_class(excluded), None, "{excluded}");
        }
    }

    #[test]
    fn class_order_and_names() {
        let names: Vec<_> = AnomalyClass::ALL.iter().map(|c| c.name()).collect();
        assert_eq!(names, ["Normal", "PVC", "PAC", "MI"]);
        for c in AnomalyClass::ALL {
            assert_eq!(c.name().parse::<AnomalyClass>().unwrap(), c);
            assert_eq!(map_class(c.symbol()), Some(c));
        }
    }

    fn tiny() -> EcgRecord {
        let header = RecordHeader {
            record_name: "tiny".into(),
            sampling_rate: 250.0,
            n_samples: 5,
            signals: vec![
                SignalSpec::new("tiny.dat", SignalFormat::F212, 200.0, 0, "III"),
                SignalSpec::new("tiny.dat", SignalFormat::F212, 200.0, 0, "V5"),
            ],
            comments: vec![],
        };
        let signals = vec![vec![0.0, 0.5, 1.0, -0.25, 0.005], vec![1.0, 1.0, -1.0, 0.0, 2.0]];
        let anns = vec![BeatAnnotation::new(1, 1), BeatAnnotation::new(3, 5)];
        EcgRecord::new(header, signals, anns).unwrap()
    }

    #[test]
    fn record_invariants() {
        let r = tiny();
        let mut bad = r.annotations.clone();
        bad.push(BeatAnnotation::new(9, 1));
        assert!(matches!(
            EcgRecord::new(r.header.clone(), r.signals.clone(), bad),
            Err(WfdbError::AnnotationOutOfRange { sample: 9, .. })
        ));
        let mut short = r.signals.clone();
        short[1].pop();
        assert!(EcgRecord::new(r.header.clone(), short, vec![]).is_err());
        assert_eq!(r.lead("v5").unwrap()[4], 2.0);
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let r = tiny();
        write_record(&r, dir.path()).unwrap();
        let back = read_record(&dir.path().join("tiny"), "atr").unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn csv_export() {
        let mut buf = Vec::new();
        write_annotation_csv(&tiny(), &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "sample_index,code,class\n1,N,Normal\n3,V,PVC\n"
        );
    }
}
