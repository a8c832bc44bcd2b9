//! Seeded synthetic ECG generator with recorded ground truth.
//!
//! Every wave is a Gaussian bump `a * exp(-(t - c)^2 / (2 s^2))`. Ground-truth
//! onsets and offsets are placed at `c -/+ 2s` of the first and last bump of
//! each wave, the point where the tangent at the steepest flank meets the
//! baseline. Peaks are the extrema of the noiseless waveform.
//!
//! Morphologies:
//! - normal: P, small Q, tall narrow R, S, upright T;
//! - PVC: no P, wide R and deep S, inverted T, early with a compensatory pause;
//! - PAC: early beat with a small narrow P and short PR interval;
//! - MI: ST-segment elevation of about 0.6 mV and a long, tall T.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::delineate::{BeatFiducials, WaveFiducials};
use crate::wfdb::{AnomalyClass, BeatAnnotation, EcgRecord, RecordHeader, SignalFormat, SignalSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Morphology {
    Normal,
    Pvc,
    Pac,
    Mi,
}

impl Morphology {
    pub const ALL: [Morphology; 4] = [Morphology::Normal, Morphology::Pvc, Morphology::Pac, Morphology::Mi];

    pub fn class(self) -> AnomalyClass {
        match self {
            Morphology::Normal => AnomalyClass::Normal,
            Morphology::Pvc => AnomalyClass::Pvc,
            Morphology::Pac => AnomalyClass::Pac,
            Morphology::Mi => AnomalyClass::Mi,
        }
    }

    pub fn from_class(class: AnomalyClass) -> Self {
        match class {
            AnomalyClass::Normal => Morphology::Normal,
            AnomalyClass::Pvc => Morphology::Pvc,
            AnomalyClass::Pac => Morphology::Pac,
            AnomalyClass::Mi => Morphology::Mi,
        }
    }
}

impl FromStr for Morphology {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "normal" => Ok(Morphology::Normal),
            "pvc" => Ok(Morphology::Pvc),
            "pac" => Ok(Morphology::Pac),
            "mi" => Ok(Morphology::Mi),
            other => Err(format!("unknown morphology {other:?} (normal, pvc, pac, mi)")),
        }
    }
}

/// One Gaussian component; times in seconds relative to the R peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub center: f64,
    pub width: f64,
    pub amplitude: f64,
}

impl Bump {
    const fn new(center: f64, width: f64, amplitude: f64) -> Self {
        Self {
            center,
            width,
            amplitude,
        }
    }

    fn value(&self, t: f64) -> f64 {
        let z = (t - self.center) / self.width;
        self.amplitude * (-0.5 * z * z).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeatShape {
    pub p: Option<Bump>,
    pub q: Option<Bump>,
    pub r: Bump,
    pub s: Option<Bump>,
    pub st: Option<Bump>,
    pub t: Bump,
}

impl BeatShape {
    pub fn template(m: Morphology) -> Self {
        match m {
            Morphology::Normal => Self {
                p: Some(Bump::new(-0.160, 0.020, 0.20)),
                q: Some(Bump::new(-0.030, 0.008, -0.12)),
                r: Bump::new(0.0, 0.010, 1.2),
                s: Some(Bump::new(0.030, 0.008, -0.25)),
                st: None,
                t: Bump::new(0.260, 0.040, 0.35),
            },
            Morphology::Pvc => Self {
                p: None,
                q: None,
                r: Bump::new(0.0, 0.022, 1.4),
                s: Some(Bump::new(0.055, 0.020, -0.5)),
                st: None,
                t: Bump::new(0.300, 0.050, -0.40),
            },
            Morphology::Pac => Self {
                p: Some(Bump::new(-0.120, 0.014, 0.10)),
                q: Some(Bump::new(-0.030, 0.008, -0.10)),
                r: Bump::new(0.0, 0.010, 1.1),
                s: Some(Bump::new(0.030, 0.008, -0.25)),
                st: None,
                t: Bump::new(0.250, 0.038, 0.30),
            },
            Morphology::Mi => Self {
                p: Some(Bump::new(-0.160, 0.020, 0.20)),
                q: Some(Bump::new(-0.030, 0.008, -0.15)),
                r: Bump::new(0.0, 0.010, 1.0),
                s: Some(Bump::new(0.030, 0.008, -0.20)),
                st: Some(Bump::new(0.130, 0.040, 0.60)),
                t: Bump::new(0.320, 0.075, 0.70),
            },
        }
    }

    fn bumps(&self) -> impl Iterator<Item = &Bump> {
        self.p
            .iter()
            .chain(self.q.iter())
            .chain(std::iter::once(&self.r))
            .chain(self.s.iter())
            .chain(self.st.iter())
            .chain(std::iter::once(&self.t))
    }

    /// Noiseless value at `t` seconds from the R peak.
    pub fn value(&self, t: f64) -> f64 {
        self.bumps().map(|b| b.value(t)).sum()
    }

    /// Latest time (relative to R) at which the beat is still visibly non-zero.
    fn extent(&self) -> (f64, f64) {
        let lo = self
            .bumps()
            .map(|b| b.center - 5.0 * b.width)
            .fold(f64::INFINITY, f64::min);
        let hi = self
            .bumps()
            .map(|b| b.center + 5.0 * b.width)
            .fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    fn jittered(&self, rng: &mut ChaCha8Rng, spread: f64) -> Self {
        let normal = Normal::new(0.0, spread).expect("finite spread");
        let scale = 1.0 + normal.sample(rng);
        let mut jit = |b: &Bump| Bump {
            center: b.center + 0.1 * b.width * normal.sample(rng),
            width: b.width * (1.0 + normal.sample(rng)),
            amplitude: b.amplitude * scale * (1.0 + normal.sample(rng)),
        };
        Self {
            p: self.p.as_ref().map(&mut jit),
            q: self.q.as_ref().map(&mut jit),
            r: jit(&self.r),
            s: self.s.as_ref().map(&mut jit),
            st: self.st.as_ref().map(&mut jit),
            t: jit(&self.t),
        }
    }
}

/// Parameters of a synthetic single-lead record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub beats: usize,
    pub bpm: f64,
    /// `normal` and `mi` records use the morphology for every beat; `pvc` and
    /// `pac` records alternate normal and ectopic beats (bigeminy).
    pub morphology: Morphology,
    pub noise_sigma: f64,
    pub drift_amplitude: f64,
    pub drift_hz: f64,
    pub sampling_rate: f64,
    pub seed: u64,
    /// Relative standard deviation of per-beat amplitude/width jitter.
    pub jitter: f64,
    pub lead: String,
    pub name: String,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            beats: 10,
            bpm: 75.0,
            morphology: Morphology::Normal,
            noise_sigma: 0.0,
            drift_amplitude: 0.0,
            drift_hz: 0.3,
            sampling_rate: 250.0,
            seed: 0,
            jitter: 0.05,
            lead: "III".into(),
            name: "synth".into(),
        }
    }
}

impl SyntheticSpec {
    /// Morphology of each beat implied by `morphology`.
    pub fn pattern(&self) -> Vec<Morphology> {
        (0..self.beats)
            .map(|i| match self.morphology {
                Morphology::Pvc | Morphology::Pac if i % 2 == 0 => Morphology::Normal,
                m => m,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrueBeat {
    pub morphology: Morphology,
    pub shape: BeatShape,
    pub fiducials: BeatFiducials,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRecord {
    pub record: EcgRecord,
    /// The noiseless, drift-free signal.
    pub clean: Vec<f64>,
    pub beats: Vec<TrueBeat>,
}

const LEAD_IN: f64 = 0.7;
const TAIL: f64 = 0.9;

/// Generate a record with the pattern implied by `spec.morphology`.
pub fn generate(spec: &SyntheticSpec) -> SyntheticRecord {
    generate_pattern(spec, &spec.pattern())
}

/// Generate a record with an explicit per-beat morphology sequence.
pub fn generate_pattern(spec: &SyntheticSpec, pattern: &[Morphology]) -> SyntheticRecord {
    let fs = spec.sampling_rate;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rr = 60.0 / spec.bpm;
    let rr_noise = Normal::new(0.0, 0.02).expect("finite");

    // R peak times
    let mut times = Vec::with_capacity(pattern.len());
    let mut t = LEAD_IN;
    let mut prev: Option<Morphology> = None;
    for &m in pattern {
        if let Some(p) = prev {
            let base = rr * (1.0 + rr_noise.sample(&mut rng));
            let interval = match (p, m) {
                (_, Morphology::Pvc) => 0.65 * base,
                (Morphology::Pvc, _) => 1.35 * base,
                (_, Morphology::Pac) => 0.72 * base,
                _ => base,
            };
            t += interval;
        }
        times.push(t);
        prev = Some(m);
    }
    let n = ((t + TAIL) * fs).ceil() as usize;

    let shapes: Vec<BeatShape> = pattern
        .iter()
        .map(|&m| BeatShape::template(m).jittered(&mut rng, spec.jitter))
        .collect();

    let mut clean = vec![0.0; n];
    for (shape, &tr) in shapes.iter().zip(&times) {
        let (lo, hi) = shape.extent();
        let first = (((tr + lo) * fs).floor().max(0.0)) as usize;
        let last = (((tr + hi) * fs).ceil() as usize).min(n - 1);
        for (i, v) in clean.iter_mut().enumerate().take(last + 1).skip(first) {
            *v += shape.value(i as f64 / fs - tr);
        }
    }

    let noise = Normal::new(0.0, spec.noise_sigma.max(0.0)).expect("finite sigma");
    let phase = rng.random_range(0.0..2.0 * PI);
    let signal: Vec<f64> = clean
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let drift = spec.drift_amplitude * (2.0 * PI * spec.drift_hz * i as f64 / fs + phase).sin();
            let e = if spec.noise_sigma > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            c + drift + e
        })
        .collect();

    let beats: Vec<TrueBeat> = pattern
        .iter()
        .zip(shapes)
        .zip(&times)
        .map(|((&m, shape), &tr)| {
            let fiducials = true_fiducials(&shape, tr, fs, &clean);
            TrueBeat {
                morphology: m,
                shape,
                fiducials,
            }
        })
        .collect();

    let annotations = beats
        .iter()
        .map(|b| BeatAnnotation::from_symbol(b.fiducials.r, b.morphology.class().symbol()).expect("known symbol"))
        .collect();
    let header = RecordHeader {
        record_name: spec.name.clone(),
        sampling_rate: fs,
        n_samples: n,
        signals: vec![SignalSpec::new(
            &format!("{}.dat", spec.name),
            SignalFormat::F16,
            1000.0,
            0,
            &spec.lead,
        )],
        comments: vec![format!(
            " synthetic: beats={} bpm={} morphology={:?} noise={} seed={}",
            spec.beats, spec.bpm, spec.morphology, spec.noise_sigma, spec.seed
        )],
    };
    let record = EcgRecord::new(header, vec![signal], annotations).expect("generator output is consistent");
    SyntheticRecord { record, clean, beats }
}

fn to_sample(t: f64, fs: f64) -> usize {
    (t * fs).round().max(0.0) as usize
}

fn arg_extreme(clean: &[f64], lo: usize, hi: usize, positive: bool) -> usize {
    let hi = hi.min(clean.len() - 1);
    (lo..=hi)
        .max_by(|&a, &b| {
            let (va, vb) = if positive {
                (clean[a], clean[b])
            } else {
                (-clean[a], -clean[b])
            };
            va.total_cmp(&vb).then(b.cmp(&a))
        })
        .unwrap_or(lo)
}

fn true_fiducials(shape: &BeatShape, tr: f64, fs: f64, clean: &[f64]) -> BeatFiducials {
    let at = |rel: f64| to_sample(tr + rel, fs);
    let wave = |b: &Bump| {
        let onset = at(b.center - 2.0 * b.width);
        let offset = at(b.center + 2.0 * b.width);
        let peak = arg_extreme(clean, onset, offset, b.amplitude > 0.0);
        WaveFiducials { onset, peak, offset }
    };
    let r = arg_extreme(clean, at(-0.012), at(0.012), shape.r.amplitude > 0.0);
    let win = (0.05 * fs).round() as usize;
    let q = (r.saturating_sub(win)..r)
        .rev()
        .min_by(|&a, &b| clean[a].total_cmp(&clean[b]))
        .unwrap_or(r);
    let s = (r + 1..=(r + win).min(clean.len() - 1))
        .min_by(|&a, &b| clean[a].total_cmp(&clean[b]))
        .unwrap_or(r);
    let first = shape.q.as_ref().unwrap_or(&shape.r);
    let last = shape.s.as_ref().unwrap_or(&shape.r);
    let qrs_onset = at(first.center - 2.0 * first.width);
    let qrs_offset = at(last.center + 2.0 * last.width);
    BeatFiducials {
        p: shape.p.as_ref().map(wave),
        qrs_onset,
        q: q.max(qrs_onset),
        r,
        s: s.min(qrs_offset),
        qrs_offset,
        t: Some(wave(&shape.t)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_a_seed() {
        let spec = SyntheticSpec {
            noise_sigma: 0.05,
            seed: 7,
            morphology: Morphology::Mi,
            ..Default::default()
        };
        assert_eq!(generate(&spec), generate(&spec));
        let other = SyntheticSpec {
            seed: 8,
            ..spec.clone()
        };
        assert_ne!(generate(&spec).record.signals, generate(&other).record.signals);
    }

    #[test]
    fn truth_is_ordered_and_annotated() {
        for m in [Morphology::Normal, Morphology::Pvc, Morphology::Pac, Morphology::Mi] {
            let spec = SyntheticSpec {
                beats: 12,
                morphology: m,
                ..Default::default()
            };
            let s = generate(&spec);
            assert_eq!(s.beats.len(), 12);
            assert_eq!(s.record.annotations.len(), 12);
            for b in &s.beats {
                assert!(b.fiducials.is_ordered(), "{m:?}: {:?}", b.fiducials);
                assert!(b.fiducials.t_offset().unwrap() < s.record.header.n_samples);
            }
            let classes: Vec<_> = s.record.labeled_beats().map(|(_, c)| c).collect();
            assert_eq!(
                classes,
                s.beats.iter().map(|b| b.morphology.class()).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn r_peak_at_construction_time() {
        let spec = SyntheticSpec {
            jitter: 0.0,
            ..Default::default()
        };
        let s = generate(&spec);
        let first = &s.beats[0];
        assert_eq!(first.fiducials.r, (LEAD_IN * 250.0).round() as usize);
        assert!((s.clean[first.fiducials.r] - 1.2).abs() < 0.01);
        assert!(!first.fiducials.p_absent());
    }

    #[test]
    fn pvc_has_no_p_wave_and_bigeminy() {
        let s = generate(&SyntheticSpec {
            morphology: Morphology::Pvc,
            ..Default::default()
        });
        let pattern: Vec<_> = s.beats.iter().map(|b| b.morphology).collect();
        assert_eq!(
            &pattern[..4],
            &[Morphology::Normal, Morphology::Pvc, Morphology::Normal, Morphology::Pvc]
        );
        assert!(s.beats[1].fiducials.p_absent());
    }
}
