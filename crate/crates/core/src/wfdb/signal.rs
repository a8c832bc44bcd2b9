use super::{RecordHeader, SignalFormat, WfdbError};

/// Decode raw ADC values, one vector per signal.
///
/// Samples are stored frame by frame (one sample of every signal per frame).
/// Format 212 packs each consecutive pair of samples of the interleaved stream
/// into three bytes: the first sample's low byte, a byte holding the first
/// sample's high nibble (low half) and the second sample's high nibble (high
/// half), then the second sample's low byte. An odd final sample occupies two bytes.
pub fn read_signal_raw(header: &RecordHeader, bytes: &[u8]) -> Result<Vec<Vec<i32>>, WfdbError> {
    let n_sig = header.n_signals();
    let total = n_sig * header.n_samples;
    let format = header.signals[0].format;
    let expected = encoded_len(format, total);
    if bytes.len() < expected {
        return Err(WfdbError::TruncatedSignal {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(WfdbError::LengthMismatch {
            expected,
            found: bytes.len(),
        });
    }
    let flat = match format {
        SignalFormat::F16 => decode_16(bytes, total),
        SignalFormat::F212 => decode_212(bytes, total),
    };
    let mut out = vec![Vec::with_capacity(header.n_samples); n_sig];
    for (i, v) in flat.into_iter().enumerate() {
        out[i % n_sig].push(v);
    }
    Ok(out)
}

/// Decode and convert to millivolts: `(raw - baseline) / gain`.
pub fn read_signal(header: &RecordHeader, bytes: &[u8]) -> Result<Vec<Vec<f64>>, WfdbError> {
    let raw = read_signal_raw(header, bytes)?;
    Ok(raw
        .iter()
        .zip(&header.signals)
        .map(|(lead, spec)| lead.iter().map(|&r| adc_to_mv(r, spec.baseline, spec.gain)).collect())
        .collect())
}

#[inline]
pub fn adc_to_mv(raw: i32, baseline: i32, gain: f64) -> f64 {
    (raw - baseline) as f64 / gain
}

#[inline]
pub fn mv_to_adc(mv: f64, baseline: i32, gain: f64) -> i32 {
    (mv * gain).round() as i32 + baseline
}

/// Encode raw ADC values; the inverse of [`read_signal_raw`].
pub fn write_signal_raw(header: &RecordHeader, raw: &[Vec<i32>]) -> Result<Vec<u8>, WfdbError> {
    let n_sig = header.n_signals();
    if raw.len() != n_sig || raw.iter().any(|l| l.len() != header.n_samples) {
        return Err(WfdbError::LengthMismatch {
            expected: n_sig * header.n_samples,
            found: raw.iter().map(Vec::len).sum(),
        });
    }
    let format = header.signals[0].format;
    let (lo, hi) = format.raw_range();
    let mut flat = Vec::with_capacity(n_sig * header.n_samples);
    for t in 0..header.n_samples {
        for (s, lead) in raw.iter().enumerate() {
            let v = lead[t];
            if v < lo || v > hi {
                return Err(WfdbError::SampleOutOfRange {
                    signal: s,
                    sample: t,
                    value: v,
                });
            }
            flat.push(v);
        }
    }
    Ok(match format {
        SignalFormat::F16 => flat.iter().flat_map(|&v| (v as i16).to_le_bytes()).collect(),
        SignalFormat::F212 => encode_212(&flat),
    })
}

/// Convert millivolts to ADC units with the header calibration, then encode.
pub fn write_signal(header: &RecordHeader, signals: &[Vec<f64>]) -> Result<Vec<u8>, WfdbError> {
    let raw: Vec<Vec<i32>> = signals
        .iter()
        .zip(&header.signals)
        .map(|(lead, spec)| lead.iter().map(|&mv| mv_to_adc(mv, spec.baseline, spec.gain)).collect())
        .collect();
    write_signal_raw(header, &raw)
}

pub(crate) fn encoded_len(format: SignalFormat, total_samples: usize) -> usize {
    match format {
        SignalFormat::F16 => 2 * total_samples,
        SignalFormat::F212 => 3 * (total_samples / 2) + 2 * (total_samples % 2),
    }
}

fn decode_16(bytes: &[u8], total: usize) -> Vec<i32> {
    bytes
        .chunks_exact(2)
        .take(total)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as i32)
        .collect()
}

#[inline]
fn sign_extend_12(v: u16) -> i32 {
    ((v << 4) as i16 >> 4) as i32
}

fn decode_212(bytes: &[u8], total: usize) -> Vec<i32> {
    let mut out = Vec::with_capacity(total);
    let mut chunks = bytes.chunks(3);
    while out.len() < total {
        let c = chunks.next().expect("length checked by caller");
        let first = (c[0] as u16) | (((c[1] & 0x0F) as u16) << 8);
        out.push(sign_extend_12(first));
        if out.len() < total {
            let second = (c[2] as u16) | (((c[1] & 0xF0) as u16) << 4);
            out.push(sign_extend_12(second));
        }
    }
    out
}

fn encode_212(flat: &[i32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(encoded_len(SignalFormat::F212, flat.len()));
    for pair in flat.chunks(2) {
        let a = (pair[0] as u16) & 0x0FFF;
        out.push((a & 0xFF) as u8);
        match pair.get(1) {
            Some(&b) => {
                let b = (b as u16) & 0x0FFF;
                out.push(((a >> 8) as u8) | (((b >> 8) as u8) << 4));
                out.push((b & 0xFF) as u8);
            }
            None => out.push((a >> 8) as u8),
        }
    }
    out
}
