use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::WfdbError;

/// Signal storage formats understood by the reader and writer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SignalFormat {
    /// Two 12-bit two's complement samples packed into three bytes.
    F212,
    /// 16-bit little-endian two's complement.
    F16,
}

impl SignalFormat {
    pub fn code(self) -> u32 {
        match self {
            SignalFormat::F212 => 212,
            SignalFormat::F16 => 16,
        }
    }

    pub fn from_code(code: u32) -> Result<Self, WfdbError> {
        match code {
            212 => Ok(SignalFormat::F212),
            16 => Ok(SignalFormat::F16),
            other => Err(WfdbError::UnsupportedFormat(other)),
        }
    }

    /// Inclusive range of raw ADC values the format can store.
    pub fn raw_range(self) -> (i32, i32) {
        match self {
            SignalFormat::F212 => (-2048, 2047),
            SignalFormat::F16 => (i16::MIN as i32, i16::MAX as i32),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub file_name: String,
    pub format: SignalFormat,
    /// ADC units per millivolt.
    pub gain: f64,
    /// Raw value corresponding to 0 mV.
    pub baseline: i32,
    pub units: String,
    pub adc_resolution: u32,
    pub adc_zero: i32,
    pub initial_value: i32,
    pub checksum: i32,
    pub block_size: u32,
    pub lead_name: String,
}

impl SignalSpec {
    pub fn new(file_name: &str, format: SignalFormat, gain: f64, baseline: i32, lead_name: &str) -> Self {
        Self {
            file_name: file_name.to_string(),
            format,
            gain,
            baseline,
            units: "mV".to_string(),
            adc_resolution: match format {
                SignalFormat::F212 => 12,
                SignalFormat::F16 => 16,
            },
            adc_zero: baseline,
            initial_value: 0,
            checksum: 0,
            block_size: 0,
            lead_name: lead_name.to_string(),
        }
    }
}

/// Parsed `<record>.hea`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordHeader {
    pub record_name: String,
    pub sampling_rate: f64,
    pub n_samples: usize,
    pub signals: Vec<SignalSpec>,
    /// `#` comment lines, without the leading marker.
    pub comments: Vec<String>,
}

impl RecordHeader {
    pub fn n_signals(&self) -> usize {
        self.signals.len()
    }

    pub fn lead_index(&self, lead: &str) -> Option<usize> {
        self.signals.iter().position(|s| s.lead_name.eq_ignore_ascii_case(lead))
    }

    fn validate(&self) -> Result<(), WfdbError> {
        if self.signals.is_empty() {
            return Err(malformed(1, "signal count", "a record needs at least one signal"));
        }
        if !(self.sampling_rate > 0.0 && self.sampling_rate.is_finite()) {
            return Err(malformed(1, "sampling frequency", "must be positive"));
        }
        if let Some((i, _)) = self
            .signals
            .iter()
            .enumerate()
            .find(|(_, s)| !(s.gain > 0.0 && s.gain.is_finite()))
        {
            return Err(malformed(i + 2, "gain", "must be positive"));
        }
        let first = &self.signals[0];
        if self
            .signals
            .iter()
            .any(|s| s.file_name != first.file_name || s.format != first.format)
        {
            return Err(WfdbError::MalformedHeader {
                line: 2,
                field: "file name".into(),
                reason: "all signals must share one data file and format".into(),
            });
        }
        Ok(())
    }

    /// Render as header text; [`parse_header`] of the result reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} {} {} {}",
            self.record_name,
            self.signals.len(),
            self.sampling_rate,
            self.n_samples
        );
        for s in &self.signals {
            let _ = write!(
                out,
                "{} {} {}({})/{} {} {} {} {} {}",
                s.file_name,
                s.format.code(),
                s.gain,
                s.baseline,
                s.units,
                s.adc_resolution,
                s.adc_zero,
                s.initial_value,
                s.checksum,
                s.block_size
            );
            if !s.lead_name.is_empty() {
                let _ = write!(out, " {}", s.lead_name);
            }
            out.push('\n');
        }
        for c in &self.comments {
            let _ = writeln!(out, "#{c}");
        }
        out
    }
}

fn malformed(line: usize, field: &str, reason: &str) -> WfdbError {
    WfdbError::MalformedHeader {
        line,
        field: field.to_string(),
        reason: reason.to_string(),
    }
}

fn parse_num<T: std::str::FromStr>(text: &str, line: usize, field: &str) -> Result<T, WfdbError> {
    text.parse::<T>()
        .map_err(|_| malformed(line, field, &format!("cannot parse {text:?}")))
}

/// Parse header text.
///
/// Record line: `name[/segments] nsig [fs[/counter[(base)]] [nsamp [time [date]]]]`.
/// Signal lines: `file format[xN][:skew][+offset] [gain[(baseline)][/units] [adcres [adczero [init [checksum [blocksize [description]]]]]]]`.
pub fn parse_header(text: &str) -> Result<RecordHeader, WfdbError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let mut comments = Vec::new();
    let (record_line_no, record_line) = loop {
        match lines.next() {
            Some((_, l)) if l.starts_with('#') => comments.push(l[1..].to_string()),
            Some(x) => break x,
            None => return Err(malformed(1, "record line", "header is empty")),
        }
    };

    let mut fields = record_line.split_whitespace();
    let name_field = fields
        .next()
        .ok_or_else(|| malformed(record_line_no, "record name", "missing"))?;
    if name_field.contains('/') {
        return Err(malformed(
            record_line_no,
            "record name",
            "multi-segment records are not supported",
        ));
    }
    let n_signals: usize = parse_num(
        fields
            .next()
            .ok_or_else(|| malformed(record_line_no, "signal count", "missing"))?,
        record_line_no,
        "signal count",
    )?;
    if n_signals == 0 {
        return Err(malformed(
            record_line_no,
            "signal count",
            "a record needs at least one signal",
        ));
    }
    let sampling_rate = match fields.next() {
        Some(fs) => {
            let freq = fs.split(['/', '(']).next().unwrap_or(fs);
            parse_num::<f64>(freq, record_line_no, "sampling frequency")?
        }
        None => 250.0,
    };
    let n_samples = match fields.next() {
        Some(n) => parse_num::<usize>(n, record_line_no, "sample count")?,
        None => 0,
    };

    let mut signals = Vec::with_capacity(n_signals);
    while signals.len() < n_signals {
        let (line_no, line) = lines
            .next()
            .ok_or_else(|| malformed(record_line_no, "signal count", "fewer signal lines than declared"))?;
        if let Some(comment) = line.strip_prefix('#') {
            comments.push(comment.to_string());
            continue;
        }
        signals.push(parse_signal_line(line, line_no)?);
    }
    for (_, l) in lines {
        if let Some(c) = l.strip_prefix('#') {
            comments.push(c.to_string());
        }
    }

    let header = RecordHeader {
        record_name: name_field.to_string(),
        sampling_rate,
        n_samples,
        signals,
        comments,
    };
    header.validate()?;
    Ok(header)
}

fn parse_signal_line(line: &str, line_no: usize) -> Result<SignalSpec, WfdbError> {
    let mut fields = line.split_whitespace();
    let file_name = fields
        .next()
        .ok_or_else(|| malformed(line_no, "file name", "missing"))?
        .to_string();
    let fmt_field = fields.next().ok_or_else(|| malformed(line_no, "format", "missing"))?;
    let code_text: String = fmt_field.chars().take_while(|c| c.is_ascii_digit()).collect();
    let code: u32 = parse_num(&code_text, line_no, "format")?;
    let rest = &fmt_field[code_text.len()..];
    if rest.starts_with('x') {
        return Err(malformed(
            line_no,
            "format",
            "multi-frequency records are not supported",
        ));
    }
    if rest.contains('+') {
        return Err(malformed(line_no, "format", "byte offsets are not supported"));
    }
    let format = SignalFormat::from_code(code)?;

    let mut gain = 200.0;
    let mut baseline: Option<i32> = None;
    let mut units = "mV".to_string();
    if let Some(g) = fields.next() {
        let (gain_part, unit_part) = match g.split_once('/') {
            Some((a, b)) => (a, Some(b)),
            None => (g, None),
        };
        let (value_part, base_part) = match gain_part.split_once('(') {
            Some((a, b)) => (a, Some(b.trim_end_matches(')'))),
            None => (gain_part, None),
        };
        let parsed: f64 = parse_num(value_part, line_no, "gain")?;
        // a zero gain means "uncalibrated", the library default applies
        gain = if parsed == 0.0 { 200.0 } else { parsed };
        if let Some(b) = base_part {
            baseline = Some(parse_num(b, line_no, "baseline")?);
        }
        if let Some(u) = unit_part {
            units = u.to_string();
        }
    }
    let adc_resolution = match fields.next() {
        Some(v) => parse_num(v, line_no, "ADC resolution")?,
        None => match format {
            SignalFormat::F212 => 12,
            SignalFormat::F16 => 16,
        },
    };
    let adc_zero: i32 = match fields.next() {
        Some(v) => parse_num(v, line_no, "ADC zero")?,
        None => 0,
    };
    let initial_value: i32 = match fields.next() {
        Some(v) => parse_num(v, line_no, "initial value")?,
        None => adc_zero,
    };
    let checksum: i32 = match fields.next() {
        Some(v) => parse_num(v, line_no, "checksum")?,
        None => 0,
    };
    let block_size: u32 = match fields.next() {
        Some(v) => parse_num(v, line_no, "block size")?,
        None => 0,
    };
    let lead_name = fields.collect::<Vec<_>>().join(" ");

    Ok(SignalSpec {
        file_name,
        format,
        gain,
        baseline: baseline.unwrap_or(adc_zero),
        units,
        adc_resolution,
        adc_zero,
        initial_value,
        checksum,
        block_size,
        lead_name,
    })
}
