use serde::{Deserialize, Serialize};

use super::WfdbError;

const SKIP: u8 = 59;
const NUM: u8 = 60;
const SUB: u8 = 61;
const CHN: u8 = 62;
const AUX: u8 = 63;

/// Mnemonics of the standard annotation codes, indexed by code number.
/// Empty strings are unassigned codes.
const MNEMONICS: [&str; 42] = [
    "", "N", "L", "R", "a", "V", "F", "J", "A", "S", "E", "j", "/", "Q", "~", "", "|", "", "s", "T", "*", "D", "\"",
    "=", "p", "B", "^", "t", "+", "u", "?", "!", "[", "]", "e", "n", "@", "x", "f", "(", ")", "r",
];

/// Codes that label a QRS complex.
const BEAT_CODES: [u8; 19] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 25, 30, 34, 35, 38, 41];
/// ST-segment change and T-wave change, kept because they carry the MI label.
const ST_T_CODES: [u8; 2] = [18, 19];

/// Symbol for an annotation code, `None` when the code is unassigned.
pub fn code_symbol(code: u8) -> Option<&'static str> {
    MNEMONICS.get(code as usize).copied().filter(|s| !s.is_empty())
}

pub fn symbol_code(symbol: &str) -> Option<u8> {
    MNEMONICS
        .iter()
        .position(|&m| !m.is_empty() && m == symbol)
        .map(|p| p as u8)
}

/// Whether an annotation with this code is retained by [`read_annotations`].
pub fn is_retained(code: u8) -> bool {
    BEAT_CODES.contains(&code) || ST_T_CODES.contains(&code) || code_symbol(code).is_none()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeatAnnotation {
    pub sample_index: usize,
    /// Numeric annotation type (1..=58 for ordinary annotations).
    pub code: u8,
    pub chan: u8,
    pub num: i8,
    pub sub: i8,
    pub aux: Option<Vec<u8>>,
}

impl BeatAnnotation {
    pub fn new(sample_index: usize, code: u8) -> Self {
        Self {
            sample_index,
            code,
            chan: 0,
            num: 0,
            sub: 0,
            aux: None,
        }
    }

    pub fn from_symbol(sample_index: usize, symbol: &str) -> Option<Self> {
        symbol_code(symbol).map(|c| Self::new(sample_index, c))
    }

    /// Mnemonic, or `"?<code>"` for unassigned codes.
    pub fn symbol(&self) -> String {
        code_symbol(self.code)
            .map(str::to_string)
            .unwrap_or_else(|| format!("?{}", self.code))
    }

    /// True when the code is not part of the standard alphabet.
    pub fn is_unknown(&self) -> bool {
        code_symbol(self.code).is_none()
    }
}

/// Result of decoding an annotation stream.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnnotationSet {
    /// Beat, ST-change and T-change annotations plus any unknown codes, in sample order.
    pub annotations: Vec<BeatAnnotation>,
    /// Non-beat annotations (rhythm, comments, noise) that were decoded and dropped.
    pub skipped: usize,
    /// Retained annotations that shared a sample index with an earlier one and were folded into it.
    pub merged: usize,
}

impl AnnotationSet {
    pub fn unknown_count(&self) -> usize {
        self.annotations.iter().filter(|a| a.is_unknown()).count()
    }
}

fn word(bytes: &[u8], offset: usize) -> Result<u16, WfdbError> {
    bytes
        .get(offset..offset + 2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
        .ok_or(WfdbError::MalformedAnnotationStream {
            offset,
            reason: "stream ends inside a 16-bit word".into(),
        })
}

/// Decode an annotation stream: 16-bit little-endian words holding a 6-bit type
/// code and a 10-bit time increment, with pseudo-codes for long increments
/// (SKIP), sticky fields (NUM, SUB, CHN) and auxiliary bytes (AUX).
pub fn read_annotations(bytes: &[u8]) -> Result<AnnotationSet, WfdbError> {
    let mut set = AnnotationSet::default();
    let mut time: usize = 0;
    let mut chan = 0u8;
    let mut num = 0i8;
    let mut offset = 0usize;
    // whether the most recent ordinary annotation was retained (pseudo-codes attach to it)
    let mut last_kept = false;

    while offset < bytes.len() {
        let w = word(bytes, offset)?;
        let start = offset;
        offset += 2;
        let code = (w >> 10) as u8;
        let value = w & 0x03FF;
        match code {
            0 if value == 0 => break,
            SKIP => {
                let hi = word(bytes, offset)? as u32;
                let lo = word(bytes, offset + 2)? as u32;
                offset += 4;
                let skip = ((hi << 16) | lo) as i32;
                time = time
                    .checked_add_signed(skip as isize)
                    .ok_or(WfdbError::MalformedAnnotationStream {
                        offset: start,
                        reason: "SKIP moves before sample 0".into(),
                    })?;
            }
            NUM => {
                num = value as u8 as i8;
                if last_kept {
                    if let Some(a) = set.annotations.last_mut() {
                        a.num = num;
                    }
                }
            }
            SUB => {
                if last_kept {
                    if let Some(a) = set.annotations.last_mut() {
                        a.sub = value as u8 as i8;
                    }
                }
            }
            CHN => {
                chan = value as u8;
                if last_kept {
                    if let Some(a) = set.annotations.last_mut() {
                        a.chan = chan;
                    }
                }
            }
            AUX => {
                let len = value as usize;
                let payload = bytes
                    .get(offset..offset + len)
                    .ok_or(WfdbError::MalformedAnnotationStream {
                        offset: start,
                        reason: format!("AUX declares {len} bytes past the end of the stream"),
                    })?;
                if last_kept {
                    if let Some(a) = set.annotations.last_mut() {
                        a.aux = Some(payload.to_vec());
                    }
                }
                offset += len + (len & 1);
            }
            _ => {
                time += value as usize;
                if !is_retained(code) {
                    set.skipped += 1;
                    last_kept = false;
                    continue;
                }
                let ann = BeatAnnotation {
                    sample_index: time,
                    code,
                    chan,
                    num,
                    sub: 0,
                    aux: None,
                };
                match set.annotations.last_mut() {
                    Some(prev) if prev.sample_index == time => {
                        // Same instant: keep one label, preferring an abnormal one over N.
                        if prev.code == 1 && code != 1 {
                            *prev = ann;
                        }
                        set.merged += 1;
                    }
                    _ => set.annotations.push(ann),
                }
                last_kept = true;
            }
        }
    }
    Ok(set)
}

fn push_word(out: &mut Vec<u8>, code: u8, value: u16) {
    out.extend_from_slice(&(((code as u16) << 10) | (value & 0x03FF)).to_le_bytes());
}

/// Encode annotations (strictly increasing sample indices) into the binary stream.
pub fn write_annotations(annotations: &[BeatAnnotation]) -> Result<Vec<u8>, WfdbError> {
    let mut out = Vec::with_capacity(annotations.len() * 2 + 2);
    let mut time = 0usize;
    let mut chan = 0u8;
    let mut num = 0i8;
    for (i, a) in annotations.iter().enumerate() {
        if i > 0 && a.sample_index <= time {
            return Err(WfdbError::NonMonotonicAnnotations { index: i });
        }
        if a.code == 0 || a.code >= SKIP {
            return Err(WfdbError::InvalidAnnotationCode(a.code));
        }
        let mut delta = a.sample_index - time;
        if delta > 0x03FF {
            push_word(&mut out, SKIP, 0);
            let skip = u32::try_from(delta).map_err(|_| WfdbError::InvalidAnnotationCode(a.code))?;
            out.extend_from_slice(&((skip >> 16) as u16).to_le_bytes());
            out.extend_from_slice(&((skip & 0xFFFF) as u16).to_le_bytes());
            delta = 0;
        }
        push_word(&mut out, a.code, delta as u16);
        time = a.sample_index;
        if a.sub != 0 {
            push_word(&mut out, SUB, a.sub as u8 as u16);
        }
        if a.chan != chan {
            push_word(&mut out, CHN, a.chan as u16);
            chan = a.chan;
        }
        if a.num != num {
            push_word(&mut out, NUM, a.num as u8 as u16);
            num = a.num;
        }
        if let Some(aux) = &a.aux {
            if aux.len() > 0x03FF {
                return Err(WfdbError::InvalidAnnotationCode(AUX));
            }
            push_word(&mut out, AUX, aux.len() as u16);
            out.extend_from_slice(aux);
            if aux.len() % 2 == 1 {
                out.push(0);
            }
        }
    }
    out.extend_from_slice(&[0, 0]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent encoder for plain (code, delta) pairs, short deltas only.
    fn oracle_encode(pairs: &[(u8, u16)]) -> Vec<u8> {
        let mut v = Vec::new();
        for &(code, delta) in pairs {
            let w = (code as u32) * 1024 + delta as u32;
            v.push((w % 256) as u8);
            v.push((w / 256) as u8);
        }
        v.extend([0, 0]);
        v
    }

    #[test]
    fn normal_then_pvc() {
        // N = 1, V = 5
        let bytes = oracle_encode(&[(1, 100), (5, 250)]);
        assert_eq!(bytes, vec![100, 4, 250, 20, 0, 0]);
        let set = read_annotations(&bytes).unwrap();
        let got: Vec<(usize, String)> = set.annotations.iter().map(|a| (a.sample_index, a.symbol())).collect();
        assert_eq!(got, vec![(100, "N".to_string()), (350, "V".to_string())]);
    }

    #[test]
    fn empty_stream() {
        assert!(read_annotations(&[]).unwrap().annotations.is_empty());
        assert!(read_annotations(&[0, 0]).unwrap().annotations.is_empty());
    }

    #[test]
    fn unknown_code_is_flagged_and_time_advances() {
        // 42 is unassigned
        let bytes = oracle_encode(&[(1, 10), (42, 20), (1, 30)]);
        let set = read_annotations(&bytes).unwrap();
        assert_eq!(set.annotations.len(), 3);
        assert!(set.annotations[1].is_unknown());
        assert_eq!(set.annotations[1].sample_index, 30);
        assert_eq!(set.annotations[2].sample_index, 60);
        assert_eq!(set.unknown_count(), 1);
    }

    #[test]
    fn rhythm_annotations_are_counted_not_kept() {
        // '+' = 28 with an aux string "(N"
        let mut bytes = oracle_encode(&[(1, 10), (28, 5)]);
        bytes.truncate(bytes.len() - 2);
        bytes.extend([2, (AUX << 2)]);
        bytes.extend(b"(N");
        bytes.extend(oracle_encode(&[(18, 7)]));
        let set = read_annotations(&bytes).unwrap();
        assert_eq!(set.skipped, 1);
        let kept: Vec<_> = set.annotations.iter().map(|a| (a.sample_index, a.symbol())).collect();
        assert_eq!(kept, vec![(10, "N".into()), (22, "s".into())]);
        assert!(set.annotations.iter().all(|a| a.aux.is_none()));
    }

    #[test]
    fn long_gaps_use_skip() {
        let anns = vec![BeatAnnotation::new(5, 1), BeatAnnotation::new(100_000, 8)];
        let bytes = write_annotations(&anns).unwrap();
        assert_eq!(read_annotations(&bytes).unwrap().annotations, anns);
    }

    #[test]
    fn aux_num_chan_round_trip() {
        let mut a = BeatAnnotation::new(10, 18);
        a.aux = Some(b"(ST0+".to_vec());
        a.chan = 1;
        let mut b = BeatAnnotation::new(20, 19);
        b.chan = 1;
        b.num = 3;
        b.sub = -2;
        let anns = vec![a, b];
        let bytes = write_annotations(&anns).unwrap();
        assert_eq!(read_annotations(&bytes).unwrap().annotations, anns);
    }

    #[test]
    fn truncated_streams() {
        assert!(matches!(
            read_annotations(&[100]),
            Err(WfdbError::MalformedAnnotationStream { offset: 0, .. })
        ));
        // AUX claiming 10 bytes with only 2 present
        let bytes = [10, 0, 10, AUX << 2, b'a', b'b'];
        assert!(matches!(
            read_annotations(&bytes),
            Err(WfdbError::MalformedAnnotationStream { offset: 2, .. })
        ));
        // SKIP without its 32-bit payload
        let bytes = [0, SKIP << 2, 1, 0];
        assert!(matches!(
            read_annotations(&bytes),
            Err(WfdbError::MalformedAnnotationStream { offset: 4, .. })
        ));
    }

    #[test]
    fn same_instant_prefers_abnormal_label() {
        let bytes = oracle_encode(&[(1, 10), (18, 0), (1, 5)]);
        let set = read_annotations(&bytes).unwrap();
        assert_eq!(set.merged, 1);
        assert_eq!(set.annotations[0].symbol(), "s");
        assert_eq!(set.annotations.len(), 2);
    }

    #[test]
    fn writer_rejects_unsorted_input() {
        let anns = vec![BeatAnnotation::new(10, 1), BeatAnnotation::new(10, 1)];
        assert!(matches!(
            write_annotations(&anns),
            Err(WfdbError::NonMonotonicAnnotations { index: 1 })
        ));
    }

    #[test]
    fn symbol_table() {
        assert_eq!(symbol_code("N"), Some(1));
        assert_eq!(symbol_code("V"), Some(5));
        assert_eq!(symbol_code("A"), Some(8));
        assert_eq!(symbol_code("s"), Some(18));
        assert_eq!(symbol_code("T"), Some(19));
        assert_eq!(symbol_code("+"), Some(28));
        assert_eq!(code_symbol(15), None);
    }
}
