//! Binary and text formats for feature sets, classifier heads, logits and scores.
//!
//! All multi-byte integers and reals are little-endian.
//!
//! ```text
//! FEATSET1 | u32 count | u32 C | u32 H | u32 W | u8 dtype (0 = f32)
//!          | count × (C·H·W f32, channel-major then row-major)
//!          | u32 meta_len | meta_len bytes of UTF-8 JSON (string → string)
//!
//! HEADW001 | u32 Q | u32 C | Q·C f32 (W, row-major) | Q f32 (b)
//!
//! LOGITS01 | u32 count | u32 Q | count·Q f64 (row-major)
//! ```
//!
//! Scores are CSV with the header `index,score` and 17 significant digits.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature::FeatureMap;

pub const FEATSET_MAGIC: &[u8; 8] = b"FEATSET1";
pub const HEAD_MAGIC: &[u8; 8] = b"HEADW001";
pub const LOGITS_MAGIC: &[u8; 8] = b"LOGITS01";

/// Size of the fixed FEATSET1 header: magic, four u32 dims and the dtype byte.
pub const FEATSET_HEADER_LEN: usize = 25;
pub const HEAD_HEADER_LEN: usize = 16;
pub const LOGITS_HEADER_LEN: usize = 16;

const DTYPE_F32: u8 = 0;

/// A batch of same-shaped feature maps, stored as `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    channels: usize,
    height: usize,
    width: usize,
    samples: Vec<Vec<f32>>,
    /// Free-form descriptive metadata (dataset, "id"/"ood", model, block).
    pub meta: BTreeMap<String, String>,
}

impl FeatureSet {
    pub fn new(channels: usize, height: usize, width: usize) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::invalid(format!(
                "feature dims must be positive, got C={channels} H={height} W={width}"
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            samples: Vec::new(),
            meta: BTreeMap::new(),
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn spatial(&self) -> usize {
        self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Appends one sample given as channel-major `f32` values.
    pub fn push_values(&mut self, values: Vec<f32>) -> Result<()> {
        let expected = self.channels * self.spatial();
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "feature sample",
                expected,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature sample"));
        }
        self.samples.push(values);
        Ok(())
    }

    /// Appends a feature map, rounding its entries to `f32`.
    pub fn push(&mut self, map: &FeatureMap) -> Result<()> {
        if map.channels() != self.channels {
            return Err(Error::DimensionMismatch {
                what: "feature channels",
                expected: self.channels,
                found: map.channels(),
            });
        }
        if map.spatial() != self.spatial() {
            return Err(Error::DimensionMismatch {
                what: "feature spatial size",
                expected: self.spatial(),
                found: map.spatial(),
            });
        }
        let values = map.to_channel_major().into_iter().map(|v| v as f32).collect();
        self.push_values(values)
    }

    pub fn raw(&self, index: usize) -> &[f32] {
        &self.samples[index]
    }

    /// Sample `index` widened to `f64` as a `C × HW` matrix.
    pub fn sample(&self, index: usize) -> FeatureMap {
        let values: Vec<f64> = self.samples[index].iter().map(|&v| f64::from(v)).collect();
        FeatureMap::from_channel_major(self.channels, self.spatial(), &values)
            .expect("stored samples are validated on insertion")
    }

    pub fn iter(&self) -> impl Iterator<Item = FeatureMap> + '_ {
        (0..self.len()).map(move |i| self.sample(i))
    }
}

/// Last linear layer: `y = W z + b` with `W` of shape `Q × C`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl ClassifierHead {
    pub fn new(weight: DMatrix<f64>, bias: DVector<f64>) -> Result<Self> {
        let head = Self { weight, bias };
        head.validate()?;
        Ok(head)
    }

    pub fn num_classes(&self) -> usize {
        self.weight.nrows()
    }

    pub fn channels(&self) -> usize {
        self.weight.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.weight.nrows() == 0 {
            return Err(Error::invalid("classifier head needs Q >= 1 classes"));
        }
        if self.weight.ncols() == 0 {
            return Err(Error::invalid("classifier head needs C >= 1 input channels"));
        }
        if self.bias.len() != self.weight.nrows() {
            return Err(Error::DimensionMismatch {
                what: "head bias",
                expected: self.weight.nrows(),
                found: self.bias.len(),
            });
        }
        if self.weight.iter().chain(self.bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("classifier head"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleLabel {
    Id,
    Ood,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreEntry {
    pub index: usize,
    pub score: f64,
}

/// Per-sample scalar scores. Higher means more in-distribution.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreSet {
    pub entries: Vec<ScoreEntry>,
    /// Not stored in the CSV; readers leave it unset.
    pub label: Option<SampleLabel>,
    pub method: String,
}

impl ScoreSet {
    /// Scores indexed `0..n` in the given order.
    pub fn from_scores(scores: &[f64], method: impl Into<String>) -> Self {
        Self {
            entries: scores
                .iter()
                .enumerate()
                .map(|(index, &score)| ScoreEntry { index, score })
                .collect(),
            label: None,
            method: method.into(),
        }
    }

    pub fn with_label(mut self, label: SampleLabel) -> Self {
        self.label = Some(label);
        self
    }

    pub fn scores(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.score).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.entries.len());
        for e in &self.entries {
            if !seen.insert(e.index) {
                return Err(Error::invalid(format!("duplicate score index {}", e.index)));
            }
            if !e.score.is_finite() {
                return Err(Error::NonFinite("score set"));
            }
        }
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if available < n {
            return Err(Error::Truncated {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn magic(&mut self, expected: &'static [u8; 8]) -> Result<()> {
        let found = self.take(8)?;
        if found != expected {
            return Err(Error::BadMagic {
                offset: 0,
                expected: std::str::from_utf8(expected).unwrap_or("?"),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        Ok(())
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    /// Reads `n` f32 values as one block, so truncation is reported at the block start.
    fn f32_block(&mut self, n: usize) -> Result<Vec<f32>> {
        let start = self.pos;
        let len = checked_bytes(n, 4, start)?;
        let block = self.take(len)?;
        block
            .chunks_exact(4)
            .enumerate()
            .map(|(i, c)| {
                let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NonFiniteValue { offset: start + 4 * i })
                }
            })
            .collect()
    }

    fn f64_block(&mut self, n: usize) -> Result<Vec<f64>> {
        let start = self.pos;
        let len = checked_bytes(n, 8, start)?;
        let block = self.take(len)?;
        block
            .chunks_exact(8)
            .enumerate()
            .map(|(i, c)| {
                let v = f64::from_le_bytes(c.try_into().expect("chunk of 8"));
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NonFiniteValue { offset: start + 8 * i })
                }
            })
            .collect()
    }

    fn finish(&self) -> Result<()> {
        let extra = self.bytes.len() - self.pos;
        if extra != 0 {
            return Err(Error::TrailingBytes {
                offset: self.pos,
                extra,
            });
        }
        Ok(())
    }
}

fn checked_bytes(n: usize, width: usize, offset: usize) -> Result<usize> {
    n.checked_mul(width).ok_or_else(|| Error::BadHeader {
        offset,
        message: "declared dimensions overflow".into(),
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn put_u32(buf: &mut Vec<u8>, value: usize, what: &str) -> Result<()> {
    let v = u32::try_from(value).map_err(|_| Error::invalid(format!("{what} {value} exceeds u32")))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_f32(buf: &mut Vec<u8>, value: f64) -> Result<()> {
    let v = value as f32;
    if !v.is_finite() {
        return Err(Error::NonFinite("value not representable as f32"));
    }
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn encode_featureset(set: &FeatureSet) -> Result<Vec<u8>> {
    if set.is_empty() {
        return Err(Error::invalid("feature set must contain at least one sample"));
    }
    let per_sample = set.channels * set.spatial();
    let mut buf = Vec::with_capacity(FEATSET_HEADER_LEN + 4 * per_sample * set.len() + 64);
    buf.extend_from_slice(FEATSET_MAGIC);
    put_u32(&mut buf, set.len(), "count")?;
    put_u32(&mut buf, set.channels, "C")?;
    put_u32(&mut buf, set.height, "H")?;
    put_u32(&mut buf, set.width, "W")?;
    buf.push(DTYPE_F32);
    for sample in &set.samples {
        for v in sample {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let meta = serde_json::to_vec(&set.meta).map_err(|e| Error::Metadata {
        offset: buf.len(),
        message: e.to_string(),
    })?;
    put_u32(&mut buf, meta.len(), "metadata length")?;
    buf.extend_from_slice(&meta);
    Ok(buf)
}

pub fn decode_featureset(bytes: &[u8]) -> Result<FeatureSet> {
    let mut r = Reader::new(bytes);
    r.magic(FEATSET_MAGIC)?;
    let count = r.u32()?;
    let channels = r.u32()?;
    let height = r.u32()?;
    let width = r.u32()?;
    let dtype_offset = r.pos;
    let dtype = r.u8()?;
    if dtype != DTYPE_F32 {
        return Err(Error::BadDtype {
            offset: dtype_offset,
            code: dtype,
        });
    }
    if count == 0 || channels == 0 || height == 0 || width == 0 {
        return Err(Error::BadHeader {
            offset: 8,
            message: format!("dims must be positive, got count={count} C={channels} H={height} W={width}"),
        });
    }
    let per_sample = channels
        .checked_mul(height)
        .and_then(|v| v.checked_mul(width))
        .ok_or_else(|| Error::BadHeader {
            offset: 12,
            message: "declared dimensions overflow".into(),
        })?;
    let mut set = FeatureSet::new(channels, height, width)?;
    set.samples.reserve(count.min(bytes.len() / (4 * per_sample) + 1));
    for _ in 0..count {
        let values = r.f32_block(per_sample)?;
        set.samples.push(values);
    }
    let meta_len = r.u32()?;
    let meta_offset = r.pos;
    let meta_bytes = r.take(meta_len)?;
    set.meta = serde_json::from_slice(meta_bytes).map_err(|e| Error::Metadata {
        offset: meta_offset,
        message: e.to_string(),
    })?;
    r.finish()?;
    Ok(set)
}

pub fn write_featureset(path: impl AsRef<Path>, set: &FeatureSet) -> Result<()> {
    let bytes = encode_featureset(set)?;
    write_file(path.as_ref(), &bytes)
}

pub fn read_featureset(path: impl AsRef<Path>) -> Result<FeatureSet> {
    decode_featureset(&read_file(path.as_ref())?)
}

pub fn encode_head(head: &ClassifierHead) -> Result<Vec<u8>> {
    head.validate()?;
    let (q, c) = head.weight.shape();
    let mut buf = Vec::with_capacity(HEAD_HEADER_LEN + 4 * (q * c + q));
    buf.extend_from_slice(HEAD_MAGIC);
    put_u32(&mut buf, q, "Q")?;
    put_u32(&mut buf, c, "C")?;
    for i in 0..q {
        for j in 0..c {
            put_f32(&mut buf, head.weight[(i, j)])?;
        }
    }
    for &b in head.bias.iter() {
        put_f32(&mut buf, b)?;
    }
    Ok(buf)
}

pub fn decode_head(bytes: &[u8]) -> Result<ClassifierHead> {
    let mut r = Reader::new(bytes);
    r.magic(HEAD_MAGIC)?;
    let q = r.u32()?;
    let c = r.u32()?;
    if q == 0 || c == 0 {
        return Err(Error::BadHeader {
            offset: 8,
            message: format!("head dims must be positive, got Q={q} C={c}"),
        });
    }
    let qc = q.checked_mul(c).ok_or_else(|| Error::BadHeader {
        offset: 8,
        message: "declared dimensions overflow".into(),
    })?;
    let w = r.f32_block(qc)?;
    let b = r.f32_block(q)?;
    r.finish()?;
    let weight = DMatrix::from_row_iterator(q, c, w.into_iter().map(f64::from));
    let bias = DVector::from_iterator(q, b.into_iter().map(f64::from));
    ClassifierHead::new(weight, bias)
}

pub fn write_head(path: impl AsRef<Path>, head: &ClassifierHead) -> Result<()> {
    let bytes = encode_head(head)?;
    write_file(path.as_ref(), &bytes)
}

pub fn read_head(path: impl AsRef<Path>) -> Result<ClassifierHead> {
    decode_head(&read_file(path.as_ref())?)
}

/// Logit rows for a batch, kept at full `f64` precision.
pub fn encode_logits(rows: &[DVector<f64>]) -> Result<Vec<u8>> {
    let q = rows.first().map(|r| r.len()).unwrap_or(0);
    if q == 0 {
        return Err(Error::invalid("logits file needs at least one non-empty row"));
    }
    let mut buf = Vec::with_capacity(LOGITS_HEADER_LEN + 8 * q * rows.len());
    buf.extend_from_slice(LOGITS_MAGIC);
    put_u32(&mut buf, rows.len(), "count")?;
    put_u32(&mut buf, q, "Q")?;
    for row in rows {
        if row.len() != q {
            return Err(Error::DimensionMismatch {
                what: "logit row",
                expected: q,
                found: row.len(),
            });
        }
        for &v in row.iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite("logits"));
            }
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

pub fn decode_logits(bytes: &[u8]) -> Result<Vec<DVector<f64>>> {
    let mut r = Reader::new(bytes);
    r.magic(LOGITS_MAGIC)?;
    let count = r.u32()?;
    let q = r.u32()?;
    if count == 0 || q == 0 {
        return Err(Error::BadHeader {
            offset: 8,
            message: format!("logit dims must be positive, got count={count} Q={q}"),
        });
    }
    let mut rows = Vec::with_capacity(count.min(bytes.len() / (8 * q) + 1));
    for _ in 0..count {
        rows.push(DVector::from_vec(r.f64_block(q)?));
    }
    r.finish()?;
    Ok(rows)
}

pub fn write_logits(path: impl AsRef<Path>, rows: &[DVector<f64>]) -> Result<()> {
    let bytes = encode_logits(rows)?;
    write_file(path.as_ref(), &bytes)
}

pub fn read_logits(path: impl AsRef<Path>) -> Result<Vec<DVector<f64>>> {
    decode_logits(&read_file(path.as_ref())?)
}

pub const SCORES_HEADER: &str = "index,score";

pub fn format_scores(set: &ScoreSet) -> Result<String> {
    set.validate()?;
    let mut out = String::with_capacity(32 * (set.entries.len() + 1));
    out.push_str(SCORES_HEADER);
    out.push('\n');
    for e in &set.entries {
        // {:.16e} prints 17 significant digits, enough to round-trip any f64.
        writeln!(out, "{},{:.16e}", e.index, e.score).expect("writing to String");
    }
    Ok(out)
}

pub fn parse_scores(text: &str) -> Result<ScoreSet> {
    let mut lines = text.lines().map(|l| l.trim_end_matches('\r'));
    match lines.next() {
        Some(h) if h.trim() == SCORES_HEADER => {}
        Some(h) => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header {SCORES_HEADER:?}, found {h:?}"),
            })
        }
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "missing header".into(),
            })
        }
    }
    let mut set = ScoreSet::default();
    let mut seen = HashSet::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let (idx, score) = line
            .split_once(',')
            .ok_or_else(|| bad(format!("expected `index,score`, found {line:?}")))?;
        let index: usize = idx
            .trim()
            .parse()
            .map_err(|_| bad(format!("invalid index {idx:?}")))?;
        let score: f64 = score
            .trim()
            .parse()
            .map_err(|_| bad(format!("invalid score {score:?}")))?;
        if !score.is_finite() {
            return Err(bad(format!("non-finite score {score}")));
        }
        if !seen.insert(index) {
            return Err(bad(format!("duplicate index {index}")));
        }
        set.entries.push(ScoreEntry { index, score });
    }
    Ok(set)
}

pub fn write_scores(path: impl AsRef<Path>, set: &ScoreSet) -> Result<()> {
    let text = format_scores(set)?;
    write_file(path.as_ref(), text.as_bytes())
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<ScoreSet> {
    let bytes = read_file(path.as_ref())?;
    let text = String::from_utf8(bytes).map_err(|e| Error::Parse {
        line: 0,
        message: format!("not UTF-8: {e}"),
    })?;
    parse_scores(&text)
}

/// Writes a JSON report (pretty-printed, trailing newline).
pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Metadata {
        offset: 0,
        message: e.to_string(),
    })?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
        line: e.line(),
        message: format!("{}: {e}", path.display()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_set() -> FeatureSet {
        let mut set = FeatureSet::new(4, 2, 2).unwrap();
        set.push_values((0..16).map(|i| i as f32 * 0.5).collect()).unwrap();
        set.push_values((0..16).map(|i| 1.0 / (1.0 + i as f32)).collect()).unwrap();
        set.meta.insert("dataset".into(), "synthetic".into());
        set.meta.insert("label".into(), "id".into());
        set
    }

    #[test]
    fn featureset_round_trip() {
        let set = sample_set();
        let bytes = encode_featureset(&set).unwrap();
        assert_eq!(&bytes[..8], FEATSET_MAGIC);
        let back = decode_featureset(&bytes).unwrap();
        assert_eq!(back, set);
        assert_eq!(back.sample(1).matrix()[(0, 1)], f64::from(0.5f32));
    }

    #[test]
    fn featureset_bad_magic() {
        let mut bytes = encode_featureset(&sample_set()).unwrap();
        bytes[7] = b'0';
        let err = decode_featureset(&bytes).unwrap_err();
        assert!(matches!(err, Error::BadMagic { offset: 0, .. }), "{err}");
        assert!(err.to_string().contains("bad magic"));
    }

    #[test]
    fn featureset_truncated_mid_sample_reports_sample_offset() {
        let set = sample_set();
        let bytes = encode_featureset(&set).unwrap();
        let chw = 16;
        for k in 0..2 {
            let start = FEATSET_HEADER_LEN + 4 * chw * k;
            let cut = &bytes[..start + 10];
            match decode_featureset(cut).unwrap_err() {
                Error::Truncated { offset, needed, .. } => {
                    assert_eq!(offset, start);
                    assert_eq!(needed, 4 * chw);
                }
                other => panic!("unexpected {other}"),
            }
        }
    }

    #[test]
    fn featureset_rejects_bad_dtype_and_nan() {
        let set = sample_set();
        let mut bytes = encode_featureset(&set).unwrap();
        bytes[24] = 1;
        assert!(matches!(
            decode_featureset(&bytes).unwrap_err(),
            Error::BadDtype { offset: 24, code: 1 }
        ));

        let mut bytes = encode_featureset(&set).unwrap();
        let at = FEATSET_HEADER_LEN + 4 * 3;
        bytes[at..at + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            decode_featureset(&bytes).unwrap_err(),
            Error::NonFiniteValue { offset } if offset == at
        ));
    }

    #[test]
    fn featureset_rejects_trailing_bytes() {
        let mut bytes = encode_featureset(&sample_set()).unwrap();
        bytes.extend_from_slice(&[0, 0, 0, 0]);
        assert!(matches!(
            decode_featureset(&bytes).unwrap_err(),
            Error::TrailingBytes { extra: 4, .. }
        ));
    }

    #[test]
    fn featureset_rejects_wrong_sample_shape() {
        let mut set = FeatureSet::new(2, 1, 1).unwrap();
        assert!(set.push_values(vec![1.0; 3]).is_err());
        assert!(set.push_values(vec![1.0, f32::INFINITY]).is_err());
        assert!(encode_featureset(&set).is_err(), "empty sets are not written");
    }

    fn sample_head() -> ClassifierHead {
        let w = DMatrix::from_fn(3, 5, |i, j| (i as f64 - j as f64) * 0.25);
        let b = DVector::from_vec(vec![0.5, -1.0, 2.0]);
        ClassifierHead::new(w, b).unwrap()
    }

    #[test]
    fn head_round_trip() {
        let head = sample_head();
        let bytes = encode_head(&head).unwrap();
        assert_eq!(bytes.len(), HEAD_HEADER_LEN + 4 * (3 * 5 + 3));
        assert_eq!(decode_head(&bytes).unwrap(), head);
    }

    #[test]
    fn head_truncated_bias() {
        let bytes = encode_head(&sample_head()).unwrap();
        let bias_start = HEAD_HEADER_LEN + 4 * 15;
        let err = decode_head(&bytes[..bytes.len() - 2]).unwrap_err();
        assert!(matches!(err, Error::Truncated { offset, needed: 12, available: 10 } if offset == bias_start));
    }

    #[test]
    fn head_with_no_classes_is_rejected_on_write() {
        let head = ClassifierHead {
            weight: DMatrix::zeros(0, 5),
            bias: DVector::zeros(0),
        };
        assert!(matches!(encode_head(&head), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn scores_round_trip_exactly() {
        let set = ScoreSet::from_scores(&[6.907755278982137], "energy");
        let text = format_scores(&set).unwrap();
        let back = parse_scores(&text).unwrap();
        assert_eq!(back.entries, set.entries);
        assert_eq!(back.entries[0].score.to_bits(), 6.907755278982137f64.to_bits());
    }

    #[test]
    fn empty_scores_are_header_only() {
        let text = format_scores(&ScoreSet::default()).unwrap();
        assert_eq!(text, "index,score\n");
        assert!(parse_scores(&text).unwrap().entries.is_empty());
    }

    #[test]
    fn malformed_score_row_names_line() {
        let err = parse_scores("index,score\na,b\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(err.to_string().starts_with("line 2"));
        assert!(matches!(
            parse_scores("index,score\n0,1.0\n0,2.0\n").unwrap_err(),
            Error::Parse { line: 3, .. }
        ));
    }

    #[test]
    fn logits_round_trip_and_truncation() {
        let rows = vec![
            DVector::from_vec(vec![1.0, -2.5, 1e-300]),
            DVector::from_vec(vec![0.1, 0.2, 0.3]),
        ];
        let bytes = encode_logits(&rows).unwrap();
        assert_eq!(decode_logits(&bytes).unwrap(), rows);
        assert!(matches!(
            decode_logits(&bytes[..bytes.len() - 1]).unwrap_err(),
            Error::Truncated { offset, .. } if offset == LOGITS_HEADER_LEN + 24
        ));
    }
}
