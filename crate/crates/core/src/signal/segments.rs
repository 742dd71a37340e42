//! Paired PPG/ABP segment collections and their file formats.
//!
//! Binary layout, all little-endian:
//!
//! ```text
//! "INNSIG01" | u32 count | u32 L | f32 sample rate | f32 norm_min | f32 norm_max
//! | per segment: L x f32 PPG, then L x f32 ABP (normalised units)
//! ```
//!
//! CSV ingest takes one segment per row (`2L` reals, PPG then ABP) or a pair
//! of files with `L` reals per row. Lines starting with `#` are skipped.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::AbpNorm;
use crate::error::{Error, Result};

pub const SEGMENT_MAGIC: &[u8; 8] = b"INNSIG01";

/// Normalised values outside this band are rejected on ingest.
pub const SANITY_BAND: (f32, f32) = (-0.5, 1.5);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Val,
    Test,
    #[default]
    Unlabelled,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub ppg: Vec<f32>,
    /// Normalised ABP.
    pub abp: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentSet {
    segments: Vec<Segment>,
    length: usize,
    pub sample_rate_hz: f32,
    pub norm: AbpNorm,
    pub split: SplitTag,
}

impl SegmentSet {
    /// Validates equal lengths, finiteness and the sanity band.
    pub fn new(segments: Vec<Segment>, sample_rate_hz: f32, norm: AbpNorm) -> Result<Self> {
        norm.validate()?;
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::config("sample_rate_hz", format!("{sample_rate_hz} must be positive")));
        }
        let length = segments.first().map_or(0, |s| s.ppg.len());
        for (i, s) in segments.iter().enumerate() {
            if s.ppg.len() != length || s.abp.len() != length {
                return Err(Error::dim(
                    "SegmentSet::new",
                    format!(
                        "segment {i} has lengths (ppg {}, abp {}), expected {length}",
                        s.ppg.len(),
                        s.abp.len()
                    ),
                ));
            }
            check_band(i, "ppg", &s.ppg)?;
            check_band(i, "abp", &s.abp)?;
        }
        Ok(Self {
            segments,
            length,
            sample_rate_hz,
            norm,
            split: SplitTag::Unlabelled,
        })
    }

    pub fn with_split(mut self, split: SplitTag) -> Self {
        self.split = split;
        self
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Samples per segment.
    pub fn length(&self) -> usize {
        self.length
    }

    /// Segments `range` as a new set sharing constants.
    pub fn subset(&self, range: std::ops::Range<usize>, split: SplitTag) -> Self {
        Self {
            segments: self.segments[range].to_vec(),
            length: self.length,
            sample_rate_hz: self.sample_rate_hz,
            norm: self.norm,
            split,
        }
    }

    /// Splits off the last `ceil(fraction * len)` segments for validation.
    pub fn train_val_split(&self, val_fraction: f64) -> Result<(Self, Self)> {
        let n = self.len();
        let n_val = ((n as f64) * val_fraction).ceil() as usize;
        if n < 2 || n_val == 0 || n_val >= n {
            return Err(Error::Usage(format!(
                "cannot split {n} segments with validation fraction {val_fraction}"
            )));
        }
        Ok((
            self.subset(0..n - n_val, SplitTag::Train),
            self.subset(n - n_val..n, SplitTag::Val),
        ))
    }
}

fn check_band(index: usize, what: &str, v: &[f32]) -> Result<()> {
    let (lo, hi) = SANITY_BAND;
    if let Some(pos) = v.iter().position(|x| !x.is_finite() || *x < lo || *x > hi) {
        return Err(Error::format_at_row(
            index,
            format!(
                "{what} sample {pos} = {} outside normalised band [{lo}, {hi}]",
                v[pos]
            ),
        ));
    }
    Ok(())
}

pub fn encode_segments(set: &SegmentSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(28 + set.len() * set.length() * 8);
    out.extend_from_slice(SEGMENT_MAGIC);
    out.extend_from_slice(&(set.len() as u32).to_le_bytes());
    out.extend_from_slice(&(set.length() as u32).to_le_bytes());
    out.extend_from_slice(&set.sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&set.norm.min_mmhg.to_le_bytes());
    out.extend_from_slice(&set.norm.max_mmhg.to_le_bytes());
    for s in set.segments() {
        for v in s.ppg.iter().chain(&s.abp) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_segments(bytes: &[u8]) -> Result<SegmentSet> {
    if bytes.len() < 8 || &bytes[..8] != SEGMENT_MAGIC {
        return Err(Error::format_at_offset(0, "bad magic, expected \"INNSIG01\""));
    }
    if bytes.len() < 28 {
        return Err(Error::format_at_offset(bytes.len(), "truncated header"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
    let f32_at = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let count = u32_at(8);
    let length = u32_at(12);
    let rate = f32_at(16);
    let norm = AbpNorm {
        min_mmhg: f32_at(20),
        max_mmhg: f32_at(24),
    };
    let expected = 28 + count * length * 8;
    if bytes.len() != expected {
        return Err(Error::format_at_offset(
            bytes.len().min(expected),
            format!(
                "{count} segments of length {length} need {expected} bytes, file has {}",
                bytes.len()
            ),
        ));
    }
    let mut segments = Vec::with_capacity(count);
    let mut o = 28;
    let mut read = |n: usize| {
        let v: Vec<f32> = (0..n).map(|i| f32_at(o + 4 * i)).collect();
        o += 4 * n;
        v
    };
    for _ in 0..count {
        let ppg = read(length);
        let abp = read(length);
        segments.push(Segment { ppg, abp });
    }
    let mut set = SegmentSet::new(segments, rate, norm)?;
    set.length = length;
    Ok(set)
}

pub fn write_segments(path: impl AsRef<Path>, set: &SegmentSet) -> Result<()> {
    fs::write(path, encode_segments(set))?;
    Ok(())
}

pub fn read_segments(path: impl AsRef<Path>) -> Result<SegmentSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| Error::Open {
        path: path.to_path_buf(),
        source,
    })?;
    decode_segments(&bytes)
}

#[derive(Clone, Debug, PartialEq)]
pub enum CsvLayout {
    /// One file, `2L` values per row: PPG then ABP.
    Paired(PathBuf),
    /// Two files with `L` values per row, rows matched by position.
    TwoFile { ppg: PathBuf, abp: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IngestOptions {
    pub length: usize,
    pub sample_rate_hz: f32,
    pub norm: AbpNorm,
    /// ABP columns are in mmHg and get normalised on ingest; otherwise they
    /// are taken as already normalised.
    pub abp_in_mmhg: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            length: 625,
            sample_rate_hz: 125.0,
            norm: AbpNorm::default(),
            abp_in_mmhg: true,
        }
    }
}

/// Parses CSV text into rows of exactly `width` reals. Row numbers in errors
/// are 1-based line numbers.
pub fn parse_csv_rows(text: &str, width: usize) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut row = Vec::with_capacity(width);
        for (col, cell) in trimmed.split(',').enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::format_at_row(line_no, format!("column {} is not a number: {cell:?}", col + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::format_at_row(line_no, format!("column {} is not finite", col + 1)));
            }
            row.push(v);
        }
        if row.len() != width {
            return Err(Error::format_at_row(
                line_no,
                format!("expected {width} values, found {}", row.len()),
            ));
        }
        rows.push(row);
    }
    Ok(rows)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Open {
        path: path.to_path_buf(),
        source,
    })
}

pub fn ingest_csv(layout: &CsvLayout, opts: &IngestOptions) -> Result<SegmentSet> {
    let l = opts.length;
    if l == 0 {
        return Err(Error::config("length", "must be positive"));
    }
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = match layout {
        CsvLayout::Paired(path) => parse_csv_rows(&read_text(path)?, 2 * l)?
            .into_iter()
            .map(|mut r| {
                let abp = r.split_off(l);
                (r, abp)
            })
            .collect(),
        CsvLayout::TwoFile { ppg, abp } => {
            let p = parse_csv_rows(&read_text(ppg)?, l)?;
            let a = parse_csv_rows(&read_text(abp)?, l)?;
            if p.len() != a.len() {
                return Err(Error::format_at_row(
                    p.len().min(a.len()) + 1,
                    format!("PPG file has {} rows, ABP file has {}", p.len(), a.len()),
                ));
            }
            p.into_iter().zip(a).collect()
        }
    };
    let segments = pairs
        .into_iter()
        .map(|(ppg, abp)| {
            let abp = if opts.abp_in_mmhg {
                opts.norm.normalize(&abp)
            } else {
                abp
            };
            Segment {
                ppg: ppg.into_iter().map(|v| v as f32).collect(),
                abp: abp.into_iter().map(|v| v as f32).collect(),
            }
        })
        .collect();
    let mut set = SegmentSet::new(segments, opts.sample_rate_hz, opts.norm)?;
    set.length = l;
    Ok(set)
}
