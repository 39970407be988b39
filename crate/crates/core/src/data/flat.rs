//! The two-view flat format, one example per line:
//!
//! ```text
//! label<TAB>view1 features<TAB>view2 features
//! ```
//!
//! Features are space-separated `name:value` pairs; a bare `name` has value
//! 1.0. The label `?` marks an unlabeled example. Empty lines are skipped.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use crate::agreement::LabelMapping;
use crate::error::{Error, Result};
use crate::maxent::FeatureVector;
use crate::prob::LabelSet;

use super::{label_set_of, FeatureIndex};

pub const UNLABELED: &str = "?";

#[derive(Clone, Debug, PartialEq)]
pub struct FlatRecord {
    /// `None` for unlabeled examples.
    pub label: Option<String>,
    pub views: [Vec<(String, f64)>; 2],
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FlatCorpus {
    pub records: Vec<FlatRecord>,
}

impl FlatCorpus {
    pub fn labeled(&self) -> impl Iterator<Item = &FlatRecord> {
        self.records.iter().filter(|r| r.label.is_some())
    }

    pub fn unlabeled(&self) -> impl Iterator<Item = &FlatRecord> {
        self.records.iter().filter(|r| r.label.is_none())
    }

    /// Sorted distinct labels of the labeled records.
    pub fn label_set(&self) -> Result<LabelSet> {
        label_set_of(self.labeled().filter_map(|r| r.label.as_deref()))
    }
}

/// A flat corpus mapped to feature ids, ready for training or evaluation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EncodedFlat {
    pub labeled1: Vec<(FeatureVector, usize)>,
    pub labeled2: Vec<(FeatureVector, usize)>,
    pub unlabeled: Vec<(FeatureVector, FeatureVector)>,
}

/// Encodes `corpus` against `labels` (view 1's label set). With a mapping,
/// view 2 is labeled with the collapsed label. Unknown features are added
/// when `grow` is set and dropped otherwise.
pub fn encode_flat(
    corpus: &FlatCorpus,
    labels: &LabelSet,
    mapping: Option<&LabelMapping>,
    indices: &mut [FeatureIndex; 2],
    grow: bool,
) -> Result<EncodedFlat> {
    if mapping.is_some_and(|m| m.fine() != labels) {
        return Err(Error::LabelSetMismatch);
    }
    let mut out = EncodedFlat::default();
    for r in &corpus.records {
        let x1 = indices[0].encode(&r.views[0], grow)?;
        let x2 = indices[1].encode(&r.views[1], grow)?;
        match &r.label {
            None => out.unlabeled.push((x1, x2)),
            Some(l) => {
                let y = labels
                    .index_of(l)
                    .ok_or_else(|| Error::UnknownLabel(l.clone()))?;
                let y2 = mapping.map_or(y, |m| m.map(y));
                out.labeled1.push((x1, y));
                out.labeled2.push((x2, y2));
            }
        }
    }
    Ok(out)
}

/// A labeled or unlabeled example with one undivided feature space.
#[derive(Clone, Debug, PartialEq)]
pub struct RawRecord {
    pub label: Option<String>,
    pub features: Vec<(String, f64)>,
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_features(field: &str, path: &Path, line: usize) -> Result<Vec<(String, f64)>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for token in field.split(' ').filter(|t| !t.is_empty()) {
        let (name, value) = match token.rsplit_once(':') {
            Some((name, v)) => {
                let value: f64 = v.parse().map_err(|_| {
                    parse_error(path, line, format!("bad feature value in `{token}`"))
                })?;
                (name, value)
            }
            None => (token, 1.0),
        };
        if name.is_empty() {
            return Err(parse_error(
                path,
                line,
                format!("empty feature name in `{token}`"),
            ));
        }
        if !value.is_finite() {
            return Err(parse_error(
                path,
                line,
                format!("non-finite value in `{token}`"),
            ));
        }
        if !seen.insert(name) {
            return Err(parse_error(
                path,
                line,
                format!("duplicate feature `{name}`"),
            ));
        }
        out.push((name.to_string(), value));
    }
    Ok(out)
}

fn parse_label(field: &str, path: &Path, line: usize) -> Result<Option<String>> {
    match field {
        "" => Err(parse_error(path, line, "empty label")),
        UNLABELED => Ok(None),
        l => Ok(Some(l.to_string())),
    }
}

/// Parses flat-format text. `path` is only used in error messages.
pub fn parse_flat(text: &str, path: &Path) -> Result<FlatCorpus> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_error(
                path,
                lineno,
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        records.push(FlatRecord {
            label: parse_label(fields[0], path, lineno)?,
            views: [
                parse_features(fields[1], path, lineno)?,
                parse_features(fields[2], path, lineno)?,
            ],
        });
    }
    Ok(FlatCorpus { records })
}

pub fn read_flat(path: impl AsRef<Path>) -> Result<FlatCorpus> {
    let path = path.as_ref();
    parse_flat(&crate::error::read_to_string(path)?, path)
}

fn format_value(v: f64) -> String {
    format!("{v}")
}

fn write_features(out: &mut impl Write, features: &[(String, f64)]) -> Result<()> {
    for (i, (name, value)) in features.iter().enumerate() {
        if i > 0 {
            out.write_all(b" ")?;
        }
        if *value == 1.0 {
            write!(out, "{name}")?;
        } else {
            write!(out, "{name}:{}", format_value(*value))?;
        }
    }
    Ok(())
}

/// Writes the canonical form: value 1.0 omitted, other values in shortest
/// round-trip notation.
pub fn write_flat<W: Write>(corpus: &FlatCorpus, mut out: W) -> Result<()> {
    for r in &corpus.records {
        out.write_all(r.label.as_deref().unwrap_or(UNLABELED).as_bytes())?;
        out.write_all(b"\t")?;
        write_features(&mut out, &r.views[0])?;
        out.write_all(b"\t")?;
        write_features(&mut out, &r.views[1])?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Parses `label<TAB>features` lines (a single feature space).
pub fn parse_single_view(text: &str, path: &Path) -> Result<Vec<RawRecord>> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(parse_error(
                path,
                lineno,
                format!("expected 2 tab-separated fields, found {}", fields.len()),
            ));
        }
        records.push(RawRecord {
            label: parse_label(fields[0], path, lineno)?,
            features: parse_features(fields[1], path, lineno)?,
        });
    }
    Ok(records)
}

pub fn read_single_view(path: impl AsRef<Path>) -> Result<Vec<RawRecord>> {
    let path = path.as_ref();
    parse_single_view(&crate::error::read_to_string(path)?, path)
}

// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

// FNV-1a; stable across runs and platforms, unlike the std hasher.
fn name_hash(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// View (0 or 1) that `feature` goes to under `seed`.
pub fn feature_view(feature: &str, seed: u64) -> usize {
    (mix(name_hash(feature) ^ mix(seed)) >> 63) as usize
}

/// Splits each record's features into two views with a fair coin per
/// feature name. The assignment depends only on `(seed, name)`, so every
/// corpus split with the same seed uses the same partition.
pub fn random_feature_split(records: &[RawRecord], seed: u64) -> FlatCorpus {
    let records = records
        .iter()
        .map(|r| {
            let mut views: [Vec<(String, f64)>; 2] = [Vec::new(), Vec::new()];
            for (name, value) in &r.features {
                views[feature_view(name, seed)].push((name.clone(), *value));
            }
            FlatRecord {
                label: r.label.clone(),
                views,
            }
        })
        .collect();
    FlatCorpus { records }
}

/// Rewrites labels through `mapping`. Unlabeled records pass through.
///
/// A non-injective mapping loses the distinction between merged labels, so
/// this cannot be undone.
pub fn collapse_labels(corpus: &FlatCorpus, mapping: &LabelMapping) -> Result<FlatCorpus> {
    let records = corpus
        .records
        .iter()
        .map(|r| {
            let label = match &r.label {
                None => None,
                Some(l) => {
                    let fine = mapping
                        .fine()
                        .index_of(l)
                        .ok_or_else(|| Error::UnmappedLabel(l.clone()))?;
                    Some(mapping.coarse().name(mapping.map(fine)).to_string())
                }
            };
            Ok(FlatRecord {
                label,
                views: r.views.clone(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(FlatCorpus { records })
}

/// Parses `fine<TAB>coarse` lines. Both label sets are sorted by name.
pub fn parse_mapping(text: &str, path: &Path) -> Result<LabelMapping> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 || fields.iter().any(|f| f.is_empty()) {
            return Err(parse_error(path, i + 1, "expected `fine<TAB>coarse`"));
        }
        pairs.push((fields[0].to_string(), fields[1].to_string()));
    }
    let fine = label_set_of(pairs.iter().map(|p| p.0.as_str()))?;
    let coarse = label_set_of(pairs.iter().map(|p| p.1.as_str()))?;
    LabelMapping::from_pairs(fine, coarse, &pairs)
}

pub fn read_mapping(path: impl AsRef<Path>) -> Result<LabelMapping> {
    let path = path.as_ref();
    parse_mapping(&crate::error::read_to_string(path)?, path)
}
