//! Corpus formats, view construction and the synthetic two-view generator.
//!
//! Feature names are interned per view into dense ids in first-seen order
//! ([`FeatureIndex`]). At test time the index is frozen and unknown feature
//! names are dropped.

mod conll;
mod flat;
mod synth;

pub use conll::{
    content_context_views, encode_sequences, parse_conll, read_conll, ColumnSpec, Sentence,
    SeqCorpus, Token, ViewTemplate,
};
pub use flat::{
    collapse_labels, encode_flat, parse_flat, parse_mapping, parse_single_view,
    random_feature_split, read_flat, read_mapping, read_single_view, write_flat, EncodedFlat,
    FlatCorpus, FlatRecord, RawRecord,
};
pub use synth::{synth_two_view, GenConfig, SynthCorpus};

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::maxent::FeatureVector;
use crate::prob::LabelSet;

/// Dense ids for feature names, assigned in first-seen order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureIndex {
    names: Vec<String>,
    ids: HashMap<String, u32>,
}

impl FeatureIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.ids.insert(name.to_string(), id);
        id
    }

    /// Maps named features to a vector, growing the index when `grow` is set
    /// and dropping unknown names otherwise.
    pub fn encode(&mut self, features: &[(String, f64)], grow: bool) -> Result<FeatureVector> {
        let entries = features
            .iter()
            .filter_map(|(name, v)| {
                let id = if grow {
                    Some(self.intern(name))
                } else {
                    self.get(name)
                };
                id.map(|id| (id, *v))
            })
            .collect();
        FeatureVector::new(entries)
    }

    /// One name per line, in id order.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        for name in &self.names {
            writeln!(out, "{name}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut index = Self::new();
        for line in input.lines() {
            let line = line?;
            let before = index.len();
            index.intern(&line);
            if index.len() == before {
                return Err(Error::ModelFormat(format!(
                    "duplicate feature name `{line}`"
                )));
            }
        }
        Ok(index)
    }
}

/// Sorted set of the distinct labels in `labels`.
pub fn label_set_of<'a, I: IntoIterator<Item = &'a str>>(labels: I) -> Result<LabelSet> {
    let mut names: Vec<&str> = labels.into_iter().collect();
    names.sort_unstable();
    names.dedup();
    LabelSet::new(names)
}
