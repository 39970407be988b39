//! Agreement projections between the predictions of two views.
//!
//! `agree(p1, p2)` is the product distribution `q1 × q2` closest in KL to
//! `p1 × p2` among those on which the two views agree. When both views share
//! a label set the minimizer is the normalized geometric mean
//! `q(y) ∝ sqrt(p1(y) p2(y))`, and the minimal KL is twice the Bhattacharyya
//! distance.
//!
//! With a [`LabelMapping`] the views only have to agree after the first
//! view's (fine) labels are collapsed onto the second view's (coarse) labels.
//! Flat problems still have a closed form. For chains, agreement is imposed
//! per clique: at every position, and for every adjacent pair of positions,
//! the collapsed marginals of `q1` must equal the marginals of `q2`. That keeps
//! both projections chain-structured, and under the identity mapping it
//! recovers the geometric-mean chain exactly. The multipliers are found by
//! maximizing the concave dual ([`dual_objective`]).

mod chain;
mod flat;

pub use chain::{
    agree_chain, agree_chain_partial, dual_objective, ChainAgreementOutcome, DualConfig, DualVars,
};
pub use flat::{agree_flat, agree_flat_partial, AgreementOutcome};

use crate::error::{Error, Result};
use crate::prob::{log_sum_exp, LabelSet};

/// Surjection from a fine label set onto a coarse one.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelMapping {
    fine: LabelSet,
    coarse: LabelSet,
    map: Vec<usize>,
}

impl LabelMapping {
    pub fn new(fine: LabelSet, coarse: LabelSet, map: Vec<usize>) -> Result<Self> {
        if map.len() != fine.len() {
            return Err(Error::InvalidMapping(format!(
                "{} targets for {} fine labels",
                map.len(),
                fine.len()
            )));
        }
        let mut hit = vec![false; coarse.len()];
        for &z in &map {
            if z >= coarse.len() {
                return Err(Error::InvalidMapping(format!(
                    "coarse index {z} out of range"
                )));
            }
            hit[z] = true;
        }
        if let Some(z) = hit.iter().position(|h| !h) {
            return Err(Error::InvalidMapping(format!(
                "coarse label `{}` has no fine label",
                coarse.name(z)
            )));
        }
        Ok(Self { fine, coarse, map })
    }

    /// Builds the mapping from `(fine, coarse)` name pairs.
    pub fn from_pairs(
        fine: LabelSet,
        coarse: LabelSet,
        pairs: &[(String, String)],
    ) -> Result<Self> {
        let mut map = vec![usize::MAX; fine.len()];
        for (f, c) in pairs {
            let fi = fine
                .index_of(f)
                .ok_or_else(|| Error::UnknownLabel(f.clone()))?;
            let ci = coarse
                .index_of(c)
                .ok_or_else(|| Error::UnknownLabel(c.clone()))?;
            if map[fi] != usize::MAX && map[fi] != ci {
                return Err(Error::InvalidMapping(format!("`{f}` mapped twice")));
            }
            map[fi] = ci;
        }
        if let Some(i) = map.iter().position(|&z| z == usize::MAX) {
            return Err(Error::UnmappedLabel(fine.name(i).to_string()));
        }
        Self::new(fine, coarse, map)
    }

    pub fn identity(labels: LabelSet) -> Self {
        Self {
            map: (0..labels.len()).collect(),
            fine: labels.clone(),
            coarse: labels,
        }
    }

    pub fn fine(&self) -> &LabelSet {
        &self.fine
    }

    pub fn coarse(&self) -> &LabelSet {
        &self.coarse
    }

    pub fn map(&self, fine: usize) -> usize {
        self.map[fine]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.map
    }

    pub fn is_identity(&self) -> bool {
        self.fine == self.coarse && self.map.iter().enumerate().all(|(i, &z)| i == z)
    }

    /// The inverse direction, available only for bijections.
    pub fn inverse(&self) -> Option<Self> {
        if self.fine.len() != self.coarse.len() {
            return None;
        }
        let mut inv = vec![0; self.coarse.len()];
        for (f, &c) in self.map.iter().enumerate() {
            inv[c] = f;
        }
        Some(Self {
            fine: self.coarse.clone(),
            coarse: self.fine.clone(),
            map: inv,
        })
    }

    /// Collapses fine log probabilities onto the coarse set.
    pub fn collapse_log(&self, fine: &[f64]) -> Vec<f64> {
        let mut groups: Vec<Vec<f64>> = vec![Vec::new(); self.coarse.len()];
        for (y, &lp) in fine.iter().enumerate() {
            groups[self.map[y]].push(lp);
        }
        groups.iter().map(|g| log_sum_exp(g)).collect()
    }
}
