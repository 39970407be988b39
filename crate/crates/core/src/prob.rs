//! Log-domain categorical distributions and the divergences built on them.
//!
//! Probabilities are stored as natural logarithms. `-inf` is a legal value and
//! stands for a zero-probability label; the divergences follow the usual
//! measure-theoretic conventions (`0 * log 0 = 0`).

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Ordered set of distinct label names.
///
/// Cloning is cheap; the names are shared.
#[derive(Clone)]
pub struct LabelSet {
    inner: Arc<LabelSetInner>,
}

struct LabelSetInner {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelSet {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(Error::InvalidLabelSet(format!(
                "need at least 2 labels, got {}",
                names.len()
            )));
        }
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::InvalidLabelSet(format!("duplicate label `{name}`")));
            }
        }
        Ok(Self {
            inner: Arc::new(LabelSetInner { names, index }),
        })
    }

    /// Labels named `0`, `1`, ..., `k - 1`.
    pub fn numbered(k: usize) -> Result<Self> {
        Self::new((0..k).map(|i| i.to_string()))
    }

    pub fn len(&self) -> usize {
        self.inner.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.names.is_empty()
    }

    pub fn name(&self, index: usize) -> &str {
        &self.inner.names[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.inner.index.get(name).copied()
    }

    pub fn names(&self) -> &[String] {
        &self.inner.names
    }
}

impl PartialEq for LabelSet {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner) || self.inner.names == other.inner.names
    }
}

impl Eq for LabelSet {}

impl fmt::Debug for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.names()).finish()
    }
}

/// Stable `log(sum(exp(xs)))`. Returns `-inf` for an empty slice or all `-inf` entries.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Shift `log_weights` so that they exponentiate to a distribution.
pub fn log_normalize(log_weights: &[f64]) -> Result<Vec<f64>> {
    if log_weights
        .iter()
        .any(|w| w.is_nan() || *w == f64::INFINITY)
    {
        return Err(Error::DegenerateWeights);
    }
    let z = log_sum_exp(log_weights);
    if !z.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    Ok(log_weights.iter().map(|&w| w - z).collect())
}

/// A normalized distribution over a [`LabelSet`], stored as log probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct Categorical {
    labels: LabelSet,
    log_probs: Vec<f64>,
}

impl Categorical {
    /// Normalizes arbitrary log weights into a distribution.
    pub fn from_log_weights(labels: LabelSet, log_weights: &[f64]) -> Result<Self> {
        if log_weights.len() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} labels",
                log_weights.len(),
                labels.len()
            )));
        }
        let log_probs = log_normalize(log_weights)?;
        Ok(Self { labels, log_probs })
    }

    /// Builds from direct-space probabilities; they are renormalized.
    pub fn from_probs(labels: LabelSet, probs: &[f64]) -> Result<Self> {
        if probs.iter().any(|p| *p < 0.0) {
            return Err(Error::DegenerateWeights);
        }
        let logs: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
        Self::from_log_weights(labels, &logs)
    }

    /// All mass on `index`.
    pub fn one_hot(labels: LabelSet, index: usize) -> Self {
        let mut log_probs = vec![f64::NEG_INFINITY; labels.len()];
        log_probs[index] = 0.0;
        Self { labels, log_probs }
    }

    pub fn uniform(labels: LabelSet) -> Self {
        let k = labels.len();
        Self {
            log_probs: vec![-(k as f64).ln(); k],
            labels,
        }
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn prob(&self, index: usize) -> f64 {
        self.log_probs[index].exp()
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|l| l.exp()).collect()
    }

    /// Index of the most probable label; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &lp) in self.log_probs.iter().enumerate().skip(1) {
            if lp > self.log_probs[best] {
                best = i;
            }
        }
        best
    }

    fn check_same_labels(&self, other: &Self) -> Result<()> {
        if self.labels != other.labels {
            return Err(Error::LabelSetMismatch);
        }
        Ok(())
    }
}

/// Bhattacharyya distance `-log sum_y sqrt(p1(y) p2(y))`.
///
/// Returns `+inf` when the supports are disjoint.
pub fn bhattacharyya(p1: &Categorical, p2: &Categorical) -> Result<f64> {
    p1.check_same_labels(p2)?;
    Ok(bhattacharyya_log(&p1.log_probs, &p2.log_probs))
}

pub(crate) fn bhattacharyya_log(lp1: &[f64], lp2: &[f64]) -> f64 {
    let halves: Vec<f64> = lp1.iter().zip(lp2).map(|(a, b)| 0.5 * (a + b)).collect();
    // Clamp the rounding noise that can push identical inputs a hair below zero.
    (-log_sum_exp(&halves)).max(0.0)
}

/// `KL(q || p)`. Returns `+inf` when `q` puts mass where `p` has none.
pub fn kl_divergence(q: &Categorical, p: &Categorical) -> Result<f64> {
    q.check_same_labels(p)?;
    Ok(kl_log(&q.log_probs, &p.log_probs))
}

pub(crate) fn kl_log(lq: &[f64], lp: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&a, &b) in lq.iter().zip(lp) {
        if a == f64::NEG_INFINITY {
            continue;
        }
        if b == f64::NEG_INFINITY {
            return f64::INFINITY;
        }
        total += a.exp() * (a - b);
    }
    total.max(0.0)
}
