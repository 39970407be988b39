//! Linear-chain conditional random fields.
//!
//! Node cliques score `emission[y] · x_t` (with a per-label bias, as in
//! [`crate::maxent`]); edge cliques score a transition matrix tied across
//! positions. There are no start or stop states.
//!
//! All inference runs in the log domain. `-inf` potentials are allowed and
//! mark forbidden labels or transitions.

use crate::error::{Error, Result};
use crate::maxent::FeatureVector;
use crate::optimize::{self, OptConfig, OptReport};
use crate::parallel::ordered_sum;
use crate::prob::{log_sum_exp, Categorical, LabelSet};

/// Largest number of label sequences [`brute_force_dist`] will enumerate.
pub const ENUMERATION_BUDGET: usize = 4096;

/// One sequence as seen by one view: a feature vector per position and
/// optionally the gold labels.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainExample {
    positions: Vec<FeatureVector>,
    gold: Option<Vec<usize>>,
}

impl ChainExample {
    pub fn new(positions: Vec<FeatureVector>, gold: Option<Vec<usize>>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::Empty("chain example"));
        }
        if let Some(g) = &gold {
            if g.len() != positions.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} gold labels for {} positions",
                    g.len(),
                    positions.len()
                )));
            }
        }
        Ok(Self { positions, gold })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[FeatureVector] {
        &self.positions
    }

    pub fn gold(&self) -> Option<&[usize]> {
        self.gold.as_deref()
    }

    pub fn without_gold(&self) -> Self {
        Self {
            positions: self.positions.clone(),
            gold: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrfParams {
    labels: LabelSet,
    num_features: usize,
    emission: Vec<f64>,
    transition: Vec<f64>,
    prior_variance: f64,
}

impl CrfParams {
    pub fn zeros(labels: LabelSet, num_inputs: usize, prior_variance: f64) -> Self {
        let k = labels.len();
        let num_features = num_inputs + 1;
        Self {
            emission: vec![0.0; k * num_features],
            transition: vec![0.0; k * k],
            labels,
            num_features,
            prior_variance,
        }
    }

    pub fn from_weights(
        labels: LabelSet,
        num_features: usize,
        emission: Vec<f64>,
        transition: Vec<f64>,
        prior_variance: f64,
    ) -> Result<Self> {
        let k = labels.len();
        if num_features == 0 || emission.len() != k * num_features || transition.len() != k * k {
            return Err(Error::DimensionMismatch("crf weight matrices".into()));
        }
        if emission.iter().chain(&transition).any(|w| !w.is_finite()) {
            return Err(Error::InvalidFeatures("non-finite weight".into()));
        }
        if prior_variance.is_nan() || prior_variance <= 0.0 {
            return Err(Error::Config(format!(
                "prior variance must be positive, got {prior_variance}"
            )));
        }
        Ok(Self {
            labels,
            num_features,
            emission,
            transition,
            prior_variance,
        })
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_inputs(&self) -> usize {
        self.num_features - 1
    }

    /// `K x F` row-major, last column is the bias.
    pub fn emission(&self) -> &[f64] {
        &self.emission
    }

    /// `K x K` row-major, `transition[from * K + to]`.
    pub fn transition(&self) -> &[f64] {
        &self.transition
    }

    pub fn prior_variance(&self) -> f64 {
        self.prior_variance
    }

    pub fn with_prior_variance(mut self, prior_variance: f64) -> Self {
        self.prior_variance = prior_variance;
        self
    }

    fn flatten(&self) -> Vec<f64> {
        let mut v = self.emission.clone();
        v.extend_from_slice(&self.transition);
        v
    }

    fn with_flat(&self, flat: &[f64]) -> Self {
        let split = self.emission.len();
        Self {
            emission: flat[..split].to_vec(),
            transition: flat[split..].to_vec(),
            ..self.clone()
        }
    }

    pub fn predict(&self, x: &ChainExample) -> Result<Vec<usize>> {
        viterbi(&build_potentials(self, x)?)
    }
}

/// Per-position log clique potentials of one chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainPotentials {
    len: usize,
    k: usize,
    node: Vec<f64>,
    edge: Vec<f64>,
}

impl ChainPotentials {
    pub fn new(len: usize, k: usize, node: Vec<f64>, edge: Vec<f64>) -> Result<Self> {
        if len == 0 || k == 0 {
            return Err(Error::Empty("chain potentials"));
        }
        if node.len() != len * k || edge.len() != (len - 1) * k * k {
            return Err(Error::DimensionMismatch(format!(
                "potential tables for T={len}, K={k}"
            )));
        }
        if node
            .iter()
            .chain(&edge)
            .any(|v| v.is_nan() || *v == f64::INFINITY)
        {
            return Err(Error::InvalidFeatures(
                "potentials must be finite or -inf".into(),
            ));
        }
        Ok(Self { len, k, node, edge })
    }

    pub fn zeros(len: usize, k: usize) -> Self {
        Self {
            len,
            k,
            node: vec![0.0; len * k],
            edge: vec![0.0; len.saturating_sub(1) * k * k],
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn num_labels(&self) -> usize {
        self.k
    }

    pub fn node(&self, t: usize, y: usize) -> f64 {
        self.node[t * self.k + y]
    }

    /// Potential of the transition `y -> y2` between positions `t` and `t + 1`.
    pub fn edge(&self, t: usize, y: usize, y2: usize) -> f64 {
        self.edge[(t * self.k + y) * self.k + y2]
    }

    pub fn nodes(&self) -> &[f64] {
        &self.node
    }

    pub fn edges(&self) -> &[f64] {
        &self.edge
    }

    /// Sum of clique potentials along `path`.
    pub fn path_score(&self, path: &[usize]) -> f64 {
        let mut s = 0.0;
        for (t, &y) in path.iter().enumerate() {
            s += self.node(t, y);
            if t + 1 < path.len() {
                s += self.edge(t, y, path[t + 1]);
            }
        }
        s
    }

    pub(crate) fn same_shape(&self, other: &Self) -> bool {
        self.len == other.len && self.k == other.k
    }

    /// Elementwise `a * self + b * other`, with `-inf` absorbing.
    pub(crate) fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        let mix = |x: &f64, y: &f64| {
            if *x == f64::NEG_INFINITY || *y == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                a * x + b * y
            }
        };
        Self {
            len: self.len,
            k: self.k,
            node: self
                .node
                .iter()
                .zip(&other.node)
                .map(|(x, y)| mix(x, y))
                .collect(),
            edge: self
                .edge
                .iter()
                .zip(&other.edge)
                .map(|(x, y)| mix(x, y))
                .collect(),
        }
    }
}

/// Node and edge marginals of a chain plus its log partition function.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainMarginals {
    len: usize,
    k: usize,
    node: Vec<f64>,
    edge: Vec<f64>,
    log_partition: f64,
}

impl ChainMarginals {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn num_labels(&self) -> usize {
        self.k
    }

    pub fn node(&self, t: usize, y: usize) -> f64 {
        self.node[t * self.k + y]
    }

    pub fn edge(&self, t: usize, y: usize, y2: usize) -> f64 {
        self.edge[(t * self.k + y) * self.k + y2]
    }

    pub fn nodes(&self) -> &[f64] {
        &self.node
    }

    pub fn edges(&self) -> &[f64] {
        &self.edge
    }

    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    /// Expected total clique score of `pot` under these marginals.
    ///
    /// Cliques with zero marginal contribute nothing even when their potential
    /// is `-inf`; a `-inf` potential with positive marginal yields `-inf`.
    pub fn expected_score(&self, pot: &ChainPotentials) -> f64 {
        fn term(m: f64, s: f64) -> f64 {
            if m == 0.0 {
                0.0
            } else {
                m * s
            }
        }
        let nodes: f64 = self
            .node
            .iter()
            .zip(&pot.node)
            .map(|(&m, &s)| term(m, s))
            .sum();
        let edges: f64 = self
            .edge
            .iter()
            .zip(&pot.edge)
            .map(|(&m, &s)| term(m, s))
            .sum();
        nodes + edges
    }

    /// Most probable label at every position; ties go to the lowest index.
    pub fn posterior_decode(&self) -> Vec<usize> {
        (0..self.len)
            .map(|t| {
                let row = &self.node[t * self.k..(t + 1) * self.k];
                let mut best = 0;
                for y in 1..self.k {
                    if row[y] > row[best] {
                        best = y;
                    }
                }
                best
            })
            .collect()
    }
}

pub fn build_potentials(params: &CrfParams, x: &ChainExample) -> Result<ChainPotentials> {
    let k = params.labels.len();
    let nf = params.num_features;
    let bias = nf - 1;
    let mut node = Vec::with_capacity(x.len() * k);
    for fv in &x.positions {
        fv.check_range(params.num_inputs())?;
        for y in 0..k {
            let row = &params.emission[y * nf..(y + 1) * nf];
            node.push(row[bias] + fv.iter().map(|(f, v)| row[f as usize] * v).sum::<f64>());
        }
    }
    let mut edge = Vec::with_capacity((x.len() - 1) * k * k);
    for _ in 1..x.len() {
        edge.extend_from_slice(&params.transition);
    }
    Ok(ChainPotentials {
        len: x.len(),
        k,
        node,
        edge,
    })
}

/// Exact marginals and log partition by the forward-backward recursions.
pub fn forward_backward(pot: &ChainPotentials) -> Result<ChainMarginals> {
    let (len, k) = (pot.len, pot.k);
    let mut alpha = vec![0.0; len * k];
    let mut beta = vec![0.0; len * k];
    let mut buf = vec![0.0; k];

    alpha[..k].copy_from_slice(&pot.node[..k]);
    for t in 1..len {
        for y2 in 0..k {
            for y in 0..k {
                buf[y] = alpha[(t - 1) * k + y] + pot.edge(t - 1, y, y2);
            }
            alpha[t * k + y2] = pot.node(t, y2) + log_sum_exp(&buf);
        }
    }
    for t in (0..len - 1).rev() {
        for y in 0..k {
            for y2 in 0..k {
                buf[y2] = pot.edge(t, y, y2) + pot.node(t + 1, y2) + beta[(t + 1) * k + y2];
            }
            beta[t * k + y] = log_sum_exp(&buf);
        }
    }
    let log_z = log_sum_exp(&alpha[(len - 1) * k..]);
    if !log_z.is_finite() {
        return Err(Error::ImpossibleChain);
    }

    let node: Vec<f64> = alpha
        .iter()
        .zip(&beta)
        .map(|(a, b)| (a + b - log_z).exp())
        .collect();
    let mut edge = vec![0.0; (len - 1) * k * k];
    for t in 0..len - 1 {
        for y in 0..k {
            for y2 in 0..k {
                edge[(t * k + y) * k + y2] = (alpha[t * k + y]
                    + pot.edge(t, y, y2)
                    + pot.node(t + 1, y2)
                    + beta[(t + 1) * k + y2]
                    - log_z)
                    .exp();
            }
        }
    }
    Ok(ChainMarginals {
        len,
        k,
        node,
        edge,
        log_partition: log_z,
    })
}

/// Highest-scoring label sequence.
///
/// Ties are broken toward lower label indices: the last label is the lowest
/// maximizer, and each back-pointer picks the lowest maximizing predecessor.
pub fn viterbi(pot: &ChainPotentials) -> Result<Vec<usize>> {
    let (len, k) = (pot.len, pot.k);
    let mut delta = pot.node[..k].to_vec();
    let mut back = vec![0usize; len * k];
    for t in 1..len {
        let mut next = vec![f64::NEG_INFINITY; k];
        for y2 in 0..k {
            let mut best = 0;
            let mut best_score = f64::NEG_INFINITY;
            for (y, d) in delta.iter().enumerate() {
                let s = d + pot.edge(t - 1, y, y2);
                if s > best_score {
                    best_score = s;
                    best = y;
                }
            }
            next[y2] = best_score + pot.node(t, y2);
            back[t * k + y2] = best;
        }
        delta = next;
    }
    let mut last = 0;
    for y in 1..k {
        if delta[y] > delta[last] {
            last = y;
        }
    }
    if delta[last] == f64::NEG_INFINITY {
        return Err(Error::ImpossibleChain);
    }
    let mut path = vec![0; len];
    path[len - 1] = last;
    for t in (1..len).rev() {
        path[t - 1] = back[t * k + path[t]];
    }
    Ok(path)
}

/// Label sequence encoded by `index` in the enumeration order of
/// [`brute_force_dist`] (first position most significant).
pub fn sequence_from_index(mut index: usize, len: usize, k: usize) -> Vec<usize> {
    let mut seq = vec![0; len];
    for t in (0..len).rev() {
        seq[t] = index % k;
        index /= k;
    }
    seq
}

/// Exact distribution over all `K^T` label sequences by enumeration.
///
/// Sequence `i` is [`sequence_from_index`]`(i, T, K)`.
pub fn brute_force_dist(pot: &ChainPotentials) -> Result<Categorical> {
    let size = (pot.k as u128)
        .checked_pow(pot.len as u32)
        .unwrap_or(u128::MAX);
    if size > ENUMERATION_BUDGET as u128 {
        return Err(Error::BudgetExceeded {
            size,
            budget: ENUMERATION_BUDGET,
        });
    }
    let size = size as usize;
    let mut names = Vec::with_capacity(size);
    let mut scores = Vec::with_capacity(size);
    for i in 0..size {
        let seq = sequence_from_index(i, pot.len, pot.k);
        names.push(
            seq.iter()
                .map(|y| y.to_string())
                .collect::<Vec<_>>()
                .join("-"),
        );
        scores.push(pot.path_score(&seq));
    }
    let labels = LabelSet::new(names)?;
    Categorical::from_log_weights(labels, &scores).map_err(|e| match e {
        Error::DegenerateWeights => Error::ImpossibleChain,
        other => other,
    })
}

/// What a sequence should be fit to.
#[derive(Clone, Debug)]
pub enum CrfTarget<'a> {
    Gold(&'a [usize]),
    Marginals(ChainMarginals),
}

#[derive(Clone, Debug)]
pub struct CrfExample<'a> {
    pub input: &'a ChainExample,
    pub target: CrfTarget<'a>,
    pub weight: f64,
}

impl<'a> CrfExample<'a> {
    /// Fits to the example's own gold labels.
    pub fn gold(input: &'a ChainExample, weight: f64) -> Result<Self> {
        let gold = input
            .gold()
            .ok_or_else(|| Error::Config("chain example has no gold labels".into()))?;
        Ok(Self {
            input,
            target: CrfTarget::Gold(gold),
            weight,
        })
    }
}

fn check_crf_data(params: &CrfParams, data: &[CrfExample<'_>]) -> Result<()> {
    let k = params.labels.len();
    if data.is_empty() {
        return Err(Error::Empty("crf training data"));
    }
    for ex in data {
        if !(ex.weight >= 0.0 && ex.weight.is_finite()) {
            return Err(Error::Config(format!(
                "invalid example weight {}",
                ex.weight
            )));
        }
        for fv in ex.input.positions() {
            fv.check_range(params.num_inputs())?;
        }
        match &ex.target {
            CrfTarget::Gold(g) => {
                if g.len() != ex.input.len() || g.iter().any(|&y| y >= k) {
                    return Err(Error::DimensionMismatch("gold labels vs. chain".into()));
                }
            }
            CrfTarget::Marginals(m) => {
                if m.len != ex.input.len() || m.k != k {
                    return Err(Error::DimensionMismatch(format!(
                        "target marginals T={} K={} for chain T={} K={}",
                        m.len,
                        m.k,
                        ex.input.len(),
                        k
                    )));
                }
            }
        }
    }
    Ok(())
}

fn eval_crf(params: &CrfParams, data: &[CrfExample<'_>]) -> Result<(f64, Vec<f64>)> {
    let k = params.labels.len();
    let nf = params.num_features;
    let bias = nf - 1;
    let n_emit = params.emission.len();
    let total = n_emit + k * k;

    let failed = std::sync::atomic::AtomicBool::new(false);
    let (loss, mut grad) = ordered_sum(data.len(), total, |range, grad| {
        let mut loss = 0.0;
        for ex in &data[range] {
            if ex.weight == 0.0 {
                continue;
            }
            let pot = build_potentials(params, ex.input).expect("feature ranges checked");
            let Ok(model) = forward_backward(&pot) else {
                failed.store(true, std::sync::atomic::Ordering::Relaxed);
                return f64::NAN;
            };
            let w = ex.weight;
            let len = ex.input.len();
            let expected = match &ex.target {
                CrfTarget::Gold(g) => pot.path_score(g),
                CrfTarget::Marginals(m) => m.expected_score(&pot),
            };
            loss += w * (model.log_partition - expected);

            for t in 0..len {
                let fv = &ex.input.positions[t];
                for y in 0..k {
                    let target = match &ex.target {
                        CrfTarget::Gold(g) => f64::from(g[t] == y),
                        CrfTarget::Marginals(m) => m.node(t, y),
                    };
                    let coef = w * (model.node(t, y) - target);
                    if coef == 0.0 {
                        continue;
                    }
                    let row = &mut grad[y * nf..(y + 1) * nf];
                    row[bias] += coef;
                    for (f, v) in fv.iter() {
                        row[f as usize] += coef * v;
                    }
                }
            }
            let trans = &mut grad[n_emit..];
            for t in 0..len.saturating_sub(1) {
                for y in 0..k {
                    for y2 in 0..k {
                        let target = match &ex.target {
                            CrfTarget::Gold(g) => f64::from(g[t] == y && g[t + 1] == y2),
                            CrfTarget::Marginals(m) => m.edge(t, y, y2),
                        };
                        trans[y * k + y2] += w * (model.edge(t, y, y2) - target);
                    }
                }
            }
        }
        loss
    });
    if failed.into_inner() {
        return Err(Error::ImpossibleChain);
    }
    let prior = 1.0 / params.prior_variance;
    let mut norm2 = 0.0;
    for (g, w) in grad
        .iter_mut()
        .zip(params.emission.iter().chain(&params.transition))
    {
        *g += 2.0 * prior * w;
        norm2 += w * w;
    }
    Ok((loss + prior * norm2, grad))
}

/// Weighted negative expected log-likelihood plus the Gaussian prior, and its
/// gradient (emission block first, then the transition matrix).
pub fn crf_objective_gradient(
    params: &CrfParams,
    data: &[CrfExample<'_>],
) -> Result<(f64, Vec<f64>)> {
    check_crf_data(params, data)?;
    eval_crf(params, data)
}

pub fn train_crf(
    data: &[CrfExample<'_>],
    init: &CrfParams,
    config: &OptConfig,
) -> Result<(CrfParams, OptReport)> {
    check_crf_data(init, data)?;
    let mut x = init.flatten();
    let report = optimize::minimize(|w| eval_crf(&init.with_flat(w), data), &mut x, config)?;
    Ok((init.with_flat(&x), report))
}
