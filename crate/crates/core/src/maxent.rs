//! Multiclass maximum-entropy classifier with a Gaussian prior.
//!
//! Training targets are full distributions over labels, so hard labels and
//! soft (expected) labels go through the same objective. The prior term is
//! `(1/σ²)‖θ‖²`; an infinite variance switches it off.
//!
//! Every model carries a bias feature: the last column of the weight matrix
//! always fires with value 1.0, and input vectors may only use the ids before it.

use crate::error::{Error, Result};
use crate::optimize::{self, OptConfig, OptReport};
use crate::parallel::ordered_sum;
use crate::prob::{log_sum_exp, Categorical, LabelSet};

/// Sparse feature vector, sorted by id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureVector {
    entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    pub fn new(mut entries: Vec<(u32, f64)>) -> Result<Self> {
        entries.sort_by_key(|e| e.0);
        if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidFeatures(format!(
                "duplicate feature id {}",
                w[0].0
            )));
        }
        if let Some(e) = entries.iter().find(|e| !e.1.is_finite()) {
            return Err(Error::InvalidFeatures(format!(
                "non-finite value for feature {}",
                e.0
            )));
        }
        Ok(Self { entries })
    }

    /// Binary features with value 1.0.
    pub fn indicators<I: IntoIterator<Item = u32>>(ids: I) -> Result<Self> {
        Self::new(ids.into_iter().map(|id| (id, 1.0)).collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_id(&self) -> Option<u32> {
        self.entries.last().map(|e| e.0)
    }

    pub(crate) fn check_range(&self, num_inputs: usize) -> Result<()> {
        match self.max_id() {
            Some(id) if id as usize >= num_inputs => Err(Error::UnknownFeature { id, num_inputs }),
            _ => Ok(()),
        }
    }
}

/// Weights of a maximum-entropy model: a `K x F` row-major matrix whose last
/// column is the bias.
#[derive(Clone, Debug, PartialEq)]
pub struct MaxentParams {
    labels: LabelSet,
    num_features: usize,
    weights: Vec<f64>,
    prior_variance: f64,
}

impl MaxentParams {
    /// All-zero model over `num_inputs` input features plus the bias.
    pub fn zeros(labels: LabelSet, num_inputs: usize, prior_variance: f64) -> Self {
        let num_features = num_inputs + 1;
        Self {
            weights: vec![0.0; labels.len() * num_features],
            labels,
            num_features,
            prior_variance,
        }
    }

    pub fn from_weights(
        labels: LabelSet,
        num_features: usize,
        weights: Vec<f64>,
        prior_variance: f64,
    ) -> Result<Self> {
        if num_features == 0 || weights.len() != labels.len() * num_features {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} labels x {} features",
                weights.len(),
                labels.len(),
                num_features
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
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
            weights,
            prior_variance,
        })
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    /// Columns of the weight matrix, bias included.
    pub fn num_features(&self) -> usize {
        self.num_features
    }

    /// Feature ids accepted in inputs: `0..num_inputs()`.
    pub fn num_inputs(&self) -> usize {
        self.num_features - 1
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, label: usize, feature: usize) -> f64 {
        self.weights[label * self.num_features + feature]
    }

    pub fn prior_variance(&self) -> f64 {
        self.prior_variance
    }

    pub fn with_prior_variance(mut self, prior_variance: f64) -> Self {
        self.prior_variance = prior_variance;
        self
    }

    fn prior_coefficient(&self) -> f64 {
        1.0 / self.prior_variance
    }

    /// Unnormalized log scores `θ_y · x` for every label.
    pub fn scores(&self, x: &FeatureVector) -> Result<Vec<f64>> {
        x.check_range(self.num_inputs())?;
        Ok(scores_unchecked(
            &self.weights,
            self.num_features,
            self.labels.len(),
            x,
        ))
    }

    pub fn predict_dist(&self, x: &FeatureVector) -> Result<Categorical> {
        Categorical::from_log_weights(self.labels.clone(), &self.scores(x)?)
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<usize> {
        Ok(self.predict_dist(x)?.argmax())
    }
}

fn scores_unchecked(weights: &[f64], num_features: usize, k: usize, x: &FeatureVector) -> Vec<f64> {
    let bias = num_features - 1;
    (0..k)
        .map(|y| {
            let row = &weights[y * num_features..(y + 1) * num_features];
            row[bias] + x.iter().map(|(f, v)| row[f as usize] * v).sum::<f64>()
        })
        .collect()
}

/// One training pair: features and the distribution the model should match.
#[derive(Clone, Debug)]
pub struct SoftExample<'a> {
    pub features: &'a FeatureVector,
    pub target: Categorical,
    pub weight: f64,
}

impl<'a> SoftExample<'a> {
    pub fn hard(features: &'a FeatureVector, labels: LabelSet, label: usize, weight: f64) -> Self {
        Self {
            features,
            target: Categorical::one_hot(labels, label),
            weight,
        }
    }
}

fn check_data(params: &MaxentParams, data: &[SoftExample<'_>]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Empty("maxent training data"));
    }
    for ex in data {
        if ex.target.labels() != params.labels() {
            return Err(Error::LabelSetMismatch);
        }
        if !(ex.weight >= 0.0 && ex.weight.is_finite()) {
            return Err(Error::Config(format!(
                "invalid example weight {}",
                ex.weight
            )));
        }
        ex.features.check_range(params.num_inputs())?;
    }
    Ok(())
}

fn eval(
    weights: &[f64],
    params: &MaxentParams,
    data: &[SoftExample<'_>],
    with_gradient: bool,
) -> (f64, Vec<f64>) {
    let k = params.labels.len();
    let nf = params.num_features;
    let bias = nf - 1;
    let (loss, mut grad) = ordered_sum(
        data.len(),
        if with_gradient { weights.len() } else { 0 },
        |range, grad| {
            let mut loss = 0.0;
            for ex in &data[range] {
                if ex.weight == 0.0 {
                    continue;
                }
                let scores = scores_unchecked(weights, nf, k, ex.features);
                let log_z = log_sum_exp(&scores);
                let target = ex.target.log_probs();
                for y in 0..k {
                    if target[y] != f64::NEG_INFINITY {
                        loss += ex.weight * target[y].exp() * (log_z - scores[y]);
                    }
                }
                if with_gradient {
                    for y in 0..k {
                        let coef = ex.weight * ((scores[y] - log_z).exp() - target[y].exp());
                        if coef == 0.0 {
                            continue;
                        }
                        let row = &mut grad[y * nf..(y + 1) * nf];
                        row[bias] += coef;
                        for (f, v) in ex.features.iter() {
                            row[f as usize] += coef * v;
                        }
                    }
                }
            }
            loss
        },
    );
    let prior = params.prior_coefficient();
    let norm2: f64 = weights.iter().map(|w| w * w).sum();
    if with_gradient {
        for (g, w) in grad.iter_mut().zip(weights) {
            *g += 2.0 * prior * w;
        }
    }
    (loss + prior * norm2, grad)
}

/// Weighted expected negative log-likelihood plus the Gaussian prior.
pub fn objective(params: &MaxentParams, data: &[SoftExample<'_>]) -> Result<f64> {
    check_data(params, data)?;
    Ok(eval(&params.weights, params, data, false).0)
}

/// Gradient of [`objective`], laid out like the weight matrix.
pub fn gradient(params: &MaxentParams, data: &[SoftExample<'_>]) -> Result<Vec<f64>> {
    check_data(params, data)?;
    Ok(eval(&params.weights, params, data, true).1)
}

pub fn objective_gradient(
    params: &MaxentParams,
    data: &[SoftExample<'_>],
) -> Result<(f64, Vec<f64>)> {
    check_data(params, data)?;
    Ok(eval(&params.weights, params, data, true))
}

/// Fits the model from `init` (warm start).
pub fn train(
    data: &[SoftExample<'_>],
    init: &MaxentParams,
    config: &OptConfig,
) -> Result<(MaxentParams, OptReport)> {
    check_data(init, data)?;
    let mut x = init.weights.clone();
    let report = optimize::minimize(|w| Ok(eval(w, init, data, true)), &mut x, config)?;
    let mut params = init.clone();
    params.weights = x;
    Ok((params, report))
}
