//! The alternating agreement-EM loop.
//!
//! The objective is
//!
//! ```text
//! L1(θ1) + L2(θ2) + c · mean_{x ∈ U} min_{q agreeing} KL(q(y1, y2) || p1(y1|x) p2(y2|x))
//! ```
//!
//! where `L_i` is the mean log loss of view `i` over its own labeled set plus
//! its Gaussian prior. Training first fits each view on its labeled data, then
//! alternates an E-step, which projects every unlabeled instance onto the
//! agreement set, with an M-step, which refits each view on its labeled data
//! plus the unlabeled instances soft-labeled by its side of the projection.
//! Each half-step can only lower the objective, so the recorded trace is
//! non-increasing.
//!
//! Unlabeled soft examples carry weight `c / |U|` each and labeled examples
//! `1 / |L_i|`. In balance mode `c` is 1, which gives the unlabeled set the same
//! total weight as each labeled set.

use rayon::prelude::*;

use crate::agreement::{
    agree_chain, agree_chain_partial, agree_flat, agree_flat_partial, DualConfig, LabelMapping,
};
use crate::crf::{
    self, build_potentials, viterbi, ChainExample, ChainMarginals, ChainPotentials, CrfExample,
    CrfParams, CrfTarget,
};
use crate::error::{Error, Result};
use crate::maxent::{self, FeatureVector, MaxentParams, SoftExample};
use crate::optimize::{OptConfig, OptReport};
use crate::prob::{Categorical, LabelSet};

/// Agreement projection of one unlabeled instance, in the form the M-step
/// consumes.
#[derive(Clone, Debug)]
pub struct Projection<T> {
    pub target1: T,
    pub target2: T,
    pub kl_value: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// A view model family usable in the agreement loop.
pub trait ViewModel: Clone + Send + Sync + Sized {
    /// One view of an unlabeled instance.
    type Input: Sync;
    /// A labeled training example for this view.
    type Labeled: Sync;
    /// Predictive distribution for one input.
    type Prediction: Send;
    /// Soft target produced by the projection.
    type Target: Clone + Send + Sync;
    /// Decoded label(s).
    type Output: Clone + PartialEq + Send + std::fmt::Debug;

    fn labels(&self) -> &LabelSet;

    fn with_prior_variance(self, prior_variance: f64) -> Self;

    fn predict(&self, x: &Self::Input) -> Result<Self::Prediction>;

    fn decode(&self, x: &Self::Input) -> Result<Self::Output>;

    /// Regularized loss: each labeled example weighs `labeled_weight`, each
    /// soft example `soft_weight`.
    fn loss(
        &self,
        labeled: &[Self::Labeled],
        labeled_weight: f64,
        soft: &[(&Self::Input, Self::Target)],
        soft_weight: f64,
    ) -> Result<f64>;

    /// Minimizes [`ViewModel::loss`] starting from `self`.
    fn fit(
        &self,
        labeled: &[Self::Labeled],
        labeled_weight: f64,
        soft: &[(&Self::Input, Self::Target)],
        soft_weight: f64,
        opt: &OptConfig,
    ) -> Result<(Self, OptReport)>;

    /// Agreement projection of two predictions. `None` and the identity
    /// mapping both use the closed form.
    fn agree(
        p1: &Self::Prediction,
        p2: &Self::Prediction,
        mapping: Option<&LabelMapping>,
        dual: &DualConfig,
    ) -> Result<Projection<Self::Target>>;

    /// Decodes the first view's side of the projection (fine labels).
    fn agree_decode(
        p1: &Self::Prediction,
        p2: &Self::Prediction,
        mapping: Option<&LabelMapping>,
        dual: &DualConfig,
    ) -> Result<Self::Output>;
}

fn non_identity(mapping: Option<&LabelMapping>) -> Option<&LabelMapping> {
    mapping.filter(|m| !m.is_identity())
}

impl ViewModel for MaxentParams {
    type Input = FeatureVector;
    type Labeled = (FeatureVector, usize);
    type Prediction = Categorical;
    type Target = Categorical;
    type Output = usize;

    fn labels(&self) -> &LabelSet {
        MaxentParams::labels(self)
    }

    fn with_prior_variance(self, prior_variance: f64) -> Self {
        MaxentParams::with_prior_variance(self, prior_variance)
    }

    fn predict(&self, x: &FeatureVector) -> Result<Categorical> {
        self.predict_dist(x)
    }

    fn decode(&self, x: &FeatureVector) -> Result<usize> {
        MaxentParams::predict(self, x)
    }

    fn loss(
        &self,
        labeled: &[(FeatureVector, usize)],
        labeled_weight: f64,
        soft: &[(&FeatureVector, Categorical)],
        soft_weight: f64,
    ) -> Result<f64> {
        maxent::objective(
            self,
            &flat_examples(self, labeled, labeled_weight, soft, soft_weight),
        )
    }

    fn fit(
        &self,
        labeled: &[(FeatureVector, usize)],
        labeled_weight: f64,
        soft: &[(&FeatureVector, Categorical)],
        soft_weight: f64,
        opt: &OptConfig,
    ) -> Result<(Self, OptReport)> {
        maxent::train(
            &flat_examples(self, labeled, labeled_weight, soft, soft_weight),
            self,
            opt,
        )
    }

    fn agree(
        p1: &Categorical,
        p2: &Categorical,
        mapping: Option<&LabelMapping>,
        _dual: &DualConfig,
    ) -> Result<Projection<Categorical>> {
        let out = match non_identity(mapping) {
            Some(m) => agree_flat_partial(p1, p2, m)?,
            None => agree_flat(p1, p2)?,
        };
        Ok(Projection {
            target1: out.q1,
            target2: out.q2,
            kl_value: out.kl_value,
            converged: out.converged,
            iterations: out.iterations,
        })
    }

    fn agree_decode(
        p1: &Categorical,
        p2: &Categorical,
        mapping: Option<&LabelMapping>,
        dual: &DualConfig,
    ) -> Result<usize> {
        Ok(Self::agree(p1, p2, mapping, dual)?.target1.argmax())
    }
}

fn flat_examples<'a>(
    params: &MaxentParams,
    labeled: &'a [(FeatureVector, usize)],
    labeled_weight: f64,
    soft: &[(&'a FeatureVector, Categorical)],
    soft_weight: f64,
) -> Vec<SoftExample<'a>> {
    let mut data: Vec<SoftExample> = labeled
        .iter()
        .map(|(x, y)| SoftExample::hard(x, params.labels().clone(), *y, labeled_weight))
        .collect();
    if soft_weight > 0.0 {
        data.extend(soft.iter().map(|(x, t)| SoftExample {
            features: x,
            target: t.clone(),
            weight: soft_weight,
        }));
    }
    data
}

impl ViewModel for CrfParams {
    type Input = ChainExample;
    type Labeled = ChainExample;
    type Prediction = ChainPotentials;
    type Target = ChainMarginals;
    type Output = Vec<usize>;

    fn labels(&self) -> &LabelSet {
        CrfParams::labels(self)
    }

    fn with_prior_variance(self, prior_variance: f64) -> Self {
        CrfParams::with_prior_variance(self, prior_variance)
    }

    fn predict(&self, x: &ChainExample) -> Result<ChainPotentials> {
        build_potentials(self, x)
    }

    fn decode(&self, x: &ChainExample) -> Result<Vec<usize>> {
        CrfParams::predict(self, x)
    }

    fn loss(
        &self,
        labeled: &[ChainExample],
        labeled_weight: f64,
        soft: &[(&ChainExample, ChainMarginals)],
        soft_weight: f64,
    ) -> Result<f64> {
        Ok(crf::crf_objective_gradient(
            self,
            &chain_examples(labeled, labeled_weight, soft, soft_weight)?,
        )?
        .0)
    }

    fn fit(
        &self,
        labeled: &[ChainExample],
        labeled_weight: f64,
        soft: &[(&ChainExample, ChainMarginals)],
        soft_weight: f64,
        opt: &OptConfig,
    ) -> Result<(Self, OptReport)> {
        crf::train_crf(
            &chain_examples(labeled, labeled_weight, soft, soft_weight)?,
            self,
            opt,
        )
    }

    fn agree(
        p1: &ChainPotentials,
        p2: &ChainPotentials,
        mapping: Option<&LabelMapping>,
        dual: &DualConfig,
    ) -> Result<Projection<ChainMarginals>> {
        let out = match non_identity(mapping) {
            Some(m) => agree_chain_partial(p1, p2, m, dual)?,
            None => agree_chain(p1, p2)?,
        };
        Ok(Projection {
            target1: out.q1_marginals,
            target2: out.q2_marginals,
            kl_value: out.kl_value,
            converged: out.converged,
            iterations: out.iterations,
        })
    }

    fn agree_decode(
        p1: &ChainPotentials,
        p2: &ChainPotentials,
        mapping: Option<&LabelMapping>,
        dual: &DualConfig,
    ) -> Result<Vec<usize>> {
        let q1 = match non_identity(mapping) {
            Some(m) => agree_chain_partial(p1, p2, m, dual)?.q1_potentials,
            None => agree_chain(p1, p2)?.q1_potentials,
        };
        viterbi(&q1)
    }
}

fn chain_examples<'a>(
    labeled: &'a [ChainExample],
    labeled_weight: f64,
    soft: &[(&'a ChainExample, ChainMarginals)],
    soft_weight: f64,
) -> Result<Vec<CrfExample<'a>>> {
    let mut data = labeled
        .iter()
        .map(|x| CrfExample::gold(x, labeled_weight))
        .collect::<Result<Vec<_>>>()?;
    if soft_weight > 0.0 {
        data.extend(soft.iter().map(|(x, t)| CrfExample {
            input: x,
            target: CrfTarget::Marginals(t.clone()),
            weight: soft_weight,
        }));
    }
    Ok(data)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SarConfig {
    /// Weight of the agreement term.
    pub c: f64,
    /// Overrides `c` with 1 so unlabeled data weighs as much as labeled data.
    pub balance: bool,
    /// Number of EM rounds.
    pub iterations: usize,
    pub prior_variance: [f64; 2],
    pub optimizer: [OptConfig; 2],
    pub dual: DualConfig,
    /// Stop early once a round improves the objective by less than this.
    pub early_stop: Option<f64>,
    /// A round that raises the objective by more than this is an error.
    pub monotonicity_tolerance: f64,
    /// Recorded with checkpoints; the loop itself draws no random numbers.
    pub seed: u64,
}

impl Default for SarConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            balance: false,
            iterations: 10,
            prior_variance: [10.0, 10.0],
            optimizer: [OptConfig::default(), OptConfig::default()],
            dual: DualConfig::default(),
            early_stop: None,
            monotonicity_tolerance: 1e-4,
            seed: 0,
        }
    }
}

impl SarConfig {
    /// The agreement weight actually applied.
    pub fn effective_c(&self) -> f64 {
        if self.balance {
            1.0
        } else {
            self.c
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!(
                "c must be a nonnegative number, got {}",
                self.c
            )));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.prior_variance.iter().any(|v| v.is_nan() || *v <= 0.0) {
            return Err(Error::Config("prior variances must be positive".into()));
        }
        Ok(())
    }
}

/// Objective components at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveParts {
    pub l1: f64,
    pub l2: f64,
    /// Mean projection KL over the unlabeled set.
    pub kl_term: f64,
    pub total: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub parts: ObjectiveParts,
}

/// Convergence summary of one E-step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EStepStats {
    pub iteration: usize,
    pub instances: usize,
    pub unconverged: usize,
    pub max_iterations: usize,
    pub mean_iterations: f64,
}

#[derive(Clone, Debug)]
pub struct SarState<M> {
    pub params1: M,
    pub params2: M,
    pub trace: Vec<TraceRow>,
    pub estep: Vec<EStepStats>,
}

/// Everything the loop needs besides the models.
#[derive(Clone, Copy, Debug)]
pub struct SarData<'a, M: ViewModel> {
    pub labeled1: &'a [M::Labeled],
    pub labeled2: &'a [M::Labeled],
    /// Both views of each unlabeled instance.
    pub unlabeled: &'a [(M::Input, M::Input)],
    /// Collapses view 1 labels onto view 2 labels; `None` when they coincide.
    pub mapping: Option<&'a LabelMapping>,
}

impl<M: ViewModel> SarData<'_, M> {
    fn check<'m>(&self, p1: &'m M, p2: &'m M) -> Result<()> {
        if self.labeled1.is_empty() || self.labeled2.is_empty() {
            return Err(Error::Empty("labeled data for each view"));
        }
        match self.mapping {
            Some(m) if m.fine() != p1.labels() || m.coarse() != p2.labels() => {
                Err(Error::LabelSetMismatch)
            }
            None if p1.labels() != p2.labels() => Err(Error::LabelSetMismatch),
            _ => Ok(()),
        }
    }
}

struct EStep<T> {
    parts: ObjectiveParts,
    targets: Vec<(T, T)>,
    stats: EStepStats,
}

fn e_step<M: ViewModel>(
    p1: &M,
    p2: &M,
    data: &SarData<'_, M>,
    c: f64,
    dual: &DualConfig,
    iteration: usize,
) -> Result<EStep<M::Target>> {
    let projections: Vec<Projection<M::Target>> = data
        .unlabeled
        .par_iter()
        .enumerate()
        .map(|(i, (x1, x2))| {
            let run = || M::agree(&p1.predict(x1)?, &p2.predict(x2)?, data.mapping, dual);
            run().map_err(|e| Error::Agreement {
                instance: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    let n = projections.len();
    let kl_term = if n == 0 {
        0.0
    } else {
        projections.iter().map(|p| p.kl_value).sum::<f64>() / n as f64
    };
    let l1 = p1.loss(data.labeled1, 1.0 / data.labeled1.len() as f64, &[], 0.0)?;
    let l2 = p2.loss(data.labeled2, 1.0 / data.labeled2.len() as f64, &[], 0.0)?;
    let stats = EStepStats {
        iteration,
        instances: n,
        unconverged: projections.iter().filter(|p| !p.converged).count(),
        max_iterations: projections.iter().map(|p| p.iterations).max().unwrap_or(0),
        mean_iterations: if n == 0 {
            0.0
        } else {
            projections.iter().map(|p| p.iterations as f64).sum::<f64>() / n as f64
        },
    };
    Ok(EStep {
        parts: ObjectiveParts {
            l1,
            l2,
            kl_term,
            total: l1 + l2 + c * kl_term,
        },
        targets: projections
            .into_iter()
            .map(|p| (p.target1, p.target2))
            .collect(),
        stats,
    })
}

/// Evaluates the objective at the state's parameters.
pub fn objective_value<M: ViewModel>(
    state: &SarState<M>,
    data: &SarData<'_, M>,
    config: &SarConfig,
) -> Result<ObjectiveParts> {
    data.check(&state.params1, &state.params2)?;
    Ok(e_step(
        &state.params1,
        &state.params2,
        data,
        config.effective_c(),
        &config.dual,
        0,
    )?
    .parts)
}

/// Fits each view on its labeled data alone.
pub fn train_supervised<M: ViewModel>(
    init: &M,
    labeled: &[M::Labeled],
    prior_variance: f64,
    opt: &OptConfig,
) -> Result<(M, OptReport)> {
    if labeled.is_empty() {
        return Err(Error::Empty("labeled data"));
    }
    init.clone().with_prior_variance(prior_variance).fit(
        labeled,
        1.0 / labeled.len() as f64,
        &[],
        0.0,
        opt,
    )
}

/// Supervised fits followed by `config.iterations` EM rounds.
pub fn train_sar<M: ViewModel>(
    init1: &M,
    init2: &M,
    data: &SarData<'_, M>,
    config: &SarConfig,
) -> Result<SarState<M>> {
    config.validate()?;
    data.check(init1, init2)?;
    let (fit1, fit2) = rayon::join(
        || {
            train_supervised(
                init1,
                data.labeled1,
                config.prior_variance[0],
                &config.optimizer[0],
            )
        },
        || {
            train_supervised(
                init2,
                data.labeled2,
                config.prior_variance[1],
                &config.optimizer[1],
            )
        },
    );
    let state = SarState {
        params1: fit1?.0,
        params2: fit2?.0,
        trace: Vec::new(),
        estep: Vec::new(),
    };
    continue_sar(state, data, config, config.iterations)
}

/// Runs `rounds` more EM rounds from `state`.
pub fn continue_sar<M: ViewModel>(
    mut state: SarState<M>,
    data: &SarData<'_, M>,
    config: &SarConfig,
    rounds: usize,
) -> Result<SarState<M>> {
    config.validate()?;
    data.check(&state.params1, &state.params2)?;
    let c = config.effective_c();
    let soft_weight = if data.unlabeled.is_empty() {
        0.0
    } else {
        c / data.unlabeled.len() as f64
    };
    let (w1, w2) = (
        1.0 / data.labeled1.len() as f64,
        1.0 / data.labeled2.len() as f64,
    );

    let next_iteration = |state: &SarState<M>| state.trace.last().map_or(0, |r| r.iteration + 1);
    let mut current = e_step(
        &state.params1,
        &state.params2,
        data,
        c,
        &config.dual,
        next_iteration(&state),
    )?;
    if state.trace.is_empty() {
        state.trace.push(TraceRow {
            iteration: 0,
            parts: current.parts,
        });
        state.estep.push(current.stats);
    }

    for _ in 0..rounds {
        if soft_weight == 0.0 {
            // Nothing couples the views; the supervised fits are the optimum.
            break;
        }
        let soft1: Vec<(&M::Input, M::Target)> = data
            .unlabeled
            .iter()
            .zip(&current.targets)
            .map(|((x1, _), (t1, _))| (x1, t1.clone()))
            .collect();
        let soft2: Vec<(&M::Input, M::Target)> = data
            .unlabeled
            .iter()
            .zip(&current.targets)
            .map(|((_, x2), (_, t2))| (x2, t2.clone()))
            .collect();
        let (fit1, fit2) = rayon::join(
            || {
                state
                    .params1
                    .fit(data.labeled1, w1, &soft1, soft_weight, &config.optimizer[0])
            },
            || {
                state
                    .params2
                    .fit(data.labeled2, w2, &soft2, soft_weight, &config.optimizer[1])
            },
        );
        state.params1 = fit1?.0;
        state.params2 = fit2?.0;

        let iteration = next_iteration(&state);
        current = e_step(
            &state.params1,
            &state.params2,
            data,
            c,
            &config.dual,
            iteration,
        )?;
        let previous = state
            .trace
            .last()
            .expect("trace has a first row")
            .parts
            .total;
        let total = current.parts.total;
        if total > previous + config.monotonicity_tolerance {
            return Err(Error::MonotonicityViolated {
                iteration,
                increase: total - previous,
            });
        }
        state.trace.push(TraceRow {
            iteration,
            parts: current.parts,
        });
        state.estep.push(current.stats);
        if config.early_stop.is_some_and(|tol| previous - total < tol) {
            break;
        }
    }
    Ok(state)
}

/// Prediction of the two supervised views combined by the agreement
/// projection, without joint training. Returns view 1 (fine) labels.
pub fn agree0_predict<M: ViewModel>(
    params1: &M,
    params2: &M,
    x1: &M::Input,
    x2: &M::Input,
    mapping: Option<&LabelMapping>,
    dual: &DualConfig,
) -> Result<M::Output> {
    M::agree_decode(&params1.predict(x1)?, &params2.predict(x2)?, mapping, dual)
}
