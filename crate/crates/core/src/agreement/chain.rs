use super::LabelMapping;
use crate::crf::{forward_backward, ChainMarginals, ChainPotentials};
use crate::error::{Error, Result};
use crate::optimize::{self, GradNorm, OptConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct ChainAgreementOutcome {
    pub q1_potentials: ChainPotentials,
    pub q2_potentials: ChainPotentials,
    pub q1_marginals: ChainMarginals,
    pub q2_marginals: ChainMarginals,
    /// `KL(q1 || p1) + KL(q2 || p2)` over whole sequences.
    pub kl_value: f64,
    /// Half of `kl_value`; equals the sequence-level Bhattacharyya distance
    /// when the label sets coincide.
    pub bhattacharyya_value: f64,
    pub dual_vars: Option<DualVars>,
    pub converged: bool,
    pub iterations: usize,
}

/// Settings for the chain partial-agreement dual solver.
#[derive(Clone, Debug, PartialEq)]
pub struct DualConfig {
    pub max_iterations: usize,
    /// Largest tolerated constraint residual (L∞).
    pub tolerance: f64,
    /// Curvature pairs kept by the quasi-Newton ascent.
    pub history: usize,
}

impl Default for DualConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerance: 1e-6,
            history: 10,
        }
    }
}

/// Multipliers for the per-clique agreement constraints: one per
/// (position, coarse label) and one per (edge, coarse label pair).
#[derive(Clone, Debug, PartialEq)]
pub struct DualVars {
    len: usize,
    k: usize,
    values: Vec<f64>,
}

impl DualVars {
    pub fn zeros(len: usize, coarse_labels: usize) -> Self {
        let k = coarse_labels;
        Self {
            len,
            k,
            values: vec![0.0; Self::size(len, k)],
        }
    }

    pub fn from_values(len: usize, coarse_labels: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != Self::size(len, coarse_labels) {
            return Err(Error::DimensionMismatch(format!(
                "{} multipliers for T={len}, K={coarse_labels}",
                values.len()
            )));
        }
        Ok(Self {
            len,
            k: coarse_labels,
            values,
        })
    }

    fn size(len: usize, k: usize) -> usize {
        len * k + len.saturating_sub(1) * k * k
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn node(&self, t: usize, z: usize) -> f64 {
        self.values[t * self.k + z]
    }

    pub fn edge(&self, t: usize, z: usize, z2: usize) -> f64 {
        self.values[self.len * self.k + (t * self.k + z) * self.k + z2]
    }
}

fn add_finite(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        a
    } else {
        a + b
    }
}

/// `q1` tilts `p1` by `+λ` on the collapsed cliques; `q2` tilts `p2` by `-λ`.
fn tilt(
    pot1: &ChainPotentials,
    pot2: &ChainPotentials,
    m: &LabelMapping,
    lambda: &DualVars,
) -> Result<(ChainPotentials, ChainPotentials)> {
    let (len, k1, k2) = (pot1.len(), pot1.num_labels(), pot2.num_labels());
    let mut n1 = Vec::with_capacity(len * k1);
    let mut n2 = Vec::with_capacity(len * k2);
    let mut e1 = Vec::with_capacity(pot1.edges().len());
    let mut e2 = Vec::with_capacity(pot2.edges().len());
    for t in 0..len {
        for y in 0..k1 {
            n1.push(add_finite(pot1.node(t, y), lambda.node(t, m.map(y))));
        }
        for z in 0..k2 {
            n2.push(add_finite(pot2.node(t, z), -lambda.node(t, z)));
        }
    }
    for t in 0..len.saturating_sub(1) {
        for y in 0..k1 {
            for y2 in 0..k1 {
                e1.push(add_finite(
                    pot1.edge(t, y, y2),
                    lambda.edge(t, m.map(y), m.map(y2)),
                ));
            }
        }
        for z in 0..k2 {
            for z2 in 0..k2 {
                e2.push(add_finite(pot2.edge(t, z, z2), -lambda.edge(t, z, z2)));
            }
        }
    }
    Ok((
        ChainPotentials::new(len, k1, n1, e1)?,
        ChainPotentials::new(len, k2, n2, e2)?,
    ))
}

/// Collapsed clique marginals of `q1` minus clique marginals of `q2`, laid
/// out like [`DualVars`].
fn residual(q1: &ChainMarginals, q2: &ChainMarginals, m: &LabelMapping) -> Vec<f64> {
    let (len, k1, k2) = (q1.len(), q1.num_labels(), q2.num_labels());
    let mut r = vec![0.0; DualVars::size(len, k2)];
    for t in 0..len {
        for y in 0..k1 {
            r[t * k2 + m.map(y)] += q1.node(t, y);
        }
        for z in 0..k2 {
            r[t * k2 + z] -= q2.node(t, z);
        }
    }
    let base = len * k2;
    for t in 0..len.saturating_sub(1) {
        for y in 0..k1 {
            for y2 in 0..k1 {
                r[base + (t * k2 + m.map(y)) * k2 + m.map(y2)] += q1.edge(t, y, y2);
            }
        }
        for z in 0..k2 {
            for z2 in 0..k2 {
                r[base + (t * k2 + z) * k2 + z2] -= q2.edge(t, z, z2);
            }
        }
    }
    r
}

/// `KL(q || p)` for two chains over the same labels, from `q`'s marginals.
fn chain_kl(
    q: &ChainMarginals,
    q_pot: &ChainPotentials,
    p_pot: &ChainPotentials,
    p_log_z: f64,
) -> f64 {
    fn term(m: f64, sq: f64, sp: f64) -> f64 {
        if m == 0.0 || sq == f64::NEG_INFINITY {
            0.0
        } else if sp == f64::NEG_INFINITY {
            f64::INFINITY
        } else {
            m * (sq - sp)
        }
    }
    let nodes = q
        .nodes()
        .iter()
        .zip(q_pot.nodes().iter().zip(p_pot.nodes()))
        .map(|(&m, (&a, &b))| term(m, a, b));
    let edges = q
        .edges()
        .iter()
        .zip(q_pot.edges().iter().zip(p_pot.edges()))
        .map(|(&m, (&a, &b))| term(m, a, b));
    let expected: f64 = nodes.chain(edges).sum();
    (expected - q.log_partition() + p_log_z).max(0.0)
}

/// Closed-form projection for two chains over the same labels: the clique
/// potentials of `q` are the geometric means of the inputs'.
pub fn agree_chain(
    pot1: &ChainPotentials,
    pot2: &ChainPotentials,
) -> Result<ChainAgreementOutcome> {
    if !pot1.same_shape(pot2) {
        return Err(Error::DimensionMismatch(format!(
            "chains T={} K={} vs T={} K={}",
            pot1.len(),
            pot1.num_labels(),
            pot2.len(),
            pot2.num_labels()
        )));
    }
    let m1 = forward_backward(pot1)?;
    let m2 = forward_backward(pot2)?;
    let q_pot = pot1.combine(0.5, pot2, 0.5);
    let q = forward_backward(&q_pot).map_err(|e| match e {
        Error::ImpossibleChain => Error::DisjointSupports,
        other => other,
    })?;
    let kl_value = chain_kl(&q, &q_pot, pot1, m1.log_partition())
        + chain_kl(&q, &q_pot, pot2, m2.log_partition());
    let bhattacharyya_value =
        (0.5 * m1.log_partition() + 0.5 * m2.log_partition() - q.log_partition()).max(0.0);
    Ok(ChainAgreementOutcome {
        q1_potentials: q_pot.clone(),
        q2_potentials: q_pot,
        q1_marginals: q.clone(),
        q2_marginals: q,
        kl_value,
        bhattacharyya_value,
        dual_vars: None,
        converged: true,
        iterations: 0,
    })
}

fn check_partial(pot1: &ChainPotentials, pot2: &ChainPotentials, m: &LabelMapping) -> Result<()> {
    if pot1.len() != pot2.len() {
        return Err(Error::DimensionMismatch(format!(
            "chain lengths {} vs {}",
            pot1.len(),
            pot2.len()
        )));
    }
    if pot1.num_labels() != m.fine().len() || pot2.num_labels() != m.coarse().len() {
        return Err(Error::LabelSetMismatch);
    }
    Ok(())
}

/// Dual objective `-log Σ p1(y1) p2(y2) exp(λ·ψ(y1, y2))`, computed from the
/// tilted log partitions. It is zero at `λ = 0`, concave, and its maximum
/// equals the minimal `KL(q1 × q2 || p1 × p2)`.
pub fn dual_objective(
    lambda: &DualVars,
    pot1: &ChainPotentials,
    pot2: &ChainPotentials,
    m: &LabelMapping,
) -> Result<f64> {
    check_partial(pot1, pot2, m)?;
    if lambda.len != pot1.len() || lambda.k != pot2.num_labels() {
        return Err(Error::DimensionMismatch("multipliers vs. chains".into()));
    }
    let z1 = forward_backward(pot1)?.log_partition();
    let z2 = forward_backward(pot2)?.log_partition();
    let (t1, t2) = tilt(pot1, pot2, m, lambda)?;
    let a1 = forward_backward(&t1)?.log_partition();
    let a2 = forward_backward(&t2)?.log_partition();
    Ok(-((a1 - z1) + (a2 - z2)))
}

/// Per-clique partial agreement between two chains, solved in the dual.
///
/// The negated dual is minimized by quasi-Newton steps with a backtracking
/// line search, so the dual value never decreases between accepted steps.
/// Its gradient is the constraint residual, and the solver stops once every
/// residual is within `config.tolerance` or the iteration budget runs out
/// (`converged` tells which).
pub fn agree_chain_partial(
    pot1: &ChainPotentials,
    pot2: &ChainPotentials,
    m: &LabelMapping,
    config: &DualConfig,
) -> Result<ChainAgreementOutcome> {
    check_partial(pot1, pot2, m)?;
    let (len, k2) = (pot1.len(), pot2.num_labels());
    let z1 = forward_backward(pot1)?.log_partition();
    let z2 = forward_backward(pot2)?.log_partition();

    let negated_dual = |values: &[f64]| -> Result<(f64, Vec<f64>)> {
        let lambda = DualVars::from_values(len, k2, values.to_vec())?;
        let (t1, t2) = tilt(pot1, pot2, m, &lambda)?;
        let q1 = forward_backward(&t1)?;
        let q2 = forward_backward(&t2)?;
        let value = (q1.log_partition() - z1) + (q2.log_partition() - z2);
        Ok((value, residual(&q1, &q2, m)))
    };

    let opt = OptConfig {
        tolerance: config.tolerance,
        max_iterations: config.max_iterations,
        norm: GradNorm::LInf,
        history: config.history,
    };
    let mut values = vec![0.0; DualVars::size(len, k2)];
    let report = optimize::minimize(negated_dual, &mut values, &opt).map_err(|e| match e {
        Error::Divergence => Error::DualDivergence,
        other => other,
    })?;

    let lambda = DualVars::from_values(len, k2, values)?;
    let (t1, t2) = tilt(pot1, pot2, m, &lambda)?;
    let q1 = forward_backward(&t1)?;
    let q2 = forward_backward(&t2)?;
    let kl_value = chain_kl(&q1, &t1, pot1, z1) + chain_kl(&q2, &t2, pot2, z2);
    if !kl_value.is_finite() {
        return Err(Error::DualDivergence);
    }
    Ok(ChainAgreementOutcome {
        q1_potentials: t1,
        q2_potentials: t2,
        q1_marginals: q1,
        q2_marginals: q2,
        kl_value,
        bhattacharyya_value: 0.5 * kl_value,
        dual_vars: Some(lambda),
        converged: report.converged,
        iterations: report.iterations,
    })
}
