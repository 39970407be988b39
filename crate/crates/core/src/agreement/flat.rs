use super::LabelMapping;
use crate::error::{Error, Result};
use crate::prob::{bhattacharyya_log, kl_log, log_normalize, Categorical};

#[derive(Clone, Debug, PartialEq)]
pub struct AgreementOutcome {
    /// Projection of the first view, over its (fine) labels.
    pub q1: Categorical,
    /// Projection of the second view, over its (coarse) labels.
    pub q2: Categorical,
    /// `KL(q1 × q2 || p1 × p2) = KL(q1 || p1) + KL(q2 || p2)`.
    pub kl_value: f64,
    /// Bhattacharyya distance between the collapsed first view and the second.
    pub bhattacharyya_value: f64,
    /// Multipliers, when an iterative solver was used.
    pub dual_vars: Option<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
}

/// Closed-form projection for two views over the same labels.
pub fn agree_flat(p1: &Categorical, p2: &Categorical) -> Result<AgreementOutcome> {
    if p1.labels() != p2.labels() {
        return Err(Error::LabelSetMismatch);
    }
    let (lp1, lp2) = (p1.log_probs(), p2.log_probs());
    let mean: Vec<f64> = lp1.iter().zip(lp2).map(|(a, b)| 0.5 * (a + b)).collect();
    let q = log_normalize(&mean).map_err(|_| Error::DisjointSupports)?;
    let kl_value = kl_log(&q, lp1) + kl_log(&q, lp2);
    let q = Categorical::from_log_weights(p1.labels().clone(), &q)?;
    Ok(AgreementOutcome {
        q2: q.clone(),
        q1: q,
        kl_value,
        bhattacharyya_value: bhattacharyya_log(lp1, lp2),
        dual_vars: None,
        converged: true,
        iterations: 0,
    })
}

/// Closed-form projection when the views agree only on collapsed labels.
///
/// The coarse agreement mass is `m(z) ∝ sqrt(P1(z) p2(z))` where `P1` is the
/// collapsed first view; `q2 = m` and `q1` rescales `p1` within each coarse
/// group so its collapsed mass is `m`.
pub fn agree_flat_partial(
    p1: &Categorical,
    p2: &Categorical,
    mapping: &LabelMapping,
) -> Result<AgreementOutcome> {
    if p1.labels() != mapping.fine() || p2.labels() != mapping.coarse() {
        return Err(Error::LabelSetMismatch);
    }
    let (lp1, lp2) = (p1.log_probs(), p2.log_probs());
    let collapsed = mapping.collapse_log(lp1);
    let mean: Vec<f64> = collapsed
        .iter()
        .zip(lp2)
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    let m = log_normalize(&mean).map_err(|_| Error::DisjointSupports)?;
    let q1: Vec<f64> = lp1
        .iter()
        .enumerate()
        .map(|(y, &lp)| {
            let z = mapping.map(y);
            if m[z] == f64::NEG_INFINITY || lp == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                m[z] + (lp - collapsed[z])
            }
        })
        .collect();
    let kl_value = kl_log(&q1, lp1) + kl_log(&m, lp2);
    Ok(AgreementOutcome {
        q1: Categorical::from_log_weights(mapping.fine().clone(), &q1)?,
        q2: Categorical::from_log_weights(mapping.coarse().clone(), &m)?,
        kl_value,
        bhattacharyya_value: bhattacharyya_log(&collapsed, lp2),
        dual_vars: None,
        converged: true,
        iterations: 0,
    })
}
