//! Random instance generators and independent oracles shared by the
//! integration tests. Nothing here calls the projection code under test.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sar_core::agreement::LabelMapping;
use sar_core::crf::{ChainExample, ChainPotentials};
use sar_core::maxent::FeatureVector;
use sar_core::prob::{Categorical, LabelSet};

pub fn labels(k: usize) -> LabelSet {
    LabelSet::numbered(k).unwrap()
}

/// Random probabilities bounded away from zero.
pub fn random_probs(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.02..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

pub fn random_categorical(rng: &mut ChaCha8Rng, k: usize) -> Categorical {
    Categorical::from_probs(labels(k), &random_probs(rng, k)).unwrap()
}

/// Random surjection from `k1` fine labels onto `k2` coarse labels.
pub fn random_mapping(rng: &mut ChaCha8Rng, k1: usize, k2: usize) -> LabelMapping {
    assert!(k2 <= k1);
    let mut map: Vec<usize> = (0..k1)
        .map(|i| if i < k2 { i } else { rng.random_range(0..k2) })
        .collect();
    for i in (1..k1).rev() {
        let j = rng.random_range(0..=i);
        map.swap(i, j);
    }
    LabelMapping::new(labels(k1), labels(k2), map).unwrap()
}

pub fn random_pot(rng: &mut ChaCha8Rng, len: usize, k: usize) -> ChainPotentials {
    ChainPotentials::new(
        len,
        k,
        (0..len * k).map(|_| rng.random_range(-2.0..2.0)).collect(),
        (0..len.saturating_sub(1) * k * k)
            .map(|_| rng.random_range(-2.0..2.0))
            .collect(),
    )
    .unwrap()
}

pub fn random_features(rng: &mut ChaCha8Rng, inputs: usize, active: usize) -> FeatureVector {
    let mut ids: Vec<u32> = (0..active)
        .map(|_| rng.random_range(0..inputs as u32))
        .collect();
    ids.sort_unstable();
    ids.dedup();
    FeatureVector::new(
        ids.into_iter()
            .map(|i| (i, rng.random_range(0.5..1.5)))
            .collect(),
    )
    .unwrap()
}

pub fn random_chain(
    rng: &mut ChaCha8Rng,
    len: usize,
    inputs: usize,
    gold: Option<Vec<usize>>,
) -> ChainExample {
    let positions = (0..len).map(|_| random_features(rng, inputs, 3)).collect();
    ChainExample::new(positions, gold).unwrap()
}

pub fn kl(q: &[f64], p: &[f64]) -> f64 {
    q.iter()
        .zip(p)
        .filter(|(qi, _)| **qi > 0.0)
        .map(|(qi, pi)| qi * (qi / pi).ln())
        .sum()
}

pub fn collapse(q1: &[f64], map: &[usize], k2: usize) -> Vec<f64> {
    let mut out = vec![0.0; k2];
    for (y, &z) in map.iter().enumerate() {
        out[z] += q1[y];
    }
    out
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        cum += ui;
        let t = (cum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Projected gradient descent with backtracking over the simplex, started
/// at the uniform point. Stops once a full step moves less than `tol`.
pub fn simplex_pg<F, G>(n: usize, f: F, grad: G, tol: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let mut x = vec![1.0 / n as f64; n];
    let mut fx = f(&x);
    let mut step = 1.0;
    for _ in 0..200_000 {
        let g = grad(&x);
        let mut moved = false;
        loop {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - step * gi).collect();
            let y = project_simplex(&trial);
            if y.iter().any(|v| *v <= 0.0) {
                step *= 0.5;
                if step < 1e-20 {
                    break;
                }
                continue;
            }
            let d: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
            let fy = f(&y);
            let decrease: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>()
                + d.iter().map(|v| v * v).sum::<f64>() / (2.0 * step);
            if fy <= fx + decrease + 1e-15 {
                let dist = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                moved = dist >= tol && fy < fx;
                x = y;
                fx = fy;
                step *= 2.0;
                break;
            }
            step *= 0.5;
            if step < 1e-20 {
                break;
            }
        }
        if !moved {
            break;
        }
    }
    x
}

/// Brute-force `(log Z, probabilities)` of a chain, indexed with the first
/// position as the most significant digit.
pub fn enumerate_chain(pot: &ChainPotentials) -> (f64, Vec<f64>) {
    let (len, k) = (pot.len(), pot.num_labels());
    let n = k.pow(len as u32);
    let scores: Vec<f64> = (0..n)
        .map(|idx| {
            let path = path_of(idx, len, k);
            let mut s = 0.0;
            for t in 0..len {
                s += pot.node(t, path[t]);
                if t + 1 < len {
                    s += pot.edge(t, path[t], path[t + 1]);
                }
            }
            s
        })
        .collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = scores.iter().map(|s| (s - max).exp()).sum();
    let log_z = max + z.ln();
    (log_z, scores.iter().map(|s| (s - log_z).exp()).collect())
}

pub fn path_of(mut idx: usize, len: usize, k: usize) -> Vec<usize> {
    let mut path = vec![0; len];
    for t in (0..len).rev() {
        path[t] = idx % k;
        idx /= k;
    }
    path
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
}
