//! Synthetic two-view classification data with controllable view noise.
//!
//! Labeled examples cycle through the classes so that even a tiny labeled
//! split covers all of them; other examples draw a class `y` uniformly.
//! Each view then emits `active_per_view` distinct features. A feature's
//! source class is `y` with probability `1 - noise[v]` and a uniformly chosen
//! other class otherwise; the feature itself is uniform over the source
//! class's block (ids congruent to the class mod K). Views are conditionally
//! independent given `y`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::{FlatCorpus, FlatRecord};

#[derive(Clone, Debug, PartialEq)]
pub struct GenConfig {
    pub num_labels: usize,
    pub features_per_view: usize,
    pub active_per_view: usize,
    pub noise: [f64; 2],
    pub labeled: usize,
    pub unlabeled: usize,
    pub test: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            num_labels: 4,
            features_per_view: 600,
            active_per_view: 10,
            noise: [0.2, 0.2],
            labeled: 20,
            unlabeled: 500,
            test: 1000,
        }
    }
}

impl GenConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.num_labels < 2 {
            return bad("need at least 2 labels");
        }
        if self.features_per_view < self.num_labels {
            return bad("need at least one feature per label in each view");
        }
        if self.active_per_view == 0
            || self.active_per_view > self.features_per_view / self.num_labels
        {
            return bad("active features must be between 1 and features/labels");
        }
        if self.noise.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return bad("noise must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Generated splits. `unlabeled` records carry no label; `unlabeled_truth`
/// keeps the hidden classes for diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthCorpus {
    pub labeled: FlatCorpus,
    pub unlabeled: FlatCorpus,
    pub unlabeled_truth: Vec<String>,
    pub test: FlatCorpus,
}

fn draw(rng: &mut ChaCha8Rng, config: &GenConfig, y: usize) -> FlatRecord {
    let k = config.num_labels;
    let f = config.features_per_view;
    let mut views: [Vec<(String, f64)>; 2] = [Vec::new(), Vec::new()];
    for (v, prefix) in ["a", "b"].into_iter().enumerate() {
        let mut ids: Vec<usize> = Vec::with_capacity(config.active_per_view);
        while ids.len() < config.active_per_view {
            let source = if rng.random_bool(config.noise[v]) {
                let other = rng.random_range(0..k - 1);
                if other >= y {
                    other + 1
                } else {
                    other
                }
            } else {
                y
            };
            let block = (f - source).div_ceil(k);
            let id = source + k * rng.random_range(0..block);
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
        ids.sort_unstable();
        views[v] = ids
            .into_iter()
            .map(|id| (format!("{prefix}{id}"), 1.0))
            .collect();
    }
    FlatRecord {
        label: Some(format!("c{y}")),
        views,
    }
}

/// Deterministic in `seed`.
pub fn synth_two_view(config: &GenConfig, seed: u64) -> Result<SynthCorpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = config.num_labels;
    let mut split = |n: usize, balanced: bool| -> Vec<FlatRecord> {
        (0..n)
            .map(|i| {
                let y = if balanced {
                    i % k
                } else {
                    rng.random_range(0..k)
                };
                draw(&mut rng, config, y)
            })
            .collect()
    };
    let labeled = split(config.labeled, true);
    let mut unlabeled = split(config.unlabeled, false);
    let test = split(config.test, false);
    let unlabeled_truth = unlabeled
        .iter_mut()
        .map(|r| r.label.take().unwrap_or_default())
        .collect();
    Ok(SynthCorpus {
        labeled: FlatCorpus { records: labeled },
        unlabeled: FlatCorpus { records: unlabeled },
        unlabeled_truth,
        test: FlatCorpus { records: test },
    })
}
