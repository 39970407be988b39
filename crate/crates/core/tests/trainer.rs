//! Behavior of the agreement training loop.

mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sar_core::agreement::{DualConfig, LabelMapping};
use sar_core::crf::{ChainExample, CrfParams};
use sar_core::data::{encode_flat, synth_two_view, EncodedFlat, FeatureIndex, GenConfig};
use sar_core::maxent::MaxentParams;
use sar_core::model_io::{load_checkpoint, save_checkpoint, trace_csv, TRACE_HEADER};
use sar_core::optimize::OptConfig;
use sar_core::prob::{bhattacharyya, Categorical, LabelSet};
use sar_core::trainer::{
    agree0_predict, continue_sar, objective_value, train_sar, train_supervised, SarConfig, SarData,
    SarState, ViewModel,
};
use sar_core::Error;

use common::*;

struct Flat {
    labels: LabelSet,
    enc: EncodedFlat,
    inputs: [usize; 2],
}

fn flat(seed: u64) -> Flat {
    let config = GenConfig {
        num_labels: 3,
        features_per_view: 60,
        active_per_view: 5,
        noise: [0.2, 0.3],
        labeled: 9,
        unlabeled: 40,
        test: 3,
    };
    let corpus = synth_two_view(&config, seed).unwrap();
    let labels = corpus.labeled.label_set().unwrap();
    let mut train = corpus.labeled.clone();
    train.records.extend(corpus.unlabeled.records);
    let mut index = [FeatureIndex::new(), FeatureIndex::new()];
    let enc = encode_flat(&train, &labels, None, &mut index, true).unwrap();
    Flat {
        labels,
        enc,
        inputs: [index[0].len(), index[1].len()],
    }
}

impl Flat {
    fn data(&self) -> SarData<'_, MaxentParams> {
        SarData {
            labeled1: &self.enc.labeled1,
            labeled2: &self.enc.labeled2,
            unlabeled: &self.enc.unlabeled,
            mapping: None,
        }
    }

    fn init(&self) -> [MaxentParams; 2] {
        [0, 1].map(|v| MaxentParams::zeros(self.labels.clone(), self.inputs[v], 10.0))
    }
}

fn tight() -> SarConfig {
    let opt = OptConfig {
        tolerance: 1e-9,
        max_iterations: 5000,
        ..OptConfig::default()
    };
    SarConfig {
        c: 2.0,
        iterations: 6,
        optimizer: [opt.clone(), opt],
        monotonicity_tolerance: 1e-6,
        ..SarConfig::default()
    }
}

#[test]
fn zero_c_returns_the_supervised_fits_bit_for_bit() {
    let p = flat(1);
    let [i1, i2] = p.init();
    let config = SarConfig {
        c: 0.0,
        ..SarConfig::default()
    };
    let state = train_sar(&i1, &i2, &p.data(), &config).unwrap();
    let (s1, _) = train_supervised(&i1, &p.enc.labeled1, 10.0, &config.optimizer[0]).unwrap();
    let (s2, _) = train_supervised(&i2, &p.enc.labeled2, 10.0, &config.optimizer[1]).unwrap();
    assert_eq!(state.params1, s1);
    assert_eq!(state.params2, s2);
    let t = state.trace[0].parts;
    assert_eq!(t.total, t.l1 + t.l2);
}

#[test]
fn empty_unlabeled_set_returns_the_supervised_fits() {
    let p = flat(2);
    let [i1, i2] = p.init();
    let data = SarData {
        unlabeled: &[],
        ..p.data()
    };
    let state = train_sar(&i1, &i2, &data, &SarConfig::default()).unwrap();
    let (s1, _) = train_supervised(&i1, &p.enc.labeled1, 10.0, &OptConfig::default()).unwrap();
    assert_eq!(state.params1, s1);
    assert_eq!(state.trace.len(), 1);
}

#[test]
fn identity_mapping_and_no_mapping_give_the_same_trace() {
    let p = flat(3);
    let [i1, i2] = p.init();
    let identity = LabelMapping::identity(p.labels.clone());
    let a = train_sar(&i1, &i2, &p.data(), &tight()).unwrap();
    let b = train_sar(
        &i1,
        &i2,
        &SarData {
            mapping: Some(&identity),
            ..p.data()
        },
        &tight(),
    )
    .unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.params1, b.params1);
}

#[test]
fn trace_parts_add_up_and_kl_term_is_twice_mean_bhattacharyya() {
    let p = flat(4);
    let [i1, i2] = p.init();
    let config = tight();
    let state = train_sar(&i1, &i2, &p.data(), &config).unwrap();
    assert_eq!(state.trace.len(), config.iterations + 1);
    for row in &state.trace {
        let t = row.parts;
        assert!((t.total - (t.l1 + t.l2 + config.c * t.kl_term)).abs() <= 1e-9);
    }
    let mean_b: f64 = p
        .enc
        .unlabeled
        .iter()
        .map(|(x1, x2)| {
            bhattacharyya(
                &state.params1.predict_dist(x1).unwrap(),
                &state.params2.predict_dist(x2).unwrap(),
            )
            .unwrap()
        })
        .sum::<f64>()
        / p.enc.unlabeled.len() as f64;
    let last = state.trace.last().unwrap().parts.kl_term;
    assert!((last - 2.0 * mean_b).abs() <= 1e-8);
}

#[test]
fn objective_is_linear_in_c() {
    let p = flat(5);
    let [i1, i2] = p.init();
    let state = train_sar(&i1, &i2, &p.data(), &tight()).unwrap();
    let at = |c: f64| {
        objective_value(
            &state,
            &p.data(),
            &SarConfig {
                c,
                ..SarConfig::default()
            },
        )
        .unwrap()
    };
    let (zero, eps) = (at(0.0), at(1e-3));
    assert!((eps.total - zero.total - 1e-3 * eps.kl_term).abs() <= 1e-10);
}

#[test]
fn converged_state_is_a_fixpoint() {
    let p = flat(6);
    let [i1, i2] = p.init();
    let config = SarConfig {
        iterations: 200,
        early_stop: Some(1e-12),
        ..tight()
    };
    let state = train_sar(&i1, &i2, &p.data(), &config).unwrap();
    let before = (state.params1.clone(), state.params2.clone());
    let after = continue_sar(state, &p.data(), &config, 1).unwrap();
    let moved = max_abs_diff(before.0.weights(), after.params1.weights())
        .max(max_abs_diff(before.1.weights(), after.params2.weights()));
    assert!(moved <= 1e-4, "parameters moved by {moved}");
}

#[test]
fn swapping_views_mirrors_the_run() {
    let p = flat(7);
    let [i1, i2] = p.init();
    let identity = LabelMapping::identity(p.labels.clone());
    let swapped: Vec<_> = p
        .enc
        .unlabeled
        .iter()
        .map(|(a, b)| (b.clone(), a.clone()))
        .collect();
    let forward = train_sar(
        &i1,
        &i2,
        &SarData {
            mapping: Some(&identity),
            ..p.data()
        },
        &tight(),
    )
    .unwrap();
    let backward = train_sar(
        &i2,
        &i1,
        &SarData {
            labeled1: &p.enc.labeled2,
            labeled2: &p.enc.labeled1,
            unlabeled: &swapped,
            mapping: Some(&identity),
        },
        &tight(),
    )
    .unwrap();
    assert!(max_abs_diff(forward.params1.weights(), backward.params2.weights()) <= 1e-8);
    assert!(max_abs_diff(forward.params2.weights(), backward.params1.weights()) <= 1e-8);
    for (f, b) in forward.trace.iter().zip(&backward.trace) {
        assert!((f.parts.total - b.parts.total).abs() <= 1e-8);
        assert!((f.parts.l1 - b.parts.l2).abs() <= 1e-8);
        assert!((f.parts.kl_term - b.parts.kl_term).abs() <= 1e-8);
    }
}

#[test]
fn balance_mode_weighs_unlabeled_like_labeled() {
    let p = flat(8);
    let [i1, i2] = p.init();
    let balanced = SarConfig {
        c: 7.0,
        balance: true,
        iterations: 2,
        ..SarConfig::default()
    };
    let unit = SarConfig {
        c: 1.0,
        iterations: 2,
        ..SarConfig::default()
    };
    assert_eq!(balanced.effective_c(), 1.0);
    let a = train_sar(&i1, &i2, &p.data(), &balanced).unwrap();
    let b = train_sar(&i1, &i2, &p.data(), &unit).unwrap();
    assert_eq!(a.trace, b.trace);
}

#[test]
fn an_objective_increase_is_reported() {
    let p = flat(9);
    let [i1, i2] = p.init();
    // A negative tolerance demands a strict decrease of at least 1 per round.
    let config = SarConfig {
        monotonicity_tolerance: -1.0,
        ..SarConfig::default()
    };
    let err = train_sar(&i1, &i2, &p.data(), &config).unwrap_err();
    assert!(matches!(
        err,
        Error::MonotonicityViolated { iteration: 1, .. }
    ));
    assert!(err.is_numerical());
}

#[test]
fn invalid_configs_and_label_sets_are_rejected() {
    let p = flat(10);
    let [i1, i2] = p.init();
    for config in [
        SarConfig {
            c: -1.0,
            ..SarConfig::default()
        },
        SarConfig {
            iterations: 0,
            ..SarConfig::default()
        },
        SarConfig {
            prior_variance: [0.0, 1.0],
            ..SarConfig::default()
        },
    ] {
        assert!(matches!(
            train_sar(&i1, &i2, &p.data(), &config),
            Err(Error::Config(_))
        ));
    }
    let other = MaxentParams::zeros(labels(4), p.inputs[1], 10.0);
    assert!(matches!(
        train_sar(&i1, &other, &p.data(), &SarConfig::default()),
        Err(Error::LabelSetMismatch)
    ));
    let data = SarData {
        labeled1: &[],
        ..p.data()
    };
    assert!(matches!(
        train_sar(&i1, &i2, &data, &SarConfig::default()),
        Err(Error::Empty(_))
    ));
}

#[test]
fn agree0_follows_the_geometric_mean() {
    let dual = DualConfig::default();
    let cat = |p: &[f64]| Categorical::from_probs(labels(p.len()), p).unwrap();
    let p = cat(&[0.2, 0.5, 0.3]);
    assert_eq!(MaxentParams::agree_decode(&p, &p, None, &dual).unwrap(), 1);
    assert_eq!(
        MaxentParams::agree_decode(&cat(&[0.9, 0.1]), &cat(&[0.1, 0.9]), None, &dual).unwrap(),
        0
    );
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let (a, b) = (random_probs(&mut rng, 3), random_probs(&mut rng, 3));
        let expected = (0..3)
            .max_by(|&i, &j| (a[i] * b[i]).sqrt().total_cmp(&(a[j] * b[j]).sqrt()))
            .unwrap();
        assert_eq!(
            MaxentParams::agree_decode(&cat(&a), &cat(&b), None, &dual).unwrap(),
            expected
        );
    }
    let f = flat(12);
    let [i1, i2] = f.init();
    let (x1, x2) = &f.enc.unlabeled[0];
    let direct = MaxentParams::agree_decode(
        &i1.predict_dist(x1).unwrap(),
        &i2.predict_dist(x2).unwrap(),
        None,
        &dual,
    )
    .unwrap();
    assert_eq!(
        agree0_predict(&i1, &i2, x1, x2, None, &dual).unwrap(),
        direct
    );
}

fn chain_problem(seed: u64, mapping: Option<&LabelMapping>) -> [Vec<ChainExample>; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k1 = mapping.map_or(3, |m| m.fine().len());
    let k2 = mapping.map_or(3, |m| m.coarse().len());
    let labeled = |rng: &mut ChaCha8Rng, k: usize| -> Vec<ChainExample> {
        (0..5)
            .map(|_| {
                let len = rng.random_range(2..=4);
                let gold = (0..len).map(|_| rng.random_range(0..k)).collect();
                random_chain(rng, len, 10, Some(gold))
            })
            .collect()
    };
    let l1 = labeled(&mut rng, k1);
    let l2 = labeled(&mut rng, k2);
    let u: Vec<ChainExample> = (0..12)
        .map(|_| {
            let len = rng.random_range(2..=4);
            random_chain(&mut rng, len, 10, None)
        })
        .collect();
    [l1, l2, u]
}

#[test]
fn chain_training_descends_with_partial_agreement() {
    let mapping = LabelMapping::new(labels(3), labels(2), vec![0, 1, 1]).unwrap();
    let [l1, l2, u] = chain_problem(13, Some(&mapping));
    let unlabeled: Vec<_> = u.iter().map(|x| (x.clone(), x.clone())).collect();
    let data = SarData::<CrfParams> {
        labeled1: &l1,
        labeled2: &l2,
        unlabeled: &unlabeled,
        mapping: Some(&mapping),
    };
    let config = SarConfig {
        dual: DualConfig {
            tolerance: 1e-10,
            max_iterations: 2000,
            ..DualConfig::default()
        },
        ..tight()
    };
    let state = train_sar(
        &CrfParams::zeros(labels(3), 10, 1.0),
        &CrfParams::zeros(labels(2), 10, 1.0),
        &data,
        &config,
    )
    .unwrap();
    for w in state.trace.windows(2) {
        assert!(w[1].parts.total <= w[0].parts.total + 1e-6);
    }
    assert!(
        state.estep.iter().all(|s| s.unconverged == 0),
        "{:?}",
        state.estep
    );
    assert!(state.trace.last().unwrap().parts.kl_term < state.trace[0].parts.kl_term);
}

#[test]
fn chain_identity_mapping_matches_closed_form_run() {
    let [l1, l2, u] = chain_problem(14, None);
    let unlabeled: Vec<_> = u.iter().map(|x| (x.clone(), x.clone())).collect();
    let identity = LabelMapping::identity(labels(3));
    let run = |mapping| {
        let data = SarData::<CrfParams> {
            labeled1: &l1,
            labeled2: &l2,
            unlabeled: &unlabeled,
            mapping,
        };
        let init = CrfParams::zeros(labels(3), 10, 1.0);
        train_sar(&init, &init, &data, &tight()).unwrap()
    };
    assert_eq!(run(None).trace, run(Some(&identity)).trace);
}

#[test]
fn checkpoints_round_trip() {
    let p = flat(15);
    let [i1, i2] = p.init();
    let state = train_sar(&i1, &i2, &p.data(), &SarConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut index = [FeatureIndex::new(), FeatureIndex::new()];
    for (v, n) in p.inputs.iter().enumerate() {
        for i in 0..*n {
            index[v].intern(&format!("f{i}"));
        }
    }
    save_checkpoint(dir.path(), &state, &index).unwrap();
    let ([m1, m2], features) = load_checkpoint::<MaxentParams>(dir.path()).unwrap();
    assert_eq!(m1, state.params1);
    assert_eq!(m2, state.params2);
    assert_eq!(features, index);
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace, trace_csv(&state.trace));
    assert!(trace.starts_with(TRACE_HEADER));
    assert_eq!(trace.lines().count(), state.trace.len() + 1);
    let _: &SarState<MaxentParams> = &state;
}
