//! Loading corpora into per-view training data, and evaluation.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sar_core::agreement::{DualConfig, LabelMapping};
use sar_core::crf::{ChainExample, CrfParams};
use sar_core::data::{
    encode_flat, encode_sequences, read_conll, read_flat, read_mapping, ColumnSpec, FeatureIndex,
    SeqCorpus, ViewTemplate,
};
use sar_core::eval::{chunk_f1, EvalReport};
use sar_core::maxent::MaxentParams;
use sar_core::model_io::{checkpoint, load_checkpoint, ModelText};
use sar_core::prob::LabelSet;
use sar_core::trainer::{agree0_predict, ViewModel};
use sar_core::{Error, Result};

use crate::args::{DataArgs, Format, Predictor};

pub const SETTINGS_FILE: &str = "settings.conf";
pub const MAPPING_FILE: &str = "mapping.tsv";

/// Training data for both views.
pub struct Prepared<M: ViewModel> {
    pub labeled1: Vec<M::Labeled>,
    pub labeled2: Vec<M::Labeled>,
    pub unlabeled: Vec<(M::Input, M::Input)>,
    pub features: [FeatureIndex; 2],
    pub labels: [LabelSet; 2],
}

/// A test item: both views and the view-1 gold output.
pub type TestSet<M> = Vec<(
    <M as ViewModel>::Input,
    <M as ViewModel>::Input,
    <M as ViewModel>::Output,
)>;

/// Per-format glue between files and models.
pub trait Task: ViewModel + ModelText {
    fn zeros(labels: LabelSet, num_inputs: usize, prior_variance: f64) -> Self;

    fn prepare(args: &DataArgs, mapping: Option<&LabelMapping>) -> Result<Prepared<Self>>;

    fn load_test(
        path: &Path,
        settings: &Settings,
        labels: &LabelSet,
        features: &mut [FeatureIndex; 2],
    ) -> Result<TestSet<Self>>;

    /// Token-level labels of one output.
    fn tokens(output: &Self::Output) -> Vec<usize>;
}

/// Settings a model directory needs to read test data the way training did.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub format: Format,
    pub template: ViewTemplate,
    pub columns: ColumnSpec,
}

impl Settings {
    pub fn from_args(args: &DataArgs) -> Self {
        Self {
            format: args.format,
            template: ViewTemplate {
                window: args.window,
                char_trigrams: args.char_trigrams,
            },
            columns: args.columns(),
        }
    }

    pub fn to_text(&self, extra: &[(&str, String)]) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "format = {}", self.format);
        let _ = writeln!(out, "window = {}", self.template.window);
        let _ = writeln!(out, "char-trigrams = {}", self.template.char_trigrams);
        let _ = writeln!(out, "word-col = {}", self.columns.word);
        if let Some(p) = self.columns.pos {
            let _ = writeln!(out, "pos-col = {p}");
        }
        if let Some(t) = self.columns.tag {
            let _ = writeln!(out, "tag-col = {t}");
        }
        for (k, v) in extra {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(SETTINGS_FILE);
        let text = fs::read_to_string(&path)?;
        let mut s = Self {
            format: Format::Flat,
            template: ViewTemplate::default(),
            columns: ColumnSpec {
                word: 0,
                pos: None,
                tag: None,
            },
        };
        for (i, line) in text.lines().enumerate() {
            let Some((k, v)) = line.split_once(" = ") else {
                continue;
            };
            let bad = || Error::Parse {
                path: path.clone(),
                line: i + 1,
                message: format!("bad value for `{k}`"),
            };
            match k {
                "format" => s.format = v.parse().map_err(|_| bad())?,
                "window" => s.template.window = v.parse().map_err(|_| bad())?,
                "char-trigrams" => s.template.char_trigrams = v.parse().map_err(|_| bad())?,
                "word-col" => s.columns.word = v.parse().map_err(|_| bad())?,
                "pos-col" => s.columns.pos = Some(v.parse().map_err(|_| bad())?),
                "tag-col" => s.columns.tag = Some(v.parse().map_err(|_| bad())?),
                _ => {}
            }
        }
        Ok(s)
    }
}

fn flat_labels(corpus_labels: LabelSet, mapping: Option<&LabelMapping>) -> Result<[LabelSet; 2]> {
    Ok(match mapping {
        Some(m) => {
            for name in corpus_labels.names() {
                if m.fine().index_of(name).is_none() {
                    return Err(Error::UnmappedLabel(name.clone()));
                }
            }
            [m.fine().clone(), m.coarse().clone()]
        }
        None => [corpus_labels.clone(), corpus_labels],
    })
}

impl Task for MaxentParams {
    fn zeros(labels: LabelSet, num_inputs: usize, prior_variance: f64) -> Self {
        MaxentParams::zeros(labels, num_inputs, prior_variance)
    }

    fn prepare(args: &DataArgs, mapping: Option<&LabelMapping>) -> Result<Prepared<Self>> {
        let train = read_flat(&args.train)?;
        let labels = flat_labels(train.label_set()?, mapping)?;
        let mut features = [FeatureIndex::new(), FeatureIndex::new()];
        let mut enc = encode_flat(&train, &labels[0], mapping, &mut features, true)?;
        if let Some(path) = &args.unlabeled {
            let mut extra = read_flat(path)?;
            for r in &mut extra.records {
                r.label = None;
            }
            enc.unlabeled
                .extend(encode_flat(&extra, &labels[0], mapping, &mut features, true)?.unlabeled);
        }
        Ok(Prepared {
            labeled1: enc.labeled1,
            labeled2: enc.labeled2,
            unlabeled: enc.unlabeled,
            features,
            labels,
        })
    }

    fn load_test(
        path: &Path,
        _settings: &Settings,
        labels: &LabelSet,
        features: &mut [FeatureIndex; 2],
    ) -> Result<TestSet<Self>> {
        let corpus = read_flat(path)?;
        let enc = encode_flat(&corpus, labels, None, features, false)?;
        Ok(enc
            .labeled1
            .into_iter()
            .zip(enc.labeled2)
            .map(|((x1, y), (x2, _))| (x1, x2, y))
            .collect())
    }

    fn tokens(output: &usize) -> Vec<usize> {
        vec![*output]
    }
}

fn remap_gold(chains: Vec<ChainExample>, mapping: &LabelMapping) -> Result<Vec<ChainExample>> {
    chains
        .into_iter()
        .map(|c| {
            let gold = c
                .gold()
                .map(|g| g.iter().map(|&y| mapping.map(y)).collect());
            ChainExample::new(c.positions().to_vec(), gold)
        })
        .collect()
}

fn read_unlabeled_conll(path: &Path, columns: ColumnSpec) -> Result<SeqCorpus> {
    read_conll(
        path,
        ColumnSpec {
            tag: None,
            ..columns
        },
    )
}

impl Task for CrfParams {
    fn zeros(labels: LabelSet, num_inputs: usize, prior_variance: f64) -> Self {
        CrfParams::zeros(labels, num_inputs, prior_variance)
    }

    fn prepare(args: &DataArgs, mapping: Option<&LabelMapping>) -> Result<Prepared<Self>> {
        let columns = args.columns();
        if columns.tag.is_none() {
            return Err(Error::Config("training data needs a tag column".into()));
        }
        let template = ViewTemplate {
            window: args.window,
            char_trigrams: args.char_trigrams,
        };
        let train = read_conll(&args.train, columns)?;
        let labels = flat_labels(train.label_set()?, mapping)?;
        let mut features = [FeatureIndex::new(), FeatureIndex::new()];
        let [l1, l2] = encode_sequences(&train, template, &labels[0], &mut features, true)?;
        let l2 = match mapping {
            Some(m) => remap_gold(l2, m)?,
            None => l2,
        };
        let mut unlabeled = Vec::new();
        if let Some(path) = &args.unlabeled {
            let corpus = read_unlabeled_conll(path, columns)?;
            let [u1, u2] = encode_sequences(&corpus, template, &labels[0], &mut features, true)?;
            unlabeled = u1.into_iter().zip(u2).collect();
        }
        Ok(Prepared {
            labeled1: l1,
            labeled2: l2,
            unlabeled,
            features,
            labels,
        })
    }

    fn load_test(
        path: &Path,
        settings: &Settings,
        labels: &LabelSet,
        features: &mut [FeatureIndex; 2],
    ) -> Result<TestSet<Self>> {
        let corpus = read_conll(path, settings.columns)?;
        let [t1, t2] = encode_sequences(&corpus, settings.template, labels, features, false)?;
        t1.into_iter()
            .zip(t2)
            .map(|(a, b)| {
                let gold = a
                    .gold()
                    .ok_or(Error::Empty("gold tags in test data"))?
                    .to_vec();
                Ok((a.without_gold(), b.without_gold(), gold))
            })
            .collect()
    }

    fn tokens(output: &Vec<usize>) -> Vec<usize> {
        output.clone()
    }
}

/// Models, feature maps and mapping of a saved run.
pub struct Loaded<M> {
    pub models: [M; 2],
    pub features: [FeatureIndex; 2],
    pub mapping: Option<LabelMapping>,
    pub settings: Settings,
}

pub fn load_dir<M: Task>(dir: &Path) -> Result<Loaded<M>> {
    let (models, features) = load_checkpoint::<M>(dir)?;
    let mapping_path = dir.join(MAPPING_FILE);
    let mapping = if mapping_path.exists() {
        Some(read_mapping(&mapping_path)?)
    } else {
        None
    };
    Ok(Loaded {
        models,
        features,
        mapping,
        settings: Settings::read(dir)?,
    })
}

/// Kind line of a saved view-1 model.
pub fn model_kind(dir: &Path) -> Result<String> {
    let text = fs::read_to_string(dir.join(checkpoint::VIEW_MODELS[0]))?;
    Ok(text.lines().next().unwrap_or_default().to_string())
}

fn is_bio(labels: &LabelSet) -> bool {
    labels
        .names()
        .iter()
        .all(|l| l == "O" || l.starts_with("B-") || l.starts_with("I-"))
}

/// Predicts `test` with the chosen predictor and scores against view-1 gold.
pub fn evaluate<M: Task>(
    loaded: &Loaded<M>,
    test: &TestSet<M>,
    predictor: Predictor,
    dual: &DualConfig,
) -> Result<EvalReport> {
    let [m1, m2] = &loaded.models;
    let mapping = loaded.mapping.as_ref();
    let (labels, golds): (&LabelSet, Vec<Vec<usize>>) = match predictor {
        Predictor::View2 => (
            m2.labels(),
            test.iter()
                .map(|t| {
                    M::tokens(&t.2)
                        .into_iter()
                        .map(|y| mapping.map_or(y, |m| m.map(y)))
                        .collect()
                })
                .collect(),
        ),
        _ => (m1.labels(), test.iter().map(|t| M::tokens(&t.2)).collect()),
    };
    let preds = test
        .iter()
        .map(|(x1, x2, _)| {
            Ok(M::tokens(&match predictor {
                Predictor::View1 => m1.decode(x1)?,
                Predictor::View2 => m2.decode(x2)?,
                Predictor::Agree => agree0_predict(m1, m2, x1, x2, mapping, dual)?,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    let flat_preds: Vec<usize> = preds.iter().flatten().copied().collect();
    let flat_golds: Vec<usize> = golds.iter().flatten().copied().collect();
    let mut report = EvalReport::new(
        predictor.to_string(),
        &flat_preds,
        &flat_golds,
        labels.clone(),
    )?;
    if loaded.settings.format == Format::Conll && is_bio(labels) {
        let names = |seqs: &[Vec<usize>]| -> Vec<Vec<String>> {
            seqs.iter()
                .map(|s| s.iter().map(|&y| labels.name(y).to_string()).collect())
                .collect()
        };
        report.chunk = Some(chunk_f1(&names(&preds), &names(&golds))?);
    }
    Ok(report)
}

/// Rows `run,model,metric,label,value` for one report.
pub fn report_csv_rows(run: &str, report: &EvalReport, out: &mut String) {
    let mut row = |metric: &str, label: &str, value: Option<f64>| {
        let v = value.map_or("n/a".to_string(), |v| v.to_string());
        let _ = writeln!(out, "{run},{},{metric},{label},{v}", report.name);
    };
    row("accuracy", "", Some(report.accuracy));
    if let Some(c) = &report.chunk {
        row("chunk_precision", "", Some(c.precision));
        row("chunk_recall", "", Some(c.recall));
        row("chunk_f1", "", Some(c.f1));
    }
    let labels = report.confusion.labels();
    for (y, (p, r)) in report.confusion.per_class().into_iter().enumerate() {
        row("precision", labels.name(y), p);
        row("recall", labels.name(y), r);
    }
    for (g, cells) in report.confusion.row_percentages().into_iter().enumerate() {
        for c in 0..labels.len() {
            let cell = format!("{}>{}", labels.name(g), labels.name(c));
            row("confusion", &cell, cells.as_ref().map(|r| r[c]));
        }
    }
}

pub const REPORT_HEADER: &str = "run,model,metric,label,value";

/// Sample mean and standard deviation.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}
