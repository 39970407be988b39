//! Evaluation metrics. Scores are percentages.

use std::fmt::{self, Write as _};

use crate::error::{Error, Result};
use crate::prob::{bhattacharyya_log, LabelSet};

fn check_aligned(preds: usize, golds: usize) -> Result<()> {
    if preds != golds {
        return Err(Error::DimensionMismatch(format!(
            "{preds} predictions for {golds} gold labels"
        )));
    }
    if preds == 0 {
        return Err(Error::Empty("evaluation set"));
    }
    Ok(())
}

pub fn accuracy<T: PartialEq>(preds: &[T], golds: &[T]) -> Result<f64> {
    check_aligned(preds.len(), golds.len())?;
    let correct = preds.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(100.0 * correct as f64 / preds.len() as f64)
}

/// Relative reduction in error of `new_acc` over `baseline_acc`.
pub fn rre(baseline_acc: f64, new_acc: f64) -> Result<f64> {
    if baseline_acc >= 100.0 {
        return Err(Error::ZeroBaselineError);
    }
    Ok(100.0 * (new_acc - baseline_acc) / (100.0 - baseline_acc))
}

/// Formats to two significant figures: 9.23 -> "9.2", 18.66 -> "19".
pub fn format_two_significant(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let decimals = |v: f64| 1 - v.abs().log10().floor() as i32;
    let mut d = decimals(x);
    let scale = 10f64.powi(d);
    let rounded = (x * scale).round() / scale;
    d = decimals(rounded);
    if d > 0 {
        format!("{rounded:.*}", d as usize)
    } else {
        format!("{rounded:.0}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChunkScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub predicted: usize,
    pub gold: usize,
    pub correct: usize,
}

/// `(type, start, end)` spans, end inclusive. An `I-X` that does not continue
/// an `X` span opens a new one.
pub fn bio_spans<S: AsRef<str>>(tags: &[S]) -> Result<Vec<(String, usize, usize)>> {
    let mut spans = Vec::new();
    let mut open: Option<(String, usize)> = None;
    for (i, tag) in tags.iter().enumerate() {
        let tag = tag.as_ref();
        let (kind, ty) = if tag == "O" {
            ('O', "")
        } else if let Some(ty) = tag.strip_prefix("B-") {
            ('B', ty)
        } else if let Some(ty) = tag.strip_prefix("I-") {
            ('I', ty)
        } else {
            return Err(Error::MalformedTag(tag.to_string()));
        };
        if kind != 'O' && ty.is_empty() {
            return Err(Error::MalformedTag(tag.to_string()));
        }
        let continues = kind == 'I' && open.as_ref().is_some_and(|(t, _)| t == ty);
        if !continues {
            if let Some((t, start)) = open.take() {
                spans.push((t, start, i - 1));
            }
            if kind != 'O' {
                open = Some((ty.to_string(), i));
            }
        }
    }
    if let Some((t, start)) = open {
        spans.push((t, start, tags.len() - 1));
    }
    Ok(spans)
}

/// Exact-match span precision, recall and F1 over aligned tag sequences.
pub fn chunk_f1<S: AsRef<str>>(preds: &[Vec<S>], golds: &[Vec<S>]) -> Result<ChunkScores> {
    check_aligned(preds.len(), golds.len())?;
    let (mut predicted, mut gold, mut correct) = (0, 0, 0);
    for (p, g) in preds.iter().zip(golds) {
        if p.len() != g.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} predicted tags for {} gold tags",
                p.len(),
                g.len()
            )));
        }
        let ps = bio_spans(p)?;
        let gs = bio_spans(g)?;
        correct += ps.iter().filter(|s| gs.contains(s)).count();
        predicted += ps.len();
        gold += gs.len();
    }
    let ratio = |a: usize, b: usize| {
        if b == 0 {
            0.0
        } else {
            100.0 * a as f64 / b as f64
        }
    };
    let precision = ratio(correct, predicted);
    let recall = ratio(correct, gold);
    let f1 = if predicted == 0 && gold == 0 {
        100.0
    } else if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(ChunkScores {
        precision,
        recall,
        f1,
        predicted,
        gold,
        correct,
    })
}

/// Counts with rows = gold, columns = predicted.
#[derive(Clone, Debug, PartialEq)]
pub struct Confusion {
    labels: LabelSet,
    counts: Vec<usize>,
}

impl Confusion {
    pub fn new(labels: LabelSet, preds: &[usize], golds: &[usize]) -> Result<Self> {
        check_aligned(preds.len(), golds.len())?;
        let k = labels.len();
        let mut counts = vec![0; k * k];
        for (&p, &g) in preds.iter().zip(golds) {
            if p >= k || g >= k {
                return Err(Error::DimensionMismatch(format!(
                    "label index out of range for {k} labels"
                )));
            }
            counts[g * k + p] += 1;
        }
        Ok(Self { labels, counts })
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn count(&self, gold: usize, pred: usize) -> usize {
        self.counts[gold * self.labels.len() + pred]
    }

    pub fn row_total(&self, gold: usize) -> usize {
        let k = self.labels.len();
        self.counts[gold * k..(gold + 1) * k].iter().sum()
    }

    /// Percentages of each gold row; `None` for labels absent from the gold data.
    pub fn row_percentages(&self) -> Vec<Option<Vec<f64>>> {
        let k = self.labels.len();
        (0..k)
            .map(|g| {
                let total = self.row_total(g);
                (total > 0).then(|| {
                    (0..k)
                        .map(|p| 100.0 * self.count(g, p) as f64 / total as f64)
                        .collect()
                })
            })
            .collect()
    }

    /// Per-label `(precision, recall)`; `None` where undefined.
    pub fn per_class(&self) -> Vec<(Option<f64>, Option<f64>)> {
        let k = self.labels.len();
        (0..k)
            .map(|y| {
                let tp = self.count(y, y) as f64;
                let predicted: usize = (0..k).map(|g| self.count(g, y)).sum();
                let gold = self.row_total(y);
                (
                    (predicted > 0).then(|| 100.0 * tp / predicted as f64),
                    (gold > 0).then(|| 100.0 * tp / gold as f64),
                )
            })
            .collect()
    }
}

impl fmt::Display for Confusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self
            .labels
            .names()
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max(6);
        write!(f, "{:width$}", "")?;
        for name in self.labels.names() {
            write!(f, " {name:>width$}")?;
        }
        writeln!(f)?;
        for (g, row) in self.row_percentages().into_iter().enumerate() {
            write!(f, "{:width$}", self.labels.name(g))?;
            match row {
                Some(cells) => {
                    for c in cells {
                        write!(f, " {c:>width$.1}")?;
                    }
                }
                None => {
                    for _ in 0..self.labels.len() {
                        write!(f, " {:>width$}", "n/a")?;
                    }
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Metrics for one model on one test set.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub name: String,
    pub accuracy: f64,
    pub confusion: Confusion,
    pub chunk: Option<ChunkScores>,
}

impl EvalReport {
    pub fn new(
        name: impl Into<String>,
        preds: &[usize],
        golds: &[usize],
        labels: LabelSet,
    ) -> Result<Self> {
        Ok(Self {
            name: name.into(),
            accuracy: accuracy(preds, golds)?,
            confusion: Confusion::new(labels, preds, golds)?,
            chunk: None,
        })
    }

    /// Relative error reduction against `baseline`.
    pub fn rre_vs(&self, baseline: &EvalReport) -> Result<f64> {
        rre(baseline.accuracy, self.accuracy)
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}: accuracy {:.2}", self.name, self.accuracy)?;
        if let Some(c) = &self.chunk {
            writeln!(
                f,
                "{}: chunk precision {:.2} recall {:.2} F1 {:.2}",
                self.name, c.precision, c.recall, c.f1
            )?;
        }
        for (y, (p, r)) in self.confusion.per_class().into_iter().enumerate() {
            let show = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.2}"));
            writeln!(
                f,
                "{}: class {} precision {} recall {}",
                self.name,
                self.confusion.labels().name(y),
                show(p),
                show(r)
            )?;
        }
        write!(f, "{}", self.confusion)
    }
}

/// Grid over `[-extent, extent]` with spacing `step` on both axes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridConfig {
    pub extent: f64,
    pub step: f64,
}

fn logistic_log_probs(s: f64) -> [f64; 2] {
    // log sigma(s) and log sigma(-s), stable for large |s|.
    let ln1pexp = |x: f64| {
        if x > 0.0 {
            x + (-x).exp().ln_1p()
        } else {
            x.exp().ln_1p()
        }
    };
    [-ln1pexp(-s), -ln1pexp(s)]
}

/// Bhattacharyya distance between the logistic distributions of two scores.
pub fn logistic_penalty(s1: f64, s2: f64) -> f64 {
    if s1 == s2 {
        // Identical distributions; avoids rounding residue on the diagonal.
        return 0.0;
    }
    bhattacharyya_log(&logistic_log_probs(s1), &logistic_log_probs(s2))
}

/// CSV with header `s1,s2,penalty`, rows in order of increasing `s1`, then `s2`.
pub fn loss_surface_csv(grid: GridConfig) -> Result<String> {
    if !(grid.extent >= 0.0 && grid.step > 0.0 && grid.extent.is_finite()) {
        return Err(Error::Config("grid needs extent >= 0 and step > 0".into()));
    }
    let n = (2.0 * grid.extent / grid.step + 1e-9).floor() as usize;
    let points: Vec<f64> = (0..=n)
        .map(|i| -grid.extent + i as f64 * grid.step)
        .collect();
    let mut out = String::from("s1,s2,penalty\n");
    for &s1 in &points {
        for &s2 in &points {
            // `Display` for f64 never uses a locale.
            let _ = writeln!(out, "{s1},{s2},{}", logistic_penalty(s1, s2));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_examples() {
        let golds: Vec<usize> = (0..100).map(|i| i % 3).collect();
        assert_eq!(accuracy(&golds, &golds).unwrap(), 100.0);
        let mut preds = golds.clone();
        for p in preds.iter_mut().take(26) {
            *p += 1;
        }
        assert!((accuracy(&preds, &golds).unwrap() - 74.0).abs() < 1e-12);
        let empty: [usize; 0] = [];
        assert!(matches!(accuracy(&empty, &empty), Err(Error::Empty(_))));
    }

    #[test]
    fn rre_examples() {
        assert_eq!(format_two_significant(rre(74.0, 76.4).unwrap()), "9.2");
        assert_eq!(format_two_significant(rre(73.2, 78.2).unwrap()), "19");
        assert_eq!(rre(80.0, 80.0).unwrap(), 0.0);
        assert_eq!(
            rre(100.0, 90.0).unwrap_err().to_string(),
            "zero baseline error"
        );
        assert_eq!(format_two_significant(9.96), "10");
        assert_eq!(format_two_significant(-0.0531), "-0.053");
    }

    #[test]
    fn chunk_examples() {
        let gold = vec![vec!["B-NP", "I-NP", "O", "B-NP"]];
        let s = chunk_f1(&gold, &gold).unwrap();
        assert_eq!(s.f1, 100.0);
        let pred = vec![vec!["B-NP", "I-NP", "O", "O"]];
        let s = chunk_f1(&pred, &gold).unwrap();
        assert_eq!((s.precision, s.recall), (100.0, 50.0));
        assert!((s.f1 - 66.67).abs() < 0.01);
        let miss = chunk_f1(&[vec!["O", "B-NP"]], &[vec!["B-NP", "O"]]).unwrap();
        assert_eq!(miss.f1, 0.0);
        assert!(matches!(
            chunk_f1(&[vec!["I-"]], &[vec!["O"]]),
            Err(Error::MalformedTag(_))
        ));
        assert!(matches!(
            chunk_f1(&[vec!["X"]], &[vec!["O"]]),
            Err(Error::MalformedTag(_))
        ));
    }

    #[test]
    fn spans_split_on_type_change() {
        let spans = bio_spans(&["B-NP", "I-VP", "I-VP", "O", "I-NP"]).unwrap();
        assert_eq!(
            spans,
            vec![
                ("NP".to_string(), 0, 0),
                ("VP".to_string(), 1, 2),
                ("NP".to_string(), 4, 4)
            ]
        );
    }

    #[test]
    fn confusion_rows() {
        let labels = LabelSet::numbered(4).unwrap();
        let golds = [0, 0, 1, 1, 2, 2, 2];
        let c = Confusion::new(labels.clone(), &golds, &golds).unwrap();
        let rows = c.row_percentages();
        assert_eq!(rows[0].as_ref().unwrap(), &vec![100.0, 0.0, 0.0, 0.0]);
        assert!(rows[3].is_none());
        assert!(c.to_string().contains("n/a"));

        let preds = [0, 1, 1, 1, 2, 0, 2];
        let c = Confusion::new(labels, &preds, &golds).unwrap();
        for row in c.row_percentages().into_iter().flatten() {
            assert!((row.iter().sum::<f64>() - 100.0).abs() < 1e-9);
        }
    }

    #[test]
    fn surface() {
        let p = logistic_penalty(9f64.ln(), -(9f64.ln()));
        assert!((p - 0.51083).abs() < 1e-5);
        assert_eq!(logistic_penalty(1.5, 1.5), 0.0);
        assert_eq!(logistic_penalty(0.3, -2.0), logistic_penalty(-2.0, 0.3));
        let csv = loss_surface_csv(GridConfig {
            extent: 1.0,
            step: 0.5,
        })
        .unwrap();
        assert_eq!(csv.lines().count(), 1 + 25);
        assert!(csv.starts_with("s1,s2,penalty\n-1,-1,0\n"));
    }
}
