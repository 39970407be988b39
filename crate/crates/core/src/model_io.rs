//! Plain-text model files and training checkpoints.
//!
//! A model file is a header followed by tab-separated weight rows:
//!
//! ```text
//! maxent
//! labels<TAB>A<TAB>B
//! features<TAB>F
//! prior_variance<TAB>10
//! weights
//! A<TAB>0<TAB>0.25
//! ```
//!
//! Only non-zero weights are listed. CRF files start with `crf` and add a
//! `transitions` block of `from<TAB>to<TAB>weight` rows. Weights are written
//! in shortest round-trip notation, so reading restores them exactly.

use std::fs::{self, File};
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use crate::crf::CrfParams;
use crate::data::FeatureIndex;
use crate::error::{Error, Result};
use crate::maxent::MaxentParams;
use crate::prob::LabelSet;
use crate::trainer::{SarState, TraceRow};

/// Models that have a text representation.
pub trait ModelText: Sized {
    fn write_text<W: Write>(&self, out: W) -> Result<()>;
    fn read_text<R: BufRead>(input: R) -> Result<Self>;

    fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_text(&mut out)?;
        out.flush()?;
        Ok(())
    }

    fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_text(crate::error::read_to_string(path.as_ref())?.as_bytes())
    }
}

fn bad(message: impl Into<String>) -> Error {
    Error::ModelFormat(message.into())
}

fn write_header<W: Write>(
    out: &mut W,
    kind: &str,
    labels: &LabelSet,
    features: usize,
    sigma2: f64,
) -> Result<()> {
    writeln!(out, "{kind}")?;
    writeln!(out, "labels\t{}", labels.names().join("\t"))?;
    writeln!(out, "features\t{features}")?;
    writeln!(out, "prior_variance\t{sigma2}")?;
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
}

impl<R: BufRead> Lines<R> {
    fn next(&mut self) -> Result<Option<String>> {
        self.inner.next().transpose().map_err(Error::from)
    }

    fn expect(&mut self, what: &str) -> Result<String> {
        self.next()?.ok_or_else(|| bad(format!("missing {what}")))
    }

    fn field<'a>(line: &'a str, key: &str) -> Result<&'a str> {
        line.strip_prefix(key)
            .and_then(|r| r.strip_prefix('\t'))
            .ok_or_else(|| bad(format!("expected `{key}` line")))
    }
}

fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse().map_err(|_| bad(format!("bad number `{s}`")))
}

struct Header {
    labels: LabelSet,
    features: usize,
    prior_variance: f64,
}

fn read_header<R: BufRead>(lines: &mut Lines<R>, kind: &str) -> Result<Header> {
    if lines.expect("model kind")? != kind {
        return Err(bad(format!("not a {kind} model")));
    }
    let labels = LabelSet::new(Lines::<R>::field(&lines.expect("labels")?, "labels")?.split('\t'))?;
    let features = parse_num(Lines::<R>::field(&lines.expect("features")?, "features")?)?;
    let prior_variance = parse_num(Lines::<R>::field(
        &lines.expect("prior variance")?,
        "prior_variance",
    )?)?;
    if lines.expect("weights")? != "weights" {
        return Err(bad("expected `weights`"));
    }
    Ok(Header {
        labels,
        features,
        prior_variance,
    })
}

/// Reads `label<TAB>index<TAB>weight` rows into `target` (K x `width`) until
/// `stop` or end of input; returns whether `stop` was seen.
fn read_rows<R: BufRead>(
    lines: &mut Lines<R>,
    labels: &LabelSet,
    width: usize,
    target: &mut [f64],
    stop: Option<&str>,
    column: impl Fn(&str) -> Result<usize>,
) -> Result<bool> {
    while let Some(line) = lines.next()? {
        if Some(line.as_str()) == stop {
            return Ok(true);
        }
        let parts: Vec<&str> = line.split('\t').collect();
        let [label, col, w] = parts[..] else {
            return Err(bad(format!("bad weight row `{line}`")));
        };
        let y = labels
            .index_of(label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
        let c = column(col)?;
        if c >= width {
            return Err(bad(format!("column {c} out of range")));
        }
        target[y * width + c] = parse_num(w)?;
    }
    Ok(false)
}

fn write_rows<W: Write>(
    out: &mut W,
    labels: &LabelSet,
    width: usize,
    weights: &[f64],
    col: impl Fn(usize) -> String,
) -> Result<()> {
    for (i, &w) in weights.iter().enumerate() {
        if w != 0.0 {
            writeln!(out, "{}\t{}\t{w}", labels.name(i / width), col(i % width))?;
        }
    }
    Ok(())
}

impl ModelText for MaxentParams {
    fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        write_header(
            &mut out,
            "maxent",
            self.labels(),
            self.num_features(),
            self.prior_variance(),
        )?;
        writeln!(out, "weights")?;
        write_rows(
            &mut out,
            self.labels(),
            self.num_features(),
            self.weights(),
            |c| c.to_string(),
        )
    }

    fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = Lines {
            inner: input.lines(),
        };
        let h = read_header(&mut lines, "maxent")?;
        let mut weights = vec![0.0; h.labels.len() * h.features];
        read_rows(
            &mut lines,
            &h.labels,
            h.features,
            &mut weights,
            None,
            parse_num,
        )?;
        MaxentParams::from_weights(h.labels, h.features, weights, h.prior_variance)
    }
}

impl ModelText for CrfParams {
    fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        let labels = self.labels();
        write_header(
            &mut out,
            "crf",
            labels,
            self.num_features(),
            self.prior_variance(),
        )?;
        writeln!(out, "weights")?;
        write_rows(
            &mut out,
            labels,
            self.num_features(),
            self.emission(),
            |c| c.to_string(),
        )?;
        writeln!(out, "transitions")?;
        write_rows(&mut out, labels, labels.len(), self.transition(), |c| {
            labels.name(c).to_string()
        })
    }

    fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = Lines {
            inner: input.lines(),
        };
        let h = read_header(&mut lines, "crf")?;
        let k = h.labels.len();
        let mut emission = vec![0.0; k * h.features];
        if !read_rows(
            &mut lines,
            &h.labels,
            h.features,
            &mut emission,
            Some("transitions"),
            parse_num,
        )? {
            return Err(bad("missing `transitions` block"));
        }
        let mut transition = vec![0.0; k * k];
        let labels = h.labels.clone();
        read_rows(&mut lines, &h.labels, k, &mut transition, None, |name| {
            labels
                .index_of(name)
                .ok_or_else(|| Error::UnknownLabel(name.to_string()))
        })?;
        CrfParams::from_weights(h.labels, h.features, emission, transition, h.prior_variance)
    }
}

/// Header of the objective trace CSV.
pub const TRACE_HEADER: &str = "iteration,L1,L2,klterm,total";

pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut out = format!("{TRACE_HEADER}\n");
    for row in trace {
        let p = &row.parts;
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.iteration, p.l1, p.l2, p.kl_term, p.total
        ));
    }
    out
}

/// File names inside a checkpoint directory.
pub mod checkpoint {
    pub const VIEW_MODELS: [&str; 2] = ["view1.model", "view2.model"];
    pub const VIEW_FEATURES: [&str; 2] = ["view1.features", "view2.features"];
    pub const TRACE: &str = "trace.csv";
}

/// Writes both models, both feature maps and the trace into `dir`.
pub fn save_checkpoint<M: ModelText>(
    dir: &Path,
    state: &SarState<M>,
    features: &[FeatureIndex; 2],
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let models = [&state.params1, &state.params2];
    for v in 0..2 {
        models[v].save(dir.join(checkpoint::VIEW_MODELS[v]))?;
        let mut out = BufWriter::new(File::create(dir.join(checkpoint::VIEW_FEATURES[v]))?);
        features[v].write(&mut out)?;
        out.flush()?;
    }
    fs::write(dir.join(checkpoint::TRACE), trace_csv(&state.trace))?;
    Ok(())
}

/// Loads the two models and feature maps of a checkpoint.
pub fn load_checkpoint<M: ModelText>(dir: &Path) -> Result<([M; 2], [FeatureIndex; 2])> {
    let m1 = M::load(dir.join(checkpoint::VIEW_MODELS[0]))?;
    let m2 = M::load(dir.join(checkpoint::VIEW_MODELS[1]))?;
    let read =
        |name: &str| FeatureIndex::read(crate::error::read_to_string(&dir.join(name))?.as_bytes());
    let f1 = read(checkpoint::VIEW_FEATURES[0])?;
    let f2 = read(checkpoint::VIEW_FEATURES[1])?;
    Ok(([m1, m2], [f1, f2]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels() -> LabelSet {
        LabelSet::new(["neg", "pos", "mid"]).unwrap()
    }

    #[test]
    fn maxent_round_trip_is_exact() {
        let w: Vec<f64> = (0..12)
            .map(|i| {
                if i % 5 == 0 {
                    0.0
                } else {
                    (i as f64).sin() / 3.0
                }
            })
            .collect();
        let m = MaxentParams::from_weights(labels(), 4, w, 2.5).unwrap();
        let mut buf = Vec::new();
        m.write_text(&mut buf).unwrap();
        assert_eq!(MaxentParams::read_text(&buf[..]).unwrap(), m);
    }

    #[test]
    fn crf_round_trip_is_exact() {
        let e: Vec<f64> = (0..9).map(|i| (i as f64 * 0.7).cos() * 1e-3).collect();
        let t: Vec<f64> = (0..9).map(|i| (i as f64) - 4.0).collect();
        let m = CrfParams::from_weights(labels(), 3, e, t, 10.0).unwrap();
        let mut buf = Vec::new();
        m.write_text(&mut buf).unwrap();
        assert_eq!(CrfParams::read_text(&buf[..]).unwrap(), m);
        assert!(MaxentParams::read_text(&buf[..]).is_err());
    }

    #[test]
    fn rejects_garbage() {
        let text = "maxent\nlabels\ta\tb\nfeatures\t2\nprior_variance\t1\nweights\nc\t0\t1\n";
        assert!(matches!(
            MaxentParams::read_text(text.as_bytes()),
            Err(Error::UnknownLabel(_))
        ));
        let text = "maxent\nlabels\ta\tb\nfeatures\t2\nprior_variance\t1\nweights\na\t5\t1\n";
        assert!(matches!(
            MaxentParams::read_text(text.as_bytes()),
            Err(Error::ModelFormat(_))
        ));
    }
}
