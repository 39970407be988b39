//! Whitespace-column sequence corpora with blank-line sentence breaks.

use std::path::Path;

use crate::crf::ChainExample;
use crate::error::{Error, Result};
use crate::prob::LabelSet;

use super::{label_set_of, FeatureIndex};

/// Zero-based column positions. `tag: None` reads an unlabeled corpus.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ColumnSpec {
    pub word: usize,
    pub pos: Option<usize>,
    pub tag: Option<usize>,
}

impl ColumnSpec {
    /// `word POS chunk` as in CoNLL-2000.
    pub const WORD_POS_TAG: Self = Self {
        word: 0,
        pos: Some(1),
        tag: Some(2),
    };

    fn max_column(&self) -> usize {
        [Some(self.word), self.pos, self.tag]
            .into_iter()
            .flatten()
            .max()
            .unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub word: String,
    pub pos: Option<String>,
    pub tag: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn tags(&self) -> Option<Vec<&str>> {
        self.tokens.iter().map(|t| t.tag.as_deref()).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SeqCorpus {
    pub sentences: Vec<Sentence>,
}

impl SeqCorpus {
    /// Sorted distinct tags.
    pub fn label_set(&self) -> Result<LabelSet> {
        label_set_of(
            self.sentences
                .iter()
                .flat_map(|s| s.tokens.iter().filter_map(|t| t.tag.as_deref())),
        )
    }
}

/// Parses column text. Every token line of the file must have the same
/// number of columns. `-DOCSTART-` lines act as sentence breaks.
pub fn parse_conll(text: &str, path: &Path, spec: ColumnSpec) -> Result<SeqCorpus> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut sentences = Vec::new();
    let mut current = Vec::new();
    let mut width = None;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() || cols[0] == "-DOCSTART-" {
            if !current.is_empty() {
                sentences.push(Sentence {
                    tokens: std::mem::take(&mut current),
                });
            }
            continue;
        }
        match width {
            None => {
                if cols.len() <= spec.max_column() {
                    return Err(err(
                        lineno,
                        format!(
                            "need at least {} columns, found {}",
                            spec.max_column() + 1,
                            cols.len()
                        ),
                    ));
                }
                width = Some(cols.len());
            }
            Some(w) if w != cols.len() => {
                return Err(err(
                    lineno,
                    format!("expected {w} columns, found {}", cols.len()),
                ));
            }
            _ => {}
        }
        current.push(Token {
            word: cols[spec.word].to_string(),
            pos: spec.pos.map(|c| cols[c].to_string()),
            tag: spec.tag.map(|c| cols[c].to_string()),
        });
    }
    if !current.is_empty() {
        sentences.push(Sentence { tokens: current });
    }
    Ok(SeqCorpus { sentences })
}

pub fn read_conll(path: impl AsRef<Path>, spec: ColumnSpec) -> Result<SeqCorpus> {
    let path = path.as_ref();
    parse_conll(&crate::error::read_to_string(path)?, path, spec)
}

/// Feature templates for the content and context views.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ViewTemplate {
    /// Neighbors on each side seen by the context view.
    pub window: usize,
    /// Add character trigrams of the padded word to the content view.
    pub char_trigrams: bool,
}

impl Default for ViewTemplate {
    fn default() -> Self {
        Self {
            window: 1,
            char_trigrams: false,
        }
    }
}

const BOS: &str = "<BOS>";
const EOS: &str = "<EOS>";

fn push_unique(out: &mut Vec<(String, f64)>, name: String) {
    if !out.iter().any(|(n, _)| *n == name) {
        out.push((name, 1.0));
    }
}

/// Per-token `[content, context]` feature lists.
///
/// Content: `w=`, `p=` and optionally `c3=` trigrams of the token itself.
/// Context: `w[d]=` and `p[d]=` for offsets `d` in `-window..=window`,
/// excluding 0, padded with `<BOS>`/`<EOS>`.
pub fn content_context_views(
    sentence: &Sentence,
    template: ViewTemplate,
) -> Vec<[Vec<(String, f64)>; 2]> {
    let n = sentence.tokens.len() as isize;
    let w = template.window as isize;
    (0..n)
        .map(|t| {
            let tok = &sentence.tokens[t as usize];
            let mut content = vec![(format!("w={}", tok.word), 1.0)];
            if let Some(p) = &tok.pos {
                content.push((format!("p={p}"), 1.0));
            }
            if template.char_trigrams {
                let chars: Vec<char> = std::iter::once('^')
                    .chain(tok.word.chars())
                    .chain(std::iter::once('$'))
                    .collect();
                for g in chars.windows(3) {
                    push_unique(&mut content, format!("c3={}", g.iter().collect::<String>()));
                }
            }
            let mut context = Vec::new();
            for d in (-w..=w).filter(|&d| d != 0) {
                let j = t + d;
                let (word, pos) = if j < 0 {
                    (BOS, Some(BOS))
                } else if j >= n {
                    (EOS, Some(EOS))
                } else {
                    let o = &sentence.tokens[j as usize];
                    (o.word.as_str(), o.pos.as_deref())
                };
                context.push((format!("w[{d:+}]={word}"), 1.0));
                if tok.pos.is_some() {
                    if let Some(p) = pos {
                        context.push((format!("p[{d:+}]={p}"), 1.0));
                    }
                }
            }
            [content, context]
        })
        .collect()
}

/// Encodes sentences into one chain per view. Sentences without a full tag
/// column get no gold sequence; a tag outside `labels` is an error.
pub fn encode_sequences(
    corpus: &SeqCorpus,
    template: ViewTemplate,
    labels: &LabelSet,
    indices: &mut [FeatureIndex; 2],
    grow: bool,
) -> Result<[Vec<ChainExample>; 2]> {
    let mut out: [Vec<ChainExample>; 2] = [Vec::new(), Vec::new()];
    for sentence in &corpus.sentences {
        let gold = sentence
            .tags()
            .map(|tags| {
                tags.iter()
                    .map(|t| {
                        labels
                            .index_of(t)
                            .ok_or_else(|| Error::UnknownLabel(t.to_string()))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .transpose()?;
        let feats = content_context_views(sentence, template);
        for v in 0..2 {
            let positions = feats
                .iter()
                .map(|f| indices[v].encode(&f[v], grow))
                .collect::<Result<Vec<_>>>()?;
            out[v].push(ChainExample::new(positions, gold.clone())?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<SeqCorpus> {
        parse_conll(text, Path::new("<memory>"), ColumnSpec::WORD_POS_TAG)
    }

    #[test]
    fn sentences_split_on_blank_lines() {
        let c = parse("He PRP B-NP\nruns VBZ B-VP\n\n\nOk UH O\n\n\n").unwrap();
        assert_eq!(c.sentences.len(), 2);
        assert_eq!(c.sentences[0].tokens.len(), 2);
        assert_eq!(c.sentences[1].tokens[0].tag.as_deref(), Some("O"));
    }

    #[test]
    fn ragged_columns_are_rejected_with_line() {
        let err = parse("He PRP B-NP\nruns VBZ\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn unlabeled_column_spec() {
        let spec = ColumnSpec {
            word: 0,
            pos: Some(1),
            tag: None,
        };
        let c = parse_conll("He PRP\nruns VBZ\n", Path::new("x"), spec).unwrap();
        assert_eq!(c.sentences[0].tags(), None);
    }

    #[test]
    fn view_features() {
        let c = parse("He PRP B-NP\nruns VBZ B-VP\n").unwrap();
        let views = content_context_views(&c.sentences[0], ViewTemplate::default());
        let names = |v: &[(String, f64)]| v.iter().map(|f| f.0.clone()).collect::<Vec<_>>();
        assert_eq!(names(&views[0][0]), ["w=He", "p=PRP"]);
        assert_eq!(
            names(&views[0][1]),
            ["w[-1]=<BOS>", "p[-1]=<BOS>", "w[+1]=runs", "p[+1]=VBZ"]
        );
        let tri = content_context_views(
            &c.sentences[0],
            ViewTemplate {
                window: 1,
                char_trigrams: true,
            },
        );
        assert!(names(&tri[0][0]).contains(&"c3=^He".to_string()));
        assert!(names(&tri[0][0]).contains(&"c3=He$".to_string()));
    }

    #[test]
    fn encoding_checks_tags() {
        let c = parse("He PRP B-NP\nruns VBZ B-VP\n").unwrap();
        let labels = c.label_set().unwrap();
        let mut idx = [FeatureIndex::new(), FeatureIndex::new()];
        let [a, b] =
            encode_sequences(&c, ViewTemplate::default(), &labels, &mut idx, true).unwrap();
        assert_eq!(a[0].gold(), Some(&[0usize, 1][..]));
        assert_eq!(b[0].len(), 2);
        let other = LabelSet::new(["B-NP", "O"]).unwrap();
        let err =
            encode_sequences(&c, ViewTemplate::default(), &other, &mut idx, true).unwrap_err();
        assert!(matches!(err, Error::UnknownLabel(_)));
    }
}
