use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sar_core::data::ColumnSpec;

const REPORT_SCHEMA: &str = "\
Report CSV (--report): header `run,model,metric,label,value`.
  run     model directory the row belongs to
  model   view1, view2 or agree
  metric  accuracy | chunk_precision | chunk_recall | chunk_f1 | precision | recall | confusion
  label   empty for corpus-level metrics; the label for precision/recall;
          `gold>predicted` for confusion cells (percent of the gold row)
  value   a percentage, or n/a when undefined
Trace CSV (trace.csv in the output directory): `iteration,L1,L2,klterm,total`,
one row per EM round, row 0 holding the supervised fits.";

#[derive(Parser, Debug)]
#[command(
    name = "sar",
    version,
    about = "Two-view semi-supervised training by agreement regularization",
    long_about = "Two-view semi-supervised training by agreement regularization.\n\n\
        Any subcommand accepts --config FILE with `key = value` lines naming its long flags; \
        flags given on the command line override the file.\n\
        SAR_THREADS sets the worker thread count.\n\
        Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.",
    after_long_help = REPORT_SCHEMA
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit each view on labeled data alone.
    #[command(args_override_self = true)]
    TrainSupervised(TrainSupervisedArgs),
    /// Fit both views jointly with the agreement penalty on unlabeled data.
    #[command(args_override_self = true, after_long_help = REPORT_SCHEMA)]
    TrainSar(TrainSarArgs),
    /// Combine two independently trained views at prediction time and compare with each view.
    #[command(args_override_self = true, after_long_help = REPORT_SCHEMA)]
    Agree0Eval(EvalArgs),
    /// Evaluate saved models on labeled test data.
    #[command(args_override_self = true, after_long_help = REPORT_SCHEMA)]
    Eval(EvalArgs),
    /// Generate a synthetic two-view corpus.
    #[command(args_override_self = true)]
    SynthGen(SynthArgs),
    /// Split a single-view corpus (`label<TAB>features`) into two views at random.
    #[command(args_override_self = true)]
    SplitViews(SplitArgs),
    /// Rewrite the labels of a flat corpus through a label mapping.
    #[command(args_override_self = true)]
    CollapseLabels(CollapseArgs),
    /// Bhattacharyya penalty between two logistic predictions over a score grid, as CSV.
    #[command(args_override_self = true)]
    LossSurface(SurfaceArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// `label<TAB>view1<TAB>view2` lines; maximum-entropy views.
    Flat,
    /// Whitespace columns with blank-line sentence breaks; linear-chain CRF views.
    Conll,
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Flat => "flat",
            Format::Conll => "conll",
        })
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Self as ValueEnum>::from_str(s, false)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Predictor {
    View1,
    View2,
    /// Agreement projection of the two views, decoded in view 1's labels.
    Agree,
}

impl fmt::Display for Predictor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Predictor::View1 => "view1",
            Predictor::View2 => "view2",
            Predictor::Agree => "agree",
        })
    }
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// `key = value` file of flag defaults.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Flat)]
    pub format: Format,
    /// Labeled training data; flat files may also hold unlabeled `?` rows.
    #[arg(long, value_name = "FILE")]
    pub train: PathBuf,
    /// Extra unlabeled data in the same format; any labels are ignored.
    #[arg(long, value_name = "FILE")]
    pub unlabeled: Option<PathBuf>,
    /// Labeled test data, evaluated after training.
    #[arg(long, value_name = "FILE")]
    pub test: Option<PathBuf>,
    /// `fine<TAB>coarse` file; view 2 then predicts the coarse labels.
    #[arg(long, value_name = "FILE")]
    pub mapping: Option<PathBuf>,
    /// Context window of the CoNLL context view.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(usize))]
    pub window: usize,
    /// Add character trigrams to the CoNLL content view.
    #[arg(long)]
    pub char_trigrams: bool,
    #[arg(long, default_value_t = 0)]
    pub word_col: usize,
    /// POS column; a negative value means none.
    #[arg(long, default_value_t = 1, allow_negative_numbers = true)]
    pub pos_col: i64,
    /// Tag column; a negative value means none.
    #[arg(long, default_value_t = 2, allow_negative_numbers = true)]
    pub tag_col: i64,
    /// Prior variance of view 1.
    #[arg(long, default_value_t = 10.0)]
    pub sigma2_1: f64,
    /// Prior variance of view 2.
    #[arg(long, default_value_t = 10.0)]
    pub sigma2_2: f64,
    /// Gradient-norm tolerance of the M-step optimizer.
    #[arg(long, default_value_t = 1e-5)]
    pub tolerance: f64,
    /// Iteration cap of the M-step optimizer.
    #[arg(long, default_value_t = 500)]
    pub max_iterations: usize,
    /// Output directory for models, feature maps and settings.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

impl DataArgs {
    pub fn columns(&self) -> ColumnSpec {
        let col = |c: i64| usize::try_from(c).ok();
        ColumnSpec {
            word: self.word_col,
            pos: col(self.pos_col),
            tag: col(self.tag_col),
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct TrainSupervisedArgs {
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Args, Debug, Clone)]
pub struct TrainSarArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Weight of the agreement term.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub c: f64,
    /// Give the unlabeled set the same total weight as each labeled set (c = 1).
    #[arg(long)]
    pub balance: bool,
    /// EM rounds.
    #[arg(long, default_value_t = 10)]
    pub iterations: usize,
    /// Stop once a round improves the objective by less than this.
    #[arg(long)]
    pub early_stop: Option<f64>,
    /// Largest tolerated objective increase per round.
    #[arg(long, default_value_t = 1e-4)]
    pub monotonicity_tolerance: f64,
    /// Residual tolerance of the chain partial-agreement dual solver.
    #[arg(long, default_value_t = 1e-6)]
    pub dual_tolerance: f64,
    #[arg(long, default_value_t = 200)]
    pub dual_max_iterations: usize,
    /// Recorded in the output settings.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the evaluation report CSV here.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    /// `key = value` file of flag defaults.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Model directories, comma-separated (one per run, e.g. per seed).
    #[arg(long, value_name = "DIR", value_delimiter = ',', required = true)]
    pub model_dir: Vec<PathBuf>,
    /// Labeled test data in the format the models were trained on.
    #[arg(long, value_name = "FILE")]
    pub test: PathBuf,
    /// Predictor to score (eval only; agree0-eval scores all three).
    #[arg(long, value_enum, default_value_t = Predictor::Agree)]
    pub predict: Predictor,
    /// Baseline accuracy (percent) for the relative error reduction.
    #[arg(long)]
    pub baseline_acc: Option<f64>,
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SynthArgs {
    /// `key = value` file of flag defaults.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Required: seeds the generator.
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub labels: usize,
    /// Features per view.
    #[arg(long, default_value_t = 600)]
    pub features: usize,
    /// Active features per example and view.
    #[arg(long, default_value_t = 10)]
    pub active: usize,
    /// Probability that a view-1 feature comes from a wrong class.
    #[arg(long, default_value_t = 0.2)]
    pub noise1: f64,
    #[arg(long, default_value_t = 0.2)]
    pub noise2: f64,
    #[arg(long, default_value_t = 20)]
    pub labeled: usize,
    #[arg(long, default_value_t = 500)]
    pub unlabeled: usize,
    #[arg(long, default_value_t = 1000)]
    pub test: usize,
    /// Writes train.flat (labeled then unlabeled rows) and test.flat here.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct SplitArgs {
    /// `key = value` file of flag defaults.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Required: seeds the feature partition.
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub output: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct CollapseArgs {
    /// `key = value` file of flag defaults.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub mapping: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub output: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct SurfaceArgs {
    /// `key = value` file of flag defaults.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Scores range over [-extent, extent].
    #[arg(long, default_value_t = 5.0)]
    pub extent: f64,
    #[arg(long, default_value_t = 0.25)]
    pub step: f64,
    /// Output file; standard output when absent.
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}
