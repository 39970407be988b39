use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use sar_core::agreement::{DualConfig, LabelMapping};
use sar_core::crf::CrfParams;
use sar_core::data::{
    collapse_labels, random_feature_split, read_flat, read_mapping, read_single_view,
    synth_two_view, write_flat, FlatCorpus, GenConfig,
};
use sar_core::eval::{format_two_significant, loss_surface_csv, rre, EvalReport, GridConfig};
use sar_core::maxent::MaxentParams;
use sar_core::model_io::save_checkpoint;
use sar_core::optimize::OptConfig;
use sar_core::trainer::{train_sar, train_supervised, SarConfig, SarData, SarState};

use crate::args::{
    CollapseArgs, Command, DataArgs, EvalArgs, Format, Predictor, SplitArgs, SurfaceArgs,
    SynthArgs, TrainSarArgs,
};
use crate::pipeline::{
    evaluate, load_dir, mean_sd, model_kind, report_csv_rows, Loaded, Prepared, Settings, Task,
    MAPPING_FILE, REPORT_HEADER, SETTINGS_FILE,
};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::TrainSupervised(a) => match a.data.format {
            Format::Flat => supervised::<MaxentParams>(&a.data),
            Format::Conll => supervised::<CrfParams>(&a.data),
        },
        Command::TrainSar(a) => match a.data.format {
            Format::Flat => sar::<MaxentParams>(&a),
            Format::Conll => sar::<CrfParams>(&a),
        },
        Command::Agree0Eval(a) => {
            eval_any(&a, &[Predictor::View1, Predictor::View2, Predictor::Agree])
        }
        Command::Eval(a) => eval_any(&a, &[a.predict]),
        Command::SynthGen(a) => synth(&a),
        Command::SplitViews(a) => split(&a),
        Command::CollapseLabels(a) => collapse(&a),
        Command::LossSurface(a) => surface(&a),
    }
}

fn mapping_of(data: &DataArgs) -> Result<Option<LabelMapping>> {
    Ok(data.mapping.as_deref().map(read_mapping).transpose()?)
}

fn opt_config(data: &DataArgs) -> OptConfig {
    OptConfig {
        tolerance: data.tolerance,
        max_iterations: data.max_iterations,
        ..OptConfig::default()
    }
}

fn initial<M: Task>(prep: &Prepared<M>, data: &DataArgs) -> [M; 2] {
    [
        M::zeros(
            prep.labels[0].clone(),
            prep.features[0].len(),
            data.sigma2_1,
        ),
        M::zeros(
            prep.labels[1].clone(),
            prep.features[1].len(),
            data.sigma2_2,
        ),
    ]
}

fn write_flat_file(corpus: &FlatCorpus, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_flat(corpus, &mut out)?;
    out.flush()?;
    Ok(())
}

fn save_run<M: Task>(
    data: &DataArgs,
    state: &SarState<M>,
    prep: &Prepared<M>,
    extra: &[(&str, String)],
) -> Result<()> {
    save_checkpoint(&data.out, state, &prep.features)?;
    fs::write(
        data.out.join(SETTINGS_FILE),
        Settings::from_args(data).to_text(extra),
    )?;
    if let Some(m) = &data.mapping {
        fs::copy(m, data.out.join(MAPPING_FILE))?;
    }
    Ok(())
}

/// Scores a freshly trained run on `--test`, if given.
fn test_run<M: Task>(data: &DataArgs, dual: &DualConfig, report: Option<&Path>) -> Result<()> {
    let Some(test) = &data.test else {
        return Ok(());
    };
    let mut loaded = load_dir::<M>(&data.out)?;
    let reports = score(
        &mut loaded,
        test,
        &[Predictor::View1, Predictor::View2, Predictor::Agree],
        dual,
    )?;
    for r in &reports {
        print!("{r}");
    }
    if let Some(path) = report {
        let mut csv = format!("{REPORT_HEADER}\n");
        for r in &reports {
            report_csv_rows(&data.out.display().to_string(), r, &mut csv);
        }
        fs::write(path, csv)?;
    }
    Ok(())
}

fn supervised<M: Task>(data: &DataArgs) -> Result<()> {
    let mapping = mapping_of(data)?;
    let prep = M::prepare(data, mapping.as_ref())?;
    let [init1, init2] = initial(&prep, data);
    let opt = opt_config(data);
    let (r1, r2) = rayon::join(
        || train_supervised(&init1, &prep.labeled1, data.sigma2_1, &opt),
        || train_supervised(&init2, &prep.labeled2, data.sigma2_2, &opt),
    );
    let ((m1, rep1), (m2, rep2)) = (r1?, r2?);
    for (v, rep) in [(1, &rep1), (2, &rep2)] {
        println!(
            "view{v}: objective {:.6} after {} iterations (converged: {})",
            rep.objective, rep.iterations, rep.converged
        );
    }
    let state = SarState {
        params1: m1,
        params2: m2,
        trace: Vec::new(),
        estep: Vec::new(),
    };
    save_run(data, &state, &prep, &[])?;
    test_run::<M>(data, &DualConfig::default(), None)
}

fn sar<M: Task>(args: &TrainSarArgs) -> Result<()> {
    let data = &args.data;
    let mapping = mapping_of(data)?;
    let prep = M::prepare(data, mapping.as_ref())?;
    let [init1, init2] = initial(&prep, data);
    let opt = opt_config(data);
    let config = SarConfig {
        c: args.c,
        balance: args.balance,
        iterations: args.iterations,
        prior_variance: [data.sigma2_1, data.sigma2_2],
        optimizer: [opt.clone(), opt],
        dual: DualConfig {
            max_iterations: args.dual_max_iterations,
            tolerance: args.dual_tolerance,
            ..DualConfig::default()
        },
        early_stop: args.early_stop,
        monotonicity_tolerance: args.monotonicity_tolerance,
        seed: args.seed.unwrap_or(0),
    };
    let sar_data = SarData {
        labeled1: &prep.labeled1,
        labeled2: &prep.labeled2,
        unlabeled: &prep.unlabeled,
        mapping: mapping.as_ref(),
    };
    let state = train_sar(&init1, &init2, &sar_data, &config)?;
    println!("iteration,L1,L2,klterm,total");
    for row in &state.trace {
        let p = row.parts;
        println!(
            "{},{},{},{},{}",
            row.iteration, p.l1, p.l2, p.kl_term, p.total
        );
    }
    for s in &state.estep {
        if s.unconverged > 0 {
            eprintln!(
                "warning: iteration {}: {} of {} projections did not converge",
                s.iteration, s.unconverged, s.instances
            );
        }
    }
    let mut extra = vec![
        ("c", config.c.to_string()),
        ("balance", config.balance.to_string()),
        ("iterations", config.iterations.to_string()),
    ];
    if let Some(seed) = args.seed {
        extra.push(("seed", seed.to_string()));
    }
    save_run(data, &state, &prep, &extra)?;
    test_run::<M>(data, &config.dual, args.report.as_deref())
}

fn score<M: Task>(
    loaded: &mut Loaded<M>,
    test: &Path,
    predictors: &[Predictor],
    dual: &DualConfig,
) -> Result<Vec<EvalReport>> {
    let labels = loaded.models[0].labels().clone();
    let set = M::load_test(test, &loaded.settings, &labels, &mut loaded.features)?;
    predictors
        .iter()
        .map(|&p| Ok(evaluate(loaded, &set, p, dual)?))
        .collect()
}

fn eval_any(args: &EvalArgs, predictors: &[Predictor]) -> Result<()> {
    match model_kind(&args.model_dir[0])?.as_str() {
        "maxent" => eval_dirs::<MaxentParams>(args, predictors),
        "crf" => eval_dirs::<CrfParams>(args, predictors),
        other => Err(CliError::Lib(sar_core::Error::ModelFormat(format!(
            "unknown model kind `{other}`"
        )))),
    }
}

fn eval_dirs<M: Task>(args: &EvalArgs, predictors: &[Predictor]) -> Result<()> {
    let dual = DualConfig::default();
    let mut csv = format!("{REPORT_HEADER}\n");
    let mut accuracies = vec![Vec::new(); predictors.len()];
    for dir in &args.model_dir {
        let mut loaded = load_dir::<M>(dir)?;
        let reports = score(&mut loaded, &args.test, predictors, &dual)?;
        println!("run {}", dir.display());
        for (i, r) in reports.iter().enumerate() {
            print!("{r}");
            accuracies[i].push(r.accuracy);
            report_csv_rows(&dir.display().to_string(), r, &mut csv);
            if let Some(base) = args.baseline_acc {
                println!(
                    "{}: relative error reduction vs {base}: {}%",
                    r.name,
                    format_two_significant(rre(base, r.accuracy)?)
                );
            }
        }
        if reports.len() == 3 {
            let best = reports[0].accuracy.max(reports[1].accuracy);
            if best < 100.0 {
                println!(
                    "agree: relative error reduction vs best view: {}%",
                    format_two_significant(rre(best, reports[2].accuracy)?)
                );
            }
        }
    }
    if args.model_dir.len() > 1 {
        for (p, accs) in predictors.iter().zip(&accuracies) {
            let (mean, sd) = mean_sd(accs);
            println!(
                "{p}: mean accuracy {mean:.2} ± {sd:.2} over {} runs",
                accs.len()
            );
        }
    }
    if let Some(path) = &args.report {
        fs::write(path, csv)?;
    }
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<()> {
    let config = GenConfig {
        num_labels: args.labels,
        features_per_view: args.features,
        active_per_view: args.active,
        noise: [args.noise1, args.noise2],
        labeled: args.labeled,
        unlabeled: args.unlabeled,
        test: args.test,
    };
    let corpus = synth_two_view(&config, args.seed)?;
    fs::create_dir_all(&args.out)?;
    let mut train = corpus.labeled;
    train.records.extend(corpus.unlabeled.records);
    write_flat_file(&train, &args.out.join("train.flat"))?;
    write_flat_file(&corpus.test, &args.out.join("test.flat"))?;
    Ok(())
}

fn split(args: &SplitArgs) -> Result<()> {
    let records = read_single_view(&args.input)?;
    write_flat_file(&random_feature_split(&records, args.seed), &args.output)
}

fn collapse(args: &CollapseArgs) -> Result<()> {
    let corpus = read_flat(&args.input)?;
    let mapping = read_mapping(&args.mapping)?;
    write_flat_file(&collapse_labels(&corpus, &mapping)?, &args.output)
}

fn surface(args: &SurfaceArgs) -> Result<()> {
    let csv = loss_surface_csv(GridConfig {
        extent: args.extent,
        step: args.step,
    })?;
    match &args.output {
        Some(path) => fs::write(path, csv)?,
        None => std::io::stdout().write_all(csv.as_bytes())?,
    }
    Ok(())
}
