use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use cognate::baselines::BaselineMethod;
use cognate::evaluation::{
    self, default_ablation_grid, render_table, split, BaselineSystem, Dataset, EvalReport, ExperimentOptions,
    PipelineSpec, System, TrainedPipeline, TuningGrid, DEFAULT_FOLDS, DEFAULT_SEED,
};
use cognate::model::ModelFile;
use cognate::ranking::{read_lexicon, LexiconIndex, Ranked};
use cognate::{shingle, Error, RankFunction, Result, ShingleMode, ShinglerConfig, Word};

#[derive(Parser)]
#[command(name = "cognate", version, about = "Cognate detection and retrieval")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the shingle set of a word, one token per line
    Shingle {
        word: String,
        #[command(flatten)]
        shingler: ShinglerArgs,
    },
    /// Tune and train a model on the training part of a dataset
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Label a word pair as cognate or non-cognate
    Classify {
        source: String,
        target: String,
        #[command(flatten)]
        system: SystemArgs,
        /// Dataset whose training split fits a baseline's threshold
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Rank a lexicon against a query word
    Rank {
        word: String,
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Number of results to print
        #[arg(short = 'k', long = "top")]
        top: Option<usize>,
    },
    /// Run both experiments on the test split of a dataset
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Report JSON destination
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Run the full ablation grid, including baselines
    Ablation {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        tuning: TuningArgs,
    },
}

#[derive(Args, Clone)]
struct ShinglerArgs {
    #[arg(long, default_value = "two-end")]
    mode: ShingleMode,
    /// Gram sizes, comma separated
    #[arg(long = "k", value_delimiter = ',', default_value = "2")]
    gram_sizes: Vec<usize>,
}

impl ShinglerArgs {
    fn config(&self) -> Result<ShinglerConfig> {
        ShinglerConfig::new(self.gram_sizes.clone(), self.mode)
    }
}

#[derive(Args, Clone)]
struct SystemArgs {
    /// Trained model file
    #[arg(long, conflicts_with = "method")]
    model: Option<PathBuf>,
    /// Baseline method instead of a model: edit-distance, normalized-edit-similarity, lcsr, xdice
    #[arg(long)]
    method: Option<BaselineMethod>,
}

#[derive(Args, Clone)]
struct TuningArgs {
    /// Comma-separated values form a tuning grid
    #[arg(long, value_delimiter = ',')]
    lambda: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    q: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    mu: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    k1: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    b: Vec<f64>,
    /// Fixed decision threshold(s); learned from training scores if absent
    #[arg(long, value_delimiter = ',')]
    threshold: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    folds: usize,
}

impl TuningArgs {
    fn options(&self) -> ExperimentOptions {
        let defaults = TuningGrid::default();
        let pick = |given: &Vec<f64>, default: Vec<f64>| if given.is_empty() { default } else { given.clone() };
        ExperimentOptions {
            seed: self.seed,
            folds: self.folds,
            grid: TuningGrid {
                lambda: pick(&self.lambda, defaults.lambda),
                q: pick(&self.q, defaults.q),
                alpha: pick(&self.alpha, defaults.alpha),
                mu: pick(&self.mu, defaults.mu),
                k1: pick(&self.k1, defaults.k1),
                b: pick(&self.b, defaults.b),
                threshold: (!self.threshold.is_empty()).then(|| self.threshold.clone()),
            },
        }
    }
}

#[derive(Args, Clone)]
struct PipelineArgs {
    #[command(flatten)]
    shingler: ShinglerArgs,
    #[arg(long, default_value = "dirichlet")]
    ranker: RankFunction,
    /// Rank by similarity alone
    #[arg(long)]
    no_error_model: bool,
    #[command(flatten)]
    tuning: TuningArgs,
}

impl PipelineArgs {
    fn spec(&self) -> Result<PipelineSpec> {
        Ok(PipelineSpec {
            shingler: self.shingler.config()?,
            function: self.ranker,
            error_model: !self.no_error_model,
        })
    }
}

fn word(raw: &str) -> Result<Word> {
    Word::new(raw.trim())
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn print_ranked(ranked: &[Ranked]) {
    for r in ranked {
        println!("{}\t{}", r.word, r.score);
    }
}

fn load_pipeline(path: &Path) -> Result<(ModelFile, TrainedPipeline)> {
    let file = ModelFile::load(path)?;
    let pipeline = file.clone().into_pipeline()?;
    Ok((file, pipeline))
}

fn require_system(system: &SystemArgs) -> Result<()> {
    if system.model.is_none() && system.method.is_none() {
        return Err(Error::Usage("either --model or --method is required".into()));
    }
    Ok(())
}

fn train(dataset: &Path, out: &Path, args: &PipelineArgs) -> Result<()> {
    let data = Dataset::read(dataset)?;
    if !data.pairs.iter().any(|p| p.label.is_cognate()) {
        return Err(Error::Data(format!("{}: no cognate pairs to train on", dataset.display())));
    }
    let options = args.tuning.options();
    let spec = args.spec()?;
    let parts = split(&data, options.seed)?;
    let lexicon = data.target_lexicon();
    let (pipeline, resolved) = evaluation::train_pipeline(&parts.train, &lexicon, &spec, &options)?;
    let file = ModelFile::new(&pipeline, lexicon, options.seed, data.language_pair.clone(), resolved);
    file.save(out)?;
    eprintln!("wrote {} (seed {})", out.display(), options.seed);
    for (k, v) in &file.hyperparameters {
        eprintln!("  {k} = {v}");
    }
    Ok(())
}

fn classify(
    source: &str,
    target: &str,
    system: &SystemArgs,
    dataset: Option<&Path>,
    threshold: Option<f64>,
    seed: u64,
) -> Result<()> {
    require_system(system)?;
    let (a, b) = (word(source)?, word(target)?);
    let (label, score) = if let Some(path) = &system.model {
        let (_, pipeline) = load_pipeline(path)?;
        let scorer = match threshold {
            Some(t) => pipeline.classifier.with_threshold(t)?,
            None => pipeline.classifier,
        };
        (scorer.classify(&a, &b)?, scorer.pair_score(&a, &b)?)
    } else {
        let method = system.method.expect("checked above");
        let threshold = match (threshold, dataset) {
            (Some(t), _) => t,
            (None, Some(path)) => {
                let data = Dataset::read(path)?;
                BaselineSystem::fit(method, &split(&data, seed)?.train, Vec::new()).threshold
            }
            (None, None) => {
                return Err(Error::Usage("a baseline needs --threshold or --dataset to classify".into()));
            }
        };
        let score = method.pair_similarity(&a, &b);
        (cognate::Label::from(score >= threshold), score)
    };
    println!("{label}\t{score}");
    Ok(())
}

fn rank(query: &str, system: &SystemArgs, lexicon: Option<&Path>, top: Option<usize>) -> Result<()> {
    require_system(system)?;
    let q = word(query)?;
    let ranked = if let Some(path) = &system.model {
        let (_, pipeline) = load_pipeline(path)?;
        match lexicon {
            Some(lex) => {
                let index = LexiconIndex::build(&read_lexicon(lex)?, &pipeline.spec.shingler)?;
                let params = pipeline.retriever.config().ranker;
                cognate::rank(&q, &index, &params, Some(&pipeline.retriever), top)?
            }
            None => pipeline.retriever.rank(&q, top)?,
        }
    } else {
        let lex = lexicon.ok_or_else(|| Error::Usage("a baseline needs --lexicon to rank".into()))?;
        system.method.expect("checked above").rank(&q, &read_lexicon(lex)?, top)
    };
    print_ranked(&ranked);
    Ok(())
}

fn write_report(reports: &[EvalReport], out: Option<&Path>, single: bool) -> Result<()> {
    if let Some(path) = out {
        let mut json = if single {
            serde_json::to_string_pretty(&reports[0])
        } else {
            serde_json::to_string_pretty(reports)
        }
        .expect("report serializes");
        json.push('\n');
        write_file(path, &json)?;
    }
    print!("{}", render_table(reports));
    Ok(())
}

fn eval(
    dataset: &Path,
    system: &SystemArgs,
    lexicon: Option<&Path>,
    out: Option<&Path>,
    args: &PipelineArgs,
) -> Result<()> {
    let data = Dataset::read(dataset)?;
    let lexicon = match lexicon {
        Some(path) => Some(read_lexicon(path)?),
        None => None,
    };
    let options = args.tuning.options();
    let report = if let Some(path) = &system.model {
        let started = std::time::Instant::now();
        let (file, mut pipeline) = load_pipeline(path)?;
        let parts = split(&data, file.seed)?;
        let words = lexicon.unwrap_or_else(|| file.lexicon.clone());
        if words != file.lexicon {
            let index = Arc::new(LexiconIndex::build(&words, &pipeline.spec.shingler)?);
            pipeline.retriever = cognate::CombinedScorer::new(
                *pipeline.retriever.config(),
                pipeline.retriever.error_model().clone(),
                index,
            )?;
        }
        let (mrr, ranks) = evaluation::eval_mrr(&pipeline.retriever, &parts.test, &words)?;
        EvalReport {
            system: pipeline.spec.label(),
            language_pair: data.language_pair.clone(),
            seed: file.seed,
            n_train: parts.train.len(),
            n_test: parts.test.len(),
            accuracy: evaluation::eval_classification(&pipeline.classifier, &parts.test)?,
            mrr,
            per_query_ranks: ranks,
            hyperparameters: file.hyperparameters,
            runtime: started.elapsed().as_secs_f64(),
        }
    } else {
        let row = match system.method {
            Some(method) => System::Baseline { method },
            None => System::Pipeline(args.spec()?),
        };
        evaluation::run_experiment(&data, &row, lexicon.as_deref(), &options)?
    };
    write_report(std::slice::from_ref(&report), out, true)
}

fn ablation(dataset: &Path, out: Option<&Path>, tuning: &TuningArgs) -> Result<()> {
    let data = Dataset::read(dataset)?;
    let reports = evaluation::ablation(&data, &default_ablation_grid(), &tuning.options())?;
    write_report(&reports, out, false)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Shingle { word: raw, shingler } => {
            let set = shingle(&word(&raw)?, &shingler.config()?)?;
            for tok in set.iter_tokens() {
                println!("{tok}");
            }
            Ok(())
        }
        Command::Train { dataset, out, pipeline } => train(&dataset, &out, &pipeline),
        Command::Classify {
            source,
            target,
            system,
            dataset,
            threshold,
            seed,
        } => classify(&source, &target, &system, dataset.as_deref(), threshold, seed),
        Command::Rank {
            word,
            system,
            lexicon,
            top,
        } => rank(&word, &system, lexicon.as_deref(), top),
        Command::Eval {
            dataset,
            system,
            lexicon,
            out,
            pipeline,
        } => eval(&dataset, &system, lexicon.as_deref(), out.as_deref(), &pipeline),
        Command::Ablation { dataset, out, tuning } => ablation(&dataset, out.as_deref(), &tuning),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
