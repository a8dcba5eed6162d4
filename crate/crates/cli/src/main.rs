use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use selfage::classify::{
    cross_validate, train_baseline, BaselineConfig, BaselineModel, Classifier, ExternalClassifierClient,
    PluginOptions, Prediction,
};
use selfage::corpus::{
    load_labels, load_posts, read_jsonl, stratified_split, write_jsonl, write_labels, PostFormat,
};
use selfage::eval::{
    classification_eval, fleiss_kappa, joint_extraction_eval, EvalReport, JointSection, RatingMatrix, Section,
};
use selfage::extract::{load_rules, Extraction, RuleSet};
use selfage::pipeline::{run_pipeline, ClassifierSpec, PipelineConfig};
use selfage::retrieval::{
    compile_pattern_set, default_patterns, load_patterns, match_candidates, should_drop, DropDecision,
};

#[derive(Parser)]
#[command(name = "selfage", version, about = "Find self-reported exact ages in social-media posts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Match query patterns and write candidate hits as JSONL
    Retrieve {
        #[command(flatten)]
        input: Input,
        /// query pattern file (default: shipped patterns)
        #[arg(long)]
        patterns: Option<PathBuf>,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Train the n-gram baseline classifier
    Train {
        #[command(flatten)]
        input: Input,
        /// gold labels TSV: post_id, label, age
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 32.0)]
        cost: f64,
        #[arg(long, default_value_t = 2.0)]
        weight_age: f64,
        #[arg(long, default_value_t = 1.0)]
        weight_no_age: f64,
        /// also report k-fold cross-validation counts
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Label posts "age"/"no_age" and write predictions as JSONL
    Classify {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        classifier: ClassifierArgs,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Run the extraction cascade over every post and write hits as JSONL
    Extract {
        #[command(flatten)]
        input: Input,
        /// extraction rule file (default: shipped rules)
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Score predictions (and optionally extractions) against gold labels
    Evaluate {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        labels: PathBuf,
        /// predictions JSONL from `classify`
        #[arg(long)]
        predictions: PathBuf,
        /// extractions JSONL from `extract`; enables joint scoring
        #[arg(long)]
        extractions: Option<PathBuf>,
        /// write the JSON report here
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Fleiss' kappa over a TSV of item id followed by one column per rater
    Kappa {
        ratings: PathBuf,
    },
    /// Full pipeline: retrieve, classify, extract, roll up per user
    Run {
        /// post files (JSONL or TSV)
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_parser = parse_format)]
        format: Option<PostFormat>,
        #[arg(long)]
        patterns: Option<PathBuf>,
        #[arg(long)]
        rules: Option<PathBuf>,
        #[command(flatten)]
        classifier: ClassifierArgs,
        #[arg(long)]
        output_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
        #[arg(long, default_value_t = 10_000)]
        batch_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Stratified train/test split of labeled posts
    Split {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        fraction: f64,
        #[arg(long)]
        seed: u64,
        /// labels TSV for the training portion
        #[arg(long)]
        train: PathBuf,
        /// labels TSV for the test portion
        #[arg(long)]
        test: PathBuf,
    },
}

#[derive(Args)]
struct Input {
    /// post file (JSONL or TSV)
    #[arg(long = "input", short = 'i')]
    path: PathBuf,
    /// overrides detection from the file extension
    #[arg(long, value_parser = parse_format)]
    format: Option<PostFormat>,
}

impl Input {
    fn format(&self) -> PostFormat {
        self.format.unwrap_or_else(|| PostFormat::from_path(&self.path))
    }
}

#[derive(Args)]
#[group(required = true, multiple = false, id = "backend")]
struct ClassifierArgs {
    /// baseline model file from `train`
    #[arg(long)]
    model: Option<PathBuf>,
    /// plug-in program speaking age-clf/1
    #[arg(long)]
    plugin: Option<PathBuf>,
    /// argument passed to the plug-in (repeatable)
    #[arg(long = "plugin-arg", requires = "plugin", allow_hyphen_values = true)]
    plugin_args: Vec<String>,
    /// seconds to wait for each plug-in response
    #[arg(long, default_value_t = 60)]
    plugin_timeout: u64,
    /// plug-in restarts after a crash
    #[arg(long, default_value_t = 2)]
    plugin_retries: u32,
}

impl ClassifierArgs {
    fn options(&self) -> PluginOptions {
        PluginOptions {
            timeout: Duration::from_secs(self.plugin_timeout),
            retries: self.plugin_retries,
        }
    }

    fn spec(&self) -> ClassifierSpec {
        match (&self.model, &self.plugin) {
            (Some(model), _) => ClassifierSpec::Builtin(model.clone()),
            (None, Some(program)) => {
                let mut command = vec![program.to_string_lossy().into_owned()];
                command.extend(self.plugin_args.iter().cloned());
                ClassifierSpec::Plugin(command)
            }
            (None, None) => unreachable!("clap requires one backend"),
        }
    }

    fn build(&self) -> Result<Box<dyn Classifier>> {
        Ok(match self.spec() {
            ClassifierSpec::Builtin(path) => Box::new(BaselineModel::load(path)?),
            ClassifierSpec::Plugin(command) => Box::new(ExternalClassifierClient::spawn(command, self.options())?),
        })
    }
}

fn parse_format(s: &str) -> Result<PostFormat, String> {
    s.parse()
}

fn retrieve(input: &Input, patterns: Option<&Path>, output: &Path) -> Result<()> {
    let patterns = match patterns {
        Some(p) => load_patterns(p)?,
        None => default_patterns(),
    };
    let matcher = compile_pattern_set(&patterns)?;
    let posts = load_posts(&input.path, input.format())?;
    let mut hits = Vec::new();
    let (mut retweets, mut reported, mut candidates) = (0, 0, 0);
    for post in &posts {
        let decision = should_drop(post);
        if decision == DropDecision::Retweet {
            retweets += 1;
            continue;
        }
        let found = match_candidates(post, &matcher);
        if found.is_empty() {
            continue;
        }
        if decision == DropDecision::ReportedSpeech {
            reported += 1;
            continue;
        }
        candidates += 1;
        hits.extend(found);
    }
    write_jsonl(output, &hits)?;
    eprintln!(
        "{} posts, {retweets} retweets dropped, {reported} reported speech dropped, {candidates} candidates",
        posts.len()
    );
    Ok(())
}

fn kappa(path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path).with_context(|| path.display().to_string())?;
    let mut items: Vec<Vec<String>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || (i == 0 && line.starts_with("item")) {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 3 {
            bail!("{}:{}: expected an item id and at least two ratings", path.display(), i + 1);
        }
        items.push(cols[1..].iter().map(|c| c.trim().to_string()).collect());
    }
    let matrix = RatingMatrix::from_ratings(&items)?;
    println!(
        "items {}  raters {}  categories {}  kappa {:.4}",
        matrix.items(),
        matrix.raters_per_item(),
        matrix.categories(),
        fleiss_kappa(&matrix)
    );
    Ok(())
}

fn evaluate(
    input: &Input,
    labels: &Path,
    predictions: &Path,
    extractions: Option<&Path>,
    json: Option<&Path>,
) -> Result<()> {
    let posts = load_posts(&input.path, input.format())?;
    let gold = load_labels(labels, &posts)?;
    let predictions: Vec<Prediction> = read_jsonl(predictions)?;
    let classification = classification_eval(&predictions, &gold)?;
    let joint = match extractions {
        Some(path) => {
            let mut by_id: HashMap<String, Extraction> = read_jsonl::<Extraction>(path)?
                .into_iter()
                .map(|e| (e.post_id.clone(), e))
                .collect();
            let results: Vec<(Prediction, Option<Extraction>)> = predictions
                .into_iter()
                .map(|p| {
                    let e = by_id.remove(&p.post_id);
                    (p, e)
                })
                .collect();
            Some(JointSection::new(joint_extraction_eval(&results, &gold)?))
        }
        None => None,
    };
    let report = EvalReport {
        classification: Some(Section::new(classification)),
        joint_extraction: joint,
    };
    print!("{}", report.to_table());
    if let Some(path) = json {
        std::fs::write(path, serde_json::to_string_pretty(&report)? + "\n")
            .with_context(|| path.display().to_string())?;
    }
    Ok(())
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Retrieve {
            input,
            patterns,
            output,
        } => retrieve(&input, patterns.as_deref(), &output).context("[retrieve]"),
        Command::Train {
            input,
            labels,
            model,
            seed,
            cost,
            weight_age,
            weight_no_age,
            folds,
        } => (|| -> Result<()> {
            let posts = load_posts(&input.path, input.format())?;
            let data = load_labels(&labels, &posts)?;
            let config = BaselineConfig {
                cost,
                weight_age,
                weight_no_age,
                seed,
                ..Default::default()
            };
            if let Some(k) = folds {
                let counts = cross_validate(&data, &config, k)?;
                let report = EvalReport {
                    classification: Some(Section::new(counts)),
                    joint_extraction: None,
                };
                print!("{k}-fold cross-validation\n{}", report.to_table());
            }
            let trained = train_baseline(&data, &config)?;
            trained.save(&model)?;
            eprintln!(
                "trained on {} posts, {} features, bias {:.4}",
                data.len(),
                trained.vocabulary().len(),
                trained.bias()
            );
            Ok(())
        })()
        .context("[train]"),
        Command::Classify {
            input,
            classifier,
            output,
        } => (|| -> Result<()> {
            let posts = load_posts(&input.path, input.format())?;
            let mut backend = classifier.build()?;
            let predictions = backend.classify(&posts)?;
            write_jsonl(&output, &predictions)?;
            Ok(())
        })()
        .context("[classify]"),
        Command::Extract { input, rules, output } => (|| -> Result<()> {
            let rules = match rules {
                Some(p) => load_rules(p)?,
                None => RuleSet::default_rules(),
            };
            let posts = load_posts(&input.path, input.format())?;
            let found: Vec<Extraction> = posts.iter().filter_map(|p| rules.extract(p)).collect();
            write_jsonl(&output, &found)?;
            eprintln!("{} of {} posts yielded an age", found.len(), posts.len());
            Ok(())
        })()
        .context("[extract]"),
        Command::Evaluate {
            input,
            labels,
            predictions,
            extractions,
            json,
        } => evaluate(&input, &labels, &predictions, extractions.as_deref(), json.as_deref())
            .context("[evaluate]"),
        Command::Kappa { ratings } => kappa(&ratings).context("[kappa]"),
        Command::Run {
            inputs,
            format,
            patterns,
            rules,
            classifier,
            output_dir,
            parallelism,
            batch_size,
            seed,
        } => {
            let config = PipelineConfig {
                inputs,
                input_format: format,
                patterns,
                rules,
                classifier: classifier.spec(),
                plugin_options: classifier.options(),
                output_dir,
                parallelism,
                batch_size,
                seed,
            };
            let report = run_pipeline(&config)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&serde_json::json!({
                    "counts": &report,
                    "fractions": report.fractions(),
                }))?
            );
            Ok(())
        }
        Command::Split {
            input,
            labels,
            fraction,
            seed,
            train,
            test,
        } => (|| -> Result<()> {
            let posts = load_posts(&input.path, input.format())?;
            let data = load_labels(&labels, &posts)?;
            let split = stratified_split(&data, fraction, seed)?;
            write_labels(&train, &split.train)?;
            write_labels(&test, &split.test)?;
            eprintln!("{} train, {} test", split.train.len(), split.test.len());
            Ok(())
        })()
        .context("[split]"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
