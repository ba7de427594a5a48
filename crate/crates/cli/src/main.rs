//! `splitroute`: split multi-intent utterances and route the fragments to
//! agents.

use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use splitroute_core::agents::{load_definitions, AgentSource, IntentModel, Registry};
use splitroute_core::eval::{
    from_atis_tsv, from_mixatis_bio, load_dataset, run_benchmark, Dataset,
};
use splitroute_core::pipeline::{handle_event, route, EchoExecutor, EventRecord, EventRequest};
use splitroute_core::synthetic::SeedCorpus;

mod render;
mod settings;

use render::ParseReport;
use settings::{Format, PipelineArgs, Settings};

#[derive(Debug, Parser)]
#[command(
    name = "splitroute",
    version,
    about = "Split multi-intent utterances and route them to agents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the example-based agents of a definition file into a model file
    Train {
        #[command(flatten)]
        opts: PipelineArgs,
        /// Where to write the trained model (JSON)
        #[arg(long, short, value_name = "PATH")]
        output: PathBuf,
    },
    /// Parse one utterance, or a batch of JSON-line requests
    Parse {
        #[command(flatten)]
        opts: PipelineArgs,
        /// Utterance to parse
        #[arg(required_unless_present = "batch")]
        text: Option<String>,
        /// JSON lines of {"text": ...}; one response record per line
        #[arg(long, value_name = "PATH", conflicts_with = "text")]
        batch: Option<PathBuf>,
        /// Dump the scored parse tree
        #[arg(long)]
        explain: bool,
        /// Add parse time to batch records
        #[arg(long)]
        timing: bool,
    },
    /// Run the pipeline over a labelled dataset and report outcome categories
    Bench {
        #[command(flatten)]
        opts: PipelineArgs,
        /// Dataset file
        #[arg(required_unless_present = "synthetic")]
        dataset: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = DatasetFormat::Jsonl)]
        dataset_format: DatasetFormat,
        /// Use N composed synthetic instances instead of a dataset file
        #[arg(long, value_name = "N", conflicts_with = "dataset")]
        synthetic: Option<usize>,
        /// Seed for --synthetic
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Also write the structured report here
        #[arg(long, value_name = "PATH")]
        report: Option<PathBuf>,
        /// Include parse timing in the report
        #[arg(long)]
        timing: bool,
    },
    /// Interactive loop: one utterance per line, `exit` quits
    Chat {
        #[command(flatten)]
        opts: PipelineArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DatasetFormat {
    /// {"text", "parses", "intents"} per line
    Jsonl,
    /// utterance<TAB>intent per line
    Atis,
    /// token/tag lines, an intent line, blank separator
    Mixatis,
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

fn io_failure(e: io::Error) -> Failure {
    if e.kind() == io::ErrorKind::BrokenPipe {
        std::process::exit(0);
    }
    Failure::Config(e.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            match &failure {
                Failure::Usage(msg) => eprintln!("error: {msg}"),
                Failure::Config(e) | Failure::Runtime(e) => eprintln!("error: {e:#}"),
            }
            ExitCode::from(failure.code())
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Train { opts, output } => train(&opts, &output),
        Command::Parse {
            opts,
            text,
            batch,
            explain,
            timing,
        } => match batch {
            Some(path) => parse_batch(&opts, &path, timing),
            None => parse_one(&opts, text.as_deref().unwrap_or_default(), explain),
        },
        Command::Bench {
            opts,
            dataset,
            dataset_format,
            synthetic,
            seed,
            report,
            timing,
        } => {
            let settings = opts.settings()?;
            let (dataset, registry) = match synthetic {
                Some(n) => {
                    let corpus = SeedCorpus::standard();
                    let registry = match opts.agents {
                        Some(_) => opts.registry(&settings)?,
                        None => corpus.registry(settings.smoothing).map_err(runtime)?,
                    };
                    (
                        Dataset {
                            instances: corpus.compose(n, 3, seed),
                            malformed: 0,
                        },
                        registry,
                    )
                }
                None => {
                    let path = dataset.expect("clap requires a dataset");
                    (
                        read_dataset(&path, dataset_format)?,
                        opts.registry(&settings)?,
                    )
                }
            };
            bench(&settings, &dataset, &registry, report.as_deref(), timing)
        }
        Command::Chat { opts } => chat(&opts),
    }
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    output: PathBuf,
    intents: Vec<String>,
    examples: usize,
    vocabulary: usize,
    smoothing: f64,
}

fn train(opts: &PipelineArgs, output: &Path) -> Result<(), Failure> {
    let settings = opts.settings()?;
    let agents = opts.agents_path()?;
    if same_file(agents, output) {
        return Err(Failure::Usage(
            "--output would overwrite the agent definition file".into(),
        ));
    }
    let defs = load_definitions(agents).map_err(|e| Failure::Config(e.into()))?;
    let mut examples = Vec::new();
    let mut intents = Vec::new();
    for def in &defs {
        if let AgentSource::Examples { examples: ex } = &def.source {
            intents.push(def.intent.clone());
            examples.extend(ex.iter().map(|e| (e.clone(), def.intent.clone())));
        }
    }
    if examples.is_empty() {
        return Err(Failure::Config(anyhow::anyhow!(
            "{} defines no example-based agents",
            agents.display()
        )));
    }
    let model = IntentModel::train(&examples, &intents, settings.smoothing).map_err(runtime)?;
    model.save(output).map_err(|e| Failure::Config(e.into()))?;
    let summary = TrainSummary {
        output: output.to_path_buf(),
        intents: model.intents.clone(),
        examples: examples.len(),
        vocabulary: model.vocabulary.len(),
        smoothing: model.alpha,
    };
    match settings.format {
        Format::Human => emit(&format!(
            "trained {} intents on {} examples ({} terms, smoothing {}) -> {}\n",
            summary.intents.len(),
            summary.examples,
            summary.vocabulary,
            summary.smoothing,
            output.display()
        ))?,
        Format::Structured => print_json(&summary)?,
    }
    Ok(())
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

fn parse_one(opts: &PipelineArgs, text: &str, explain: bool) -> Result<(), Failure> {
    if text.trim().is_empty() {
        return Err(Failure::Usage(
            "nothing to parse: the utterance is empty".into(),
        ));
    }
    let settings = opts.settings()?;
    let registry = opts.registry(&settings)?;
    let routing = route(text, &registry, &settings.pipeline).map_err(runtime)?;
    let report = ParseReport::new(text, settings.pipeline.mode, &routing, explain);
    match settings.format {
        Format::Human => emit(&report.human(settings.pipeline.delta))?,
        Format::Structured => print_json(&report)?,
    }
    Ok(())
}

fn parse_batch(opts: &PipelineArgs, path: &Path, timing: bool) -> Result<(), Failure> {
    let settings = opts.settings()?;
    let registry = opts.registry(&settings)?;
    let raw = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Config)?;
    let mut requests = Vec::new();
    for (i, line) in raw
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let req: EventRequest = serde_json::from_str(line)
            .with_context(|| format!("{}:{}", path.display(), i + 1))
            .map_err(Failure::Config)?;
        requests.push(req);
    }
    if requests.is_empty() {
        return Err(Failure::Config(anyhow::anyhow!(
            "{} holds no requests",
            path.display()
        )));
    }
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for req in requests {
        if req.text.trim().is_empty() {
            return Err(Failure::Usage("batch request with empty text".into()));
        }
        let outcome = handle_event(&req.text, &registry, &settings.pipeline, &mut EchoExecutor)
            .map_err(runtime)?;
        let record = EventRecord::new(&req.text, &outcome, timing);
        match settings.format {
            Format::Structured => {
                let line = serde_json::to_string(&record).map_err(runtime)?;
                writeln!(out, "{line}").map_err(io_failure)?;
            }
            Format::Human => {
                writeln!(out, "> {}", req.text).map_err(io_failure)?;
                write!(
                    out,
                    "{}",
                    render::event_human(&outcome, settings.pipeline.delta)
                )
                .map_err(io_failure)?;
            }
        }
    }
    Ok(())
}

fn read_dataset(path: &Path, format: DatasetFormat) -> Result<Dataset, Failure> {
    let dataset = match format {
        DatasetFormat::Jsonl => load_dataset(path).map_err(|e| Failure::Config(e.into()))?,
        DatasetFormat::Atis | DatasetFormat::Mixatis => {
            let raw = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(Failure::Config)?;
            if format == DatasetFormat::Atis {
                from_atis_tsv(&raw)
            } else {
                from_mixatis_bio(&raw)
            }
        }
    };
    if dataset.instances.is_empty() {
        return Err(Failure::Config(anyhow::anyhow!(
            "{} holds no usable instances",
            path.display()
        )));
    }
    Ok(dataset)
}

fn bench(
    settings: &Settings,
    dataset: &Dataset,
    registry: &Registry,
    report_path: Option<&Path>,
    timing: bool,
) -> Result<(), Failure> {
    let mut report = run_benchmark(dataset, registry, &settings.pipeline).map_err(runtime)?;
    if !timing {
        report = report.without_timing();
    }
    if let Some(path) = report_path {
        let json = serde_json::to_string_pretty(&report).map_err(runtime)?;
        std::fs::write(path, json + "\n")
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::Config)?;
    }
    match settings.format {
        Format::Human => emit(&report.table())?,
        Format::Structured => print_json(&report)?,
    }
    Ok(())
}

fn chat(opts: &PipelineArgs) -> Result<(), Failure> {
    let settings = opts.settings()?;
    let registry = opts.registry(&settings)?;
    let stdin = io::stdin();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let human = settings.format == Format::Human;
    if human {
        writeln!(out, "{} agents loaded; type `exit` to quit", registry.len())
            .map_err(io_failure)?;
    }
    let mut line = String::new();
    loop {
        if human {
            write!(out, "> ").map_err(io_failure)?;
            out.flush().map_err(io_failure)?;
        }
        line.clear();
        if stdin.lock().read_line(&mut line).map_err(io_failure)? == 0 {
            break;
        }
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if text == "exit" {
            break;
        }
        match handle_event(text, &registry, &settings.pipeline, &mut EchoExecutor) {
            Ok(outcome) => {
                if human {
                    write!(
                        out,
                        "{}",
                        render::event_human(&outcome, settings.pipeline.delta)
                    )
                } else {
                    let record = EventRecord::new(text, &outcome, false);
                    let json = serde_json::to_string(&record).map_err(runtime)?;
                    writeln!(out, "{json}")
                }
                .map_err(io_failure)?;
            }
            Err(e) => writeln!(out, "! {e}").map_err(io_failure)?,
        }
    }
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    let json = serde_json::to_string_pretty(value).map_err(runtime)?;
    emit(&(json + "\n"))
}

/// Writes to stdout; a closed pipe ends output quietly.
fn emit(text: &str) -> Result<(), Failure> {
    match io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        other => other.map_err(io_failure),
    }
}
