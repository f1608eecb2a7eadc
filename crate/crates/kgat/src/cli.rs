//! The `kgat` command line.
//!
//! Exit codes: 0 on success, 1 on a runtime failure (bad input file,
//! positivity violation, training error), 2 on a usage error.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand};
use kgat_core::counterfactual::{augment, SwapLexicon};
use kgat_core::data::{generate_biased, holdout_split, Dataset};
use kgat_core::fairness::{audit, relative_reduction};
use kgat_core::graph::KnowledgeGraph;
use kgat_core::train;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::experiment::{self, GridConfig};
use crate::{checkpoint, io, report, svg};

#[derive(Debug, Parser)]
#[command(name = "kgat", version, about = "Knowledge-graph augmented training with fairness auditing")]
pub struct Cli {
    /// Seed for generation, initialization, shuffling and splits
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// `key = value` config file; flags override it
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Primary output path; side outputs are written next to it
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Also write SVG charts
    #[arg(long, global = true)]
    pub plots: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded biased synthetic dataset as JSONL
    Generate {
        #[arg(long)]
        n: Option<usize>,
        /// Bias strength in [0, 1]
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Train a model and write a checkpoint, history and held-out predictions
    Train {
        /// JSONL text records, or a CSV of numeric features
        #[arg(long)]
        data: PathBuf,
        /// Triples file `head<TAB>relation<TAB>tail`
        #[arg(long)]
        kg: Option<PathBuf>,
        /// Node feature CSV `node,f1,f2,...`
        #[arg(long, requires = "kg")]
        features: Option<PathBuf>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        /// Train without an adversary
        #[arg(long)]
        no_adversary: bool,
        /// Add counterfactual copies of the training split
        #[arg(long)]
        augment: bool,
        /// Lexicon CSV for --augment; the built-in gendered pairs otherwise
        #[arg(long, requires = "augment")]
        lexicon: Option<PathBuf>,
        /// Augment the held-out split too
        #[arg(long, requires = "augment")]
        augment_eval: bool,
    },
    /// Fairness and causal audit of a predictions CSV
    Audit {
        /// CSV `y_true,y_pred,attribute[,extra columns]`
        #[arg(long)]
        predictions: PathBuf,
        /// Predictions of a reference model to compare against
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        pseudocount: f64,
    },
    /// Append counterfactual copies to a JSONL dataset
    Augment {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Attribute flip `from=to`; repeatable
        #[arg(long = "flip", value_name = "FROM=TO")]
        flips: Vec<String>,
    },
    /// Backdoor-adjusted outcome distributions from a discrete CSV
    Adjust {
        /// CSV `x,y,z[,z2,...]`; the header names the variables
        #[arg(long)]
        joint: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        pseudocount: f64,
    },
    /// Run the lambda x knowledge-graph grid on synthetic data
    Experiment {
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Summarize history, audit and experiment outputs as Markdown
    Report {
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long)]
        audit: Option<PathBuf>,
        #[arg(long)]
        experiment: Option<PathBuf>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl From<io::LoadError> for CliError {
    fn from(e: io::LoadError) -> Self {
        CliError::Runtime(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli, &args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", format_chain(&e));
            e.exit_code()
        }
    }
}

fn format_chain(e: &CliError) -> String {
    match e {
        CliError::Usage(m) => m.clone(),
        CliError::Runtime(e) => {
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.ends_with(&c) {
                    msg.push_str(": ");
                    msg.push_str(&c);
                }
            }
            msg
        }
    }
}

/// `path` with `.suffix` appended to its file name.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

struct Outputs {
    out: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn write(&mut self, path: PathBuf, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
        io::write(&path, contents.as_ref())?;
        self.written.push(path);
        Ok(())
    }

    fn primary(&mut self, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
        self.write(self.out.clone(), contents)
    }

    fn side(&mut self, suffix: &str, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
        self.write(sibling(&self.out, suffix), contents)
    }
}

fn load_config(cli: &Cli, base: RunConfig) -> anyhow::Result<RunConfig> {
    let mut c = base;
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        c.apply_text(&text).with_context(|| path.display().to_string())?;
    }
    if let Some(seed) = cli.seed {
        c.trainer.seed = seed;
        c.synth.seed = seed;
    }
    Ok(c)
}

fn default_flip() -> BTreeMap<String, String> {
    [("female", "male"), ("male", "female")]
        .into_iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect()
}

fn lexicon(path: Option<&Path>) -> anyhow::Result<SwapLexicon> {
    Ok(match path {
        Some(p) => io::load_lexicon(p)?,
        None => SwapLexicon::default_gendered(),
    })
}

fn execute(cli: &Cli, args: &[OsString]) -> Result<(), CliError> {
    let started = Instant::now();
    let out = cli
        .out
        .clone()
        .ok_or_else(|| CliError::Usage("--out is required".into()))?;
    let mut outputs = Outputs { out, written: Vec::new() };
    let base = match cli.command {
        Command::Experiment { .. } => RunConfig::desk_scale(),
        _ => RunConfig::default(),
    };
    let mut config = load_config(cli, base)?;
    let mut inputs: BTreeMap<&str, String> = BTreeMap::new();
    let name = match &cli.command {
        Command::Generate { n, beta } => {
            if let Some(n) = n {
                config.synth.n = *n;
            }
            if let Some(b) = beta {
                config.synth.beta = *b;
            }
            let d = generate_biased(&config.synth).map_err(anyhow::Error::from)?;
            outputs.primary(io::text_dataset_jsonl(&d))?;
            "generate"
        }
        Command::Train { data, kg, features, lambda, epochs, lr, no_adversary, augment, lexicon: lex, augment_eval } => {
            if let Some(l) = lambda {
                config.trainer.lambda = *l;
            }
            if let Some(e) = epochs {
                config.trainer.epochs = *e;
            }
            if let Some(lr) = lr {
                config.trainer.learning_rate = *lr;
            }
            if *no_adversary {
                config.trainer.adversary = false;
            }
            inputs.insert("data", data.display().to_string());
            let graph = match kg {
                Some(kg) => {
                    inputs.insert("kg", kg.display().to_string());
                    io::load_graph(kg, features.as_deref())?
                }
                None => {
                    config.trainer.model.use_kg = false;
                    KnowledgeGraph::new(0)
                }
            };
            let dataset = load_dataset(data, &graph)?;
            let (mut train_part, mut holdout) = holdout_split(&dataset, config.trainer.seed);
            if *augment {
                let lex = lexicon(lex.as_deref())?;
                let flip = if config.flip.is_empty() { default_flip() } else { config.flip.clone() };
                let g = kg.as_ref().map(|_| &graph);
                train_part = kgat_core::counterfactual::augment(&train_part, &lex, &flip, g).map_err(anyhow::Error::from)?;
                if *augment_eval {
                    holdout = kgat_core::counterfactual::augment(&holdout, &lex, &flip, g).map_err(anyhow::Error::from)?;
                }
            }
            let (model, history) =
                train::train_with_holdout(&train_part, &holdout, &graph, &config.trainer).map_err(anyhow::Error::from)?;
            let evals = train::evaluate(&model, &graph, &holdout).map_err(anyhow::Error::from)?;
            outputs.primary(checkpoint::to_string(&model))?;
            outputs.side("history.csv", report::history_csv(&history))?;
            outputs.side("predictions.csv", report::predictions_csv(&evals))?;
            if cli.plots {
                let pts = |f: fn(&train::EpochRecord) -> f64| -> Vec<(f64, f64)> {
                    history.epochs.iter().map(|e| (e.epoch as f64, f(e))).collect()
                };
                let chart = svg::line_chart(
                    "Training history",
                    "epoch",
                    &[
                        ("primary loss", pts(|e| e.primary_loss)),
                        ("adversary loss", pts(|e| e.adversary_loss)),
                        ("held-out parity gap", pts(|e| e.parity_gap.unwrap_or(f64::NAN))),
                    ],
                );
                outputs.side("history.svg", chart)?;
            }
            "train"
        }
        Command::Audit { predictions, baseline, pseudocount } => {
            inputs.insert("predictions", predictions.display().to_string());
            let table = io::load_audit_csv(predictions)?;
            let fr = audit(&table.records).map_err(|e| anyhow!("{}: {e}", predictions.display()))?;
            let mut result = json!({
                "rows": table.records.len(),
                "fairness": report::fairness(&fr),
                "causal": report::audit_causal(&table, *pseudocount),
            });
            let mut before_report = None;
            if let Some(b) = baseline {
                inputs.insert("baseline", b.display().to_string());
                let bt = io::load_audit_csv(b)?;
                let br = audit(&bt.records).map_err(|e| anyhow!("{}: {e}", b.display()))?;
                result["comparison"] = json!({
                    "parity_gap_before": br.parity_gap,
                    "parity_gap_after": fr.parity_gap,
                    "parity_relative_reduction": relative_reduction(br.parity_gap, fr.parity_gap),
                    "opportunity_gap_before": br.opportunity_gap,
                    "opportunity_gap_after": fr.opportunity_gap,
                    "opportunity_relative_reduction": br.opportunity_gap.zip(fr.opportunity_gap).and_then(|(b, a)| relative_reduction(b, a)),
                });
                before_report = Some(br);
            }
            outputs.primary(report::pretty(&result))?;
            if cli.plots {
                let groups: Vec<(String, Vec<f64>)> = fr
                    .positive_rates
                    .iter()
                    .map(|(g, p)| (g.clone(), vec![*p, fr.true_positive_rates.get(g).copied().unwrap_or(f64::NAN)]))
                    .collect();
                outputs.side(
                    "rates.svg",
                    svg::bar_chart("Group rates", &["positive rate", "true positive rate"], &groups),
                )?;
                if let Some(br) = &before_report {
                    let gaps = vec![
                        ("parity gap".to_string(), vec![br.parity_gap, fr.parity_gap]),
                        (
                            "opportunity gap".to_string(),
                            vec![br.opportunity_gap.unwrap_or(f64::NAN), fr.opportunity_gap.unwrap_or(f64::NAN)],
                        ),
                    ];
                    outputs.side("comparison.svg", svg::bar_chart("Fairness gaps", &["baseline", "current"], &gaps))?;
                }
            }
            "audit"
        }
        Command::Augment { data, lexicon: lex, flips } => {
            inputs.insert("data", data.display().to_string());
            let mut flip = config.flip.clone();
            for f in flips {
                let (a, b) = f
                    .split_once('=')
                    .filter(|(a, b)| !a.is_empty() && !b.is_empty())
                    .ok_or_else(|| CliError::Usage(format!("--flip expects FROM=TO, got {f:?}")))?;
                flip.insert(a.to_string(), b.to_string());
            }
            if flip.is_empty() {
                flip = default_flip();
            }
            let graph = KnowledgeGraph::new(0);
            let d = io::load_text_dataset(data, &graph, None)?;
            let out = augment(&d, &lexicon(lex.as_deref())?, &flip, None).map_err(anyhow::Error::from)?;
            config.flip = flip;
            outputs.primary(io::text_dataset_jsonl(&out))?;
            "augment"
        }
        Command::Adjust { joint, pseudocount } => {
            inputs.insert("joint", joint.display().to_string());
            let (names, obs) = io::load_joint_csv(joint)?;
            let j = report::named_joint(&names, &obs, *pseudocount).map_err(|e| anyhow!("{}: {e}", joint.display()))?;
            let v = report::adjustment(&j).map_err(|e| anyhow!("{}: {e}", joint.display()))?;
            outputs.primary(report::pretty(&v))?;
            "adjust"
        }
        Command::Experiment { seeds, n, beta, epochs, lr } => {
            if let Some(n) = n {
                config.synth.n = *n;
            }
            if let Some(b) = beta {
                config.synth.beta = *b;
            }
            if let Some(e) = epochs {
                config.trainer.epochs = *e;
            }
            if let Some(lr) = lr {
                config.trainer.learning_rate = *lr;
            }
            if *seeds == 0 {
                return Err(CliError::Usage("--seeds must be at least 1".into()));
            }
            let first = cli.seed.unwrap_or(0);
            let grid = GridConfig {
                seeds: (first..first + *seeds as u64).collect(),
                synth: config.synth.clone(),
                trainer: config.trainer.clone(),
            };
            let comparisons = experiment::run_grid(&kgat_core::demo::graph(), &grid).map_err(anyhow::Error::from)?;
            let mut summary = experiment::summary_json(&comparisons);
            summary["seeds"] = json!(grid.seeds);
            outputs.primary(report::pretty(&summary))?;
            if cli.plots {
                let groups: Vec<(String, Vec<f64>)> = summary["cells"]
                    .as_array()
                    .into_iter()
                    .flatten()
                    .map(|c| {
                        let label = format!(
                            "λ={} KG {}",
                            c["lambda"],
                            if c["use_kg"] == json!(true) { "on" } else { "off" }
                        );
                        let f = |k: &str| c[k].as_f64().unwrap_or(f64::NAN);
                        (label, vec![f("mean_parity_gap"), 1.0 - f("mean_accuracy")])
                    })
                    .collect();
                outputs.side("svg", svg::bar_chart("Grid means", &["parity gap", "error rate"], &groups))?;
            }
            "experiment"
        }
        Command::Report { history, audit, experiment } => {
            if history.is_none() && audit.is_none() && experiment.is_none() {
                return Err(CliError::Usage("report needs at least one of --history, --audit, --experiment".into()));
            }
            let mut md = String::from("# kgat report\n");
            if let Some(h) = history {
                inputs.insert("history", h.display().to_string());
                let rows = read_history(h)?;
                md.push_str(&history_section(&rows));
                if cli.plots {
                    let series = |k: usize| rows.iter().map(|r| (r[0], r[k])).collect::<Vec<_>>();
                    let chart = svg::line_chart(
                        "Training history",
                        "epoch",
                        &[("primary loss", series(1)), ("adversary loss", series(2)), ("parity gap", series(5))],
                    );
                    outputs.side("history.svg", chart)?;
                }
            }
            if let Some(a) = audit {
                inputs.insert("audit", a.display().to_string());
                md.push_str(&audit_section(&read_json(a)?));
            }
            if let Some(e) = experiment {
                inputs.insert("experiment", e.display().to_string());
                md.push_str(&experiment_section(&read_json(e)?));
            }
            outputs.primary(md)?;
            "report"
        }
    };
    let written: Vec<String> = outputs.written.iter().map(|p| p.display().to_string()).collect();
    let manifest = json!({
        "command": name,
        "args": args.iter().map(|a| a.to_string_lossy().into_owned()).collect::<Vec<_>>(),
        "config": config.to_json(),
        "inputs": inputs,
        "outputs": written,
        "seed": config.trainer.seed,
        "version": env!("CARGO_PKG_VERSION"),
        "duration_seconds": started.elapsed().as_secs_f64(),
    });
    let path = sibling(&outputs.out, "manifest.json");
    io::write(&path, report::pretty(&manifest).as_bytes()).map_err(anyhow::Error::from)?;
    log::info!("{name}: wrote {}", written.join(", "));
    Ok(())
}

fn load_dataset(path: &Path, graph: &KnowledgeGraph) -> anyhow::Result<Dataset> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    Ok(if is_csv {
        io::load_tabular_dataset(path)?
    } else {
        io::load_text_dataset(path, graph, None::<&BTreeSet<String>>)?
    })
}

fn read_json(path: &Path) -> anyhow::Result<Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Rows of a history CSV; an empty parity gap becomes NaN.
fn read_history(path: &Path) -> anyhow::Result<Vec<Vec<f64>>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: row {}", path.display(), i + 1))?;
        if rec.len() != 6 {
            bail!("{}: row {}: expected 6 columns", path.display(), i + 1);
        }
        let row = rec
            .iter()
            .map(|c| if c.is_empty() { Ok(f64::NAN) } else { c.parse::<f64>() })
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("{}: row {}", path.display(), i + 1))?;
        rows.push(row);
    }
    Ok(rows)
}

fn fmt(v: &Value) -> String {
    match v.as_f64() {
        Some(x) => format!("{x:.4}"),
        None => "n/a".into(),
    }
}

fn history_section(rows: &[Vec<f64>]) -> String {
    let mut s = String::from("\n## Training\n\n");
    match (rows.first(), rows.last()) {
        (Some(first), Some(last)) => {
            s.push_str("| epoch | primary loss | adversary loss | accuracy | parity gap |\n|---|---|---|---|---|\n");
            for r in [first, last] {
                s.push_str(&format!("| {} | {:.4} | {:.4} | {:.4} | {:.4} |\n", r[0], r[1], r[2], r[4], r[5]));
            }
        }
        _ => s.push_str("No epochs were run.\n"),
    }
    s
}

fn audit_section(v: &Value) -> String {
    let f = &v["fairness"];
    let mut s = format!(
        "\n## Audit\n\nRows: {}. Parity gap {}, opportunity gap {}.\n",
        v["rows"],
        fmt(&f["parity_gap"]),
        fmt(&f["opportunity_gap"])
    );
    if let Some(rates) = f["positive_rates"].as_object() {
        s.push_str("\n| group | positive rate | true positive rate |\n|---|---|---|\n");
        for (g, p) in rates {
            s.push_str(&format!("| {g} | {} | {} |\n", fmt(p), fmt(&f["true_positive_rates"][g])));
        }
    }
    if let Some(c) = v.get("comparison") {
        s.push_str(&format!(
            "\nAgainst the baseline the parity gap moved from {} to {} (relative reduction {}).\n",
            fmt(&c["parity_gap_before"]),
            fmt(&c["parity_gap_after"]),
            fmt(&c["parity_relative_reduction"])
        ));
    }
    if let Some(e) = v["causal"]["error"].as_str() {
        s.push_str(&format!("\nCausal adjustment unavailable: {e}.\n"));
    }
    s
}

fn experiment_section(v: &Value) -> String {
    let mut s = String::from("\n## Experiment grid\n\n| lambda | KG | mean accuracy | mean parity gap | mean relative reduction |\n|---|---|---|---|---|\n");
    for c in v["cells"].as_array().into_iter().flatten() {
        s.push_str(&format!(
            "| {} | {} | {} | {} | {} |\n",
            c["lambda"],
            if c["use_kg"] == json!(true) { "on" } else { "off" },
            fmt(&c["mean_accuracy"]),
            fmt(&c["mean_parity_gap"]),
            fmt(&c["mean_relative_reduction"])
        ));
    }
    s
}
