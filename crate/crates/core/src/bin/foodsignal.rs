use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use foodsignal::pipeline::{self, PipelineConfig, Stage};
use foodsignal::synth::{self, SynthConfig};
use foodsignal::{Error, Result};

#[derive(Parser)]
#[command(name = "foodsignal", version, about = "Dietary-health signals from geo-tagged microblog corpora")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML configuration file. Relative paths inside it resolve against its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// obesity or diabetes
    #[arg(long, global = true)]
    target: Option<String>,
    /// all, solid, beverage or alcoholic
    #[arg(long, global = true)]
    class_filter: Option<String>,
    #[arg(long, global = true)]
    min_users: Option<usize>,
    #[arg(long, global = true)]
    percentile: Option<f64>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    bootstrap_iters: Option<usize>,
    #[arg(long, global = true)]
    null_shuffles: Option<usize>,
    /// Any config key, e.g. `--set thresholds.lambda_grid=[0.1,1,10]`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    /// Worker threads; outputs do not depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Validate raw tweets and profiles, assign gender and home zip.
    Ingest,
    /// Tag food mentions in the ingested tweets.
    Match,
    /// Build user features and county/state aggregates.
    Features,
    /// State-level caloric value vs outcome correlations.
    Correlate,
    /// Cross-validated ridge models at county level.
    Fit,
    /// Score users with a food model.
    Score,
    /// Score differences across user interests and attributes.
    Interests,
    /// Social-graph analyses over user scores.
    #[command(subcommand)]
    Network(NetworkCommand),
    /// Foods that set each state apart.
    Distinguish,
    /// Every corpus stage in order.
    All,
    /// Generate a synthetic nation with planted ground truth.
    Synth {
        /// Directory to write the nation into.
        #[arg(long)]
        out: PathBuf,
        /// Generator settings (TOML); `--set` keys address this file.
        #[arg(long)]
        synth_config: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum NetworkCommand {
    /// Activation probability by number of active neighbours.
    Activation,
    /// Endpoint correlation by tie strength.
    Cliqueness,
}

const ALL_STAGES: [Stage; 10] = [
    Stage::Ingest,
    Stage::Match,
    Stage::Features,
    Stage::Correlate,
    Stage::Fit,
    Stage::Score,
    Stage::Interests,
    Stage::Activation,
    Stage::Cliqueness,
    Stage::Distinguish,
];

fn parse_sets(sets: &[String]) -> Result<Vec<(String, toml::Value)>> {
    sets.iter()
        .map(|s| {
            let (k, v) = s.split_once('=').ok_or_else(|| Error::Config(format!("--set {s:?}: expected KEY=VALUE")))?;
            Ok((k.trim().to_string(), pipeline::parse_override_value(v.trim())))
        })
        .collect()
}

fn absolute(p: &Path) -> Result<PathBuf> {
    std::path::absolute(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
}

/// Dedicated flags become overrides; they are applied after `--set`.
fn pipeline_config(g: &Global) -> Result<PipelineConfig> {
    let mut o = parse_sets(&g.sets)?;
    let s = |v: &str| toml::Value::String(v.to_string());
    if let Some(v) = g.seed {
        o.push(("seed".into(), toml::Value::Integer(v as i64)));
    }
    if let Some(v) = &g.output_dir {
        o.push(("output_dir".into(), s(&absolute(v)?.to_string_lossy())));
    }
    if let Some(v) = &g.target {
        o.push(("target".into(), s(&v.to_ascii_lowercase())));
    }
    if let Some(v) = &g.class_filter {
        let c: foodsignal::lexicon::ClassFilter = v.parse()?;
        o.push(("class_filter".into(), s(c.as_str())));
    }
    let int = |v: usize| toml::Value::Integer(v as i64);
    for (key, v) in [
        ("thresholds.min_users", g.min_users),
        ("thresholds.k", g.k),
        ("thresholds.bootstrap_iters", g.bootstrap_iters),
        ("thresholds.null_shuffles", g.null_shuffles),
    ] {
        if let Some(v) = v {
            o.push((key.into(), int(v)));
        }
    }
    for (key, v) in [("thresholds.percentile", g.percentile), ("thresholds.lambda", g.lambda)] {
        if let Some(v) = v {
            o.push((key.into(), toml::Value::Float(v)));
        }
    }
    PipelineConfig::load(g.config.as_deref(), &o)
}

fn synth_config(g: &Global, file: Option<&Path>) -> Result<SynthConfig> {
    let mut table: toml::Table = match file {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    for (k, v) in parse_sets(&g.sets)? {
        let mut cur = &mut table;
        let parts: Vec<&str> = k.split('.').collect();
        for p in &parts[..parts.len() - 1] {
            cur = cur
                .entry(p.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("{k}: {p} is not a table")))?;
        }
        cur.insert(parts[parts.len() - 1].to_string(), v);
    }
    let seed = g.seed.or_else(|| table.get("seed").and_then(toml::Value::as_integer).map(|s| s as u64));
    let seed = seed.ok_or_else(|| Error::Config("seed is mandatory (--seed or `seed` in the synth config)".into()))?;
    table.insert("seed".into(), toml::Value::Integer(seed as i64));
    toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
}

/// Relative paths of every file under `dir`, sorted.
fn list_files(dir: &Path) -> Result<Vec<String>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) -> std::io::Result<()> {
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else if let Ok(rel) = path.strip_prefix(root) {
                out.push(rel.to_string_lossy().replace('\\', "/"));
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out).map_err(|e| Error::Config(format!("{}: {e}", dir.display())))?;
    out.retain(|f| !f.starts_with("manifest_"));
    out.sort();
    Ok(out)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.global.workers {
        if n == 0 {
            return Err(Error::Config("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    }
    let stages: Vec<Stage> = match &cli.command {
        Command::Synth { out, synth_config: file } => {
            let cfg = synth_config(&cli.global, file.as_deref())?;
            let truth = synth::generate(&cfg, out)?;
            log::info!(
                "nation: {} users, caloric r2 {:.3}, planted r2 {:.3}",
                truth.n_users,
                truth.obesity.caloric_r2,
                truth.obesity.planted_r2
            );
            pipeline::write_manifest(out, "synth", cfg.seed, &cfg, &list_files(out)?)?;
            return Ok(());
        }
        Command::Ingest => vec![Stage::Ingest],
        Command::Match => vec![Stage::Match],
        Command::Features => vec![Stage::Features],
        Command::Correlate => vec![Stage::Correlate],
        Command::Fit => vec![Stage::Fit],
        Command::Score => vec![Stage::Score],
        Command::Interests => vec![Stage::Interests],
        Command::Network(NetworkCommand::Activation) => vec![Stage::Activation],
        Command::Network(NetworkCommand::Cliqueness) => vec![Stage::Cliqueness],
        Command::Distinguish => vec![Stage::Distinguish],
        Command::All => ALL_STAGES.to_vec(),
    };
    let cfg = pipeline_config(&cli.global)?;
    for stage in stages {
        pipeline::run_stage(stage, &cfg)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            let class = e.class();
            eprintln!("{}", json!({ "error": { "class": class.as_str(), "code": class.exit_code(), "message": e.to_string() } }));
            ExitCode::from(class.exit_code() as u8)
        }
        Err(_) => {
            eprintln!("{}", json!({ "error": { "class": "internal", "code": 4, "message": "internal error (panic)" } }));
            ExitCode::from(4)
        }
    }
}
