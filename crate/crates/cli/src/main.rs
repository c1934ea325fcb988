use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use subtab_core::artifacts::{cache_key, run_selection, Artifacts, Method, DATA_DIR_ENV};
use subtab_core::config::Config;
use subtab_core::optimize::{brute_force_optimal, exact_column_selection, semi_greedy, OptimizerBudget};
use subtab_core::query::{Predicate, SPQuery};
use subtab_core::rules::{filter_rules_by_targets, MiningMode};
use subtab_core::selection::SelectionRequest;
use subtab_core::table::{load_csv, CsvOptions, Table};
use subtab_eval::planted::{generate_planted, PlantedConfig};
use subtab_eval::replay::{generate_sessions, replay_sessions, ReplayOptions, SessionLog};
use subtab_eval::sweep::{sweep_parameters, SweepSpec};
use subtab_service::{AppState, ServiceConfig, ARTIFACTS_DIR};

#[derive(Parser)]
#[command(name = "subtab", version, about = "Select small informative sub-tables from large tables")]
struct Cli {
    /// Artifact and table storage.
    #[arg(long, global = true, env = DATA_DIR_ENV, default_value = "subtab-data")]
    data_dir: PathBuf,
    /// TOML settings file (camelCase keys, e.g. `bins = 5`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a CSV and print its size and inferred schema.
    Load(TableArgs),
    /// Bin, embed and mine a table, caching the artifacts.
    Preprocess {
        #[command(flatten)]
        table: TableArgs,
        #[command(flatten)]
        pre: PreArgs,
    },
    /// Select a k x l sub-table from a preprocessed table.
    Select {
        #[command(flatten)]
        table: TableArgs,
        #[command(flatten)]
        pre: PreArgs,
        #[command(flatten)]
        sel: SelectArgs,
        #[arg(long, value_enum, default_value = "embedding")]
        method: MethodArg,
    },
    /// Page through the mined rules, highest support first.
    Rules {
        #[command(flatten)]
        table: TableArgs,
        #[command(flatten)]
        pre: PreArgs,
        #[arg(long, default_value_t = 20)]
        limit: usize,
        #[arg(long, default_value_t = 0)]
        offset: usize,
    },
    /// Coverage optimizers for small tables: greedy rows per column set,
    /// optionally over a sample of column sets, or the exact optimum.
    Optimize {
        #[command(flatten)]
        table: TableArgs,
        #[command(flatten)]
        pre: PreArgs,
        #[arg(short, long)]
        k: usize,
        #[arg(short, long)]
        l: usize,
        #[arg(long = "target")]
        targets: Vec<String>,
        /// Visit at most this many random column sets.
        #[arg(long, conflicts_with = "brute_force")]
        max_combos: Option<u64>,
        /// Enumerate every k x l sub-table and maximise the combined score.
        #[arg(long)]
        brute_force: bool,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Run a baseline selector.
    Baseline {
        #[command(flatten)]
        table: TableArgs,
        #[command(flatten)]
        pre: PreArgs,
        #[command(flatten)]
        sel: SelectArgs,
        #[arg(long, value_enum)]
        method: BaselineArg,
    },
    /// Offline evaluation.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Start the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long, default_value_t = 256)]
        max_upload_mb: usize,
    },
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Replay session logs and report capture rates.
    Replay {
        #[command(flatten)]
        table: TableArgs,
        #[command(flatten)]
        pre: PreArgs,
        /// Session logs, one JSON step per line.
        #[arg(long = "sessions", required = true, num_args = 1..)]
        sessions: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "embedding")]
        method: MethodArg,
        #[arg(short, long, default_value_t = 10)]
        k: usize,
        #[arg(short, long, default_value_t = 5)]
        l: usize,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Make the next step's fragment columns targets.
        #[arg(long)]
        force_targets: bool,
        #[arg(long)]
        iterations: Option<u64>,
    },
    /// Parameter sweep from a TOML or JSON spec; writes one CSV row per run.
    Sweep {
        #[command(flatten)]
        table: TableArgs,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write per-point means and deviations.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Write a synthetic table with planted rules, and optionally session logs.
    Generate {
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        m: usize,
        #[arg(long, default_value_t = 3)]
        clusters: usize,
        #[arg(long, default_value_t = 2)]
        rules_per_cluster: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Write the planted rules here as JSON.
        #[arg(long)]
        rules_out: Option<PathBuf>,
        /// Write session logs into this directory.
        #[arg(long)]
        sessions_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        sessions: usize,
        #[arg(long, default_value_t = 5)]
        steps: usize,
    },
}

#[derive(Args)]
struct TableArgs {
    /// CSV file with a header row.
    csv: PathBuf,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    #[arg(long)]
    no_header: bool,
}

impl TableArgs {
    fn load(&self) -> Result<Table> {
        if !self.delimiter.is_ascii() {
            bail!("delimiter must be an ASCII character");
        }
        let opts = CsvOptions { delimiter: self.delimiter as u8, has_header: !self.no_header, ..CsvOptions::default() };
        let file = fs::File::open(&self.csv).with_context(|| format!("opening {}", self.csv.display()))?;
        load_csv(std::io::BufReader::new(file), &opts).with_context(|| format!("reading {}", self.csv.display()))
    }
}

/// Preprocessing settings on top of the config file.
#[derive(Args)]
struct PreArgs {
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    support: Option<f64>,
    #[arg(long)]
    confidence: Option<f64>,
    #[arg(long)]
    min_rule_size: Option<usize>,
    #[arg(long, value_enum)]
    rule_mode: Option<RuleModeArg>,
    /// Consequent columns for per-target or exhaustive mining.
    #[arg(long = "rule-target")]
    rule_targets: Vec<String>,
    /// Preprocessing seed.
    #[arg(long = "pre-seed")]
    pre_seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleModeArg {
    Apriori,
    Exhaustive,
    PerTarget,
    None,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(short, long)]
    k: usize,
    #[arg(short, long)]
    l: usize,
    /// Conjunctive filter, e.g. `--where "CANCELLED = 1"`; repeatable.
    #[arg(long = "where")]
    predicates: Vec<String>,
    /// Restrict the query result to these columns (comma separated).
    #[arg(long, value_delimiter = ',')]
    project: Vec<String>,
    #[arg(long = "target")]
    targets: Vec<String>,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Mark one covered rule per row.
    #[arg(long)]
    highlight: bool,
    /// Draws for random, rounds for mab.
    #[arg(long)]
    iterations: Option<u64>,
    /// Wall-clock budget for random, in milliseconds.
    #[arg(long)]
    time_ms: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Embedding,
    Random,
    Naive,
    Greedy,
    Mab,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    Random,
    Naive,
    Mab,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Embedding => Method::Embedding,
            MethodArg::Random => Method::Random,
            MethodArg::Naive => Method::Naive,
            MethodArg::Greedy => Method::Greedy,
            MethodArg::Mab => Method::Mab,
        }
    }
}

impl From<BaselineArg> for Method {
    fn from(m: BaselineArg) -> Self {
        match m {
            BaselineArg::Random => Method::Random,
            BaselineArg::Naive => Method::Naive,
            BaselineArg::Mab => Method::Mab,
        }
    }
}

fn base_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(Config::default()),
    }
}

impl PreArgs {
    fn apply(&self, mut c: Config) -> Result<Config> {
        c.bins = self.bins.unwrap_or(c.bins);
        c.dim = self.dim.unwrap_or(c.dim);
        c.epochs = self.epochs.unwrap_or(c.epochs);
        c.support = self.support.unwrap_or(c.support);
        c.confidence = self.confidence.unwrap_or(c.confidence);
        c.min_rule_size = self.min_rule_size.unwrap_or(c.min_rule_size);
        c.seed = self.pre_seed.unwrap_or(c.seed);
        if let Some(m) = self.rule_mode {
            c.rule_mode = match m {
                RuleModeArg::Apriori => Some(MiningMode::Apriori),
                RuleModeArg::Exhaustive => Some(MiningMode::Exhaustive),
                RuleModeArg::PerTarget => Some(MiningMode::PerTarget),
                RuleModeArg::None => None,
            };
        }
        if !self.rule_targets.is_empty() {
            c.rule_targets = self.rule_targets.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

impl SelectArgs {
    fn request(&self, method: Method) -> Result<subtab_core::artifacts::SubtableRequest> {
        let predicates = self.predicates.iter().map(|p| Predicate::parse(p)).collect::<subtab_core::Result<Vec<_>>>()?;
        let query = SPQuery { predicates, projection: self.project.clone() };
        let selection = SelectionRequest {
            k: self.k,
            l: self.l,
            query: (!query.is_identity()).then_some(query),
            targets: self.targets.clone(),
            alpha: self.alpha,
            seed: self.seed,
        };
        Ok(subtab_core::artifacts::SubtableRequest {
            highlight: self.highlight,
            iterations: self.iterations,
            time_budget_ms: self.time_ms,
            ..subtab_core::artifacts::SubtableRequest::new(selection, method)
        })
    }
}

fn artifacts_root(data_dir: &Path) -> PathBuf {
    data_dir.join(ARTIFACTS_DIR)
}

/// Cached artifacts for `table` under `cfg`, if `subtab preprocess` stored them.
fn cached(table: &Table, cfg: &Config, data_dir: &Path) -> Result<Option<Artifacts>> {
    let dir = artifacts_root(data_dir).join(cache_key(table, cfg)?);
    if !dir.exists() {
        return Ok(None);
    }
    Ok(Some(Artifacts::load(table, &dir)?))
}

fn require(table: &Table, cfg: &Config, data_dir: &Path) -> Result<Artifacts> {
    cached(table, cfg, data_dir)?.ok_or_else(|| {
        anyhow::anyhow!("no artifacts for this table and settings under {}; run `subtab preprocess` first", data_dir.display())
    })
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let base = base_config(cli.config.as_deref())?;
    let data_dir = cli.data_dir;
    match cli.command {
        Command::Load(t) => {
            let table = t.load()?;
            print_json(&json!({ "n": table.n_rows(), "m": table.n_cols(), "schema": table.schema() }))
        }
        Command::Preprocess { table, pre } => {
            let table = table.load()?;
            let cfg = pre.apply(base)?;
            let (art, hit) = Artifacts::load_or_preprocess(&table, &cfg, &artifacts_root(&data_dir), &mut |p| {
                eprintln!("{p:?}");
            })?;
            print_json(&json!({
                "key": art.key,
                "dir": art.dir_in(&artifacts_root(&data_dir)),
                "cacheHit": hit,
                "rules": art.rules.as_ref().map(|r| r.len()),
                "vocabulary": art.model.vocabulary().len(),
            }))
        }
        Command::Select { table, pre, sel, method } => select(&table, pre, &sel, method.into(), base, &data_dir),
        Command::Baseline { table, pre, sel, method } => select(&table, pre, &sel, method.into(), base, &data_dir),
        Command::Rules { table, pre, limit, offset } => {
            let table = table.load()?;
            let art = require(&table, &pre.apply(base)?, &data_dir)?;
            let rs = art.rules.as_ref().context("rule mining was switched off for these artifacts")?;
            let r = rs.rules();
            let mut order: Vec<usize> = (0..r.len()).collect();
            order.sort_by(|&a, &b| r[b].support.total_cmp(&r[a].support).then(r[b].confidence.total_cmp(&r[a].confidence)));
            let page: Vec<_> = order.iter().skip(offset).take(limit).map(|&i| rs.rule_json(&r[i])).collect();
            print_json(&json!({ "total": r.len(), "offset": offset, "limit": limit, "rules": page }))
        }
        Command::Optimize { table, pre, k, l, targets, max_combos, brute_force, alpha, seed } => {
            let table = table.load()?;
            let art = require(&table, &pre.apply(base)?, &data_dir)?;
            let rs = art.rules.as_ref().context("rule mining was switched off for these artifacts")?;
            if brute_force {
                if !targets.is_empty() {
                    bail!("--brute-force does not take targets");
                }
                let (sub, score) = brute_force_optimal(&art.binned, k, l, rs, alpha)?;
                return print_json(&json!({ "subTable": sub, "score": score }));
            }
            let active = filter_rules_by_targets(rs, &targets);
            let res = match max_combos {
                Some(n) => semi_greedy(&art.binned, k, l, &active, &targets, &OptimizerBudget::combos(n, seed))?,
                None => exact_column_selection(&art.binned, k, l, &active, &targets)?,
            };
            print_json(&res)
        }
        Command::Eval(e) => eval(e, base, &data_dir),
        Command::Serve { addr, max_upload_mb } => {
            let config = ServiceConfig { max_upload_bytes: max_upload_mb << 20, base, ..ServiceConfig::new(data_dir) };
            let state = AppState::open(config)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
                eprintln!("listening on http://{}", listener.local_addr()?);
                subtab_service::serve(listener, state).await?;
                Ok(())
            })
        }
    }
}

fn select(t: &TableArgs, pre: PreArgs, sel: &SelectArgs, method: Method, base: Config, data_dir: &Path) -> Result<()> {
    let table = t.load()?;
    let cfg = pre.apply(base)?;
    let art = cached(&table, &cfg, data_dir)?;
    if art.is_none() && method != Method::Naive {
        require(&table, &cfg, data_dir)?;
    }
    let res = run_selection(&table, art.as_ref(), &sel.request(method)?)?;
    print_json(&res)
}

fn eval(cmd: EvalCommand, base: Config, data_dir: &Path) -> Result<()> {
    match cmd {
        EvalCommand::Replay { table, pre, sessions, method, k, l, alpha, seed, force_targets, iterations } => {
            let table = table.load()?;
            let art = require(&table, &pre.apply(base)?, data_dir)?;
            let logs = sessions
                .iter()
                .map(|p| {
                    let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                    SessionLog::from_jsonl(&text).with_context(|| format!("parsing {}", p.display()))
                })
                .collect::<Result<Vec<_>>>()?;
            let opts = ReplayOptions { method: method.into(), k, l, alpha, seed, force_targets, iterations };
            let rep = replay_sessions(&art, &logs, &opts)?;
            print_json(&json!({
                "report": rep,
                "captureRate": rep.rate(),
                "columnCaptureRate": rep.column_rate(),
                "valueCaptureRate": rep.value_rate(),
            }))
        }
        EvalCommand::Sweep { table, spec, out, summary } => {
            let table = table.load()?;
            let text = fs::read_to_string(&spec).with_context(|| format!("reading {}", spec.display()))?;
            let spec: SweepSpec = if spec.extension().is_some_and(|e| e == "json") {
                serde_json::from_str(&text)?
            } else {
                toml::from_str(&text)?
            };
            let report = sweep_parameters(&table, &spec)?;
            match out {
                Some(p) => report.write_csv(fs::File::create(&p).with_context(|| format!("creating {}", p.display()))?)?,
                None => report.write_csv(std::io::stdout().lock())?,
            }
            if let Some(p) = summary {
                report.write_summary_csv(fs::File::create(&p).with_context(|| format!("creating {}", p.display()))?)?;
            }
            Ok(())
        }
        EvalCommand::Generate {
            n,
            m,
            clusters,
            rules_per_cluster,
            noise,
            seed,
            out,
            rules_out,
            sessions_dir,
            sessions,
            steps,
        } => {
            let planted = generate_planted(&PlantedConfig::new(n, m, clusters, rules_per_cluster, noise, seed))?;
            planted.table.write_csv(fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?)?;
            if let Some(p) = rules_out {
                fs::write(&p, serde_json::to_string_pretty(&planted.rules)?)?;
            }
            if let Some(dir) = sessions_dir {
                fs::create_dir_all(&dir)?;
                for (i, log) in generate_sessions(&planted, sessions, steps, true, seed).iter().enumerate() {
                    fs::write(dir.join(format!("session-{i:03}.jsonl")), log.to_jsonl())?;
                }
            }
            eprintln!("wrote {} rows x {} columns to {}", n, m, out.display());
            Ok(())
        }
    }
}
