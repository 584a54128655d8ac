use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use driftmem::cluster::{cluster_instructions, ClusterError, DEFAULT_TAU};
use driftmem::driftsim::{evaluate_suite, metrics_csv, presets, MetricsRow, Scenario, SimError};
use driftmem::embed::{HashedBagOfWords, DEFAULT_DIM};
use driftmem::memstore::{MemoryStore, RetrievalConfig, StoreError};
use driftmem::persist::{
    load_bank, read_records, read_scenario, save_bank, write_atomic, write_records, Bank, ClusterRecord,
    InstructionRecord, PersistError, ProviderRegistry, TrajectoryRecord, TripletRecord,
};
use driftmem::procedural::{abstract_workflows, record_workflow, ProceduralError};
use driftmem::stationary::{
    ingest_triplets, retrieve_elements, Thresholds, DEFAULT_K_ICONS, DEFAULT_THETA_DUP, DEFAULT_THETA_MATCH,
};

const DEFAULT_N: usize = 20;
const DEFAULT_K: usize = 3;

#[derive(Parser)]
#[command(name = "driftmem", version, about = "Dual-level agent memory under interface drift")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create or examine a bank file.
    Bank {
        #[command(subcommand)]
        action: BankCommand,
    },
    /// Upsert annotated screen-action-screen triplets into stationary memory.
    Ingest {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        triplets: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THETA_MATCH, value_parser = unit)]
        theta_match: f64,
        #[arg(long, default_value_t = DEFAULT_THETA_DUP, value_parser = unit)]
        theta_dup: f64,
    },
    /// Group instructions into maximal cliques of mutually similar ones.
    Cluster {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TAU, value_parser = tau)]
        tau: f64,
    },
    /// Abstract each cluster of trajectories into workflows and record them.
    Abstract {
        #[arg(long)]
        clusters: PathBuf,
        #[arg(long)]
        trajectories: PathBuf,
        #[arg(long)]
        bank: PathBuf,
    },
    /// Retrieve entries for a query, updating their metadata unless --dry-run.
    Retrieve {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        query: String,
        #[arg(short = 'N', default_value_t = DEFAULT_N)]
        n: usize,
        #[arg(short = 'K', default_value_t = DEFAULT_K)]
        k: usize,
        #[arg(long, value_enum, default_value_t = StoreChoice::Procedural)]
        store: StoreChoice,
        #[arg(long, value_parser = unit)]
        min_similarity: Option<f64>,
        #[arg(long)]
        dry_run: bool,
    },
    /// Run a scenario and write per-iteration metrics as CSV.
    Simulate(SimulateArgs),
    /// Summarize a metrics CSV.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Subcommand)]
enum BankCommand {
    /// Write an empty bank.
    Init {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long, value_enum, default_value_t = Stores::Both)]
        stores: Stores,
        #[arg(long, default_value_t = DEFAULT_DIM)]
        dim: usize,
    },
    /// List every entry with its metadata.
    Inspect {
        #[arg(long)]
        bank: PathBuf,
    },
    /// Counters and retention histogram per store.
    Stats {
        #[arg(long)]
        bank: PathBuf,
    },
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario file.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    scenario: Option<PathBuf>,
    /// Built-in scenario: ablation-0.1, ablation-0.3, ablation-0.5 or continual.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Also write every episode transcript.
    #[arg(long)]
    transcripts: Option<PathBuf>,
    /// Write the effective scenario, after overrides.
    #[arg(long)]
    save_scenario: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = tau)]
    tau: Option<f64>,
    #[arg(long, value_parser = unit)]
    theta_match: Option<f64>,
    #[arg(long, value_parser = unit)]
    theta_dup: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    k_icons: Option<usize>,
    #[arg(short = 'N')]
    n: Option<usize>,
    #[arg(short = 'K')]
    k: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Stores {
    Both,
    Procedural,
    Stationary,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum StoreChoice {
    Procedural,
    Stationary,
}

fn unit(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn tau(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1)"))
    }
}

enum Failure {
    Usage(String),
    Data(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Data(_) => 3,
            Failure::Runtime(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<PersistError> for Failure {
    fn from(e: PersistError) -> Self {
        if e.is_data_error() {
            Failure::Data(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::InvalidConfig(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<ClusterError> for Failure {
    fn from(e: ClusterError) -> Self {
        match e {
            ClusterError::InvalidTau(_) => Failure::Usage(e.to_string()),
            ClusterError::TooManyNodes { .. } => Failure::Runtime(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<ProceduralError> for Failure {
    fn from(e: ProceduralError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::ReachabilityLost { .. } => Failure::Runtime(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            Failure::Runtime(e.to_string())
        } else {
            Failure::Data(e.to_string())
        }
    }
}

type Outcome = Result<String, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Bank { action } => bank(action),
        Command::Ingest { bank, triplets, theta_match, theta_dup } => ingest(&bank, &triplets, theta_match, theta_dup),
        Command::Cluster { input, out, tau } => cluster(&input, &out, tau),
        Command::Abstract { clusters, trajectories, bank } => abstract_cmd(&clusters, &trajectories, &bank),
        Command::Retrieve { bank, query, n, k, store, min_similarity, dry_run } => {
            let mut cfg = RetrievalConfig::new(n, k)?;
            if let Some(f) = min_similarity {
                cfg = cfg.with_min_similarity(f);
            }
            retrieve(&bank, &query, &cfg, store, dry_run)
        }
        Command::Simulate(args) => simulate(args),
        Command::Report { input } => report(&input),
    }
}

fn open(path: &Path) -> Result<Bank, Failure> {
    Ok(load_bank(path, &ProviderRegistry::default())?)
}

fn bank(action: BankCommand) -> Outcome {
    match action {
        BankCommand::Init { bank, stores, dim } => {
            if dim != DEFAULT_DIM {
                return Err(Failure::Usage(format!(
                    "only the {DEFAULT_DIM}-dimensional hashed embedder is registered"
                )));
            }
            let provider = HashedBagOfWords::shared(dim);
            let b = Bank {
                procedural: matches!(stores, Stores::Both | Stores::Procedural)
                    .then(|| MemoryStore::new(provider.clone())),
                stationary: matches!(stores, Stores::Both | Stores::Stationary)
                    .then(|| MemoryStore::new(provider.clone())),
            };
            let bytes = save_bank(&bank, &b)?;
            Ok(format!("wrote {} ({bytes} bytes)\n", bank.display()))
        }
        BankCommand::Inspect { bank } => {
            let b = open(&bank)?;
            let mut out = String::new();
            if let Some(s) = &b.procedural {
                let _ = writeln!(out, "procedural  C_global={}  entries={}", s.global_counter(), s.len());
                for e in s.entries() {
                    let _ = writeln!(
                        out,
                        "  #{} seq={} t={} n={} R={:.4}  {}",
                        e.id,
                        e.created_seq,
                        e.last_access,
                        e.count,
                        e.retention(s.global_counter())?,
                        e.key
                    );
                    for step in e.payload.steps() {
                        let _ = writeln!(out, "      {}", step.as_str());
                    }
                }
            }
            if let Some(s) = &b.stationary {
                let _ = writeln!(out, "stationary  C_global={}  entries={}", s.global_counter(), s.len());
                for e in s.entries() {
                    let _ = writeln!(
                        out,
                        "  #{} seq={} t={} n={} R={:.4}  {}  ({} variants)",
                        e.id,
                        e.created_seq,
                        e.last_access,
                        e.count,
                        e.retention(s.global_counter())?,
                        e.key,
                        e.payload.variants.len()
                    );
                }
            }
            Ok(out)
        }
        BankCommand::Stats { bank } => {
            let b = open(&bank)?;
            let mut out = String::new();
            let mut section = |name: &str, st: driftmem::memstore::StoreStats, extra: String| {
                let _ = writeln!(
                    out,
                    "{name}: entries={} C_global={} next_seq={}{extra}",
                    st.entries, st.global_counter, st.next_seq
                );
                let hist: Vec<String> = st.retention_histogram.iter().map(usize::to_string).collect();
                let _ = writeln!(out, "  retention histogram [0,1) in tenths: {}", hist.join(" "));
            };
            if let Some(s) = &b.procedural {
                section("procedural", s.stats(), String::new());
            }
            if let Some(s) = &b.stationary {
                let variants: usize = s.entries().iter().map(|e| e.payload.variants.len()).sum();
                section("stationary", s.stats(), format!(" variants={variants}"));
            }
            Ok(out)
        }
    }
}

fn ingest(path: &Path, triplets: &Path, theta_match: f64, theta_dup: f64) -> Outcome {
    let mut b = open(path)?;
    let store = b.stationary.as_mut().ok_or_else(|| Failure::Data("bank has no stationary store".into()))?;
    let records: Vec<TripletRecord> = read_records(triplets)?;
    let triplets = records
        .iter()
        .enumerate()
        .map(|(i, r)| r.triplet().map_err(|e| Failure::Data(format!("triplet {}: blob: {e}", i + 1))))
        .collect::<Result<Vec<_>, _>>()?;
    let report = ingest_triplets(store, &triplets, Thresholds { theta_match, theta_dup });
    save_bank(path, &b)?;
    let mut out = format!(
        "created={} appended={} discarded={} rejected={}\n",
        report.created,
        report.appended,
        report.discarded,
        report.errors.len()
    );
    for (i, e) in &report.errors {
        let _ = writeln!(out, "  triplet {}: {e}", i + 1);
    }
    Ok(out)
}

fn cluster(input: &Path, out: &Path, tau: f64) -> Outcome {
    let records: Vec<InstructionRecord> = read_records(input)?;
    let pairs: Vec<(String, String)> = records.into_iter().map(|r| (r.id, r.text)).collect();
    let clusters = cluster_instructions(&pairs, &HashedBagOfWords::default(), tau)?;
    let recs: Vec<ClusterRecord> =
        clusters.iter().map(|c| ClusterRecord { members: c.member_ids.iter().cloned().collect() }).collect();
    write_records(out, &recs)?;
    Ok(format!("{} clusters from {} instructions\n", recs.len(), pairs.len()))
}

fn abstract_cmd(clusters: &Path, trajectories: &Path, path: &Path) -> Outcome {
    let clusters: Vec<ClusterRecord> = read_records(clusters)?;
    let trajs: Vec<TrajectoryRecord> = read_records(trajectories)?;
    let by_id: HashMap<&str, &TrajectoryRecord> = trajs.iter().map(|t| (t.id.as_str(), t)).collect();
    let mut b = open(path)?;
    let store = b.procedural.as_mut().ok_or_else(|| Failure::Data("bank has no procedural store".into()))?;
    let mut out = String::new();
    for (ci, c) in clusters.iter().enumerate() {
        let members = c
            .members
            .iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .map(|t| t.trajectory())
                    .ok_or_else(|| Failure::Data(format!("cluster {}: unknown trajectory {id:?}", ci + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let workflows = abstract_workflows(&members)?;
        if workflows.is_empty() {
            let _ = writeln!(out, "cluster {}: no aligned workflow", ci + 1);
        }
        for wf in workflows {
            let _ = writeln!(out, "cluster {}: recorded {:?}", ci + 1, wf.name());
            record_workflow(store, wf)?;
        }
    }
    save_bank(path, &b)?;
    Ok(out)
}

fn retrieve(path: &Path, query: &str, cfg: &RetrievalConfig, store: StoreChoice, dry_run: bool) -> Outcome {
    let mut b = open(path)?;
    let mut out = String::new();
    let missing = || {
        Failure::Data(format!(
            "bank has no {} store",
            if store == StoreChoice::Procedural { "procedural" } else { "stationary" }
        ))
    };
    if dry_run {
        let (scores, meta): (_, Vec<(u64, String)>) = match store {
            StoreChoice::Procedural => {
                let s = b.procedural.as_ref().ok_or_else(missing)?;
                (s.dry_run(query, cfg)?, s.entries().iter().map(|e| (e.last_access, e.key.clone())).collect())
            }
            StoreChoice::Stationary => {
                let s = b.stationary.as_ref().ok_or_else(missing)?;
                (s.dry_run(query, cfg)?, s.entries().iter().map(|e| (e.last_access, e.key.clone())).collect())
            }
        };
        let _ = writeln!(out, "rank  id  similarity  retention  tau  key");
        for c in scores {
            let (t, key) = &meta[c.id as usize];
            let rank = c.rank.map_or("-".to_string(), |r| (r + 1).to_string());
            let _ =
                writeln!(out, "{rank:>4}  {:>2}  {:>10.4}  {:>9.4}  {t:>3}  {key}", c.id, c.similarity, c.retention);
        }
        return Ok(out);
    }
    match store {
        StoreChoice::Procedural => {
            let s = b.procedural.as_mut().ok_or_else(missing)?;
            for e in s.retrieve(query, cfg)? {
                let _ = writeln!(out, "#{} {}", e.id, e.key);
                for step in e.payload.steps() {
                    let _ = writeln!(out, "    {}", step.as_str());
                }
            }
        }
        StoreChoice::Stationary => {
            let s = b.stationary.as_mut().ok_or_else(missing)?;
            let hits = retrieve_elements(s, query, cfg, DEFAULT_K_ICONS).map_err(|e| Failure::Data(e.to_string()))?;
            for h in hits {
                let _ = writeln!(
                    out,
                    "#{} {}  variant {} (seq {})",
                    h.entry_id, h.description, h.variant_index, h.variant_seq
                );
            }
        }
    }
    save_bank(path, &b)?;
    Ok(out)
}

fn preset(name: &str) -> Result<(Scenario, usize), Failure> {
    match name {
        "continual" => Ok((presets::continual_scenario(), presets::CONTINUAL_ITERATIONS)),
        _ => {
            let sigma = name
                .strip_prefix("ablation-")
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|s| presets::ABLATION_SIGMAS.contains(s))
                .ok_or_else(|| Failure::Usage(format!("unknown preset {name:?}")))?;
            Ok((presets::ablation_scenario(sigma), presets::ABLATION_VERSIONS))
        }
    }
}

fn simulate(a: SimulateArgs) -> Outcome {
    let (mut scenario, default_iterations) = match (&a.scenario, &a.preset) {
        (Some(path), _) => (read_scenario(path)?, None),
        (None, Some(name)) => preset(name).map(|(s, n)| (s, Some(n)))?,
        (None, None) => return Err(Failure::Usage("pass --scenario or --preset".into())),
    };
    let iterations = a
        .iterations
        .or(default_iterations)
        .ok_or_else(|| Failure::Usage("--iterations is required with --scenario".into()))?;
    if let Some(seed) = a.seed {
        scenario.seed = seed;
    }
    if let Some(t) = a.tau {
        scenario.evolution.tau = t;
    }
    if let Some(t) = a.theta_match {
        scenario.evolution.theta_match = t;
    }
    if let Some(t) = a.theta_dup {
        scenario.evolution.theta_dup = t;
    }
    for agent in &mut scenario.agents {
        if let Some(l) = a.lambda {
            agent.lambda = l;
        }
        if let Some(k) = a.k_icons {
            agent.k_icons = k;
        }
        if let Some(n) = a.n {
            agent.proc_n = n;
            agent.stat_n = n;
        }
        if let Some(k) = a.k {
            agent.proc_k = k;
            agent.stat_k = k;
        }
    }
    if let Some(path) = &a.save_scenario {
        write_records(path, std::slice::from_ref(&scenario))?;
    }
    let output = evaluate_suite(&scenario, iterations)?;
    write_atomic(&a.out, &metrics_csv(&output.rows)?)?;
    if let Some(path) = &a.transcripts {
        write_records(path, &output.episodes)?;
    }
    Ok(render_report(&output.rows))
}

fn report(input: &Path) -> Outcome {
    let mut reader = csv::Reader::from_path(input)?;
    let rows = reader.deserialize::<MetricsRow>().collect::<Result<Vec<_>, _>>()?;
    if rows.is_empty() {
        return Err(Failure::Data("metrics file has no rows".into()));
    }
    Ok(render_report(&rows))
}

fn pct(v: Option<f64>) -> String {
    v.map_or("-".into(), |p| format!("{p:.1}"))
}

/// Per-iteration table followed by overall success rates.
fn render_report(rows: &[MetricsRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>4}  {:>7}  {:<12}  {:>7}  {:>6}  {:>6}  {:>6}",
        "iter", "version", "agent", "solved", "SR", "Proc%", "Stat%"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:>4}  {:>7}  {:<12}  {:>7}  {:>5.1}%  {:>6}  {:>6}",
            r.iteration,
            r.version,
            r.agent,
            format!("{}/{}", r.successes, r.tasks),
            100.0 * r.success_rate,
            pct(r.proc_old_pct),
            pct(r.stat_old_pct)
        );
    }
    let mut totals: BTreeMap<usize, (&str, usize, usize)> = BTreeMap::new();
    let mut order: Vec<&str> = Vec::new();
    for r in rows {
        if !order.contains(&r.agent.as_str()) {
            order.push(&r.agent);
        }
        let pos = order.iter().position(|a| *a == r.agent).expect("just pushed");
        let t = totals.entry(pos).or_insert((&r.agent, 0, 0));
        t.1 += r.successes;
        t.2 += r.tasks;
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<12}  {:>9}  {:>6}", "agent", "successes", "SR");
    for (agent, wins, tasks) in totals.values() {
        let sr = if *tasks == 0 { 0.0 } else { 100.0 * *wins as f64 / *tasks as f64 };
        let _ = writeln!(out, "{agent:<12}  {:>4}/{:<4}  {sr:>5.1}%", wins, tasks);
    }
    out
}
