//! Command-line front end: `run`, `simulate` and `eval`.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::aov_sim::{resolve_with, DependencyMatrix};
use crate::backend::BackendError;
use crate::config::{BackendKind, RunConfig};
use crate::dataset::{parse_dataset, parse_jsonl, DatasetRecord, GoldRecord, Prediction};
use crate::eval::{best_seq_match_ratio, best_token_f1, exact_match, progress_score, GoalSet};
use crate::memory::RefusalLexicon;
use crate::orchestrator::{Engine, ReplayOffset, RunError, RunErrorKind};
use crate::trace;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUN_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;
pub const EXIT_ID_MISMATCH: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "xpanda",
    version,
    about = "Question-driven multi-agent long-context engine"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Answer a query over a document, or every record of a dataset.
    Run(RunArgs),
    /// Simulate alternating scans over random dependency orders.
    Simulate(SimulateArgs),
    /// Score predictions against gold answers.
    Eval(EvalArgs),
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Document to read (use with --query).
    #[arg(long, requires = "query", conflicts_with = "dataset")]
    pub input: Option<PathBuf>,
    #[arg(long, requires = "input")]
    pub query: Option<String>,
    /// JSON Lines dataset with id, context, input and answers.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendArg>,
    #[arg(long)]
    pub mrt: Option<usize>,
    /// Directory for per-record trace files.
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    /// Answers file (JSON Lines); stdout when absent.
    #[arg(long)]
    pub answers_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BackendArg {
    Http,
    Scripted,
}

#[derive(Debug, clap::Args)]
pub struct SimulateArgs {
    /// Rows (entities) per matrix.
    #[arg(long)]
    pub x: usize,
    /// Columns (chunks) per matrix.
    #[arg(long)]
    pub y: usize,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    /// Replay budget; defaults to y - 1.
    #[arg(long)]
    pub mrt: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Enumerate every matrix instead of sampling.
    #[arg(long)]
    pub exhaustive: bool,
    #[arg(long, value_enum, default_value_t = OffsetArg::Exclusive)]
    pub offset: OffsetArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OffsetArg {
    Exclusive,
    Inclusive,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum MetricArg {
    F1,
    Em,
    SeqMatch,
    Progress,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long, value_enum, default_value_t = MetricArg::F1)]
    pub metric: MetricArg,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    pub format: FormatArg,
    /// Trace directory, needed for the progress metric.
    #[arg(long)]
    pub traces: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Simulate(a) => cmd_simulate(&a, &mut std::io::stdout().lock()),
        Command::Eval(a) => cmd_eval(&a),
    }
}

fn fail(code: i32, msg: impl std::fmt::Display) -> i32 {
    eprintln!("error: {msg}");
    code
}

/// Writes `contents` to `path` via a temporary sibling and a rename.
fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)
}

fn trace_file_name(id: &str) -> String {
    let safe: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{safe}.trace.jsonl")
}

fn is_unreachable(e: &RunError) -> bool {
    matches!(&e.kind, RunErrorKind::Backend(b) if matches!(b.root(), BackendError::Transport(_)))
}

pub fn cmd_run(args: &RunArgs) -> i32 {
    let mut cfg = match &args.config {
        Some(p) => match RunConfig::load(p) {
            Ok(c) => c,
            Err(e) => return fail(EXIT_USAGE, e),
        },
        None => RunConfig::default(),
    };
    if let Some(b) = args.backend {
        cfg.backend.kind = match b {
            BackendArg::Http => BackendKind::Http,
            BackendArg::Scripted => BackendKind::Scripted,
        };
    }
    if let Some(m) = args.mrt {
        cfg.run.mrt = Some(m);
    }
    let records = match load_records(args) {
        Ok(r) => r,
        Err(msg) => return fail(EXIT_USAGE, msg),
    };
    let engine_cfg = match cfg.engine_config() {
        Ok(c) => c,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let backend = match cfg.build_backend() {
        Ok(b) => b,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let tokenizer = cfg.tokenizer();
    let engine = Engine::new(&engine_cfg, backend.as_ref(), tokenizer.as_ref());
    let trace_dir = args
        .trace_out
        .clone()
        .or_else(|| cfg.trace.out.as_ref().map(|p| cfg.resolve(p)));

    let results: Vec<Mutex<Option<Result<_, RunError>>>> =
        records.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = cfg.backend.max_concurrency.min(records.len()).max(1);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(rec) = records.get(i) else { break };
                let out = engine.run(&rec.input, &rec.context);
                *results[i].lock().unwrap() = Some(out);
            });
        }
    });

    let mut code = EXIT_OK;
    let mut answers = String::new();
    for (rec, slot) in records.iter().zip(results) {
        let outcome = slot.into_inner().unwrap().expect("every record ran");
        let (trace_text, line) = match outcome {
            Ok(result) => {
                let mrt = engine_cfg
                    .mrt
                    .unwrap_or(result.chunk_count.saturating_sub(1));
                let pred = Prediction {
                    id: rec.id.clone(),
                    answer: result.answer.clone(),
                    concluded: Some(result.concluded),
                    replay_count: Some(result.replay_count),
                };
                (
                    trace::to_jsonl(&rec.id, &rec.input, mrt, &result),
                    Some(serde_json::to_string(&pred).expect("prediction serializes")),
                )
            }
            Err(e) => {
                eprintln!("error: record {:?}: {e}", rec.id);
                code = code.max(if is_unreachable(&e) {
                    EXIT_BACKEND
                } else {
                    EXIT_RUN_FAILED
                });
                let partial = crate::orchestrator::RunResult {
                    answer: String::new(),
                    concluded: false,
                    replay_count: 0,
                    passes: 0,
                    chunk_count: 0,
                    trace: e.partial,
                };
                (trace::to_jsonl(&rec.id, &rec.input, 0, &partial), None)
            }
        };
        if let Some(dir) = &trace_dir {
            if let Err(e) = write_atomic(&dir.join(trace_file_name(&rec.id)), &trace_text) {
                return fail(EXIT_RUN_FAILED, format!("writing trace: {e}"));
            }
        }
        if let Some(line) = line {
            answers.push_str(&line);
            answers.push('\n');
        }
    }
    let written = match &args.answers_out {
        Some(p) => write_atomic(p, &answers),
        None => std::io::stdout().lock().write_all(answers.as_bytes()),
    };
    if let Err(e) = written {
        return fail(EXIT_RUN_FAILED, format!("writing answers: {e}"));
    }
    code
}

fn load_records(args: &RunArgs) -> Result<Vec<DatasetRecord>, String> {
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()));
    match (&args.dataset, &args.input, &args.query) {
        (Some(d), None, None) => {
            parse_dataset(&read(d)?).map_err(|e| format!("{}: {e}", d.display()))
        }
        (None, Some(input), Some(query)) => Ok(vec![DatasetRecord {
            id: "input".into(),
            context: read(input)?,
            input: query.clone(),
            answers: Vec::new(),
            goals: None,
        }]),
        _ => Err("give either --dataset, or --input together with --query".into()),
    }
}

/// Every matrix with `x` rows over all permutations of `1..=y`.
fn all_matrices(x: usize, y: usize) -> Vec<DependencyMatrix> {
    let mut perms: Vec<Vec<usize>> = Vec::new();
    let mut current: Vec<usize> = (1..=y).collect();
    permute(&mut current, 0, &mut perms);
    perms.sort();
    let mut out = vec![Vec::<Vec<usize>>::new()];
    for _ in 0..x {
        out = out
            .into_iter()
            .flat_map(|rows| {
                perms.iter().map(move |p| {
                    let mut r = rows.clone();
                    r.push(p.clone());
                    r
                })
            })
            .collect();
    }
    out.into_iter()
        .map(|rows| DependencyMatrix::new(rows).expect("permutations are valid"))
        .collect()
}

fn permute(v: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == v.len() {
        out.push(v.clone());
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute(v, k + 1, out);
        v.swap(k, i);
    }
}

const EXHAUSTIVE_LIMIT: u128 = 2_000_000;

pub fn cmd_simulate(args: &SimulateArgs, out: &mut dyn Write) -> i32 {
    if args.x == 0 || args.y == 0 {
        return fail(EXIT_USAGE, "--x and --y must be positive");
    }
    let mrt = args.mrt.unwrap_or(args.y - 1);
    let offset = match args.offset {
        OffsetArg::Exclusive => ReplayOffset::Exclusive,
        OffsetArg::Inclusive => ReplayOffset::Inclusive,
    };
    let instances: Vec<DependencyMatrix> = if args.exhaustive {
        let factorial: u128 = (1..=args.y as u128).product();
        let count = factorial.checked_pow(args.x as u32).unwrap_or(u128::MAX);
        if count > EXHAUSTIVE_LIMIT {
            return fail(
                EXIT_USAGE,
                format!("{count} matrices is too many to enumerate"),
            );
        }
        all_matrices(args.x, args.y)
    } else {
        (0..args.trials)
            .map(|t| DependencyMatrix::random(args.x, args.y, args.seed.wrapping_add(t as u64)))
            .collect()
    };
    let mut histogram: BTreeMap<usize, usize> = BTreeMap::new();
    let mut successes = 0;
    for m in &instances {
        let r = resolve_with(m, mrt, offset);
        if r.success {
            successes += 1;
            *histogram.entry(r.scans).or_default() += 1;
        } else if mrt + 1 >= args.y {
            eprintln!("counterexample: {:?}", m.rows());
        }
    }
    let n = instances.len();
    let rate = if n == 0 {
        0.0
    } else {
        successes as f64 / n as f64
    };
    let mut csv = String::from("x,y,mrt,instances,successes,success_rate,scans,count\n");
    let prefix = format!(
        "{},{},{},{},{},{:.6}",
        args.x, args.y, mrt, n, successes, rate
    );
    if histogram.is_empty() {
        csv.push_str(&format!("{prefix},,0\n"));
    }
    for (scans, count) in histogram {
        csv.push_str(&format!("{prefix},{scans},{count}\n"));
    }
    if let Err(e) = out.write_all(csv.as_bytes()) {
        return fail(EXIT_RUN_FAILED, e);
    }
    EXIT_OK
}

#[derive(Debug, Serialize)]
struct ScoreItem {
    id: String,
    score: f64,
}

#[derive(Debug, Serialize)]
struct ScoreReport {
    metric: &'static str,
    n: usize,
    mean: f64,
    items: Vec<ScoreItem>,
}

pub fn cmd_eval(args: &EvalArgs) -> i32 {
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()));
    let (preds, golds) = match (read(&args.predictions), read(&args.gold)) {
        (Ok(p), Ok(g)) => (p, g),
        (Err(e), _) | (_, Err(e)) => return fail(EXIT_USAGE, e),
    };
    let preds = match parse_jsonl::<Prediction>(&preds) {
        Ok(p) => p.into_iter().map(|(_, p)| p).collect::<Vec<_>>(),
        Err(e) => return fail(EXIT_USAGE, format!("{}: {e}", args.predictions.display())),
    };
    let golds = match parse_jsonl::<GoldRecord>(&golds) {
        Ok(g) => g.into_iter().map(|(_, g)| g).collect::<Vec<_>>(),
        Err(e) => return fail(EXIT_USAGE, format!("{}: {e}", args.gold.display())),
    };
    if preds.is_empty() {
        return fail(EXIT_ID_MISMATCH, "predictions file has no records");
    }
    let gold_by_id: HashMap<&str, &GoldRecord> = golds.iter().map(|g| (g.id.as_str(), g)).collect();
    let pred_ids: std::collections::HashSet<&str> = preds.iter().map(|p| p.id.as_str()).collect();
    let mut orphans: Vec<String> = preds
        .iter()
        .filter(|p| !gold_by_id.contains_key(p.id.as_str()))
        .map(|p| format!("prediction {}", p.id))
        .collect();
    orphans.extend(
        golds
            .iter()
            .filter(|g| !pred_ids.contains(g.id.as_str()))
            .map(|g| format!("gold {}", g.id)),
    );
    if !orphans.is_empty() {
        return fail(
            EXIT_ID_MISMATCH,
            format!("unmatched ids: {}", orphans.join(", ")),
        );
    }

    let mut items = Vec::with_capacity(preds.len());
    for p in &preds {
        let g = gold_by_id[p.id.as_str()];
        let score = match args.metric {
            MetricArg::F1 => best_token_f1(&p.answer, &g.answers),
            MetricArg::Em => f64::from(exact_match(&p.answer, &g.answers)),
            MetricArg::SeqMatch => best_seq_match_ratio(&p.answer, &g.answers),
            MetricArg::Progress => match progress_for(args, p, g) {
                Ok(s) => s,
                Err(msg) => return fail(EXIT_USAGE, msg),
            },
        };
        items.push(ScoreItem {
            id: p.id.clone(),
            score,
        });
    }
    let mean = items.iter().map(|i| i.score).sum::<f64>() / items.len() as f64;
    let metric = match args.metric {
        MetricArg::F1 => "f1",
        MetricArg::Em => "em",
        MetricArg::SeqMatch => "seq_match",
        MetricArg::Progress => "progress",
    };
    let text = match args.format {
        FormatArg::Json => {
            let report = ScoreReport {
                metric,
                n: items.len(),
                mean,
                items,
            };
            serde_json::to_string_pretty(&report).expect("report serializes") + "\n"
        }
        FormatArg::Csv => {
            let mut s = String::from("id,score\n");
            for i in &items {
                s.push_str(&format!("{},{}\n", csv_field(&i.id), i.score));
            }
            s.push_str(&format!("mean,{mean}\n"));
            s
        }
    };
    let written = match &args.out {
        Some(p) => write_atomic(p, &text),
        None => std::io::stdout().lock().write_all(text.as_bytes()),
    };
    match written {
        Ok(()) => EXIT_OK,
        Err(e) => fail(EXIT_RUN_FAILED, e),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn progress_for(args: &EvalArgs, p: &Prediction, g: &GoldRecord) -> Result<f64, String> {
    let dir = args
        .traces
        .as_ref()
        .ok_or("the progress metric needs --traces")?;
    let goals = GoalSet::new(g.goals.as_deref().unwrap_or_default());
    let path = dir.join(trace_file_name(&p.id));
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let (_, records) = trace::from_jsonl(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let steps = trace::answered_per_step(&records, &RefusalLexicon::default());
    progress_score(&goals, &steps, steps.len()).map_err(|e| format!("record {}: {e}", p.id))
}
