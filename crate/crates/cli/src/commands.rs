//! Subcommands. Each prints one JSON summary line on stdout and writes its
//! artifacts under the output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use graphwalk_core::agent::{read_jsonl, run_episode, write_jsonl, EpisodeError, Trajectory};
use graphwalk_core::eval::{
    contamination_check, curate, parse_gold_jsonl, question_id, AnswerSet, EmConvention, EvalReport,
};
use graphwalk_core::gateway::Purpose;
use graphwalk_core::kg::sparql::{render_sparql, Bindings, QueryKind};
use graphwalk_core::synth::run_pipeline;
use graphwalk_core::walk::{sample_corpus, PathCorpus, ReasoningPath};
use graphwalk_core::{GraphStore, KnowledgeGraph};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{Config, ConfigError};
use crate::service::{self, ServiceState};

/// Separator between question id and run index in rollout ids.
pub const RUN_SEPARATOR: char = '#';

#[derive(Debug, Parser)]
#[command(name = "graphwalk", version, about = "Knowledge-graph path sampling, trajectory synthesis and evaluation")]
pub struct Cli {
    /// TOML config file; built-in defaults when omitted.
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,
    /// Override the output directory.
    #[arg(short, long, global = true)]
    pub out: Option<PathBuf>,
    /// Print the effective config as TOML and exit.
    #[arg(long)]
    pub print_config: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the in-memory store from the configured triple files.
    Load,
    /// Sample a reasoning-path corpus.
    SamplePaths {
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Overrides walk.rng_seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generate questions, simulate tool feedback and write trajectories.
    Synthesize {
        /// Path corpus JSONL; sampled from the walk config when omitted.
        #[arg(long)]
        paths: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Overrides walk.rng_seed and synth.rng_seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Split trajectories into accepted and rejected sets.
    Curate {
        #[arg(long)]
        trajectories: PathBuf,
        /// Gold JSONL; each trajectory's embedded gold is used when omitted.
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        convention: Option<EmConvention>,
    },
    /// Flag synthetic questions similar to test questions.
    Contaminate {
        /// Synthetic questions: JSONL with a `question` field, or one per line.
        #[arg(long)]
        synth: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Run the policy over a question file.
    Rollout {
        /// JSONL of {"id", "question", "topic_entities", "answers"?}.
        #[arg(long)]
        questions: PathBuf,
        #[arg(long, default_value_t = 1)]
        runs: usize,
    },
    /// Score trajectories against gold answers.
    Eval {
        #[arg(long)]
        trajectories: PathBuf,
        #[arg(long)]
        gold: Option<PathBuf>,
        /// Comma-separated k values for pass@k.
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
        #[arg(long)]
        convention: Option<EmConvention>,
    },
    /// Serve the toolbox over HTTP.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
    /// Render a SPARQL template with bindings.
    RenderSparql {
        kind: QueryKind,
        /// `slot=value`, repeatable.
        #[arg(long = "bind", value_parser = parse_binding)]
        bindings: Vec<(String, String)>,
    },
}

fn parse_binding(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .ok_or_else(|| format!("expected slot=value, got {s:?}"))
}

/// Exit status: 0 success, 1 pipeline error, 2 config error.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.is::<ConfigError>()) {
        2
    } else {
        1
    }
}

impl Cli {
    pub fn load_config(&self) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(path) => Config::load(path)?,
            None => Config::default(),
        };
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        Ok(cfg)
    }
}

/// Runs the parsed command and returns its summary.
pub fn run(cli: &Cli) -> Result<Value> {
    let cfg = cli.load_config()?;
    if cli.print_config {
        print!("{}", cfg.to_toml());
        return Ok(Value::Null);
    }
    let Some(command) = &cli.command else {
        return Err(ConfigError::new("no subcommand given; see --help").into());
    };
    match command {
        Command::Load => load(&cfg),
        Command::SamplePaths { n, seed } => sample_paths(cfg, *n, *seed),
        Command::Synthesize { paths, n, seed } => synthesize(cfg, paths.as_deref(), *n, *seed),
        Command::Curate {
            trajectories,
            gold,
            convention,
        } => curate_cmd(&cfg, trajectories, gold.as_deref(), convention.unwrap_or(cfg.eval.convention)),
        Command::Contaminate { synth, test } => contaminate(&cfg, synth, test),
        Command::Rollout { questions, runs } => rollout(&cfg, questions, *runs),
        Command::Eval {
            trajectories,
            gold,
            k,
            convention,
        } => eval(
            &cfg,
            trajectories,
            gold.as_deref(),
            k.as_deref().unwrap_or(&cfg.eval.ks),
            convention.unwrap_or(cfg.eval.convention),
        ),
        Command::Serve { bind } => serve(&cfg, bind.as_deref().unwrap_or(&cfg.service.bind)),
        Command::RenderSparql { kind, bindings } => render(&cfg, *kind, bindings),
    }
}

fn write_artifact(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn read_input(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn pretty(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn load(cfg: &Config) -> Result<Value> {
    let store = cfg.memory_store()?;
    let stats = store.stats();
    write_artifact(&cfg.output.dir, "store_stats.json", &pretty(&stats))?;
    Ok(json!({"command": "load", "stats": stats}))
}

fn sample(cfg: &Config, store: &GraphStore, n: usize) -> Result<PathCorpus> {
    let walk = cfg.walk_config()?;
    Ok(sample_corpus(store, &walk, n)?)
}

fn apply_seed(cfg: &mut Config, seed: Option<u64>) {
    if let Some(seed) = seed {
        if let Some(w) = &mut cfg.walk {
            w.rng_seed = seed;
        }
        cfg.synth.rng_seed = seed;
    }
}

fn sample_paths(mut cfg: Config, n: usize, seed: Option<u64>) -> Result<Value> {
    apply_seed(&mut cfg, seed);
    let store = cfg.memory_store()?;
    let corpus = sample(&cfg, &store, n)?;
    let dir = &cfg.output.dir;
    write_artifact(dir, "paths.jsonl", &corpus.to_jsonl())?;
    let summary = json!({
        "paths": corpus.paths.len(),
        "structure_histogram": corpus.structure_histogram,
        "rejected": corpus.rejected,
        "exhausted": corpus.exhausted,
    });
    write_artifact(dir, "paths_summary.json", &pretty(&summary))?;
    Ok(json!({"command": "sample-paths", "requested": n, "summary": summary}))
}

fn config_hash(cfg: &Config) -> String {
    let digest = Sha256::digest(cfg.to_toml().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn models(cfg: &Config) -> BTreeMap<&'static str, String> {
    let mut m: BTreeMap<_, _> = Purpose::ALL
        .into_iter()
        .map(|p| (p.as_str(), cfg.gateway.client.model_for(p).to_string()))
        .collect();
    m.insert("embedding", cfg.gateway.client.embedding_model.clone());
    m
}

fn synthesize(mut cfg: Config, paths_file: Option<&Path>, n: usize, seed: Option<u64>) -> Result<Value> {
    apply_seed(&mut cfg, seed);
    let store = Arc::new(cfg.memory_store()?);
    let paths: Vec<ReasoningPath> = match paths_file {
        Some(p) => PathCorpus::from_jsonl(&read_input(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => sample(&cfg, &store, n)?.paths,
    };
    let gateway = Arc::new(cfg.gateway()?);
    let toolbox = cfg.toolbox(store.clone() as Arc<dyn KnowledgeGraph>, Some(gateway.clone()));
    let output = run_pipeline(&toolbox, &gateway, &paths, &cfg.synth)?;

    let dir = &cfg.output.dir;
    write_artifact(dir, "trajectories.jsonl", &output.trajectories_jsonl())?;
    write_artifact(dir, "synth_records.jsonl", &output.records_jsonl())?;
    write_artifact(dir, "quarantine.jsonl", &output.quarantine_jsonl())?;
    let manifest = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config_sha256": config_hash(&cfg),
        "seeds": {
            "walk": cfg.walk.as_ref().map(|w| w.rng_seed),
            "synth": cfg.synth.rng_seed,
        },
        "paths_source": paths_file.map(|p| p.display().to_string()),
        "models": models(&cfg),
        "counters": output.counters,
        "created_unix": SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    });
    write_artifact(dir, "manifest.json", &pretty(&manifest))?;
    if !output.counters.reconciles() {
        bail!("synthesis counters do not reconcile: {:?}", output.counters);
    }
    Ok(json!({"command": "synthesize", "counters": output.counters}))
}

/// Gold sets keyed by question id: from a file, else from the trajectories themselves.
fn gold_map(gold: Option<&Path>, trajs: &[Trajectory]) -> Result<BTreeMap<String, AnswerSet>> {
    if let Some(p) = gold {
        return Ok(parse_gold_jsonl(&read_input(p)?)?);
    }
    let mut map = BTreeMap::new();
    for t in trajs {
        let g = t
            .gold
            .as_ref()
            .with_context(|| format!("trajectory {} has no gold answers; pass --gold", t.id))?;
        map.entry(question_id(&t.id).to_string())
            .or_insert_with(|| AnswerSet::new(g));
    }
    Ok(map)
}

fn read_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    read_jsonl(&read_input(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn curate_cmd(cfg: &Config, path: &Path, gold: Option<&Path>, conv: EmConvention) -> Result<Value> {
    let trajs = read_trajectories(path)?;
    let gold = gold_map(gold, &trajs)?;
    let split = curate(trajs, |t| gold.get(question_id(&t.id)), conv)?;
    let dir = &cfg.output.dir;
    write_artifact(dir, "accepted.jsonl", &write_jsonl(&split.accepted))?;
    let rejected: String = split
        .rejected
        .iter()
        .map(|r| serde_json::to_string(r).expect("serializable") + "\n")
        .collect();
    write_artifact(dir, "rejected.jsonl", &rejected)?;
    Ok(json!({
        "command": "curate",
        "convention": conv,
        "accepted": split.accepted.len(),
        "rejected": split.rejected.len(),
        "reasons": split.reason_counts(),
    }))
}

/// Question texts from JSONL records with a `question` field, or plain lines.
fn read_questions(path: &Path) -> Result<Vec<(String, String)>> {
    let text = read_input(path)?;
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let q = match serde_json::from_str::<Value>(line) {
            Ok(Value::Object(obj)) => obj
                .get("question")
                .and_then(Value::as_str)
                .with_context(|| format!("{}: record has no \"question\" string", path.display()))?
                .to_string(),
            _ => line.trim().to_string(),
        };
        out.push((line.to_string(), q));
    }
    Ok(out)
}

fn contaminate(cfg: &Config, synth: &Path, test: &Path) -> Result<Value> {
    let synth_lines = read_questions(synth)?;
    let test_q: Vec<String> = read_questions(test)?.into_iter().map(|(_, q)| q).collect();
    let synth_q: Vec<String> = synth_lines.iter().map(|(_, q)| q.clone()).collect();
    let gateway = cfg.gateway()?;
    let report = contamination_check(&gateway, &synth_q, &test_q, &cfg.contamination)?;
    let dir = &cfg.output.dir;
    write_artifact(dir, "contamination.json", &pretty(&report))?;
    write_artifact(dir, "contamination.md", &report.render_table())?;
    let kept: String = synth_lines
        .iter()
        .enumerate()
        .filter(|(i, _)| !report.excluded.contains(i))
        .map(|(_, (line, _))| format!("{line}\n"))
        .collect();
    write_artifact(dir, "decontaminated.jsonl", &kept)?;
    Ok(json!({
        "command": "contaminate",
        "synth": synth_q.len(),
        "test": test_q.len(),
        "thresholds": report.thresholds,
        "excluded": report.excluded.len(),
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuestionRecord {
    id: String,
    question: String,
    topic_entities: Vec<String>,
    #[serde(default)]
    answers: Option<Vec<String>>,
}

fn rollout(cfg: &Config, questions: &Path, runs: usize) -> Result<Value> {
    if runs == 0 {
        return Err(ConfigError::new("--runs must be at least 1").into());
    }
    let records = read_input(questions)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str::<QuestionRecord>(l)
                .with_context(|| format!("{} line {}", questions.display(), i + 1))
        })
        .collect::<Result<Vec<_>>>()?;
    let kg = cfg.knowledge_graph()?;
    let gateway = Arc::new(cfg.gateway()?);
    let toolbox = cfg.toolbox(kg, Some(gateway.clone()));

    let mut trajs = Vec::new();
    let mut failures = Vec::new();
    for rec in &records {
        if rec.id.contains(RUN_SEPARATOR) {
            bail!("question id {:?} contains the reserved character {RUN_SEPARATOR:?}", rec.id);
        }
        for r in 0..runs {
            let id = format!("{}{RUN_SEPARATOR}{r}", rec.id);
            match run_episode(&toolbox, &gateway, &id, &rec.question, &rec.topic_entities, &cfg.runtime) {
                Ok(mut t) => {
                    t.gold = rec.answers.clone();
                    trajs.push(t);
                }
                Err(e @ EpisodeError::Config(_)) => return Err(ConfigError::new(e.to_string()).into()),
                Err(e) => failures.push(json!({"id": id, "error": e.to_string()})),
            }
        }
    }
    let dir = &cfg.output.dir;
    write_artifact(dir, "rollouts.jsonl", &write_jsonl(&trajs))?;
    let failed: String = failures.iter().map(|f| format!("{f}\n")).collect();
    write_artifact(dir, "rollout_failures.jsonl", &failed)?;
    Ok(json!({
        "command": "rollout",
        "questions": records.len(),
        "runs": runs,
        "trajectories": trajs.len(),
        "truncated": trajs.iter().filter(|t| t.truncated).count(),
        "failed": failures.len(),
    }))
}

fn eval(cfg: &Config, path: &Path, gold: Option<&Path>, ks: &[usize], conv: EmConvention) -> Result<Value> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(ConfigError::new("--k needs positive integers").into());
    }
    let trajs = read_trajectories(path)?;
    let gold = gold_map(gold, &trajs)?;
    let report = EvalReport::build(&trajs, &gold, conv, ks)?;
    write_artifact(&cfg.output.dir, "eval_report.json", &pretty(&report))?;
    Ok(json!({"command": "eval", "convention": conv, "aggregates": report.aggregates}))
}

fn serve(cfg: &Config, bind: &str) -> Result<Value> {
    let kg = cfg.knowledge_graph()?;
    let gateway = if cfg.toolbox.rerank {
        Some(Arc::new(cfg.gateway()?))
    } else {
        None
    };
    let toolbox = Arc::new(cfg.toolbox(kg, gateway));
    let state = ServiceState::new(toolbox);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(bind)
            .await
            .with_context(|| format!("binding {bind}"))?;
        let addr = listener.local_addr()?;
        println!("{}", json!({"command": "serve", "listening": addr.to_string()}));
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        };
        service::serve(listener, state, shutdown).await?;
        anyhow::Ok(())
    })?;
    Ok(json!({"command": "serve", "status": "stopped"}))
}

fn render(cfg: &Config, kind: QueryKind, pairs: &[(String, String)]) -> Result<Value> {
    let bindings: Bindings = pairs.iter().cloned().collect();
    let query = render_sparql(kind, &bindings)?;
    write_artifact(&cfg.output.dir, &format!("{kind}.rq"), &query)?;
    Ok(json!({"command": "render-sparql", "kind": kind, "query": query}))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_k_list() {
        let cli = Cli::try_parse_from(["graphwalk", "eval", "--trajectories", "t.jsonl", "--k", "1,8,32"]).unwrap();
        match cli.command {
            Some(Command::Eval { k, .. }) => assert_eq!(k, Some(vec![1, 8, 32])),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn config_errors_exit_two() {
        let e: anyhow::Error = ConfigError::new("bad").into();
        assert_eq!(exit_code(&e), 2);
        assert_eq!(exit_code(&e.context("while loading")), 2);
        assert_eq!(exit_code(&anyhow::anyhow!("pipeline")), 1);
    }

    #[test]
    fn binding_syntax() {
        assert_eq!(parse_binding("name=Barack Obama").unwrap(), ("name".into(), "Barack Obama".into()));
        assert!(parse_binding("name").is_err());
    }
}
