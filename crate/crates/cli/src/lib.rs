//! Subcommands of the `safeplan` binary. Each writes only inside its output
//! directory and derives all randomness from the run seed.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use safeplan_core::baseline::GreedyVoPolicy;
use safeplan_core::maddpg::{ActorPolicy, EpisodeLog, Trainer};
use safeplan_core::persistence::{
    self, load_config, read_checkpoint, write_checkpoint, write_episode_records, Provenance, RunConfig,
};
use safeplan_core::rollout::{self, EvalSpec, Metrics, Policy};
use safeplan_core::{DynamicsModel, Env, SafetyMode};
use serde::Serialize;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const TRAIN_LOG: &str = "train_log.jsonl";
pub const TIMING_LOG: &str = "timing.jsonl";
pub const CHECKPOINT: &str = "checkpoint.bin";
pub const CONFIG: &str = "config.toml";
pub const METRICS: &str = "metrics.json";
pub const EPISODES: &str = "episodes.jsonl";
pub const BENCH_CSV: &str = "bench.csv";
pub const BENCH_TABLE: &str = "bench.md";

#[derive(Debug, Parser)]
#[command(name = "safeplan", version, about = "Safe unlabeled multi-robot motion planning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train actors and critics; writes checkpoints and a training log.
    Train(TrainArgs),
    /// Evaluate a checkpoint; writes a metrics summary and episode records.
    Eval(EvalArgs),
    /// Compare the trained policy with and without safety against the baseline.
    Bench(BenchArgs),
    /// Turn episode records into trajectory tables and SVG renderings.
    Export(ExportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration; defaults apply to missing keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, created if absent.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub safety: Option<SafetyMode>,
    #[arg(long)]
    pub dynamics: Option<DynamicsModel>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Overrides the configured episode count.
    #[arg(long)]
    pub episodes: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Defaults to the configured evaluation episode count.
    #[arg(long)]
    pub episodes: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub episodes: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {
    /// Episode records written by `eval`.
    pub records: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(&a).map(|_| ()),
        Command::Eval(a) => cmd_eval(&a).map(|_| ()),
        Command::Bench(a) => cmd_bench(&a).map(|_| ()),
        Command::Export(a) => cmd_export(&a.records, &a.out).map(|_| ()),
    }
}

fn base_config(common: &Common) -> Result<RunConfig> {
    match &common.config {
        Some(p) => Ok(load_config(p)?),
        None => Ok(RunConfig::default()),
    }
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum LogLine<'a> {
    Run(&'a Provenance),
    Episode(&'a EpisodeLog),
}

fn json_line<T: Serialize>(w: &mut impl Write, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Trains under the resolved configuration. The training log holds only
/// seed-determined values; wall-clock times go to a separate file.
pub fn cmd_train(args: &TrainArgs) -> Result<PathBuf> {
    let mut cfg = base_config(&args.common)?;
    if let Some(s) = args.common.seed {
        cfg.seed = s;
    }
    if let Some(m) = args.common.dynamics {
        cfg.model = m;
    }
    if let Some(s) = args.common.safety {
        cfg.train.safety = s;
    }
    if let Some(e) = args.episodes {
        cfg.train.episodes = e;
    }
    cfg.validate()?;
    let out = &args.common.out;
    create_out(out)?;
    persistence::save_config(&cfg, &out.join(CONFIG))?;
    let provenance = Provenance::of(&cfg);
    let open = |name: &str| -> Result<BufWriter<fs::File>> {
        let p = out.join(name);
        Ok(BufWriter::new(
            fs::File::create(&p).with_context(|| format!("creating {}", p.display()))?,
        ))
    };
    let mut log = open(TRAIN_LOG)?;
    let mut timing = open(TIMING_LOG)?;
    json_line(&mut log, &LogLine::Run(&provenance))?;
    let every = cfg.train.checkpoint_every;
    let mut trainer = Trainer::new(cfg)?;
    let start = Instant::now();
    trainer.train(|t, ep| {
        let io = |e: anyhow::Error| safeplan_core::Error::Format(e.to_string());
        json_line(&mut log, &LogLine::Episode(ep)).map_err(io)?;
        json_line(
            &mut timing,
            &serde_json::json!({"episode": ep.episode, "wall_seconds": start.elapsed().as_secs_f64()}),
        )
        .map_err(io)?;
        if every > 0 && t.episode() % every == 0 {
            write_checkpoint(t, &out.join(format!("checkpoint_{:06}.bin", t.episode())))?;
        }
        Ok(())
    })?;
    log.flush()?;
    timing.flush()?;
    let path = out.join(CHECKPOINT);
    write_checkpoint(&trainer, &path)?;
    Ok(path)
}

/// The checkpoint's trainer plus the config evaluation runs under: the
/// checkpoint's own unless `--config` is given, with flag overrides.
fn load_for_eval(common: &Common, checkpoint: &Path) -> Result<(Trainer, RunConfig)> {
    let ck = read_checkpoint(checkpoint)?;
    let mut cfg = match &common.config {
        Some(p) => {
            let c = load_config(p)?;
            if c.fingerprint() != ck.fingerprint {
                eprintln!(
                    "warning: checkpoint was trained under config {} but {} has fingerprint {}",
                    ck.fingerprint,
                    p.display(),
                    c.fingerprint()
                );
            }
            c
        }
        None => ck.trainer.config().clone(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(s) = common.safety {
        cfg.safety = s;
    }
    if let Some(m) = common.dynamics {
        cfg.model = m;
    }
    let trained = ck.trainer.config();
    if cfg.robots != trained.robots || cfg.model != trained.model {
        bail!(
            "checkpoint is for {} {} robots; configuration asks for {} {}",
            trained.robots,
            trained.model,
            cfg.robots,
            cfg.model
        );
    }
    if cfg.env.neighbor_slots != trained.env.neighbor_slots {
        bail!("neighbor_slots differs from the checkpoint's; observation widths would not match");
    }
    cfg.validate()?;
    Ok((ck.trainer, cfg))
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub checkpoint_fingerprint: String,
    pub safety: SafetyMode,
    pub robots: usize,
    pub obstacles: usize,
    pub metrics: Metrics,
}

pub fn cmd_eval(args: &EvalArgs) -> Result<MetricsReport> {
    let (trainer, cfg) = load_for_eval(&args.common, &args.checkpoint)?;
    let out = &args.common.out;
    create_out(out)?;
    let episodes = args.episodes.unwrap_or(cfg.eval.episodes);
    let mut env = Env::new(cfg.env.clone(), cfg.dynamics, cfg.model, cfg.safety);
    let spec = EvalSpec {
        episodes,
        robots: cfg.robots,
        obstacles: cfg.obstacles,
        seed: cfg.seed,
        record: cfg.eval.record,
    };
    let (metrics, records) = rollout::evaluate(&mut env, &mut trainer.policy(), &spec)?;
    let provenance = Provenance::of(&cfg);
    write_episode_records(&out.join(EPISODES), &provenance, &records)?;
    let report = MetricsReport {
        provenance,
        checkpoint_fingerprint: trainer.config().fingerprint(),
        safety: cfg.safety,
        robots: cfg.robots,
        obstacles: cfg.obstacles,
        metrics,
    };
    write_json(&out.join(METRICS), &report)?;
    println!(
        "coverage {:.3} ({} of {}), collisions {}, projection rate {:.4}",
        report.metrics.coverage_rate,
        report.metrics.covered,
        report.metrics.episodes,
        report.metrics.collisions,
        report.metrics.projection_rate
    );
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub method: String,
    pub robots: usize,
    pub obstacles: usize,
    pub episodes: usize,
    pub coverage_rate: f64,
    pub mean_steps_to_coverage: Option<f64>,
    pub mean_seconds_to_coverage: Option<f64>,
    pub p90_steps_to_coverage: Option<f64>,
    pub collisions: usize,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.1}"))
}

/// Every method sees the same seeded scene set for each obstacle count.
pub fn cmd_bench(args: &BenchArgs) -> Result<Vec<BenchRow>> {
    let (trainer, cfg) = load_for_eval(&args.common, &args.checkpoint)?;
    let out = &args.common.out;
    create_out(out)?;
    let episodes = args.episodes.unwrap_or(cfg.bench.episodes);
    let actor: ActorPolicy = trainer.policy();
    let mut rows = Vec::new();
    for &obstacles in &cfg.bench.obstacles {
        let methods: [(&str, SafetyMode, Box<dyn Policy>); 3] = [
            ("trained+safety", cfg.safety, Box::new(actor.clone())),
            ("trained", SafetyMode::Off, Box::new(actor.clone())),
            ("greedy+vo", SafetyMode::Min, Box::new(GreedyVoPolicy::new(cfg.baseline.clone()))),
        ];
        for (name, safety, mut policy) in methods {
            let mut env = Env::new(cfg.env.clone(), cfg.dynamics, cfg.model, safety);
            let spec = EvalSpec {
                episodes,
                robots: cfg.robots,
                obstacles,
                seed: cfg.seed,
                record: 0,
            };
            let (m, _) = rollout::evaluate(&mut env, policy.as_mut(), &spec)?;
            rows.push(BenchRow {
                method: name.to_string(),
                robots: cfg.robots,
                obstacles,
                episodes,
                coverage_rate: m.coverage_rate,
                mean_steps_to_coverage: m.mean_steps_to_coverage,
                mean_seconds_to_coverage: m.mean_seconds_to_coverage,
                p90_steps_to_coverage: m.p90_steps_to_coverage,
                collisions: m.collisions,
            });
        }
    }
    let provenance = Provenance::of(&cfg);
    let mut csv = format!(
        "# fingerprint={} seed={}\nmethod,robots,obstacles,episodes,coverage_rate,mean_steps,mean_seconds,p90_steps,collisions\n",
        provenance.fingerprint, provenance.seed
    );
    let mut table = String::from(
        "| method | robots | obstacles | coverage | mean steps | mean s | p90 steps | collisions |\n|---|---|---|---|---|---|---|---|\n",
    );
    for r in &rows {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.method,
            r.robots,
            r.obstacles,
            r.episodes,
            r.coverage_rate,
            opt(r.mean_steps_to_coverage),
            opt(r.mean_seconds_to_coverage),
            opt(r.p90_steps_to_coverage),
            r.collisions
        ));
        table.push_str(&format!(
            "| {} | {} | {} | {:.3} | {} | {} | {} | {} |\n",
            r.method,
            r.robots,
            r.obstacles,
            r.coverage_rate,
            fmt_opt(r.mean_steps_to_coverage),
            fmt_opt(r.mean_seconds_to_coverage),
            fmt_opt(r.p90_steps_to_coverage),
            r.collisions
        ));
    }
    fs::write(out.join(BENCH_CSV), csv)?;
    fs::write(out.join(BENCH_TABLE), &table)?;
    print!("{table}");
    Ok(rows)
}

/// Writes `episode_NNN.csv` and `episode_NNN.svg` per recorded episode;
/// returns the files written.
pub fn cmd_export(records: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let (provenance, episodes) = persistence::read_episode_records(records)?;
    create_out(out)?;
    let mut written = Vec::new();
    for (i, rec) in episodes.iter().enumerate() {
        let csv = out.join(format!("episode_{i:03}.csv"));
        persistence::export_trajectory(&provenance, rec, &csv)?;
        let svg = out.join(format!("episode_{i:03}.svg"));
        let radius = safeplan_core::EnvParams::default().robot_radius;
        let half = rec
            .steps
            .iter()
            .flat_map(|s| &s.robots)
            .map(|r| r.x.abs().max(r.y.abs()))
            .fold(1.0_f64, f64::max);
        fs::write(&svg, persistence::render_svg(&provenance, rec, radius, half))?;
        written.push(csv);
        written.push(svg);
    }
    Ok(written)
}
