//! On-disk formats: run configuration, checkpoints, episode records,
//! trajectory tables and path renderings.

use crate::baseline::BaselineGains;
use crate::dynamics::{DynParams, DynamicsModel};
use crate::env::{EnvParams, Scene};
use crate::error::{Error, Result};
use crate::maddpg::{AgentNets, TrainConfig, Trainer};
use crate::nn::{read_u32, read_u64, Adam, Mlp};
use crate::vo::SafetyMode;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes: usize,
    /// Leading episodes whose full step records are written.
    pub record: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { episodes: 500, record: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub episodes: usize,
    /// One table block per obstacle count; the robot count is the run's.
    pub obstacles: Vec<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            episodes: 500,
            obstacles: vec![2],
        }
    }
}

/// Every tunable of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub robots: usize,
    pub obstacles: usize,
    pub model: DynamicsModel,
    /// Safety mode for evaluation and benchmarking.
    pub safety: SafetyMode,
    pub env: EnvParams,
    pub dynamics: DynParams,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub baseline: BaselineGains,
    pub bench: BenchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            robots: 3,
            obstacles: 2,
            model: DynamicsModel::Holonomic,
            safety: SafetyMode::Min,
            env: EnvParams::default(),
            dynamics: DynParams::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            baseline: BaselineGains::default(),
            bench: BenchConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.robots == 0 {
            return Err(Error::Config("robots must be positive".into()));
        }
        self.env.validate().map_err(Error::Config)?;
        self.dynamics.validate().map_err(Error::Config)?;
        self.train.validate().map_err(Error::Config)?;
        self.baseline.validate().map_err(Error::Config)?;
        Ok(())
    }

    /// Parses TOML; missing keys take defaults, unknown keys are rejected.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    /// First 16 hex digits of the SHA-256 of the key-sorted JSON encoding.
    pub fn fingerprint(&self) -> String {
        // serde_json maps are ordered by key, which canonicalizes the text.
        let canonical = serde_json::to_value(self).expect("config serializes").to_string();
        let digest = Sha256::digest(canonical.as_bytes());
        digest[..8].iter().fold(String::with_capacity(16), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunConfig::from_toml(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        e => e,
    })
}

pub fn save_config(cfg: &RunConfig, path: &Path) -> Result<()> {
    fs::write(path, cfg.to_toml()).map_err(|e| Error::io(path, e))
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"SPCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A trainer restored from disk, with the fingerprint it was saved under.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub fingerprint: String,
    pub trainer: Trainer,
}

fn write_bytes<W: Write>(w: &mut W, b: &[u8]) -> std::io::Result<()> {
    w.write_all(&(b.len() as u32).to_le_bytes())?;
    w.write_all(b)
}

fn read_bytes<R: Read>(r: &mut R, limit: usize) -> Result<Vec<u8>> {
    let len = read_u32(r)? as usize;
    if len > limit {
        return Err(Error::Format(format!("field of {len} bytes exceeds limit")));
    }
    let mut b = vec![0u8; len];
    r.read_exact(&mut b).map_err(|e| Error::Format(format!("truncated data: {e}")))?;
    Ok(b)
}

/// Serializes every network, optimizer state, the generator state and the
/// episode counter. The replay buffer is not saved.
pub fn encode_checkpoint<W: Write>(trainer: &Trainer, w: &mut W) -> std::io::Result<()> {
    let cfg = trainer.config();
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    write_bytes(w, cfg.fingerprint().as_bytes())?;
    write_bytes(w, cfg.to_toml().as_bytes())?;
    w.write_all(&cfg.seed.to_le_bytes())?;
    w.write_all(&(trainer.episode() as u64).to_le_bytes())?;
    let rng = trainer.rng();
    w.write_all(&rng.get_seed())?;
    w.write_all(&rng.get_stream().to_le_bytes())?;
    w.write_all(&rng.get_word_pos().to_le_bytes())?;
    w.write_all(&(trainer.agents().len() as u32).to_le_bytes())?;
    for a in trainer.agents() {
        for net in [&a.actor, &a.critic, &a.target_actor, &a.target_critic] {
            net.write_to(w)?;
        }
        a.actor_opt.write_to(w)?;
        a.critic_opt.write_to(w)?;
    }
    Ok(())
}

pub fn decode_checkpoint<R: Read>(r: &mut R) -> Result<Checkpoint> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint file".into()));
    }
    let version = read_u32(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let text = |b: Vec<u8>| String::from_utf8(b).map_err(|_| Error::Format("invalid UTF-8".into()));
    let fingerprint = text(read_bytes(r, 64)?)?;
    let config = RunConfig::from_toml(&text(read_bytes(r, 1 << 20)?)?)?;
    let seed = read_u64(r)?;
    if seed != config.seed {
        return Err(Error::Format("seed does not match embedded config".into()));
    }
    let episode = read_u64(r)? as usize;
    let mut key = [0u8; 32];
    r.read_exact(&mut key)
        .map_err(|e| Error::Format(format!("truncated data: {e}")))?;
    let stream = read_u64(r)?;
    let mut pos = [0u8; 16];
    r.read_exact(&mut pos)
        .map_err(|e| Error::Format(format!("truncated data: {e}")))?;
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng.set_word_pos(u128::from_le_bytes(pos));
    let count = read_u32(r)? as usize;
    if count != config.robots {
        return Err(Error::Format(format!("{count} agents for {} robots", config.robots)));
    }
    let mut agents = Vec::with_capacity(count);
    for _ in 0..count {
        agents.push(AgentNets {
            actor: Mlp::read_from(r)?,
            critic: Mlp::read_from(r)?,
            target_actor: Mlp::read_from(r)?,
            target_critic: Mlp::read_from(r)?,
            actor_opt: Adam::read_from(r)?,
            critic_opt: Adam::read_from(r)?,
        });
    }
    Ok(Checkpoint {
        fingerprint,
        trainer: Trainer::from_parts(config, agents, rng, episode)?,
    })
}

pub fn write_checkpoint(trainer: &Trainer, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    encode_checkpoint(trainer, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&mut bytes.as_slice())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotSnapshot {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
    pub projected: bool,
    pub collided: bool,
}

impl RobotSnapshot {
    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub robots: Vec<RobotSnapshot>,
}

/// Initial scene plus the state after every step. Step 0 is the initial
/// state.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub dt: f64,
    pub scene: Scene,
    pub steps: Vec<StepRecord>,
}

/// Provenance stamped on every artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub fingerprint: String,
    pub seed: u64,
}

impl Provenance {
    pub fn of(cfg: &RunConfig) -> Self {
        Self {
            fingerprint: cfg.fingerprint(),
            seed: cfg.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum RecordLine {
    Run(Provenance),
    Episode { dt: f64, scene: Scene },
    Step(StepRecord),
}

/// Line-delimited JSON: one `run` line, then per episode an `episode`
/// header line followed by one `step` line per recorded state.
pub fn write_episode_records(path: &Path, provenance: &Provenance, records: &[EpisodeRecord]) -> Result<()> {
    let mut out = String::new();
    let mut line = |r: RecordLine| {
        out.push_str(&serde_json::to_string(&r).expect("record serializes"));
        out.push('\n');
    };
    line(RecordLine::Run(provenance.clone()));
    for rec in records {
        line(RecordLine::Episode {
            dt: rec.dt,
            scene: rec.scene.clone(),
        });
        for s in &rec.steps {
            line(RecordLine::Step(s.clone()));
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_episode_records(path: &Path) -> Result<(Provenance, Vec<EpisodeRecord>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_episode_records(&text)
}

pub fn parse_episode_records(text: &str) -> Result<(Provenance, Vec<EpisodeRecord>)> {
    let mut provenance = None;
    let mut records: Vec<EpisodeRecord> = Vec::new();
    for (i, raw) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let line: RecordLine =
            serde_json::from_str(raw).map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))?;
        match line {
            RecordLine::Run(p) if provenance.is_none() && records.is_empty() => provenance = Some(p),
            RecordLine::Run(_) => return Err(Error::Format(format!("line {}: repeated run header", i + 1))),
            RecordLine::Episode { dt, scene } => records.push(EpisodeRecord {
                dt,
                scene,
                steps: Vec::new(),
            }),
            RecordLine::Step(s) => match records.last_mut() {
                Some(r) if s.robots.len() == r.scene.robots.len() => r.steps.push(s),
                Some(_) => return Err(Error::Format(format!("line {}: robot count mismatch", i + 1))),
                None => return Err(Error::Format(format!("line {}: step before episode header", i + 1))),
            },
        }
    }
    let provenance = provenance.ok_or_else(|| Error::Format("missing run header".into()))?;
    Ok((provenance, records))
}

pub const TRAJECTORY_HEADER: &str = "step,robot,x,y,theta,speed,projected,collided";

/// One row per (step, robot) in step-major order. Reals carry 17
/// significant digits so they parse back to the same `f64`.
pub fn trajectory_csv(provenance: &Provenance, record: &EpisodeRecord) -> String {
    let mut out = format!("# fingerprint={} seed={}\n{TRAJECTORY_HEADER}\n", provenance.fingerprint, provenance.seed);
    for s in &record.steps {
        for (i, r) in s.robots.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{},{}",
                s.step,
                i,
                r.x,
                r.y,
                r.theta,
                r.speed(),
                u8::from(r.projected),
                u8::from(r.collided)
            );
        }
    }
    out
}

pub fn export_trajectory(provenance: &Provenance, record: &EpisodeRecord, path: &Path) -> Result<()> {
    fs::write(path, trajectory_csv(provenance, record)).map_err(|e| Error::io(path, e))
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

/// Top-down rendering of robot paths, obstacles and goals. `half_width`
/// sets the visible square `[-h, h]²`.
pub fn render_svg(provenance: &Provenance, record: &EpisodeRecord, robot_radius: f64, half_width: f64) -> String {
    const PX: f64 = 400.0;
    let scale = PX / (2.0 * half_width);
    let tx = |x: f64| (x + half_width) * scale;
    let ty = |y: f64| (half_width - y) * scale;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{PX}" height="{PX}" viewBox="0 0 {PX} {PX}">"#
    );
    let _ = writeln!(svg, "<!-- fingerprint={} seed={} -->", provenance.fingerprint, provenance.seed);
    let _ = writeln!(svg, r##"<rect width="{PX}" height="{PX}" fill="#ffffff" stroke="#000000"/>"##);
    for o in &record.scene.obstacles {
        let _ = writeln!(
            svg,
            r##"<circle class="obstacle" cx="{:.2}" cy="{:.2}" r="{:.2}" fill="#888888"/>"##,
            tx(o.pos.x),
            ty(o.pos.y),
            o.radius * scale
        );
    }
    for g in &record.scene.goals {
        let (x, y) = (tx(g.pos.x), ty(g.pos.y));
        let tip = (x + 12.0 * g.theta.cos(), y - 12.0 * g.theta.sin());
        let _ = writeln!(
            svg,
            r##"<g class="goal"><circle cx="{x:.2}" cy="{y:.2}" r="{:.2}" fill="none" stroke="#000000" stroke-dasharray="3 2"/><line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{:.2}" stroke="#000000"/></g>"##,
            robot_radius * scale,
            tip.0,
            tip.1
        );
    }
    for i in 0..record.scene.robots.len() {
        let colour = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = record
            .steps
            .iter()
            .map(|s| format!("{:.2},{:.2}", tx(s.robots[i].x), ty(s.robots[i].y)))
            .collect();
        let last = record.steps.last().map(|s| s.robots[i]);
        let _ = write!(
            svg,
            r#"<g class="robot"><polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#,
            points.join(" ")
        );
        if let Some(r) = last {
            let _ = write!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" fill="{colour}" fill-opacity="0.5"/>"#,
                tx(r.x),
                ty(r.y),
                robot_radius * scale
            );
        }
        svg.push_str("</g>\n");
    }
    svg.push_str("</svg>\n");
    svg
}
