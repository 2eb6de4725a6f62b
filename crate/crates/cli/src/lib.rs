//! Command-line front end: track, eval, synth, sweep and manifest replay.
//!
//! Exit codes: 0 ok, 1 I/O or internal failure, 2 input parse error,
//! 3 invalid configuration, 4 ground truth / result mismatch.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use patchtrack::metrics::{self, MetricsError, MetricsReport};
use patchtrack::mot_io::{self, MotError};
use patchtrack::synth::{self, ScenarioConfig};
use patchtrack::tracker::TrackError;
use patchtrack::{CostKind, DetSequence, FrameOutput, IouKind, TrackSequence, Tracker, TrackerConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// `patch_min` used for the "patching off" arm of a sweep; above every score's maximum.
pub const PATCHING_OFF: f64 = 2.0;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Parse { path: PathBuf, source: MotError },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Mismatch(String),
    #[error("tracking failed: {0}")]
    Track(#[from] TrackError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Track(_) => 1,
            CliError::Parse { .. } => 2,
            CliError::Config(_) => 3,
            CliError::Mismatch(_) => 4,
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Mismatch(e.to_string())
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serialisable value");
    s.push('\n');
    s
}

#[derive(Debug, Parser)]
#[command(name = "patchtrack", version, about = "Two-stage multi-object tracker with trajectory patching")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Track a detection file and write MOT-format results.
    Track {
        #[arg(long)]
        det: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flags: TrackerFlags,
    },
    /// Score result files against ground truth (HOTA, DetA, AssA, MOTA, IDF1).
    Eval {
        /// Ground-truth file; repeat together with --res for several sequences.
        #[arg(long, required = true)]
        gt: Vec<PathBuf>,
        #[arg(long, required = true)]
        res: Vec<PathBuf>,
        /// Sequence names, one per --gt. Defaults to the file stem, or the parent
        /// directory for files named `gt.txt`.
        #[arg(long)]
        name: Vec<String>,
        /// Report path (default `<first res>.eval.json`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic scenario as `gt.txt` and `det.txt`.
    Synth {
        /// Scenario configuration as JSON.
        #[arg(long, conflicts_with = "crossing_fixture", required_unless_present = "crossing_fixture")]
        scenario: Option<PathBuf>,
        /// Write the built-in two-target crossing fixture instead.
        #[arg(long)]
        crossing_fixture: bool,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Track and evaluate over a grid of cost kind, patch IoU kind and patching on/off.
    Sweep {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        det: PathBuf,
        #[arg(long, value_delimiter = ',', default_values = ["area", "height"])]
        costs: Vec<CostKind>,
        #[arg(long, value_delimiter = ',', default_values = ["ciou"])]
        patch_ious: Vec<IouKind>,
        #[arg(long, value_delimiter = ',', default_values = ["on", "off"])]
        patching: Vec<Toggle>,
        /// CSV output path.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flags: TrackerFlags,
    },
    /// Re-run a command from its manifest, rewriting the recorded outputs.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Toggle {
    Off,
    On,
}

impl Toggle {
    pub fn as_str(self) -> &'static str {
        match self {
            Toggle::On => "on",
            Toggle::Off => "off",
        }
    }
}

/// Tracker settings; each flag overrides the matching field of `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct TrackerFlags {
    /// JSON file with any subset of the tracker configuration fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub tau_high: Option<f64>,
    #[arg(long)]
    pub tau_low: Option<f64>,
    #[arg(long)]
    pub match_gate: Option<f64>,
    /// First-stage cost: `area` or `height`.
    #[arg(long)]
    pub cost: Option<CostKind>,
    /// Patching score: `iou`, `giou`, `diou` or `ciou`.
    #[arg(long)]
    pub patch_iou: Option<IouKind>,
    /// Minimum patching score; above 1 disables patching.
    #[arg(long, allow_negative_numbers = true)]
    pub patch_min: Option<f64>,
    #[arg(long)]
    pub tau_trust: Option<f64>,
    #[arg(long)]
    pub pseudo_ttl: Option<u32>,
    #[arg(long)]
    pub min_hits: Option<u32>,
    #[arg(long)]
    pub max_age: Option<u32>,
    /// Recorded in the manifest; tracking itself draws no random numbers.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl TrackerFlags {
    pub fn resolve(&self) -> Result<TrackerConfig, CliError> {
        let mut cfg: TrackerConfig = match &self.config {
            Some(p) => serde_json::from_str(&read(p)?)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
            None => TrackerConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag { cfg.$field = v; })*
            };
        }
        set!(tau_high => tau_high, tau_low => tau_low, match_gate => match_gate, cost => cost_kind,
             patch_iou => patch_iou_kind, patch_min => patch_min, tau_trust => tau_trust,
             pseudo_ttl => pseudo_ttl, min_hits => min_hits, max_age => max_age);
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

/// What a run did, enough to repeat it with `replay`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub config: RunConfig,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunConfig {
    Track {
        tracker: TrackerConfig,
    },
    Eval {
        names: Vec<String>,
    },
    Synth {
        scenario: Option<ScenarioConfig>,
        crossing_fixture: bool,
    },
    Sweep {
        tracker: TrackerConfig,
        grid: SweepGrid,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub costs: Vec<CostKind>,
    pub patch_ious: Vec<IouKind>,
    pub patching: Vec<Toggle>,
}

fn write_manifest(path: &Path, m: &RunManifest) -> Result<(), CliError> {
    write(path, &to_json(m))
}

pub fn load_detections(path: &Path) -> Result<DetSequence, CliError> {
    let name = sequence_name(path);
    mot_io::parse_detections(&read(path)?, &name).map_err(|source| CliError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_tracks(path: &Path, name: &str) -> Result<TrackSequence, CliError> {
    mot_io::parse_tracks(&read(path)?, name).map_err(|source| CliError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

/// File stem, or the parent directory's name for generic stems like `gt`.
pub fn sequence_name(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("sequence");
    if matches!(stem, "gt" | "det") {
        if let Some(parent) = path.parent().and_then(|p| p.file_name()).and_then(|s| s.to_str()) {
            return parent.to_string();
        }
    }
    stem.to_string()
}

/// Runs the tracker over frames `1..=frame_count`, empty frames included.
pub fn track_sequence(dets: &DetSequence, cfg: TrackerConfig) -> Result<Vec<FrameOutput>, CliError> {
    let mut tracker = Tracker::new(cfg).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(tracker.run(dets.frame_count, |f| dets.frame(f))?)
}

pub fn cmd_track(det: &Path, out: &Path, cfg: TrackerConfig, seed: Option<u64>) -> Result<(), CliError> {
    let dets = load_detections(det)?;
    let outputs = track_sequence(&dets, cfg)?;
    write(out, &mot_io::write_results(&outputs))?;
    write_manifest(
        &with_suffix(out, ".manifest.json"),
        &RunManifest {
            command: "track".into(),
            tool_version: VERSION.into(),
            seed,
            config: RunConfig::Track { tracker: cfg },
            inputs: vec![det.to_path_buf()],
            outputs: vec![out.to_path_buf()],
        },
    )
}

/// Percentage with two decimals, as printed.
pub fn percent(v: f64) -> f64 {
    format!("{:.2}", v * 100.0).parse().expect("formatted float")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentReport {
    pub hota: f64,
    pub deta: f64,
    pub assa: f64,
    pub mota: f64,
    pub idf1: f64,
    pub counts: metrics::Counts,
    /// `(alpha, HOTA at alpha)` in percent.
    pub per_alpha: Vec<(f64, f64)>,
}

impl From<&MetricsReport> for PercentReport {
    fn from(r: &MetricsReport) -> Self {
        PercentReport {
            hota: percent(r.hota),
            deta: percent(r.deta),
            assa: percent(r.assa),
            mota: percent(r.mota),
            idf1: percent(r.idf1),
            counts: r.counts,
            per_alpha: r.per_alpha.iter().map(|&(a, h)| ((a * 100.0).round() / 100.0, percent(h))).collect(),
        }
    }
}

pub fn evaluate_files(
    gt: &[PathBuf],
    res: &[PathBuf],
    names: &[String],
) -> Result<(Vec<String>, BTreeMap<String, MetricsReport>), CliError> {
    if gt.len() != res.len() {
        return Err(CliError::Config(format!("{} --gt files but {} --res files", gt.len(), res.len())));
    }
    if !names.is_empty() && names.len() != gt.len() {
        return Err(CliError::Config(format!("{} --name values for {} sequences", names.len(), gt.len())));
    }
    let names: Vec<String> = if names.is_empty() {
        gt.iter().map(|p| sequence_name(p)).collect()
    } else {
        names.to_vec()
    };
    let mut pairs = Vec::with_capacity(gt.len());
    for ((g, r), n) in gt.iter().zip(res).zip(&names) {
        if n == "COMBINED" || pairs.iter().any(|(s, _): &(TrackSequence, TrackSequence)| &s.name == n) {
            return Err(CliError::Config(format!("sequence name `{n}` is reserved or repeated; pass --name")));
        }
        pairs.push((load_tracks(g, n)?, load_tracks(r, n)?));
    }
    Ok((names, metrics::evaluate_many(&pairs)?))
}

pub fn cmd_eval(
    gt: &[PathBuf],
    res: &[PathBuf],
    names: &[String],
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let (names, reports) = evaluate_files(gt, res, names)?;
    let printed: BTreeMap<&String, PercentReport> = reports.iter().map(|(k, v)| (k, PercentReport::from(v))).collect();
    let text = to_json(&printed);
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| with_suffix(&res[0], ".eval.json"));
    write(&out, &text)?;
    stdout.write_all(text.as_bytes()).map_err(|source| CliError::Io {
        path: PathBuf::from("<stdout>"),
        source,
    })?;
    write_manifest(
        &with_suffix(&out, ".manifest.json"),
        &RunManifest {
            command: "eval".into(),
            tool_version: VERSION.into(),
            seed: None,
            config: RunConfig::Eval { names },
            inputs: gt.iter().zip(res).flat_map(|(g, r)| [g.clone(), r.clone()]).collect(),
            outputs: vec![out],
        },
    )
}

pub fn cmd_synth(
    scenario: Option<ScenarioConfig>,
    crossing_fixture: bool,
    seed: Option<u64>,
    out_dir: &Path,
) -> Result<(), CliError> {
    let (scene, scenario, seed) = if crossing_fixture {
        (synth::crossing_fixture::<f64>(), None, None)
    } else {
        let mut sc = scenario.ok_or_else(|| CliError::Config("no scenario given".into()))?;
        if let Some(s) = seed {
            sc.seed = s;
        }
        let scene = synth::generate(&sc).map_err(|e| CliError::Config(e.to_string()))?;
        let seed = Some(sc.seed);
        (scene, Some(sc), seed)
    };
    let gt = out_dir.join("gt.txt");
    let det = out_dir.join("det.txt");
    write(&gt, &mot_io::write_tracks(&scene.gt))?;
    write(&det, &mot_io::write_detections(&scene.dets))?;
    write_manifest(
        &out_dir.join("manifest.json"),
        &RunManifest {
            command: "synth".into(),
            tool_version: VERSION.into(),
            seed,
            config: RunConfig::Synth {
                scenario,
                crossing_fixture,
            },
            inputs: Vec::new(),
            outputs: vec![gt, det],
        },
    )
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, CliError> {
    serde_json::from_str(&read(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// One configuration of a sweep and its scores.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub cost: CostKind,
    pub patch_iou: IouKind,
    pub patching: Toggle,
    pub report: MetricsReport,
}

pub const SWEEP_HEADER: &str = "cost,patch_iou,patching,hota,deta,assa,mota,idf1";

impl SweepRow {
    pub fn csv(&self) -> String {
        let r = &self.report;
        format!(
            "{},{},{},{:.2},{:.2},{:.2},{:.2},{:.2}",
            self.cost,
            self.patch_iou,
            self.patching.as_str(),
            r.hota * 100.0,
            r.deta * 100.0,
            r.assa * 100.0,
            r.mota * 100.0,
            r.idf1 * 100.0
        )
    }
}

/// Tracks and scores every grid cell, in parallel, going through the written
/// result format exactly as `track` followed by `eval` would.
pub fn sweep(gt: &TrackSequence, dets: &DetSequence, base: TrackerConfig, grid: &SweepGrid) -> Result<Vec<SweepRow>, CliError> {
    let mut keys: Vec<(&'static str, &'static str, Toggle, CostKind, IouKind)> = Vec::new();
    for &c in &grid.costs {
        for &k in &grid.patch_ious {
            for &p in &grid.patching {
                keys.push((c.as_str(), k.as_str(), p, c, k));
            }
        }
    }
    keys.sort_by_key(|k| (k.0, k.1, k.2.as_str()));
    keys.dedup_by_key(|k| (k.0, k.1, k.2));

    let results: Vec<Result<SweepRow, CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = keys
            .iter()
            .map(|&(_, _, patching, cost, patch_iou)| {
                scope.spawn(move || {
                    let cfg = TrackerConfig {
                        cost_kind: cost,
                        patch_iou_kind: patch_iou,
                        patch_min: if patching == Toggle::On { base.patch_min } else { PATCHING_OFF },
                        ..base
                    };
                    let text = mot_io::write_results(&track_sequence(dets, cfg)?);
                    let pred = mot_io::parse_tracks::<f64>(&text, &gt.name).expect("own output parses");
                    Ok(SweepRow {
                        cost,
                        patch_iou,
                        patching,
                        report: metrics::evaluate(gt, &pred)?,
                    })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker")).collect()
    });
    results.into_iter().collect()
}

pub fn cmd_sweep(
    gt_path: &Path,
    det_path: &Path,
    base: TrackerConfig,
    grid: SweepGrid,
    out: &Path,
    seed: Option<u64>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let dets = load_detections(det_path)?;
    let gt = load_tracks(gt_path, &sequence_name(gt_path))?;
    let rows = sweep(&gt, &dets, base, &grid)?;
    let mut text = String::from(SWEEP_HEADER);
    text.push('\n');
    for r in &rows {
        text.push_str(&r.csv());
        text.push('\n');
    }
    write(out, &text)?;
    stdout.write_all(text.as_bytes()).map_err(|source| CliError::Io {
        path: PathBuf::from("<stdout>"),
        source,
    })?;
    write_manifest(
        &with_suffix(out, ".manifest.json"),
        &RunManifest {
            command: "sweep".into(),
            tool_version: VERSION.into(),
            seed,
            config: RunConfig::Sweep { tracker: base, grid },
            inputs: vec![gt_path.to_path_buf(), det_path.to_path_buf()],
            outputs: vec![out.to_path_buf()],
        },
    )
}

pub fn cmd_replay(manifest: &Path, stdout: &mut dyn Write) -> Result<(), CliError> {
    let m: RunManifest =
        serde_json::from_str(&read(manifest)?).map_err(|e| CliError::Config(format!("{}: {e}", manifest.display())))?;
    let bad = || CliError::Config(format!("{}: inputs/outputs do not fit `{}`", manifest.display(), m.command));
    match m.config {
        RunConfig::Track { tracker } => {
            let [det] = m.inputs.as_slice() else { return Err(bad()) };
            let [out] = m.outputs.as_slice() else { return Err(bad()) };
            tracker.validate().map_err(|e| CliError::Config(e.to_string()))?;
            cmd_track(det, out, tracker, m.seed)
        }
        RunConfig::Eval { names } => {
            let [out] = m.outputs.as_slice() else { return Err(bad()) };
            if m.inputs.len() % 2 != 0 {
                return Err(bad());
            }
            let gt: Vec<PathBuf> = m.inputs.iter().step_by(2).cloned().collect();
            let res: Vec<PathBuf> = m.inputs.iter().skip(1).step_by(2).cloned().collect();
            cmd_eval(&gt, &res, &names, Some(out), stdout)
        }
        RunConfig::Synth {
            scenario,
            crossing_fixture,
        } => {
            let [gt, _] = m.outputs.as_slice() else { return Err(bad()) };
            let dir = gt.parent().ok_or_else(bad)?;
            cmd_synth(scenario, crossing_fixture, None, dir)
        }
        RunConfig::Sweep { tracker, grid } => {
            let [gt, det] = m.inputs.as_slice() else { return Err(bad()) };
            let [out] = m.outputs.as_slice() else { return Err(bad()) };
            tracker.validate().map_err(|e| CliError::Config(e.to_string()))?;
            cmd_sweep(gt, det, tracker, grid, out, m.seed, stdout)
        }
    }
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Track { det, out, flags } => cmd_track(&det, &out, flags.resolve()?, flags.seed),
        Command::Eval { gt, res, name, out } => cmd_eval(&gt, &res, &name, out.as_deref(), stdout),
        Command::Synth {
            scenario,
            crossing_fixture,
            seed,
            out_dir,
        } => {
            let scenario = scenario.as_deref().map(load_scenario).transpose()?;
            cmd_synth(scenario, crossing_fixture, seed, &out_dir)
        }
        Command::Sweep {
            gt,
            det,
            costs,
            patch_ious,
            patching,
            out,
            flags,
        } => {
            let grid = SweepGrid {
                costs,
                patch_ious,
                patching,
            };
            cmd_sweep(&gt, &det, flags.resolve()?, grid, &out, flags.seed, stdout)
        }
        Command::Replay { manifest } => cmd_replay(&manifest, stdout),
    }
}
