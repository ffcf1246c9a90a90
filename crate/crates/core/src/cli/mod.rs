//! The `patchwork` command line: one subcommand per pipeline stage, all
//! parameters in a flat [`RunConfig`], every artifact under `--out`.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub use config::{ConfigValue, RunConfig};

use crate::error::{Error, Result};
use crate::eval::sha256_hex;
use crate::nn::write_atomic;

#[derive(Parser, Debug)]
#[command(name = "patchwork", version, about = "Patch context prediction, retrieval, and mining")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// `key = value` config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; 1 is the reference path
    #[arg(long, env = "PATCHWORK_THREADS")]
    threads: Option<usize>,
}

macro_rules! subcommands {
    ($($(#[doc = $doc:literal])* $variant:ident { $($flag:ident => $key:literal),* $(,)? })*) => {
        #[derive(Subcommand, Debug)]
        enum Command {
            $(
                $(#[doc = $doc])*
                $variant {
                    #[command(flatten)]
                    common: Common,
                    $(#[arg(long)] $flag: Option<String>,)*
                },
            )*
        }

        impl Command {
            fn parts(&self) -> (&'static str, &Common, Vec<(&'static str, Option<&String>)>) {
                match self {
                    $(Command::$variant { common, $($flag),* } => (
                        subcommand_name(stringify!($variant)),
                        common,
                        vec![$(($key, $flag.as_ref())),*],
                    ),)*
                }
            }
        }
    };
}

subcommands! {
    /// Render a synthetic corpus with a manifest
    SynthCorpus { n_images => "n_images", family => "family", width => "width", height => "height", aberration => "aberration_green_scale" }
    /// Dump labeled patch pairs
    SamplePairs { manifest => "manifest", n_pairs => "n_pairs" }
    /// Train the relative-position pair classifier
    TrainPretext { manifest => "manifest", val_manifest => "val_manifest", steps => "steps" }
    /// Train the absolute-location regressor
    TrainAbsloc { manifest => "manifest", val_manifest => "val_manifest", steps => "steps", color_mode => "color_mode" }
    /// Embed grid patches of every image
    Extract { manifest => "manifest", model => "model", stride => "stride", layer => "layer" }
    /// Nearest neighbors of query patches
    Knn { table => "table", k => "k", query => "queries", manifest => "manifest" }
    /// Mine and verify four-patch constellations
    Mine { manifest => "manifest", table => "table", model => "model", seeds => "n_seeds", top_k => "top_k" }
    /// Greedy coverage selection of mined clusters
    SelectClusters { clusters => "clusters", n_sets => "n_sets" }
    /// Purity-coverage curve of selected clusters
    EvalPurity { manifest => "manifest", selection => "selection", clusters => "clusters", n_sets => "n_sets" }
    /// Relative-position accuracy of a checkpoint
    EvalPretext { model => "model", manifest => "manifest", eval_images => "eval_images", pairs_per_image => "eval_pairs_per_image" }
    /// Center-predictor RMSE baseline
    ChanceRmse { manifest => "manifest", samples => "chance_samples" }
    /// Finite-difference check of a network
    GradCheck { net => "net" }
    /// Montage of mined clusters
    Montage { manifest => "manifest", clusters => "clusters", rows => "montage_rows" }
}

fn subcommand_name(variant: &str) -> &'static str {
    match variant {
        "SynthCorpus" => "synth-corpus",
        "SamplePairs" => "sample-pairs",
        "TrainPretext" => "train-pretext",
        "TrainAbsloc" => "train-absloc",
        "Extract" => "extract",
        "Knn" => "knn",
        "Mine" => "mine",
        "SelectClusters" => "select-clusters",
        "EvalPurity" => "eval-purity",
        "EvalPretext" => "eval-pretext",
        "ChanceRmse" => "chance-rmse",
        "GradCheck" => "grad-check",
        _ => "montage",
    }
}

/// Resolved configuration plus the output directory of one invocation.
pub struct Invocation {
    pub command: &'static str,
    pub config: RunConfig,
    pub out: PathBuf,
    artifacts: Vec<String>,
}

impl Invocation {
    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Writes `bytes` to `out/name` and records it in the index.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.path(name), bytes)?;
        self.record(name);
        Ok(())
    }

    /// Records a file some other routine wrote under `out`.
    pub fn record(&mut self, name: &str) {
        if !self.artifacts.iter().any(|a| a == name) {
            self.artifacts.push(name.to_owned());
        }
    }
}

#[derive(Serialize)]
struct ArtifactEntry {
    path: String,
    bytes: u64,
    sha256: String,
}

#[derive(Serialize)]
struct OutManifest<'a> {
    command: &'a str,
    seed: u64,
    config_sha256: String,
    artifacts: Vec<ArtifactEntry>,
}

fn resolve_config(common: &Common, flags: &[(&str, Option<&String>)]) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
    }
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn write_index(inv: &Invocation) -> Result<()> {
    let mut artifacts = Vec::with_capacity(inv.artifacts.len());
    for name in &inv.artifacts {
        let path = inv.path(name);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        artifacts.push(ArtifactEntry {
            path: name.clone(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        });
    }
    let index = OutManifest {
        command: inv.command,
        seed: inv.config.seed,
        config_sha256: sha256_hex(inv.config.resolved().as_bytes()),
        artifacts,
    };
    let json = serde_json::to_string_pretty(&index).expect("serializable") + "\n";
    write_atomic(&inv.path("manifest.json"), json.as_bytes())
}

fn execute(cli: Cli) -> Result<()> {
    let (command, common, flags) = cli.command.parts();
    let config = resolve_config(common, &flags)?;
    let out = common.out.clone();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut inv = Invocation {
        command,
        config,
        out,
        artifacts: Vec::new(),
    };
    let resolved = inv.config.resolved();
    inv.write("config.resolved", resolved.as_bytes())?;
    let body = |inv: &mut Invocation| commands::dispatch(inv);
    match common.threads {
        Some(0) => return Err(Error::Config("--threads must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(|| body(&mut inv))?,
        None => body(&mut inv)?,
    }
    write_index(&inv)
}

/// Parses `args` (program name first) and runs the subcommand. Returns the
/// process exit code: 0 success, 1 usage, 2 data, 3 numeric failure.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Non-empty path-valued config key.
fn required<'a>(value: &'a str, key: &str) -> Result<&'a Path> {
    if value.is_empty() {
        Err(Error::Config(format!("{key} is required")))
    } else {
        Ok(Path::new(value))
    }
}
