//! Command-line pipeline.

pub mod config;
pub mod pipeline;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::corpus::fixture::{write_planted, PlantedConfig};
use crate::error::{Error, Result};
pub use config::{derive_seed, RunConfig, StageKey, TrainingConfig};
pub use pipeline::{corpus_digest, Pipeline, Stage};

#[derive(Debug, Parser)]
#[command(name = "chcomply", version, about = "Controller-handler pattern assessment over C source corpora")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Corpus root holding manifest.json.
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load the corpus, unroll instances, sample negatives, build triplets.
    Ingest,
    /// Learn the subword vocabulary and encode every program.
    TrainVocab,
    /// Build or fine-tune one embedder.
    Train {
        #[arg(long, value_enum)]
        stage: Stage,
    },
    /// Embed every program with a trained embedder.
    Embed {
        #[arg(long, value_enum)]
        stage: Stage,
    },
    /// Rank and label every query.
    Assess {
        #[arg(long, value_enum)]
        stage: Stage,
        /// Comma-separated instance ids that freeze the benchmark.
        #[arg(long, value_delimiter = ',')]
        golden_instances: Option<Vec<String>>,
    },
    /// Confusion matrix, metrics and rank histogram.
    Evaluate {
        #[arg(long, value_enum)]
        stage: Stage,
    },
    /// Compare the evaluated stages.
    Report {
        #[arg(long, value_enum, value_delimiter = ',')]
        stages: Option<Vec<Stage>>,
    },
    /// Every stage in order.
    RunAll,
    /// Write the planted synthetic corpus.
    MakeFixture {
        dir: PathBuf,
        #[arg(long)]
        fixture_seed: Option<u64>,
        #[arg(long)]
        signature_lines: Option<usize>,
        #[arg(long)]
        component_lines: Option<usize>,
        #[arg(long)]
        app_lines: Option<usize>,
        #[arg(long)]
        filler_lines: Option<usize>,
    },
}

impl Cli {
    /// Defaults, then the config file, then flags.
    pub fn resolve_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if let Some(c) = &self.corpus {
            cfg.corpus_root = c.clone();
        }
        if let Command::Assess {
            golden_instances: Some(g),
            ..
        } = &self.command
        {
            cfg.golden_instances = g.clone();
        }
        Ok(cfg)
    }
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(v).map_err(|e| Error::schema("stdout", e))?;
    println!("{s}");
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    if let Command::MakeFixture {
        dir,
        fixture_seed,
        signature_lines,
        component_lines,
        app_lines,
        filler_lines,
    } = &cli.command
    {
        let d = PlantedConfig::default();
        let fc = PlantedConfig {
            seed: fixture_seed.unwrap_or(d.seed),
            signature_lines: signature_lines.unwrap_or(d.signature_lines),
            component_lines: component_lines.unwrap_or(d.component_lines),
            app_lines: app_lines.unwrap_or(d.app_lines),
            filler_lines: filler_lines.unwrap_or(d.filler_lines),
        };
        let planted = write_planted(dir, &fc)?;
        println!("wrote {} files to {}", planted.files.len() + 1, dir.display());
        return Ok(());
    }
    let cfg = cli.resolve_config()?;
    let p = Pipeline::open(cfg)?;
    match &cli.command {
        Command::Ingest => print_json(&p.ingest()?),
        Command::TrainVocab => {
            let v = p.train_vocab()?;
            println!("vocabulary: {} subwords", v.len());
            Ok(())
        }
        Command::Train { stage } => {
            let a = p.train(*stage)?;
            println!("{} fingerprint {}", stage.name(), a.fingerprint);
            Ok(())
        }
        Command::Embed { stage } => {
            let s = p.embed(*stage)?;
            println!("{}: embedded {} programs", stage.name(), s.len());
            Ok(())
        }
        Command::Assess { stage, .. } => {
            let r = p.assess(*stage)?;
            let labeled = r.iter().filter(|x| x.label).count();
            println!("{}: {} queries assessed, {} labeled compliant", stage.name(), r.len(), labeled);
            Ok(())
        }
        Command::Evaluate { stage } => {
            print!("{}", p.evaluate(*stage)?.to_text());
            Ok(())
        }
        Command::Report { stages } => {
            let stages = stages.clone().unwrap_or_else(|| Stage::ALL.to_vec());
            print!("{}", p.report(&stages)?.to_text());
            Ok(())
        }
        Command::RunAll => {
            print!("{}", p.run_all()?.to_text());
            Ok(())
        }
        Command::MakeFixture { .. } => unreachable!("handled above"),
    }
}

/// Entry point for the binary. Errors go to stderr as one JSON record.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let rec = serde_json::json!({"error": e.kind(), "message": e.to_string()});
            eprintln!("{rec}");
            1
        }
    }
}
