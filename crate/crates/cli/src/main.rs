use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};

use neutrotensor::gateway::{load_fixtures, mock_endpoint, Gateway, RunArchive, RunConfig};
use neutrotensor::metrics::{ConvergenceMode, PermutationConfig, ThemeLexicon, TokenizerOptions};
use neutrotensor::report::{
    analyze, build_table, load_records, save_archive_csv, AnalysisOptions, Dataset, ImportMapping,
};
use neutrotensor::{Strategy, TrialRecord};

#[derive(Parser)]
#[command(name = "neutrotensor", version, about = "Neutrosophic T/I/F evaluation of chat models")]
struct Cli {
    /// Run config (TOML). Also supplies the lexicon path and seed.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for permutation tests.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Theme lexicon (TOML); the built-in lexicon is used otherwise.
    #[arg(long, global = true)]
    lexicon: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Drop common English function words before loss-text Jaccard.
    #[arg(long, global = true)]
    stopwords: bool,
    #[arg(long, global = true, default_value_t = 10_000)]
    permutations: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the configured grid and archive transcripts and parsed rows.
    Run,
    /// Recompute every report table from archived data.
    Replay(Inputs),
    /// Print one report table as CSV.
    Analyze {
        #[arg(long)]
        table: String,
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Serve canned completions for testing and demos.
    MockServe {
        #[arg(long)]
        fixtures: PathBuf,
        #[arg(long, default_value_t = 8089)]
        port: u16,
    },
    /// Write plot-ready CSVs for the three figures.
    EmitFigures(Inputs),
}

#[derive(Args, Clone)]
struct Inputs {
    /// Mixed inputs: archive CSV, JSON documents or NDJSON transcripts.
    files: Vec<PathBuf>,
    #[arg(long)]
    s1s3: Option<PathBuf>,
    #[arg(long)]
    s4: Option<PathBuf>,
    /// S4 rerun; replaces the S4 rows of the models it contains.
    #[arg(long)]
    s4_rerun: Option<PathBuf>,
    #[arg(long)]
    tautology: Option<PathBuf>,
    #[arg(long)]
    ablation: Option<PathBuf>,
    /// Column mapping (TOML) for files not in the canonical schema.
    #[arg(long)]
    mapping: Option<PathBuf>,
    /// Substring selecting the model for the pairwise matrix and severity table.
    #[arg(long, default_value = "mistral")]
    focus_model: String,
    /// Count a theme for a model only if every repetition shows it.
    #[arg(long)]
    every_rep: bool,
}

fn load_input(path: &Path, mapping: Option<&ImportMapping>, default: Option<Strategy>) -> Result<Vec<TrialRecord>> {
    let is_ndjson = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("ndjson") || e.eq_ignore_ascii_case("jsonl"));
    let records = if is_ndjson {
        RunArchive::load(path)?.to_records()
    } else {
        load_records(path, mapping, default)?
    };
    Ok(records)
}

impl Inputs {
    fn dataset(&self) -> Result<Dataset> {
        let mapping = self
            .mapping
            .as_deref()
            .map(ImportMapping::load)
            .transpose()?;
        let m = mapping.as_ref();
        let mut d = Dataset::default();
        for f in &self.files {
            d.extend(load_input(f, m, None)?);
        }
        if let Some(p) = &self.s1s3 {
            d.extend(load_input(p, m, None)?);
        }
        if let Some(p) = &self.s4 {
            d.extend(load_input(p, m, Some(Strategy::TensorLosses))?);
        }
        if let Some(p) = &self.tautology {
            d.extend(load_input(p, m, Some(Strategy::TensorLosses))?);
        }
        if let Some(p) = &self.ablation {
            d.extend(load_input(p, m, Some(Strategy::Ablation))?);
        }
        if let Some(p) = &self.s4_rerun {
            d.s4_rerun = load_input(p, m, Some(Strategy::TensorLosses))?;
        }
        if d.is_empty() {
            bail!("no input files given");
        }
        Ok(d)
    }
}

impl Cli {
    fn run_config(&self) -> Result<Option<RunConfig>> {
        self.config
            .as_deref()
            .map(|p| RunConfig::load(p).with_context(|| format!("loading {}", p.display())))
            .transpose()
    }

    fn options(&self, inputs: &Inputs) -> Result<AnalysisOptions> {
        let config = self.run_config()?;
        let lexicon_path = self
            .lexicon
            .clone()
            .or_else(|| config.as_ref().and_then(|c| c.lexicon.clone()));
        let lexicon = match lexicon_path {
            Some(p) => ThemeLexicon::load(&p).with_context(|| format!("loading lexicon {}", p.display()))?,
            None => ThemeLexicon::default_lexicon(),
        };
        Ok(AnalysisOptions {
            tokenizer: TokenizerOptions {
                remove_stopwords: self.stopwords,
            },
            lexicon,
            convergence_mode: if inputs.every_rep {
                ConvergenceMode::EveryRep
            } else {
                ConvergenceMode::AnyRep
            },
            permutations: self.permutations,
            seed: self
                .seed
                .or_else(|| config.as_ref().and_then(|c| c.seed))
                .unwrap_or(PermutationConfig::default().seed),
            focus_model: inputs.focus_model.clone(),
            ..AnalysisOptions::default()
        })
    }
}

async fn run(cli: &Cli) -> Result<()> {
    let config = cli.run_config()?.context("`run` needs --config")?;
    let gateway = Gateway::from_env(config)?;
    std::fs::create_dir_all(&cli.out_dir)
        .with_context(|| format!("creating {}", cli.out_dir.display()))?;
    let ndjson = cli.out_dir.join("transcripts.ndjson");
    let archive = gateway.run_experiment(&ndjson).await?;
    let records = archive.to_records();
    let csv = cli.out_dir.join("archive.csv");
    save_archive_csv(&csv, &records)?;
    let failed = archive.transcripts.iter().filter(|t| !t.status.is_ok()).count();
    println!(
        "{} transcripts ({} transport failures) -> {}, {}",
        archive.transcripts.len(),
        failed,
        ndjson.display(),
        csv.display()
    );
    for ((model, stimulus, strategy), n) in archive.missing_cells() {
        println!("missing: {model} / {stimulus} / {strategy}: {n} of {}", archive.config.repetitions);
    }
    Ok(())
}

async fn mock_serve(fixtures: &Path, port: u16) -> Result<()> {
    let fixtures = load_fixtures(fixtures)?;
    let server = mock_endpoint(fixtures, port).await?;
    println!("serving {}", server.base_url());
    tokio::signal::ctrl_c().await?;
    server.shutdown().await;
    Ok(())
}

#[tokio::main]
async fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Run => run(&cli).await,
        Command::Replay(inputs) => {
            let dataset = inputs.dataset()?;
            let report = analyze(&dataset, &cli.options(inputs)?);
            report.write_dir(&cli.out_dir)?;
            print!("{}", report.summary());
            Ok(())
        }
        Command::Analyze { table, inputs } => {
            let dataset = inputs.dataset()?;
            let t = build_table(table, &dataset, &cli.options(inputs)?)?;
            print!("{}", t.to_csv_string()?);
            Ok(())
        }
        Command::MockServe { fixtures, port } => mock_serve(fixtures, *port).await,
        Command::EmitFigures(inputs) => {
            let dataset = inputs.dataset()?;
            let options = cli.options(inputs)?;
            std::fs::create_dir_all(&cli.out_dir)?;
            for name in ["fig1_paradox_positions", "fig2_scalar_vs_jaccard", "fig3_mistral_matrix"] {
                match build_table(name, &dataset, &options) {
                    Ok(t) => {
                        let path = cli.out_dir.join(format!("{name}.csv"));
                        std::fs::write(&path, t.to_csv_string()?)?;
                        println!("{}", path.display());
                    }
                    Err(e) => eprintln!("{name}: skipped: {e}"),
                }
            }
            Ok(())
        }
    }
}
