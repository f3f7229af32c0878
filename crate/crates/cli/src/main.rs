use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use grscale::corpus::{generate_synthetic, load_corpus, Corpus, SynthConfig};
use grscale::decode::{count_flops, QueryRun};
use grscale::harness::{
    compare_report, emit_plot, run_sweep, Pipeline, PlotOptions, RunManifest, SweepConfig,
    SweepKind,
};
use grscale::identifier::{
    assign_all_codes, embed_document, extract_ngram_identifiers, train_codebook, write_codebook,
    write_identifiers, IdentifierRecord, DEFAULT_M, DEFAULT_N,
};
use grscale::scalefit::{
    fit_joint, fit_power_law, read_joint_points, read_points, write_report, FitConfig,
};
use grscale::seqmodel::Checkpoint;

#[derive(Parser)]
#[command(name = "grscale", version, about = "Generative retrieval scaling-law laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or validate a corpus.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Assign document identifiers.
    #[command(subcommand)]
    Assign(AssignCmd),
    /// Train one model on a sweep config's training pairs.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a sweep config's test queries.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Run a scaling sweep.
    #[command(subcommand)]
    Sweep(SweepCmd),
    /// Fit a scaling law to CSV points.
    #[command(subcommand)]
    Fit(FitCmd),
    /// Plot one series of a sweep manifest.
    Plot(PlotArgs),
    /// Compare sweep manifests of the same kind.
    Compare(CompareArgs),
}

#[derive(Subcommand)]
enum CorpusCmd {
    /// Write a synthetic corpus.
    Gen {
        /// Synthetic corpus parameters (.toml or .json).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a corpus directory and print its summary.
    Load {
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum AssignCmd {
    /// Query-selected n-gram identifiers for every judged pair.
    Ngram {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = DEFAULT_M)]
        m: usize,
        #[arg(long, default_value_t = DEFAULT_N)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Residual-quantization code sequences; writes `codes.jsonl` and
    /// `codebook.json` into `--out`.
    Codebook {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 32)]
        n_codes: usize,
        #[arg(long, default_value_t = 4)]
        n_levels: usize,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[arg(long, default_value_t = 15)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// Sweep config (.toml or .json); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> anyhow::Result<SweepConfig> {
        let mut config = match &self.config {
            Some(p) => SweepConfig::from_path(p)?,
            None => SweepConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        Ok(config)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    hidden_dim: Option<usize>,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Mean and per-query contrastive generation loss.
    Cgl {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Beam decoding, ranking metrics and CGL; writes the metrics CSV.
    Rank {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        beam: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also write one JSON line of generated identifiers per query.
        #[arg(long)]
        runs: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum SweepCmd {
    ModelSize(SweepArgs),
    DataSize(SweepArgs),
    Beam(SweepArgs),
}

#[derive(Subcommand)]
enum FitCmd {
    /// `y = (scale/x)^exponent + floor` on a CSV with header `x,y`.
    PowerLaw {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "power_law")]
        law: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// The joint model/data law on a CSV with header `p,d,y`.
    Joint {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    series: String,
    #[arg(long)]
    log_y: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long = "manifest", required = true)]
    manifests: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_dir(dir: &Path) -> grscale::Result<Corpus> {
    load_corpus(
        &dir.join("documents.jsonl"),
        &dir.join("queries.jsonl"),
        &dir.join("qrels.tsv"),
    )
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).with_context(|| parent.display().to_string())?;
            }
            fs::write(p, text).with_context(|| p.display().to_string())?
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Rebuilds the pipeline and checks the checkpoint was trained on it.
fn pipeline_with_checkpoint(
    config: &SweepConfig,
    checkpoint: &Path,
) -> anyhow::Result<(Pipeline, grscale::seqmodel::SeqModel)> {
    let pipe = Pipeline::prepare(config)?;
    let (model, vocab) = Checkpoint::load(checkpoint)?.into_parts()?;
    if vocab != pipe.vocab {
        return Err(grscale::Error::Input(
            "checkpoint vocabulary does not match the configured corpus".into(),
        )
        .into());
    }
    Ok((pipe, model))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Corpus(CorpusCmd::Gen { config, seed, out }) => {
            let mut synth = match config {
                Some(p) => {
                    let text = fs::read_to_string(&p).with_context(|| p.display().to_string())?;
                    if p.extension().is_some_and(|e| e == "json") {
                        serde_json::from_str(&text)
                            .map_err(|e| grscale::Error::Config(e.to_string()))?
                    } else {
                        toml::from_str(&text).map_err(|e| grscale::Error::Config(e.to_string()))?
                    }
                }
                None => SynthConfig::default(),
            };
            if let Some(seed) = seed {
                synth.seed = seed;
            }
            let corpus = generate_synthetic(&synth)?;
            corpus.write_to_dir(&out)?;
            println!("{}", corpus.fingerprint());
        }
        Command::Corpus(CorpusCmd::Load { dir }) => {
            let corpus = load_dir(&dir)?;
            let summary = serde_json::json!({
                "documents": corpus.len(),
                "queries": corpus.queries().len(),
                "judgments": corpus.judgments().len(),
                "fingerprint": corpus.fingerprint(),
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Assign(AssignCmd::Ngram { corpus, m, n, out }) => {
            let corpus = load_dir(&corpus)?;
            let mut records = Vec::new();
            for j in corpus.judgments().iter().filter(|j| j.relevance > 0) {
                let doc = corpus.doc(&j.doc_id).expect("judgments are validated");
                let query = corpus.query(&j.query_id).expect("judgments are validated");
                records.push(IdentifierRecord::from(&extract_ngram_identifiers(doc, query, m, n)?));
            }
            write_identifiers(&out, &records)?;
        }
        Command::Assign(AssignCmd::Codebook {
            corpus,
            n_codes,
            n_levels,
            dim,
            iters,
            seed,
            out,
        }) => {
            let corpus = load_dir(&corpus)?;
            let vectors = corpus
                .documents()
                .iter()
                .map(|d| embed_document(d, dim, seed))
                .collect::<grscale::Result<Vec<_>>>()?;
            let codebook = train_codebook(&vectors, n_codes, n_levels, seed, iters)?;
            let seqs = assign_all_codes(&corpus, &codebook)?;
            let records: Vec<IdentifierRecord> = seqs.iter().map(IdentifierRecord::from).collect();
            write_identifiers(&out.join("codes.jsonl"), &records)?;
            write_codebook(&out.join("codebook.json"), &codebook)?;
        }
        Command::Train(args) => {
            let config = args.config.load()?;
            config.validate()?;
            let pipe = Pipeline::prepare(&config)?;
            let d = args.hidden_dim.unwrap_or(config.hidden_dim);
            let (model, stats) = pipe.train_model(d, &pipe.pairs, &config)?;
            Checkpoint::new(&model, &pipe.vocab).save(&args.out)?;
            println!("{}", serde_json::to_string(&stats)?);
        }
        Command::Eval(EvalCmd::Cgl {
            config,
            checkpoint,
            out,
        }) => {
            let config = config.load()?;
            let (pipe, model) = pipeline_with_checkpoint(&config, &checkpoint)?;
            let report = pipe.cgl(&model, &config)?;
            emit(out.as_deref(), &(serde_json::to_string_pretty(&report)? + "\n"))?;
        }
        Command::Eval(EvalCmd::Rank {
            config,
            checkpoint,
            beam,
            out,
            runs,
        }) => {
            let config = config.load()?;
            let (pipe, model) = pipeline_with_checkpoint(&config, &checkpoint)?;
            let cgl = pipe.cgl(&model, &config)?;
            let decoded = pipe.decode(&model, beam, config.rank_k)?;
            let ranked: Vec<_> = decoded.iter().map(|(_, r)| r.clone()).collect();
            pipe.report(&ranked, Some(&cgl.per_query))?.write_csv(&out)?;
            if let Some(path) = runs {
                let flops = count_flops(&model.config, &pipe.beam_config(beam), pipe.max_len)?;
                let mut lines = String::new();
                for (generated, ranked) in decoded {
                    let run = QueryRun::new(beam, flops.flops_per_query, &generated, ranked, &pipe.vocab);
                    lines.push_str(&serde_json::to_string(&run)?);
                    lines.push('\n');
                }
                emit(Some(&path), &lines)?;
            }
        }
        Command::Sweep(cmd) => {
            let (kind, args) = match cmd {
                SweepCmd::ModelSize(a) => (SweepKind::ModelSize, a),
                SweepCmd::DataSize(a) => (SweepKind::DataSize, a),
                SweepCmd::Beam(a) => (SweepKind::Beam, a),
            };
            let mut config = args.config.load()?;
            config.sweep_kind = kind;
            if let Some(out) = args.out {
                config.out_dir = out;
            }
            if let Some(w) = args.workers {
                config.workers = w;
            }
            let manifest = run_sweep(&config)?;
            for f in &manifest.fits {
                match &f.fit {
                    Some(fit) => println!(
                        "{}: exponent {:.4} floor {:.4e} r2 {:.4}",
                        f.series, fit.exponent, fit.floor, fit.r2
                    ),
                    None => println!("{}: fit failed: {}", f.series, f.error.as_deref().unwrap_or("")),
                }
            }
            println!("{}", config.out_dir.join("manifest.json").display());
        }
        Command::Fit(FitCmd::PowerLaw { input, law, out }) => {
            let fit = fit_power_law(&read_points(&input)?, &FitConfig::default())?;
            let report = fit.report(&law);
            match out {
                Some(p) => write_report(&p, &report)?,
                None => println!("{}", serde_json::to_string_pretty(&report)?),
            }
        }
        Command::Fit(FitCmd::Joint { input, out }) => {
            let fit = fit_joint(&read_joint_points(&input)?, &FitConfig::default())?;
            let report = fit.report();
            match out {
                Some(p) => write_report(&p, &report)?,
                None => println!("{}", serde_json::to_string_pretty(&report)?),
            }
        }
        Command::Plot(args) => {
            let manifest = RunManifest::load(&args.manifest)?;
            let points = manifest.series(&args.series);
            if points.is_empty() {
                bail!(grscale::Error::Input(format!(
                    "manifest has no series `{}`",
                    args.series
                )));
            }
            let kind = manifest.config.sweep_kind;
            let opts = PlotOptions {
                title: format!("{} vs {}", args.series, kind.x_label()),
                x_label: kind.x_label().to_string(),
                y_label: args.series.clone(),
                log_y: args.log_y,
            };
            emit_plot(&points, manifest.fit(&args.series), &opts, &args.out)?;
        }
        Command::Compare(args) => {
            let manifests = args
                .manifests
                .iter()
                .map(|p| RunManifest::load(p))
                .collect::<grscale::Result<Vec<_>>>()?;
            emit(args.out.as_deref(), &compare_report(&manifests)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err
                .downcast_ref::<grscale::Error>()
                .map_or(3, grscale::Error::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
