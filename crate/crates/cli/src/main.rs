//! `beamtalk`: generate, train, eval, interpret, repl and serve.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or model error.

mod repl;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{Context, Result};
use beamtalk_core::corpus::{generate_corpus, load_templates, read_corpus, slot_stats, write_corpus, TemplateSet};
use beamtalk_core::interpreter::{interpret, Interpretation};
use beamtalk_core::records::write_records;
use beamtalk_core::tagger::{evaluate, load_model, save_model, train, TaggerModel};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

const CORPUS_FILE: &str = "corpus.jsonl";

#[derive(Parser, Debug)]
#[command(name = "beamtalk", version, about = "Natural-language control of a simulated beamline")]
struct Cli {
    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a train/test corpus from sentence templates.
    Generate {
        /// Template file; the built-in pack when omitted.
        #[arg(long)]
        templates: Option<PathBuf>,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a tagger on a corpus's train split.
    Train {
        /// Corpus directory or file.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 5)]
        epochs: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Model file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a model on a corpus split.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum, default_value_t = Split::Test)]
        split: Split,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Interpret one request and print spans and script.
    Interpret {
        #[arg(long)]
        model: PathBuf,
        text: String,
    },
    /// Interpret requests from stdin, one per line, and ask for confirmation.
    Repl {
        #[arg(long)]
        model: PathBuf,
        /// Run confirmed scripts on an in-process simulator.
        #[arg(long)]
        execute: bool,
    },
    /// Run the HTTP service.
    Serve {
        /// Without a model, /interpret answers 503 and everything else works.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 8000)]
        port: u16,
        /// Template file to validate at startup.
        #[arg(long)]
        templates: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Split {
    Train,
    Test,
    All,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Format {
    Text,
    Records,
}

enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = ["warn", "info", "debug"][usize::from(cli.verbose).min(2)];
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| level.into()),
        )
        .with_writer(std::io::stderr)
        .init();

    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Generate { templates, n, seed, out } => {
            if n == 0 {
                return Err(Failure::Usage("n must be positive".into()));
            }
            generate(templates.as_deref(), n, seed, &out)?
        }
        Command::Train { corpus, epochs, seed, out } => {
            if epochs == 0 {
                return Err(Failure::Usage("epochs must be positive".into()));
            }
            train_model(&corpus, epochs, seed, &out)?
        }
        Command::Eval { model, corpus, split, format } => eval(&model, &corpus, split, format)?,
        Command::Interpret { model, text } => {
            let model = open_model(&model)?;
            print_interpretation(&mut std::io::stdout().lock(), &interpret(&text, &model))
                .context("writing output")?;
        }
        Command::Repl { model, execute } => {
            let model = open_model(&model)?;
            let stdin = std::io::stdin();
            repl::run(&model, execute, stdin.lock(), std::io::stdout().lock())?;
        }
        Command::Serve { model, port, templates } => serve(model.as_deref(), port, templates.as_deref())?,
    }
    Ok(())
}

fn templates_from(path: Option<&Path>) -> Result<TemplateSet> {
    match path {
        Some(p) => load_templates(p).with_context(|| format!("loading templates from {}", p.display())),
        None => Ok(TemplateSet::default_pack()),
    }
}

fn corpus_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(CORPUS_FILE)
    } else {
        p.to_path_buf()
    }
}

fn open_model(p: &Path) -> Result<TaggerModel> {
    load_model(p).with_context(|| format!("loading model {}", p.display()))
}

fn generate(templates: Option<&Path>, n: usize, seed: u64, out: &Path) -> Result<()> {
    let ts = templates_from(templates)?;
    let started = Instant::now();
    let c = generate_corpus(&ts, n, seed, 0.8)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join(CORPUS_FILE);
    write_corpus(&c, &path).with_context(|| format!("writing {}", path.display()))?;
    let all: Vec<_> = c.train.iter().chain(&c.test).cloned().collect();
    let (mean, std) = slot_stats(&all);
    println!("train {} paragraphs ({} templates)", c.train.len(), c.train_templates.len());
    println!("test {} paragraphs ({} templates)", c.test.len(), c.test_templates.len());
    println!("slots mean {mean:.2} std {std:.2}");
    println!("wrote {} in {:.3} s", path.display(), started.elapsed().as_secs_f64());
    Ok(())
}

fn train_model(corpus: &Path, epochs: usize, seed: u64, out: &Path) -> Result<()> {
    let path = corpus_path(corpus);
    let c = read_corpus(&path).with_context(|| format!("reading corpus {}", path.display()))?;
    let started = Instant::now();
    let model = train(&c, epochs, seed)?;
    let secs = started.elapsed().as_secs_f64();
    save_model(&model, out).with_context(|| format!("writing model {}", out.display()))?;
    println!("trained on {} paragraphs, {epochs} epochs, seed {seed}", c.train.len());
    println!("features {}", model.feature_count());
    println!("wrote {} in {secs:.1} s", out.display());
    Ok(())
}

fn eval(model: &Path, corpus: &Path, split: Split, format: Format) -> Result<()> {
    let model = open_model(model)?;
    let path = corpus_path(corpus);
    let c = read_corpus(&path).with_context(|| format!("reading corpus {}", path.display()))?;
    let paragraphs = match split {
        Split::Train => c.train,
        Split::Test => c.test,
        Split::All => c.train.into_iter().chain(c.test).collect(),
    };
    let m = evaluate(&model, &paragraphs)?;
    match format {
        Format::Text => println!("{m}"),
        Format::Records => {
            let rows: Vec<_> = [("paragraph", m.paragraph), ("token_all", m.token_all), ("token_bi", m.token_bi)]
                .into_iter()
                .map(|(name, r)| json!({ "metric": name, "correct": r.correct, "total": r.total, "fraction": r.fraction() }))
                .collect();
            let meta = json!({ "model": model.meta, "split": format!("{split:?}").to_lowercase() });
            write_records(std::io::stdout().lock(), "eval", &meta, &rows)?;
        }
    }
    Ok(())
}

pub(crate) fn print_interpretation(out: &mut impl Write, i: &Interpretation) -> std::io::Result<()> {
    writeln!(out, "spans:")?;
    for s in &i.spans {
        let mark = if s.consumed { "" } else { "  (unused)" };
        writeln!(out, "  {:<24} {}{mark}", s.label().to_string(), s.surface)?;
    }
    writeln!(out, "script:")?;
    for line in i.rendered.lines() {
        writeln!(out, "  {line}")?;
    }
    if !i.warnings.is_empty() {
        writeln!(out, "warnings:")?;
        for w in &i.warnings {
            let tag = if w.blocking { "[blocking] " } else { "" };
            writeln!(out, "  {tag}{}", w.message)?;
        }
    }
    Ok(())
}

fn serve(model: Option<&Path>, port: u16, templates: Option<&Path>) -> Result<()> {
    let cfg = beamtalk_service::ServiceConfig::from_env().map_err(anyhow::Error::msg)?;
    if let Some(t) = templates {
        let ts = templates_from(Some(t))?;
        tracing::info!(templates = ts.len(), "template pack is valid");
    }
    let model = model.map(open_model).transpose()?;
    if model.is_none() {
        tracing::warn!("no model loaded; /interpret will answer 503");
    }
    let svc = Arc::new(beamtalk_service::Service::new(cfg, model)?);
    let host = std::env::var("BEAMTALK_HOST").unwrap_or_else(|_| "127.0.0.1".into());
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind((host.as_str(), port))
            .await
            .with_context(|| format!("binding {host}:{port}"))?;
        println!("listening on http://{}", listener.local_addr()?);
        std::io::stdout().flush()?;
        beamtalk_service::serve(listener, svc, shutdown_signal()).await?;
        println!("stopped");
        Ok(())
    })
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = signal(SignalKind::terminate()).expect("installing SIGTERM handler");
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}
