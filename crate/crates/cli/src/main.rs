//! `marketstates` command-line interface.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use marketstates::ingest::{fetch_remote, write_csv, HttpSource};
use marketstates::pipeline::{self, load_summary, PipelineConfig, Summary};
use marketstates::synth::{
    cyclic_block_regimes, generate_panel_with, planted_labels, Innovations, SynthOptions,
};

#[derive(Parser)]
#[command(name = "marketstates", version, about = "Market-state detection from correlation networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Download price history for the configured remote coins into the cache.
    Fetch {
        #[arg(long)]
        config: PathBuf,
        /// Where to write the combined panel CSV.
        #[arg(long, default_value = "panel.csv")]
        output: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run (or resume) the full pipeline.
    Run {
        #[command(flatten)]
        params: Params,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Print the summary of a finished run.
    Report {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the raw summary JSON.
        #[arg(long)]
        json: bool,
    },
    /// Write a planted-regime synthetic panel (`panel.csv`) and its labels (`labels.csv`).
    Synth(SynthArgs),
}

/// Pipeline parameters. Flags override values from `--config`.
#[derive(Args)]
struct Params {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Local price CSV (`date,coin_id,close,market_cap`).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Planted `epoch,regime` labels; the report then includes the ARI.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    start: Option<NaiveDate>,
    #[arg(long)]
    end: Option<NaiveDate>,
    #[arg(long)]
    epoch_length: Option<usize>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    norm_window: Option<usize>,
    #[arg(long)]
    power_q: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    wl_iterations: Option<usize>,
    /// Number of states; skips the eigengap search.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Params {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
            None => PipelineConfig::default(),
        };
        if let Some(input) = &self.input {
            cfg.input = Some(input.clone());
            cfg.remote = None;
        }
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    cfg.$field = v.clone().into();
                }
            )*};
        }
        set!(labels, start, end, epoch_length, top_k, norm_window, power_q, alpha, wl_iterations, k, k_max, seed, restarts, out);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 40)]
    coins: usize,
    #[arg(long, default_value_t = 20)]
    epoch_length: usize,
    #[arg(long, default_value_t = 103)]
    epochs: usize,
    #[arg(long, default_value_t = 4)]
    regimes: usize,
    #[arg(long, default_value_t = 0.7)]
    rho_in: f64,
    #[arg(long, default_value_t = 0.1)]
    rho_out: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Draw multivariate Student-t innovations with this many degrees of freedom.
    #[arg(long)]
    student_t: Option<f64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fetch { config, output, jobs } => fetch(&config, &output, jobs),
        Command::Run { params, jobs } => {
            let cfg = params.resolve()?;
            let outcome = pipeline::run(&cfg, jobs)?;
            log::info!(
                "ran {:?}, skipped {:?}; outputs in {}",
                outcome.executed,
                outcome.skipped,
                cfg.out.display()
            );
            print_summary(&outcome.summary);
            Ok(())
        }
        Command::Report { config, out, json } => {
            let out = match (out, config) {
                (Some(out), _) => out,
                (None, Some(config)) => PipelineConfig::load(&config)?.out,
                (None, None) => PipelineConfig::default().out,
            };
            let summary = load_summary(&out)
                .with_context(|| format!("no finished run in {}; use `marketstates run` first", out.display()))?;
            if json {
                println!("{}", summary_text(&out)?);
            } else {
                print_summary(&summary);
            }
            Ok(())
        }
        Command::Synth(args) => synth(&args),
    }
}

fn summary_text(out: &Path) -> Result<String> {
    let path = out.join("report/summary.json");
    std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))
}

fn fetch(config: &Path, output: &Path, jobs: Option<usize>) -> Result<()> {
    let cfg = PipelineConfig::load(config)?;
    let Some(remote) = &cfg.remote else {
        bail!("{} has no [remote] section", config.display());
    };
    let Some(range) = cfg.date_range()? else {
        bail!("fetching needs `start` and `end`");
    };
    let source = HttpSource::new(remote.endpoint.clone());
    let panel = marketstates::par::with_jobs(jobs, || fetch_remote(&source, &remote.coins, range, &remote.cache_dir))?;
    write_csv(&panel, output)?;
    log::info!(
        "{} coins x {} days written to {}",
        panel.n_coins(),
        panel.n_dates(),
        output.display()
    );
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<()> {
    let specs = cyclic_block_regimes(args.coins, args.regimes, args.epochs, args.rho_in, args.rho_out)?;
    let mut opts = SynthOptions::new(args.coins, args.epoch_length, args.epochs, args.seed);
    if let Some(dof) = args.student_t {
        opts.innovations = Innovations::StudentT { dof };
    }
    let panel = generate_panel_with(&specs, &opts)?;
    let labels = planted_labels(&specs)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let (panel_path, labels_path) = pipeline::write_synthetic(&args.out, &panel, &labels)?;
    println!("{}", panel_path.display());
    println!("{}", labels_path.display());
    Ok(())
}

fn print_summary(s: &Summary) {
    let source = match s.eigengap_k {
        Some(g) if s.k_source == "override" => format!("override (eigengap suggests {g})"),
        _ => s.k_source.clone(),
    };
    println!("states: {} [{source}]", s.k);
    println!("epochs: {}", s.epochs.len());
    if let Some(ari) = s.ari {
        println!("ARI vs planted labels: {ari:.4}");
    }
    println!("{:>5} {:>6} {:>7} {:>10}", "state", "size", "medoid", "mean_corr");
    for st in &s.states {
        println!(
            "{:>5} {:>6} {:>7} {:>10.4}",
            st.state, st.size, st.medoid, st.mean_correlation
        );
    }
}
