use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use duet_cli::commands::{self, EvalArgs, SampleArgs};
use duet_cli::config::RunConfig;
use duet_cli::plots;

/// Two-person motion generation pipeline.
#[derive(Parser)]
#[command(name = "duet", version, about)]
struct Cli {
    /// TOML run configuration; built-in desk-scale defaults otherwise.
    #[arg(long, global = true)]
    config: Option<String>,

    /// Master seed override (also reseeds the training stages).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output root; defaults to $DUET_OUT_ROOT or ./runs.
    #[arg(long, global = true)]
    out_root: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic interaction dataset.
    Synth {
        /// Output dataset file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Clip count override.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Train the motion VAE on a dataset.
    TrainVae {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Train the latent denoiser against a frozen VAE checkpoint.
    TrainDenoiser {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        vae: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Sample motion clips from text.
    Sample {
        #[arg(long)]
        vae: PathBuf,
        #[arg(long)]
        denoiser: PathBuf,
        #[arg(long)]
        text: String,
        #[arg(long, default_value_t = 4)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        sample_seed: u64,
        /// Guidance strength; checkpoint default when absent.
        #[arg(long)]
        omega: Option<f64>,
        /// DDIM steps; checkpoint default when absent.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write a trajectory plot next to the output.
        #[arg(long)]
        plot: bool,
    },
    /// Evaluate generated clips against a reference set.
    Eval(EvalCommand),
    /// Plot a guidance-scale sweep from a directory of eval reports.
    Plot {
        /// Directory of *.json eval reports carrying an "omega" field.
        #[arg(long)]
        sweep_dir: Option<PathBuf>,
        /// Motion file for a trajectory plot.
        #[arg(long)]
        motions: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Latent channel-statistics diagnostic for a VAE checkpoint.
    LatentStats {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        vae: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct EvalCommand {
    #[arg(long)]
    generated: PathBuf,
    #[arg(long)]
    reference: PathBuf,
    /// Compute feature-space fidelity metrics.
    #[arg(long)]
    fidelity: bool,
    /// Compute penetration/contact metrics.
    #[arg(long)]
    physics: bool,
    /// Treat every generated sequence as contact-annotated.
    #[arg(long)]
    contact_all: bool,
    /// Guidance scale this batch was sampled with (recorded in the report).
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory of sweep reports: also emit a metric-vs-guidance plot.
    #[arg(long)]
    sweep_dir: Option<PathBuf>,
}

fn out_root(cli: &Cli) -> PathBuf {
    cli.out_root
        .clone()
        .or_else(|| std::env::var_os("DUET_OUT_ROOT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path).with_context(|| format!("loading config {path}"))?,
        None => RunConfig::default(),
    };
    Ok(cfg.with_seed(cli.seed))
}

fn sweep_plot(dir: &PathBuf, out: &PathBuf) -> anyhow::Result<()> {
    let mut reports = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let text = std::fs::read_to_string(&path)?;
        let report: commands::FullReport = match serde_json::from_str(&text) {
            Ok(r) => r,
            Err(_) => continue,
        };
        if let Some(omega) = report.omega {
            reports.push((omega, report));
        }
    }
    anyhow::ensure!(!reports.is_empty(), "no sweep reports with omega in {dir:?}");
    plots::plot_sweep(&reports, out)?;
    println!("sweep plot ({} points) -> {}", reports.len(), out.display());
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let root = out_root(&cli);
    let mut cfg = load_config(&cli)?;

    match &cli.command {
        Command::Synth { out, count } => {
            if let Some(c) = count {
                cfg.dataset.count = *c;
            }
            let out = out.clone().unwrap_or_else(|| root.join("dataset.duet"));
            let summary = commands::cmd_synth(&cfg, &out)?;
            println!(
                "wrote {} clips ({}) to {}; contact fraction {:.3}",
                summary.count,
                summary.layout_tag,
                summary.path.display(),
                summary.contact_fraction
            );
        }
        Command::TrainVae {
            dataset,
            out,
            epochs,
        } => {
            if let Some(e) = epochs {
                cfg.train_vae.epochs = *e;
            }
            let out = out.clone().unwrap_or_else(|| root.join("vae.duet"));
            let trained = commands::cmd_train_vae(&cfg, dataset, &out)?;
            let last = trained.history.last().expect("at least one epoch");
            println!(
                "vae checkpoint -> {} (final total {:.4})",
                out.display(),
                last.total
            );
        }
        Command::TrainDenoiser {
            dataset,
            vae,
            out,
            epochs,
        } => {
            if let Some(e) = epochs {
                cfg.train_denoiser.epochs = *e;
            }
            let out = out.clone().unwrap_or_else(|| root.join("denoiser.duet"));
            let trained = commands::cmd_train_denoiser(&cfg, dataset, vae, &out)?;
            let last = trained.history.last().expect("at least one epoch");
            println!(
                "denoiser checkpoint -> {} (final eps-loss {:.4}, s_l {:.4})",
                out.display(),
                last.loss,
                trained.token_scale.s_l
            );
        }
        Command::Sample {
            vae,
            denoiser,
            text,
            count,
            sample_seed,
            omega,
            steps,
            frames,
            out,
            plot,
        } => {
            let out = out.clone().unwrap_or_else(|| root.join("samples.duet"));
            let args = SampleArgs {
                text: text.clone(),
                count: *count,
                seed: *sample_seed,
                omega: *omega,
                steps: *steps,
                frames: frames.unwrap_or(cfg.dataset.frames_min),
            };
            let ds = commands::cmd_sample(&cfg, vae, denoiser, &args, &out)?;
            println!("wrote {} sampled clips to {}", ds.pairs.len(), out.display());
            if *plot {
                let plot_path = out.with_extension("svg");
                plots::plot_trajectories(&ds, 4, &plot_path)?;
                println!("trajectory plot -> {}", plot_path.display());
            }
        }
        Command::Eval(args) => {
            let out = args
                .out
                .clone()
                .unwrap_or_else(|| root.join("eval.json"));
            let report = commands::cmd_eval(
                &cfg,
                &args.generated,
                &args.reference,
                &EvalArgs {
                    fidelity: args.fidelity,
                    physics: args.physics,
                    contact_all: args.contact_all,
                    omega: args.omega,
                },
                &out,
            )?;
            if let Some(f) = &report.fidelity {
                println!(
                    "fid {:.4}  diversity {:.4}  mm-dist {:.4}  r@1/2/3 {:.3}/{:.3}/{:.3}",
                    f.fid,
                    f.diversity,
                    f.mm_dist,
                    f.r_precision[0],
                    f.r_precision[1],
                    f.r_precision[2]
                );
            }
            if let Some(p) = &report.physics {
                println!(
                    "pv {:.4}  pfr {:.3}  pdr {:.3}  contact {:?}",
                    p.pv, p.pfr, p.pdr, p.contact_ratio
                );
            }
            println!("report -> {}", out.display());
            if let Some(dir) = &args.sweep_dir {
                sweep_plot(dir, &out.with_extension("sweep.svg"))?;
            }
        }
        Command::Plot {
            sweep_dir,
            motions,
            out,
        } => {
            if let Some(dir) = sweep_dir {
                sweep_plot(dir, out)?;
            } else if let Some(motions) = motions {
                let ds = duet_core::dataset::load_dataset(motions)?;
                plots::plot_trajectories(&ds, 4, out)?;
                println!("trajectory plot -> {}", out.display());
            } else {
                anyhow::bail!("plot needs --sweep-dir or --motions");
            }
        }
        Command::LatentStats { dataset, vae, out } => {
            let out = out
                .clone()
                .unwrap_or_else(|| root.join("latent_stats.json"));
            let stats = commands::cmd_latent_stats(dataset, vae, &out)?;
            println!(
                "mean channel variance (o/a/b): {:.4}/{:.4}/{:.4}; kl-to-prior {:.3}/{:.3}/{:.3} -> {}",
                stats.mean_channel_variance[0],
                stats.mean_channel_variance[1],
                stats.mean_channel_variance[2],
                stats.kl_to_prior[0],
                stats.kl_to_prior[1],
                stats.kl_to_prior[2],
                out.display()
            );
        }
    }
    Ok(())
}
