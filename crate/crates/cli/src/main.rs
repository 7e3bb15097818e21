use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::LazyLock;

use clap::{Args, Parser, Subcommand};
use hpmvs::hpm::Variant;
use hpmvs::synth::{render, SynthSpec, Template};
use hpmvs::{MvsError, Result};
use hpmvs_cli::{
    ablate, eval_files, format_ablation, format_metrics, metrics_key_values, parse_rows, parse_thresholds,
    reconstruct, with_workers, GroundTruthScene, RunConfig,
};

/// Environment variable holding the default worker count.
const WORKERS_ENV: &str = "HPMVS_WORKERS";

static DEFAULTS: LazyLock<String> = LazyLock::new(|| {
    let mut s = String::from("Configuration keys and defaults (set with --set key=value):\n");
    for line in RunConfig::default().dump().lines() {
        s.push_str("  ");
        s.push_str(line);
        s.push('\n');
    }
    s.push_str(&format!("\nThe worker count defaults to ${WORKERS_ENV} when set."));
    s
});

#[derive(Parser)]
#[command(name = "hpmvs", version, about = "Multi-view stereo with hierarchical planar priors")]
#[command(after_help = DEFAULTS.as_str())]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Configuration file in key=value form.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Prior schedule: `full` runs every scale, `fast` only the coarsest.
    #[arg(long)]
    variant: Option<String>,
}

impl Overrides {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Ok(w) = std::env::var(WORKERS_ENV) {
            cfg.set("workers", &w)?;
        }
        for s in &self.set {
            cfg.apply(s)?;
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(s) = self.seed {
            cfg.propagation.seed = s;
        }
        if let Some(v) = &self.variant {
            let full = Variant::parse(v)? == Variant::Full;
            cfg.hpm_full = full;
            cfg.hpm_fast = !full;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Estimate per-view depth maps and fuse them into a point cloud.
    #[command(after_help = DEFAULTS.as_str())]
    Reconstruct {
        /// Scene directory with images/ and cams/.
        scene: PathBuf,
        #[arg(short, long, default_value = "out")]
        output: PathBuf,
        /// Write the fused cloud as ASCII PLY.
        #[arg(long)]
        ascii: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Render a synthetic scene with ground truth.
    Synth {
        /// textured-plane, two-plane-lowtex or box-room.
        #[arg(long, default_value = "textured-plane")]
        template: String,
        #[arg(long, default_value_t = 3)]
        views: usize,
        #[arg(long, default_value_t = 640)]
        width: usize,
        #[arg(long, default_value_t = 480)]
        height: usize,
        /// Gaussian noise sigma in gray levels.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0.35)]
        contrast: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Accuracy, completeness and F1 of a cloud against ground truth.
    Eval {
        reconstruction: PathBuf,
        ground_truth: PathBuf,
        /// Comma-separated distance thresholds.
        #[arg(long, default_value = "0.01,0.02")]
        thresholds: String,
        /// Also write the metrics as key=value lines.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run ablation rows on a scene with ground-truth depth.
    #[command(after_help = DEFAULTS.as_str())]
    Ablate {
        scene: PathBuf,
        /// Comma-separated rows: baseline, nsp, esp, nesp, nesp+pa, hpm-fast, hpm, hpm-mvs-fast, hpm-mvs.
        #[arg(long, default_value = "nesp,nesp+pa,hpm-mvs-fast,hpm-mvs")]
        rows: String,
        /// Comma-separated relative depth thresholds.
        #[arg(long, default_value = "0.01,0.02")]
        thresholds: String,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Print the effective configuration.
    #[command(after_help = DEFAULTS.as_str())]
    DumpConfig {
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Reconstruct {
            scene,
            output,
            ascii,
            overrides,
        } => {
            let mut cfg = overrides.resolve()?;
            cfg.input = scene;
            cfg.output = output;
            cfg.ascii_ply |= ascii;
            let art = with_workers(cfg.workers, || reconstruct(&cfg))??;
            println!("{} views, {} fused points -> {}", art.depth_maps.len(), art.points, art.cloud.display());
        }
        Command::Synth {
            template,
            views,
            width,
            height,
            noise,
            contrast,
            seed,
            output,
        } => {
            let spec = SynthSpec {
                template: Template::parse(&template)?,
                views,
                width,
                height,
                noise,
                contrast,
                seed,
            };
            render(&spec)?.write(&output)?;
            println!("{} views of {template} -> {}", views, output.display());
        }
        Command::Eval {
            reconstruction,
            ground_truth,
            thresholds,
            output,
        } => {
            let metrics = eval_files(&reconstruction, &ground_truth, &parse_thresholds(&thresholds)?)?;
            print!("{}", format_metrics(&metrics));
            if let Some(p) = output {
                std::fs::write(&p, metrics_key_values(&metrics)).map_err(|e| MvsError::Io { path: p, source: e })?;
            }
        }
        Command::Ablate {
            scene,
            rows,
            thresholds,
            overrides,
        } => {
            let cfg = overrides.resolve()?;
            let rows = parse_rows(&rows)?;
            let ts = parse_thresholds(&thresholds)?;
            let data = GroundTruthScene::load(&scene)?;
            let results = with_workers(cfg.workers, || ablate(&data, &rows, &cfg, &ts))??;
            print!("{}", format_ablation(&results));
        }
        Command::DumpConfig { overrides } => print!("{}", overrides.resolve()?.dump()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.category());
            ExitCode::from(match e.category() {
                "usage" => 2,
                "io" => 3,
                "format" => 4,
                "insufficient-views" => 5,
                "empty-cloud" => 6,
                _ => 1,
            })
        }
    }
}
