use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cvfusion::harness::config::{ImageFormat, PoolPolicy, SceneConfig, SelectionStrategy};
use cvfusion::harness::{self, Ablation};
use cvfusion::renderer::CombinedTransmittance;
use cvfusion::{Error, FusionMode, MaskMode};
use log::info;

/// Environment variable overriding the worker thread count.
const THREADS_ENV: &str = "CVFUSION_THREADS";

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "cvfusion", version, about = "Visibility-weighted cost-volume fusion on synthetic scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render every novel view, score it against ground truth and write images + CSV.
    Render {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
    },
    /// Run an ablation: k-sweep, selection, fusion, mask-mode or sparse-views.
    Ablate {
        #[command(flatten)]
        common: Common,
        which: Ablation,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
    },
    /// Export the selection masks of every candidate volume as PGM.
    Masks {
        #[command(flatten)]
        common: Common,
        /// Novel view to export; all views when omitted.
        #[arg(long)]
        view: Option<usize>,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
    },
    /// Validate a config and print it with every default filled in.
    ConfigCheck {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Scene configuration (TOML).
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

/// Command-line values replacing those of the config file.
#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    /// Quadrature points per ray (J).
    #[arg(short = 'J', long)]
    samples: Option<usize>,
    /// Selected cost volumes per view (K).
    #[arg(short = 'K', long)]
    support: Option<usize>,
    /// Member views per cost volume (I).
    #[arg(short = 'I', long)]
    members: Option<usize>,
    /// Nearest input views per novel view (N).
    #[arg(short = 'N', long)]
    nearest: Option<usize>,
    #[arg(long)]
    fusion_mode: Option<FusionMode>,
    #[arg(long)]
    mask_mode: Option<MaskMode>,
    #[arg(long)]
    mask_downsample: Option<u32>,
    #[arg(long)]
    selection: Option<SelectionStrategy>,
    #[arg(long)]
    transmittance: Option<CombinedTransmittance>,
    #[arg(long)]
    policy: Option<PoolPolicy>,
    /// Grid resolution as `N` or `NUxNVxND`.
    #[arg(long, value_parser = parse_resolution)]
    resolution: Option<[usize; 3]>,
    #[arg(long)]
    quorum: Option<usize>,
    /// Disable the member-quorum corruption of cost volumes.
    #[arg(long)]
    no_corruption: bool,
    #[arg(long)]
    image_format: Option<ImageFormat>,
}

fn parse_resolution(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split('x')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [n] => Ok([n; 3]),
        [u, v, d] => Ok([u, v, d]),
        _ => Err(format!("expected N or NUxNVxND, got `{s}`")),
    }
}

impl Overrides {
    fn apply(&self, c: &mut SceneConfig) {
        let v = &mut c.volumes;
        let r = &mut c.render;
        macro_rules! set {
            ($($src:ident => $dst:expr),+ $(,)?) => {
                $(if let Some(x) = self.$src { $dst = x; })+
            };
        }
        set! {
            seed => c.seed,
            samples => r.samples,
            support => r.support,
            fusion_mode => r.fusion_mode,
            mask_mode => r.mask_mode,
            mask_downsample => r.mask_downsample,
            selection => r.selection,
            transmittance => r.transmittance,
            image_format => r.image_format,
            nearest => v.nearest,
            policy => v.policy,
            resolution => v.resolution,
            quorum => v.quorum,
        }
        if let Some(i) = self.members {
            // The quorum follows the member count unless set explicitly.
            if self.quorum.is_none() && v.quorum == v.members {
                v.quorum = i;
            }
            v.members = i;
        }
        if self.no_corruption {
            v.corruption = false;
        }
    }
}

impl Common {
    fn load(&self) -> Result<SceneConfig, Error> {
        let mut config = harness::parse_scene_config(&self.config)?;
        self.overrides.apply(&mut config);
        config.validate()?;
        Ok(config)
    }
}

fn configure_threads() -> Result<(), Error> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("{THREADS_ENV} must be a thread count, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::InvalidArgument(format!("cannot configure {threads} threads: {e}")))?;
    info!("using {threads} worker threads");
    Ok(())
}

fn create_dir(dir: &PathBuf) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.clone(),
        source,
    })
}

fn run(cli: Cli) -> Result<(), Error> {
    configure_threads()?;
    match cli.command {
        Command::Render { common, out } => {
            let config = common.load()?;
            let output = harness::run_render(&config, config.render.fusion_mode)?;
            output.write(&out)?;
            for row in &output.result.rows {
                println!(
                    "view {:>3}  {:<18} K={}  PSNR {:6.2} dB  SSIM {:.4}  valid {:.3}",
                    row.view, row.mode, row.k, row.psnr, row.ssim, row.valid_fraction
                );
            }
            info!("wrote {}", out.display());
        }
        Command::Ablate { common, which, out } => {
            let config = common.load()?;
            let result = harness::run_ablation(&config, which)?;
            create_dir(&out)?;
            result.write_csv(out.join(format!("{which}.csv")))?;
            harness::experiment::write_config_echo(&config, &out)?;
            print!("{}", result.to_csv_string()?);
        }
        Command::Masks { common, view, out } => {
            let config = common.load()?;
            create_dir(&out)?;
            let views = match view {
                Some(v) => vec![v],
                None => (0..config.novel_views.len()).collect(),
            };
            for v in views {
                let masks = harness::candidate_masks(&config, v, config.render.mask_mode)?;
                for (c, mask) in masks.iter().enumerate() {
                    let path = out.join(format!("mask_v{v:03}_c{c:03}.pgm"));
                    harness::write_mask(mask, &path)?;
                    println!("{}  coverage {:.4}", path.display(), mask.sum() / mask.values().len() as f64);
                }
            }
        }
        Command::ConfigCheck { common } => {
            let config = common.load()?;
            print!("{}", config.to_toml()?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_RUNTIME })
        }
    }
}
