use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use zeno_campaign::config::FULL_TRAJECTORIES;
use zeno_campaign::{plot_emit, run_campaign, with_workers, CampaignConfig, CampaignError, Figure};
use zeno_drag::tomography::ThresholdWindow;

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
enum WindowArg {
    /// Whole dragging interval.
    Full,
    /// Final microsecond.
    Tail,
}

impl From<WindowArg> for ThresholdWindow {
    fn from(w: WindowArg) -> Self {
        match w {
            WindowArg::Full => ThresholdWindow::Full,
            WindowArg::Tail => ThresholdWindow::Tail,
        }
    }
}

/// Seeded Zeno dragging campaigns and figure emission.
///
/// Without --figure, runs the campaign described by --config (the reference
/// sweep if omitted) into --out and renders every figure. With --figure,
/// renders that figure from an existing output directory.
#[derive(Parser, Debug)]
#[command(name = "zdrg", version)]
struct Args {
    /// Campaign TOML document.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "zdrg-out")]
    out: PathBuf,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; falls back to ZDRG_WORKERS, then all cores.
    #[arg(long, env = "ZDRG_WORKERS")]
    workers: Option<usize>,
    /// Use the full experimental trajectory count per sweep point.
    #[arg(long)]
    paper_scale: bool,
    /// Render one figure from existing data instead of running.
    #[arg(long, value_enum)]
    figure: Option<Figure>,
    /// Integration window of the post-selection voltage.
    #[arg(long, value_enum)]
    threshold_window: Option<WindowArg>,
}

fn run(args: Args) -> Result<(), CampaignError> {
    if let Some(fig) = args.figure {
        for f in plot_emit(&args.out, fig)? {
            println!("{}", args.out.join(f).display());
        }
        return Ok(());
    }
    let mut config = match &args.config {
        Some(p) => CampaignConfig::load(p).map_err(|e| match e {
            CampaignError::Io { .. } => e,
            other => CampaignError::Config(format!("{}: {other}", p.display())),
        })?,
        None => CampaignConfig::default(),
    };
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if args.paper_scale {
        config.trajectories_per_point = FULL_TRAJECTORIES;
    }
    if let Some(w) = args.threshold_window {
        config.threshold_window = w.into();
    }
    config.validate()?;
    let manifest = with_workers(args.workers, || run_campaign(&config, &args.out))??;
    for fig in Figure::ALL {
        plot_emit(&args.out, fig)?;
    }
    eprintln!(
        "wrote {} files for {} sweep points to {}",
        manifest.entries.len(),
        config.velocities_khz.len(),
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("zdrg: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
