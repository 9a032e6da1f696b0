//! Command-line front end for `hsi-manifold`.

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use hsi_manifold::synthetic::SceneSpec;
use hsi_manifold::ErrorKind;

pub mod config;
pub mod render;
pub mod run;

use config::{parse_scopes, parse_usizes, Overrides};

/// Bad command-line or configuration input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "hsi-manifold",
    version,
    about = "Manifold-based HSI classification and clutter detection"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the trial ensemble on a dataset.
    Run(RunArgs),
    /// Score a label grid against a reference mask.
    Evaluate {
        pred: PathBuf,
        truth: PathBuf,
        /// Reference pixels to exclude (`pixel,label` lines).
        #[arg(long)]
        refs: Option<PathBuf>,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert text dumps into a cube and a label mask.
    Convert {
        /// One pixel spectrum per line, row-major.
        #[arg(long)]
        spectra: Option<PathBuf>,
        #[arg(long)]
        height: Option<usize>,
        #[arg(long)]
        width: Option<usize>,
        /// Band ids, e.g. `1-200`.
        #[arg(long)]
        band_ids: Option<String>,
        #[arg(long)]
        cube_out: Option<PathBuf>,
        /// Integer label grid, one image row per line.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        mask_out: Option<PathBuf>,
    },
    /// Re-render the images of a finished run.
    Render {
        run_dir: PathBuf,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a generated field scene plus a profile for it.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "scene")]
        name: String,
        #[arg(long, default_value_t = 32)]
        height: usize,
        #[arg(long, default_value_t = 32)]
        width: usize,
        #[arg(long, default_value_t = 24)]
        bands: usize,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 0.04)]
        noise: f64,
        #[arg(long, default_value_t = 11)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment file with `key = value` lines; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Profile name or path to a `.profile` file.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub density: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Spatial search window side (odd).
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub grid_scopes: Option<String>,
    #[arg(long)]
    pub grid_p: Option<String>,
    #[arg(long)]
    pub grid_k: Option<String>,
    #[arg(long)]
    pub grid_d: Option<String>,
    /// Use the 9-trial raw-spectrum grid.
    #[arg(long)]
    pub ablation: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Reuse finished trial maps in the output directory.
    #[arg(long)]
    pub resume: bool,
}

impl RunArgs {
    pub fn overrides(&self) -> Result<Overrides> {
        let file = match &self.config {
            Some(p) => Overrides::from_file(p)?,
            None => Overrides::default(),
        };
        let flags = Overrides {
            dataset: self.dataset.clone(),
            density: self.density,
            seed: self.seed,
            tau: self.tau,
            window: self.window,
            out: self.out.clone(),
            threads: self.threads,
            resume: self.resume.then_some(true),
            ablation: self.ablation.then_some(true),
            scopes: self.grid_scopes.as_deref().map(parse_scopes).transpose()?,
            box_sizes: self.grid_p.as_deref().map(parse_usizes).transpose()?,
            neighbors: self.grid_k.as_deref().map(parse_usizes).transpose()?,
            dims: self.grid_d.as_deref().map(parse_usizes).transpose()?,
        };
        Ok(file.layer(flags))
    }
}

/// Exit status for an error: usage 1, data 2, numerical 3.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<hsi_manifold::Error>() {
            return match e.kind() {
                ErrorKind::Usage => EXIT_USAGE,
                ErrorKind::Data => EXIT_DATA,
                ErrorKind::Numerical => EXIT_NUMERICAL,
            };
        }
    }
    EXIT_DATA
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let config = args.overrides()?.into_config()?;
            let outcome = run::cmd_run(&config)?;
            println!("{}", outcome.out.join(run::REPORT_FILE).display());
        }
        Command::Evaluate { pred, truth, refs, out } => {
            run::cmd_evaluate(&pred, &truth, refs.as_deref(), out.as_deref())?;
        }
        Command::Convert {
            spectra,
            height,
            width,
            band_ids,
            cube_out,
            mask,
            mask_out,
        } => {
            let band_ids = band_ids
                .as_deref()
                .map(|s| hsi_manifold::datacube::parse_id_list(s).map_err(|e| UsageError(format!("--band-ids: {e}"))))
                .transpose()?;
            run::cmd_convert(&run::ConvertArgs {
                spectra: spectra.as_deref(),
                height,
                width,
                band_ids,
                cube_out: cube_out.as_deref(),
                mask: mask.as_deref(),
                mask_out: mask_out.as_deref(),
            })?;
        }
        Command::Render { run_dir, tau, out } => run::cmd_render(&run_dir, tau, out.as_deref())?,
        Command::Synth {
            out,
            name,
            height,
            width,
            bands,
            classes,
            noise,
            seed,
        } => {
            let spec = SceneSpec {
                height,
                width,
                bands,
                classes,
                noise,
                seed,
            };
            let profile = run::cmd_synth(&spec, &out, &name)?;
            println!("{}", profile.display());
        }
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
