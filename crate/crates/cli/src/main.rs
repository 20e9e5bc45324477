//! `cordmetrics`: spinal cord morphometrics, drift reports, and the CI
//! release gate.
//!
//! Exit codes: 0 success (and gate PASS), 1 operational error, 2 gate
//! FAIL. `gate` prints every violated bound to stderr, one per line.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cordmetrics::compute::run_morphometrics;
use cordmetrics::config::{RunConfig, Shard};
use cordmetrics::report::{build_report, emit_reports, gate_exit_code, write_compare_outputs};
use cordmetrics::split::{split_subjects, write_split};
use cordmetrics_core::manifest::read_manifest;
use cordmetrics_core::phantom::{make_cohort, CohortSpec, MorphOp, PhantomSpec};

#[derive(Parser)]
#[command(
    name = "cordmetrics",
    version,
    about = "Spinal cord morphometrics and model-drift gating"
)]
struct Cli {
    /// TOML run configuration (defaults apply when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "cordmetrics-out")]
    out: PathBuf,
    /// Seed for the deterministic generators (phantom, split).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Process only manifest rows with index = k (mod n), written `k/n`.
    #[arg(long, global = true)]
    shard: Option<Shard>,
    /// Embed wall-clock timestamps in outputs (off by default so reruns
    /// are byte-identical).
    #[arg(long, global = true)]
    stamp: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic phantom cohort with masks, level labels, and a
    /// manifest.
    Phantom(PhantomArgs),
    /// Subject-wise train/test split of a manifest.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        /// Fraction of subjects placed in TEST.
        #[arg(long, default_value_t = 0.2)]
        ratio: f64,
    },
    /// Run the morphometric analysis over a manifest and append records to
    /// the drift store.
    Compute {
        #[arg(long)]
        manifest: PathBuf,
        /// Drift store directory (one per shard; merge stores by
        /// concatenating their record files).
        #[arg(long)]
        store: PathBuf,
    },
    /// Compare two model versions and write the drift report (JSON + CSV).
    Compare {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        base: String,
        #[arg(long)]
        candidate: String,
    },
    /// Compare, then emit the full bundle: report, scaling factors, SVG
    /// plots, and the release-asset directory.
    Report {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        base: String,
        #[arg(long)]
        candidate: String,
    },
    /// Exit 0/2 according to the gate verdict embedded in a report.
    Gate {
        #[arg(long)]
        report: PathBuf,
    },
}

#[derive(Args)]
struct PhantomArgs {
    #[arg(long, default_value_t = 5)]
    subjects: usize,
    /// Comma-separated contrast names.
    #[arg(long)]
    contrasts: Option<String>,
    #[arg(long, default_value = "v1.0")]
    version: String,
    /// Boundary jitter probability per surface voxel, in [0, 1].
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    /// Version-simulation morphology, e.g. `dilate:1` or `erode:1`.
    #[arg(long)]
    perturb: Option<String>,
    #[arg(long, default_value_t = 4.0)]
    ap_semi_axis: f64,
    #[arg(long, default_value_t = 3.0)]
    rl_semi_axis: f64,
    #[arg(long, default_value_t = 40.0)]
    length: f64,
    /// In-plane and through-plane voxel size, `dx,dy,dz` in mm.
    #[arg(long, default_value = "0.5,0.5,2.0")]
    voxel_dims: String,
    /// Relative half-range of the per-subject size factor.
    #[arg(long, default_value_t = 0.08)]
    size_spread: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let config = RunConfig::load(cli.config.as_deref())?;
    let shard = cli.shard.unwrap_or_default();

    match cli.command {
        Command::Phantom(args) => {
            let spec = phantom_spec(&args, &config, cli.seed)?;
            let out = make_cohort(&cli.out, &spec)?;
            println!(
                "wrote {} masks and {} under {}",
                out.rows.len(),
                out.manifest_path.file_name().unwrap().to_string_lossy(),
                cli.out.display()
            );
            Ok(0)
        }
        Command::Split { manifest, ratio } => {
            let manifest = read_manifest(&manifest)?;
            let split = split_subjects(&manifest.subjects(), ratio, cli.seed)?;
            write_split(&cli.out, &split)?;
            println!(
                "split {} subjects: {} TRAIN / {} TEST (seed {})",
                split.assignments.len(),
                split.count(cordmetrics::split::Partition::Train),
                split.count(cordmetrics::split::Partition::Test),
                cli.seed
            );
            Ok(0)
        }
        Command::Compute { manifest, store } => {
            let manifest = read_manifest(&manifest)?;
            let summary =
                run_morphometrics(&manifest, &config, shard, &store, &cli.out, cli.stamp)?;
            println!(
                "shard {}: processed {} rows, {} failed, appended {} records",
                summary.shard, summary.processed, summary.failed, summary.records_appended
            );
            Ok(0)
        }
        Command::Compare {
            store,
            base,
            candidate,
        } => {
            let (report, _) = build_report(&store, &base, &candidate, &config, cli.stamp)?;
            let (json, _) = write_compare_outputs(&report, &cli.out)?;
            println!("wrote {}", json.display());
            Ok(0)
        }
        Command::Report {
            store,
            base,
            candidate,
        } => {
            let bundle = emit_reports(&store, &base, &candidate, &config, &cli.out, cli.stamp)?;
            println!("release assets under {}", bundle.bundle_dir.display());
            Ok(0)
        }
        Command::Gate { report } => Ok(gate_exit_code(&report)?),
    }
}

fn phantom_spec(args: &PhantomArgs, config: &RunConfig, seed: u64) -> anyhow::Result<CohortSpec> {
    let dims: Vec<f64> = args
        .voxel_dims
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| anyhow::anyhow!("bad --voxel-dims '{}': {e}", args.voxel_dims))?;
    if dims.len() != 3 {
        anyhow::bail!("--voxel-dims needs three comma-separated values");
    }
    let contrasts: Vec<String> = match &args.contrasts {
        Some(list) => list.split(',').map(|c| c.trim().to_string()).collect(),
        None => config.contrasts.clone(),
    };
    let perturb = match &args.perturb {
        None => None,
        Some(text) => {
            let (op, layers) = text
                .split_once(':')
                .ok_or_else(|| anyhow::anyhow!("--perturb must be op:layers, e.g. dilate:1"))?;
            let op: MorphOp = op.parse().map_err(|e: String| anyhow::anyhow!(e))?;
            Some((op, layers.parse::<usize>()?))
        }
    };
    Ok(CohortSpec {
        n_subjects: args.subjects,
        contrasts,
        version_id: args.version.clone(),
        jitter: args.jitter,
        seed,
        base: PhantomSpec::elliptic(
            args.ap_semi_axis,
            args.rl_semi_axis,
            args.length,
            [dims[0], dims[1], dims[2]],
        ),
        subject_size_spread: args.size_spread,
        perturb,
    })
}
