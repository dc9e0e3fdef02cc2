use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use posedistrib_cli::{bundle, exit_code, load, losses_on_views, read_json, run, sweep, Overrides, SweepAxis};
use posedistrib_core::obsgen::ScenarioConfig;
use posedistrib_core::scenarios::{BundledObject, DEFAULT_MODEL_POINTS};
use posedistrib_core::symmodel::{build_symmodel, SymModel, SymmetrySpec, TriMesh, DEFAULT_DESCRIPTOR_DIM};
use posedistrib_core::Error;

#[derive(Parser)]
#[command(name = "posedistrib", version, about = "Pose distributions for symmetric and occluded objects")]
struct Cli {
    /// Worker threads for the parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Object {
    MarkedCube,
    HexPrism,
    Cylinder,
    MarkedPrism,
}

impl From<Object> for BundledObject {
    fn from(o: Object) -> Self {
        match o {
            Object::MarkedCube => BundledObject::MarkedCube,
            Object::HexPrism => BundledObject::HexPrism,
            Object::Cylinder => BundledObject::Cylinder,
            Object::MarkedPrism => BundledObject::MarkedPrism,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample a symmetry-aware model from a mesh.
    BuildModel {
        #[arg(long, conflicts_with_all = ["mesh", "symmetry"], required_unless_present = "mesh")]
        object: Option<Object>,
        /// ASCII PLY mesh in metres.
        #[arg(long, requires = "symmetry")]
        mesh: Option<PathBuf>,
        /// Symmetry JSON file.
        #[arg(long)]
        symmetry: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MODEL_POINTS)]
        max_points: usize,
        #[arg(long, default_value_t = DEFAULT_DESCRIPTOR_DIM)]
        descriptor_dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write mesh, symmetry, model, scenario and manifest for a bundled object.
    Bundle {
        #[arg(long)]
        object: Object,
        /// Occlude the cap and marker (marked prism only).
        #[arg(long)]
        occluded: bool,
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MODEL_POINTS)]
        max_points: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Estimate the pose distribution and write all artifacts.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, env = "POSEDISTRIB_OUT_DIR")]
        out_dir: Option<PathBuf>,
        /// Also write one plot per pipeline stage.
        #[arg(long)]
        dump_stages: bool,
    },
    /// Re-run with one parameter varied and write a CSV of precision and recall.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the descriptor and frame losses on random views.
    Losses {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 20)]
        renders: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write the ground-truth pose set of a manifest.
    GtSet {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    grid_level: Option<u32>,
    #[arg(long)]
    tau_desc: Option<f64>,
    #[arg(long)]
    tau_dens: Option<usize>,
    #[arg(long)]
    tau_score: Option<f64>,
    #[arg(long)]
    noise_desc: Option<f64>,
    #[arg(long)]
    noise_frame: Option<f64>,
    #[arg(long)]
    noise_mask: Option<u32>,
    #[arg(long)]
    outlier_rate: Option<f64>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            grid_level: self.grid_level,
            tau_desc: self.tau_desc,
            tau_dens: self.tau_dens,
            tau_score: self.tau_score,
            noise_desc_rad: self.noise_desc,
            noise_frame_rad: self.noise_frame,
            noise_mask_px: self.noise_mask,
            outlier_rate: self.outlier_rate,
        }
    }
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring thread pool")?;
    }
    match cli.command {
        Command::BuildModel { object, mesh, symmetry, max_points, descriptor_dim, seed, out } => {
            let (mesh, sym) = match (object, mesh, symmetry) {
                (Some(o), _, _) => {
                    let o = BundledObject::from(o);
                    (o.mesh()?, o.symmetry())
                }
                (None, Some(m), Some(s)) => {
                    let f = std::fs::File::open(&m).with_context(|| format!("opening {}", m.display()))?;
                    (TriMesh::from_ply(std::io::BufReader::new(f))?, read_json::<SymmetrySpec>(&s)?)
                }
                _ => return Err(Error::InvalidArgument("pass --object or --mesh with --symmetry".into()).into()),
            };
            let model: SymModel = build_symmodel(mesh, sym, max_points, descriptor_dim, seed)?;
            model.save(&out)?;
            println!("{} points written to {}", model.len(), out.display());
        }
        Command::Bundle { object, occluded, dir, max_points, seed } => {
            let path = bundle(object.into(), occluded, &dir, max_points, seed)?;
            println!("{}", path.display());
        }
        Command::Run { common, out_dir, dump_stages } => {
            let loaded = load(&common.manifest, &common.overrides())?;
            let outputs = run(&loaded, dump_stages)?;
            let dir = loaded.output_dir(out_dir.as_deref());
            outputs.write(&dir)?;
            println!(
                "{} poses, P/R mpd {:.3}/{:.3}, msd {:.3}/{:.3} -> {}",
                outputs.poses,
                outputs.report.precision_mpd,
                outputs.report.recall_mpd,
                outputs.report.precision_msd,
                outputs.report.recall_msd,
                dir.display()
            );
            if let Some(d) = outputs.no_pose {
                return Err(Error::NoPoseFound(d).into());
            }
        }
        Command::Sweep { common, axis, values, out } => {
            let loaded = load(&common.manifest, &common.overrides())?;
            let (_, csv) = sweep(&loaded, axis, &values)?;
            write_or_print(out.as_deref(), &csv)?;
        }
        Command::Losses { model, scenario, renders, seed } => {
            let bytes = std::fs::read(&model).with_context(|| format!("reading {}", model.display()))?;
            let model = SymModel::from_bytes(&bytes)?;
            let scenario: ScenarioConfig = read_json(&scenario)?;
            scenario.validate()?;
            let l = losses_on_views(&model, &scenario, renders, seed)?;
            println!("{}", serde_json::to_string_pretty(&l)?);
        }
        Command::GtSet { common, out } => {
            let loaded = load(&common.manifest, &common.overrides())?;
            let gt = loaded.gt_set()?;
            let doc = serde_json::json!({ "manifest_sha256": loaded.hash, "gt_set": gt.to_doc() });
            write_or_print(out.as_deref(), &format!("{}\n", serde_json::to_string_pretty(&doc)?))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
