use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use skill_transfer::fmap::FunctionKind;
use skill_transfer::pipeline::{
    self, load_bundle, load_scene, match_operation, persist_bundle, prepare_shape, read_function_csv, record_bundle, run_invariants,
    synthetic, transfer_operation, write_function_csv, DemonstrationBundle, MatchOutcome, NewScene, PipelineConfig, PipelineError,
    PreparedShape, RecordManifest,
};

#[derive(Parser)]
#[command(name = "skillxfer", version, about = "Record manipulation skills and reproduce them on new objects")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a demonstration bundle from a recording manifest.
    Record {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the interaction functions as CSV next to the bundle.
        #[arg(long)]
        csv: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Select the matching scene object and write the refined map.
    Match {
        #[command(flatten)]
        io: SceneArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Transfer the interaction functions onto the matched scene object.
    Transfer {
        #[command(flatten)]
        io: SceneArgs,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Produce an executable trajectory for the new scene.
    Imitate {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Selection, grasp and timing report.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Compare transferred functions with annotated ground truth.
    Eval {
        #[command(flatten)]
        io: SceneArgs,
        /// `kind=path.csv`, e.g. `rif=truth/rif.csv`.
        #[arg(long, required = true, num_args = 1..)]
        truth: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the randomized invariant checks.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        cases: usize,
    },
    /// Write a small synthetic dataset (demonstration, new scene, ground truth).
    Example {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SceneArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    scene: PathBuf,
    /// Operation index.
    #[arg(long, default_value_t = 0)]
    op: usize,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Default)]
struct Overrides {
    /// JSON configuration; missing keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    k_init: Option<usize>,
    #[arg(long)]
    k_final: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    theta_deg: Option<f64>,
}

impl Overrides {
    fn apply(&self, mut config: PipelineConfig) -> Result<PipelineConfig, PipelineError> {
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|e| PipelineError::input(path, e))?;
            config = serde_json::from_str(&text).map_err(|e| PipelineError::input(path, e))?;
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(k) = self.k_init {
            config.fmap.k_init = k;
        }
        if let Some(k) = self.k_final {
            config.fmap.k_final = k;
        }
        if let Some(d) = self.delta {
            config.delta = d;
        }
        if let Some(t) = self.theta_deg {
            config.theta = t.to_radians();
        }
        config.validate()?;
        Ok(config)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<ExitCode, PipelineError> {
    match command {
        Command::Record { manifest, out, csv, overrides } => {
            let (mut m, base) = RecordManifest::load(&manifest)?;
            m.config = overrides.apply(m.config)?;
            let bundle = record_bundle(&m, &base)?;
            persist_bundle(&bundle, &out)?;
            if csv {
                for (i, op) in bundle.operations.iter().enumerate() {
                    write_functions(&out.join(format!("op{i}")), &op.functions.iter().map(|f| (f.kind, f.values.as_slice())).collect::<Vec<_>>())?;
                }
            }
            println!("recorded {} operation(s) into {}", bundle.operations.len(), out.display());
        }
        Command::Match { io, out } => {
            let (bundle, scene, config) = io.load()?;
            let (_, shapes, outcome) = match_op(&bundle, &scene, io.op, &config)?;
            let selected = shapes[outcome.index].mesh.id().to_string();
            println!("selected {selected}");
            for (s, score) in shapes.iter().zip(&outcome.scores) {
                println!("  {:<16} {score:.4}", s.mesh.id());
            }
            if let Some(out) = out {
                let doc = json!({
                    "object": bundle.operations[io.op].object,
                    "selected": selected,
                    "selected_index": outcome.index,
                    "scores": outcome.scores,
                    "map": outcome.map,
                    "p2p": outcome.p2p,
                });
                write_json(&out, &doc)?;
            }
        }
        Command::Transfer { io, out_dir } => {
            let (bundle, scene, config) = io.load()?;
            let (sel, shapes, outcome) = match_op(&bundle, &scene, io.op, &config)?;
            let target = &shapes[outcome.index];
            let functions = transfer_operation(&bundle.operations[io.op], &outcome.map, &sel, target)?;
            write_functions(&out_dir, &functions.iter().map(|f| (f.kind, f.values.as_slice())).collect::<Vec<_>>())?;
            println!("transferred {} function(s) onto {}", functions.len(), target.mesh.id());
        }
        Command::Imitate { bundle, scene, out, report, overrides } => {
            let bundle = load_bundle(&bundle)?;
            let scene = load_scene(&scene)?;
            let config = overrides.apply(bundle.config)?;
            let result = pipeline::imitate(&bundle, &scene, &config)?;
            write_json(&out, &result.trajectory)?;
            if let Some(path) = report {
                write_json(&path, &result.report)?;
            }
            for op in &result.report.operations {
                println!("{} -> {}", op.object, op.selected);
            }
            println!("{} waypoints written to {}", result.trajectory.waypoints.len(), out.display());
        }
        Command::Eval { io, truth, out } => {
            let (bundle, scene, config) = io.load()?;
            let truth = truth.iter().map(|t| parse_truth(t)).collect::<Result<Vec<_>, _>>()?;
            let (report, _) = pipeline::evaluate(&bundle, &scene, io.op, &truth, &config)?;
            for f in &report.functions {
                println!("{:?}: mae {:.4} std {:.4}", f.kind, f.mae, f.std);
            }
            println!("total mae {:.4}, success {:?}", report.total_mae, report.success);
            if let Some(out) = out {
                write_json(&out, &report)?;
            }
        }
        Command::Verify { seed, cases } => {
            let checks = run_invariants(seed, cases);
            for c in &checks {
                println!("{} {:<36} worst {:.3e} (limit {:.1e})", if c.passed { "ok  " } else { "FAIL" }, c.name, c.worst, c.limit);
            }
            if checks.iter().any(|c| !c.passed) {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Example { out } => {
            let d = synthetic::write_dataset(&out)?;
            println!("manifest {}", d.manifest.display());
            println!("scene    {}", d.scene.display());
            println!("truth    {} {}", d.rif_truth.display(), d.eif_truth.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

impl SceneArgs {
    fn load(&self) -> Result<(DemonstrationBundle, NewScene, PipelineConfig), PipelineError> {
        let bundle = load_bundle(&self.bundle)?;
        let scene = load_scene(&self.scene)?;
        let config = self.overrides.apply(bundle.config)?;
        if self.op >= bundle.operations.len() {
            return Err(PipelineError::BundleInconsistent(format!("operation {} of {}", self.op, bundle.operations.len())));
        }
        Ok((bundle, scene, config))
    }
}

fn match_op(
    bundle: &DemonstrationBundle,
    scene: &NewScene,
    op: usize,
    config: &PipelineConfig,
) -> Result<(PreparedShape, Vec<PreparedShape>, MatchOutcome), PipelineError> {
    let id = &bundle.operations[op].object;
    let mesh = bundle.scene.object(id).ok_or_else(|| PipelineError::BundleInconsistent(format!("no object {id}")))?;
    let (sel, _, _) = prepare_shape(mesh, config)?;
    let shapes = scene.scene.objects.iter().map(|m| prepare_shape(m, config).map(|s| s.0)).collect::<Result<Vec<_>, _>>()?;
    let outcome = match_operation(&sel, &shapes, config, &mut Vec::new())?;
    Ok((sel, shapes, outcome))
}

fn parse_truth(arg: &str) -> Result<(FunctionKind, Vec<f64>), PipelineError> {
    let (kind, path) = arg.split_once('=').ok_or_else(|| PipelineError::input(arg, "expected kind=path"))?;
    let kind: FunctionKind = serde_json::from_value(json!(kind)).map_err(|e| PipelineError::input(arg, e))?;
    let file = File::open(path).map_err(|e| PipelineError::input(path, e))?;
    let values = read_function_csv(BufReader::new(file)).map_err(|e| PipelineError::input(path, e))?;
    Ok((kind, values))
}

fn write_json<T: serde::Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| PipelineError::input(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| PipelineError::input(path, e))
}

/// One CSV per function, `rif.csv`, `eif.csv`, `eif_1.csv`, ...
fn write_functions(dir: &Path, functions: &[(FunctionKind, &[f64])]) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(|e| PipelineError::input(dir, e))?;
    for (i, (kind, values)) in functions.iter().enumerate() {
        let n = functions[..i].iter().filter(|f| f.0 == *kind).count();
        let name = serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        let file = if n == 0 { format!("{name}.csv") } else { format!("{name}_{n}.csv") };
        let path = dir.join(file);
        let mut buf = Vec::new();
        write_function_csv(values, &mut buf).map_err(|e| PipelineError::input(&path, e))?;
        fs::write(&path, buf).map_err(|e| PipelineError::input(&path, e))?;
    }
    Ok(())
}
