use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tasnsc::benchmark::{compare, Scene};
use tasnsc::metrics::{evaluate, format_table, write_plot_csv, write_rows_csv, EvalOptions, TableRow};
use tasnsc::synthgen::{generate, SceneSpec};
use tasnsc::trajectory::{read_jsonl, write_jsonl};
use tasnsc::{predict, train, CurbsideFrame, Dataset, Mode, PipelineConfig, Split, TasnscModel};

#[derive(Parser)]
#[command(name = "tasnsc", version, about = "Pedestrian trajectory prediction at street corners")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a scene description.
    Generate(GenerateArgs),
    /// Learn motion primitives and flow fields from a dataset.
    Train(TrainArgs),
    /// Predict the continuation of observed trajectories.
    Predict(PredictArgs),
    /// Score a model on a test dataset.
    Evaluate(EvaluateArgs),
    /// Train and evaluate both modes on two intersections.
    Compare(CompareArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the scene's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 0.5)]
    dt: f64,
    /// Also write the scene's curbside frame here.
    #[arg(long)]
    frame_out: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    /// JSON pipeline config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    frame: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Observed trajectories (JSONL).
    #[arg(long)]
    data: PathBuf,
    /// Curbside frame of the intersection the observations come from.
    #[arg(long)]
    frame: PathBuf,
    /// Output: one JSON prediction set per line.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    frame: PathBuf,
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    threshold: Option<f64>,
    /// Average MHD over candidates, weighted by likelihood.
    #[arg(long)]
    weighted_mhd: bool,
    #[arg(long)]
    emit_plots: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    train_a: PathBuf,
    #[arg(long)]
    test_a: PathBuf,
    #[arg(long)]
    train_b: PathBuf,
    #[arg(long)]
    test_b: PathBuf,
    /// Frame files for intersections A and B.
    #[arg(long, num_args = 2, value_names = ["FRAME_A", "FRAME_B"])]
    frames: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    weighted_mhd: bool,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

/// Failure classes, reported through the exit code.
enum Failure {
    /// Bad flags, unreadable or malformed inputs: exit 2.
    Config(String),
    /// The pipeline itself failed: exit 3.
    Runtime(String),
}

type CliResult<T> = Result<T, Failure>;

fn config_err<'a>(what: &str, path: &'a Path) -> impl FnOnce(tasnsc::Error) -> Failure + 'a {
    let what = what.to_string();
    move |e| Failure::Config(format!("{what} {}: {e}", path.display()))
}

fn runtime<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Runtime(e.to_string())
}

fn io_runtime(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Runtime(format!("writing {}: {e}", path.display()))
}

fn load_frame(path: &Path) -> CliResult<CurbsideFrame> {
    let file = fs::File::open(path).map_err(|e| config_err("frame", path)(e.into()))?;
    serde_json::from_reader(file).map_err(|e| config_err("frame", path)(e.into()))
}

fn load_dataset(path: &Path, frame: CurbsideFrame, split: Split) -> CliResult<Dataset> {
    let trajectories = read_jsonl(path).map_err(config_err("dataset", path))?;
    Dataset::new(frame, trajectories, split).map_err(config_err("dataset", path))
}

fn pipeline_config(args: &PipelineArgs) -> CliResult<PipelineConfig> {
    let mut cfg = match &args.config {
        Some(path) => PipelineConfig::load(path).map_err(config_err("config", path))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn checked(cfg: PipelineConfig) -> CliResult<PipelineConfig> {
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(cfg)
}

fn check_threshold(t: f64) -> CliResult<f64> {
    if t > 0.0 && t <= 180.0 {
        Ok(t)
    } else {
        Err(Failure::Config(format!("threshold must lie in (0, 180], got {t}")))
    }
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(io_runtime(path))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let file = fs::File::create(path).map_err(io_runtime(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(runtime)?;
    writeln!(w).and_then(|_| w.flush()).map_err(io_runtime(path))
}

fn cmd_generate(args: GenerateArgs) -> CliResult<()> {
    let mut scene = SceneSpec::load(&args.scene).map_err(config_err("scene", &args.scene))?;
    if let Some(seed) = args.seed {
        scene.seed = seed;
    }
    let dataset = generate(&scene, args.n, args.dt).map_err(|e| Failure::Config(e.to_string()))?;
    write_jsonl(&args.out, &dataset.trajectories).map_err(runtime)?;
    if let Some(path) = &args.frame_out {
        write_json(path, &dataset.frame)?;
    }
    log::info!("wrote {} trajectories to {}", dataset.len(), args.out.display());
    Ok(())
}

fn cmd_train(args: TrainArgs) -> CliResult<()> {
    let mut cfg = pipeline_config(&args.pipeline)?;
    if let Some(mode) = args.mode {
        cfg.mode = mode;
    }
    if let Some(k) = args.k {
        cfg.k = k;
    }
    if let Some(lambda) = args.lambda {
        cfg.lambda = lambda;
    }
    let cfg = checked(cfg)?;
    let frame = load_frame(&args.frame)?;
    let dataset = load_dataset(&args.data, frame, Split::Train)?;
    let model = train(&dataset, &cfg).map_err(runtime)?;
    model.save(&args.out).map_err(runtime)?;
    println!("mode: {}", model.mode().label());
    println!("atoms: {}", model.dictionary.k());
    println!("patterns: {}", model.patterns.len());
    println!("objective: {:.6}", model.objective);
    Ok(())
}

fn load_model(path: &Path) -> CliResult<TasnscModel> {
    TasnscModel::load(path).map_err(config_err("model", path))
}

fn cmd_predict(args: PredictArgs) -> CliResult<()> {
    let model = load_model(&args.model)?;
    let frame = load_frame(&args.frame)?;
    let observed = read_jsonl(&args.data).map_err(config_err("dataset", &args.data))?;
    let file = fs::File::create(&args.out).map_err(io_runtime(&args.out))?;
    let mut w = BufWriter::new(file);
    for traj in &observed {
        let set = predict(&model, &frame, traj).map_err(runtime)?;
        serde_json::to_writer(&mut w, &set).map_err(runtime)?;
        writeln!(w).map_err(io_runtime(&args.out))?;
    }
    w.flush().map_err(io_runtime(&args.out))
}

fn sibling(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

fn file_stem_for(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn cmd_evaluate(args: EvaluateArgs) -> CliResult<()> {
    let model = load_model(&args.model)?;
    let frame = load_frame(&args.frame)?;
    let test = load_dataset(&args.data, frame, Split::Test)?;
    let opts = EvalOptions {
        threshold_deg: check_threshold(args.threshold.unwrap_or(model.config.threshold_deg))?,
        weighted_mhd: args.weighted_mhd,
    };
    let (report, evaluated) = evaluate(&model, &test, &frame, &opts).map_err(runtime)?;
    let table = format_table(&[TableRow::from_report(&report, "-", "-")]);
    write_json(&args.report, &report)?;
    write_text(&sibling(&args.report, "txt"), &table)?;
    write_rows_csv(sibling(&args.report, "csv"), &report.rows).map_err(runtime)?;
    if let Some(dir) = &args.emit_plots {
        fs::create_dir_all(dir).map_err(io_runtime(dir))?;
        for e in &evaluated {
            let path = dir.join(format!("{}.csv", file_stem_for(e.observed.id())));
            let file = fs::File::create(&path).map_err(io_runtime(&path))?;
            write_plot_csv(BufWriter::new(file), e).map_err(runtime)?;
        }
    }
    print!("{table}");
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> CliResult<()> {
    let mut cfg = pipeline_config(&args.pipeline)?;
    if let Some(k) = args.k {
        cfg.k = k;
    }
    if let Some(lambda) = args.lambda {
        cfg.lambda = lambda;
    }
    let cfg = checked(cfg)?;
    let opts = EvalOptions {
        threshold_deg: check_threshold(args.threshold.unwrap_or(cfg.threshold_deg))?,
        weighted_mhd: args.weighted_mhd,
    };
    let frame_a = load_frame(&args.frames[0])?;
    let frame_b = load_frame(&args.frames[1])?;
    let a = Scene {
        label: "A".into(),
        train: load_dataset(&args.train_a, frame_a, Split::Train)?,
        test: load_dataset(&args.test_a, frame_a, Split::Test)?,
    };
    let b = Scene {
        label: "B".into(),
        train: load_dataset(&args.train_b, frame_b, Split::Train)?,
        test: load_dataset(&args.test_b, frame_b, Split::Test)?,
    };
    let report = compare(&a, &b, &cfg, &opts).map_err(runtime)?;
    let table = format_table(&report.rows());
    write_json(&args.out, &report)?;
    write_text(&sibling(&args.out, "txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Compare(a) => cmd_compare(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
