//! Command-line pipeline: `generate`, `fit`, `project`, `evaluate`, `plot`.
//!
//! Every subcommand is reproducible from its flags and seed alone: outputs
//! carry no timestamps or hidden state. Exit codes: 0 success, 1 runtime
//! failure, 2 usage error.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use crate::data::{
    find_label_column, generate_helix, generate_s_curve, generate_swiss_roll, header_names,
    load_csv, normalize_unit, sniff_header, write_csv, Dataset, NormStats,
};
use crate::eval::evaluate;
use crate::fuzzy::{suggest_reject_threshold, FiringSummary, Model, Projection};
use crate::graph::{build_knn_graph, default_epsilon, geodesic_all_pairs, Algorithm, GeodesicMatrix};
use crate::plot::scatter_svg;
use crate::train::{fit_best_of, InitScheme, Objective, TrainConfig};
use crate::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "ufrb",
    version,
    about = "Unsupervised fuzzy rule-based nonlinear dimensionality reduction"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Worker threads for graph and training kernels (0 = automatic).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset as CSV.
    Generate(GenerateArgs),
    /// Train a rule base on a dataset and save the model.
    Fit(FitArgs),
    /// Project points through a saved model.
    Project(ProjectArgs),
    /// Quality metrics for a saved model on a dataset.
    Evaluate(EvaluateArgs),
    /// Render a projection CSV as an SVG scatter plot.
    Plot(PlotArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GeneratorKind {
    SwissRoll,
    SCurve,
    Helix,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Which synthetic manifold to generate.
    dataset: GeneratorKind,

    /// Number of points (swiss-roll and s-curve).
    #[arg(long, default_value_t = 2000)]
    n: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Helix sweep start.
    #[arg(long, default_value_t = -20.0, allow_hyphen_values = true)]
    t_min: f64,

    /// Helix sweep end.
    #[arg(long, default_value_t = 20.0, allow_hyphen_values = true)]
    t_max: f64,

    /// Helix sweep step.
    #[arg(long, default_value_t = 0.02)]
    step: f64,

    /// Output CSV path.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Input CSV path, or a generator name (swiss-roll, s-curve, helix) to
    /// fit freshly generated data.
    input: String,

    /// Output directory for model.json, trace.csv and projection.csv.
    #[arg(short, long, default_value = ".")]
    out: PathBuf,

    /// Output dimension (2 or 3).
    #[arg(long, default_value_t = 2)]
    dl: usize,

    /// Neighbor count for the kNN graph; default is 1% of the points
    /// (minimum 5 below 100 points).
    #[arg(long)]
    epsilon: Option<usize>,

    /// Number of rules; default is 1% of the points (minimum 5 below 100
    /// points).
    #[arg(long)]
    nc: Option<usize>,

    #[arg(long, value_enum, default_value_t = Objective::Geodesic)]
    objective: Objective,

    /// Initial spread as a multiple of the feature range.
    #[arg(long, default_value_t = 0.2)]
    spread_ratio: f64,

    #[arg(long, default_value_t = 0.1)]
    lr: f64,

    #[arg(long, default_value_t = 0.5)]
    momentum: f64,

    #[arg(long, default_value_t = 1000)]
    iters: usize,

    /// Independent runs; the model with minimum final stress is kept.
    #[arg(long, default_value_t = 1)]
    restarts: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long, default_value_t = 0.15)]
    reject_threshold: f64,

    /// Apply feature-wise zero-one normalization before training (stored in
    /// the model and re-applied on projection).
    #[arg(long)]
    normalize: bool,

    /// Treat the first row as a header (default: sniff the file).
    #[arg(long)]
    has_header: Option<bool>,

    /// Zero-based label column; by default a header column named "label".
    #[arg(long)]
    label_col: Option<usize>,

    /// Points for generator input.
    #[arg(long, default_value_t = 2000)]
    n: usize,

    /// Iteration cap for the geodesic c-means seeding.
    #[arg(long, default_value_t = 100)]
    gcm_iters: usize,

    /// Optional relative-change early stop (full-batch only).
    #[arg(long)]
    early_stop: Option<f64>,

    /// Optional pair subsample size per iteration for large datasets.
    #[arg(long)]
    pair_sample: Option<usize>,

    /// Recording interval for the stress trace.
    #[arg(long, default_value_t = 10)]
    log_every: usize,

    /// Skip the geodesic matrix cache.
    #[arg(long)]
    no_cache: bool,
}

#[derive(Args, Debug)]
struct ProjectArgs {
    /// Input CSV of raw points.
    input: PathBuf,

    /// Saved model file.
    #[arg(long)]
    model: PathBuf,

    #[arg(long, default_value_t = 0.15)]
    reject_threshold: f64,

    #[arg(long)]
    has_header: Option<bool>,

    #[arg(long)]
    label_col: Option<usize>,

    /// Output projection CSV.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Input CSV of raw points.
    input: PathBuf,

    /// Saved model file.
    #[arg(long)]
    model: PathBuf,

    /// Neighbor count for the evaluation graph; defaults to the model's
    /// training epsilon, clamped to the dataset size.
    #[arg(long)]
    epsilon: Option<usize>,

    #[arg(long, default_value_t = 0.15)]
    reject_threshold: f64,

    #[arg(long)]
    has_header: Option<bool>,

    #[arg(long)]
    label_col: Option<usize>,

    #[arg(long)]
    no_cache: bool,
}

#[derive(Args, Debug)]
struct PlotArgs {
    /// Projection CSV (as written by `project` or `fit`).
    input: PathBuf,

    /// Output SVG path.
    #[arg(short, long)]
    out: PathBuf,

    /// Column for the horizontal axis (default: the "y0" column).
    #[arg(long)]
    x_col: Option<usize>,

    /// Column for the vertical axis (default: the "y1" column).
    #[arg(long)]
    y_col: Option<usize>,

    /// Column holding the color label (default: the "label" column, if any).
    #[arg(long)]
    label_col: Option<usize>,
}

impl Cli {
    pub fn run(self) -> Result<()> {
        if self.threads > 0 {
            // Ignore the error if a pool already exists (tests).
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(self.threads)
                .build_global();
        }
        match self.command {
            Command::Generate(args) => cmd_generate(args),
            Command::Fit(args) => cmd_fit(args),
            Command::Project(args) => cmd_project(args),
            Command::Evaluate(args) => cmd_evaluate(args),
            Command::Plot(args) => cmd_plot(args),
        }
    }
}

/// Run the parsed command line, translating errors into exit codes.
pub fn main_entry() -> std::process::ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse(); // exits with code 2 on usage errors
    match cli.run() {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            if matches!(err, Error::Disconnected(_)) {
                eprintln!("hint: raise --epsilon to connect the neighborhood graph");
            }
            std::process::ExitCode::FAILURE
        }
    }
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let dataset = match args.dataset {
        GeneratorKind::SwissRoll => generate_swiss_roll(args.n, args.seed)?,
        GeneratorKind::SCurve => generate_s_curve(args.n, args.seed)?,
        GeneratorKind::Helix => generate_helix(args.t_min, args.t_max, args.step)?,
    };
    write_csv(&dataset, &args.out)?;
    println!("wrote {} points to {}", dataset.n(), args.out.display());
    Ok(())
}

/// The 1% defaults of the experimental policy, floored at 5 for small
/// datasets so tiny inputs still get a usable graph and rule count.
pub fn policy_default(n: usize, base: usize) -> usize {
    if n < 100 {
        base.max(5)
    } else {
        base
    }
}

fn load_input(
    path: &Path,
    has_header: Option<bool>,
    label_col: Option<usize>,
) -> Result<Dataset> {
    let has_header = match has_header {
        Some(v) => v,
        None => sniff_header(path)?,
    };
    let label_col = match label_col {
        Some(c) => Some(c),
        None => find_label_column(path, has_header)?,
    };
    load_csv(path, has_header, label_col)
}

/// Resolve the fit input: an existing CSV file, or a generator name.
fn resolve_fit_input(args: &FitArgs) -> Result<(Dataset, Option<PathBuf>)> {
    let path = Path::new(&args.input);
    if !path.exists() {
        match args.input.as_str() {
            "swiss-roll" => return Ok((generate_swiss_roll(args.n, args.seed)?, None)),
            "s-curve" => return Ok((generate_s_curve(args.n, args.seed)?, None)),
            "helix" => return Ok((generate_helix(-20.0, 20.0, 0.02)?, None)),
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "input {:?} is neither a file nor a generator name \
                     (swiss-roll, s-curve, helix)",
                    args.input
                )))
            }
        }
    }
    let ds = load_input(path, args.has_header, args.label_col)?;
    Ok((ds, Some(path.to_path_buf())))
}

/// Cache file path for the geodesic matrix of `input`, keyed by the file
/// content hash, the neighbor count and the normalization switch.
fn cache_path(input: &Path, epsilon: usize, normalized: bool) -> Result<PathBuf> {
    let bytes = std::fs::read(input)?;
    let digest = Sha256::digest(&bytes);
    let hash: String = digest[..6].iter().map(|b| format!("{b:02x}")).collect();
    let dir = input.parent().unwrap_or_else(|| Path::new(".")).join(".gdm-cache");
    let suffix = if normalized { "-norm" } else { "" };
    Ok(dir.join(format!("{hash}-e{epsilon}{suffix}.gdm")))
}

/// Geodesics for a model-space dataset, going through the on-disk cache when
/// a source file is known and caching is enabled.
fn geodesics_cached(
    model_space: &Dataset,
    epsilon: usize,
    source: Option<&Path>,
    normalized: bool,
    no_cache: bool,
) -> Result<GeodesicMatrix> {
    let cache = match (source, no_cache) {
        (Some(path), false) => Some(cache_path(path, epsilon, normalized)?),
        _ => None,
    };
    if let Some(ref cache) = cache {
        if cache.exists() {
            match GeodesicMatrix::read_cache(cache) {
                Ok(gd) if gd.n() == model_space.n() => return Ok(gd),
                Ok(_) => log::warn!("cache {} has wrong size; recomputing", cache.display()),
                Err(err) => log::warn!("unreadable cache {}: {err}; recomputing", cache.display()),
            }
        }
    }
    let graph = build_knn_graph(model_space, epsilon)?;
    let gd = geodesic_all_pairs(&graph, Algorithm::Auto)?;
    if let Some(cache) = cache {
        if let Some(dir) = cache.parent() {
            std::fs::create_dir_all(dir)?;
        }
        gd.write_cache(&cache)?;
    }
    Ok(gd)
}

fn write_projection_csv(
    projection: &Projection,
    labels: Option<&[f64]>,
    path: &Path,
) -> Result<()> {
    let d_l = projection.d_l();
    let mut out = String::new();
    for m in 0..d_l {
        out.push_str(&format!("y{m},"));
    }
    out.push_str("alpha_max,rejected");
    if labels.is_some() {
        out.push_str(",label");
    }
    out.push('\n');
    for i in 0..projection.n() {
        for m in 0..d_l {
            out.push_str(&format!("{},", projection.coords[[i, m]]));
        }
        out.push_str(&format!(
            "{},{}",
            projection.max_firing[i],
            if projection.rejected[i] { 1 } else { 0 }
        ));
        if let Some(ls) = labels {
            out.push_str(&format!(",{}", ls[i]));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let (raw, source) = resolve_fit_input(&args)?;
    let n = raw.n();

    let (model_space, stats) = if args.normalize {
        normalize_unit(&raw)
    } else {
        (raw.clone(), NormStats::identity(raw.dim()))
    };

    let epsilon = args
        .epsilon
        .unwrap_or_else(|| policy_default(n, default_epsilon(n)))
        .clamp(1, n - 1);
    let n_c = args
        .nc
        .unwrap_or_else(|| policy_default(n, ((0.01 * n as f64).round() as usize).max(2)))
        .clamp(2, n);

    let gd = geodesics_cached(&model_space, epsilon, source.as_deref(), args.normalize, args.no_cache)?;

    let config = TrainConfig {
        objective: args.objective,
        learning_rate: args.lr,
        momentum: args.momentum,
        max_iter: args.iters,
        spread_init_ratio: args.spread_ratio,
        seed: args.seed,
        log_every: args.log_every,
        early_stop: args.early_stop,
        pair_sample: args.pair_sample,
        ..TrainConfig::default()
    };

    println!(
        "fitting {}: n={n} d_h={} -> d_l={} | epsilon={epsilon} n_c={n_c} objective={:?} restarts={}",
        model_space.name(),
        model_space.dim(),
        args.dl,
        args.objective,
        args.restarts
    );

    let outcome = fit_best_of(
        &model_space,
        &gd,
        args.dl,
        n_c,
        &config,
        args.restarts,
        InitScheme::GcmCentroids {
            max_iter: args.gcm_iters,
        },
    )?;

    let mut rulebase = outcome.rulebase;
    rulebase.set_norm_stats(stats)?;
    let projection = rulebase.project_batch(&model_space, args.reject_threshold)?;
    let firing_summary = FiringSummary::from_values(&projection.max_firing)?;
    let metrics = evaluate(&projection, &model_space, &gd)?;

    let model = Model {
        rulebase,
        epsilon,
        objective: args.objective,
        firing_summary,
        clusters: outcome.clusters,
    };

    std::fs::create_dir_all(&args.out)?;
    let model_path = args.out.join("model.json");
    let trace_path = args.out.join("trace.csv");
    let proj_path = args.out.join("projection.csv");
    model.save(&model_path)?;
    outcome.report.write_trace_csv(&trace_path)?;
    write_projection_csv(&projection, model_space.labels(), &proj_path)?;

    println!(
        "best restart seed={} iterations={} initial_stress={} final_stress={}",
        outcome.seed,
        outcome.report.iterations_run,
        outcome.report.initial_stress,
        outcome.report.final_stress
    );
    println!(
        "suggested_reject_threshold={}",
        suggest_reject_threshold(&projection.max_firing)?
    );
    print!("{}", metrics.lines());
    println!(
        "wrote {}, {}, {}",
        model_path.display(),
        trace_path.display(),
        proj_path.display()
    );
    Ok(())
}

fn cmd_project(args: ProjectArgs) -> Result<()> {
    let model = Model::load(&args.model)?;
    let raw = load_input(&args.input, args.has_header, args.label_col)?;
    if raw.dim() != model.rulebase.d_h() {
        return Err(Error::DimensionMismatch {
            expected: model.rulebase.d_h(),
            got: raw.dim(),
        });
    }
    let projection = model.project_dataset(&raw, args.reject_threshold)?;
    write_projection_csv(&projection, raw.labels(), &args.out)?;
    println!(
        "projected {} points, rejected {:.2}% at threshold {}",
        projection.n(),
        projection.rejection_rate() * 100.0,
        args.reject_threshold
    );
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let model = Model::load(&args.model)?;
    let raw = load_input(&args.input, args.has_header, args.label_col)?;
    if raw.dim() != model.rulebase.d_h() {
        return Err(Error::DimensionMismatch {
            expected: model.rulebase.d_h(),
            got: raw.dim(),
        });
    }
    let model_space = model.rulebase.norm_stats().apply(&raw)?;
    let n = model_space.n();
    let epsilon = args
        .epsilon
        .unwrap_or(model.epsilon)
        .clamp(1, n - 1);
    let normalized = model
        .rulebase
        .norm_stats()
        .ne(&NormStats::identity(raw.dim()));
    let gd = geodesics_cached(&model_space, epsilon, Some(&args.input), normalized, args.no_cache)?;
    let projection = model.rulebase.project_batch(&model_space, args.reject_threshold)?;
    let metrics = evaluate(&projection, &model_space, &gd)?;
    print!("{}", metrics.lines());
    Ok(())
}

fn cmd_plot(args: PlotArgs) -> Result<()> {
    let has_header = sniff_header(&args.input)?;
    let names: Vec<String> = if has_header {
        header_names(&args.input)?
    } else {
        Vec::new()
    };
    let table = load_csv(&args.input, has_header, None)?;
    let find = |name: &str| names.iter().position(|c| c == name);

    let (x_col, y_col) = match (args.x_col, args.y_col) {
        (Some(x), Some(y)) => (x, y),
        (None, None) => {
            match (find("y0"), find("y1")) {
                (Some(x), Some(y)) => {
                    if find("y2").is_some() {
                        return Err(Error::InvalidArgument(
                            "projection is 3-D; pick an axis pair with --x-col and --y-col".into(),
                        ));
                    }
                    (x, y)
                }
                // Headerless two-column input: plot as-is.
                _ if table.dim() >= 2 => (0, 1),
                _ => {
                    return Err(Error::InvalidArgument(
                        "cannot infer plot axes; use --x-col and --y-col".into(),
                    ))
                }
            }
        }
        _ => {
            return Err(Error::InvalidArgument(
                "--x-col and --y-col must be given together".into(),
            ))
        }
    };
    if x_col >= table.dim() || y_col >= table.dim() {
        return Err(Error::InvalidArgument(format!(
            "axis column out of range (file has {} columns)",
            table.dim()
        )));
    }

    let label_col = args.label_col.or_else(|| find("label"));
    if let Some(c) = label_col {
        if c >= table.dim() {
            return Err(Error::InvalidArgument(format!(
                "label column {c} out of range (file has {} columns)",
                table.dim()
            )));
        }
    }
    let rejected_col = find("rejected");

    let pts: Vec<(f64, f64)> = (0..table.n())
        .map(|i| (table.row(i)[x_col], table.row(i)[y_col]))
        .collect();
    let labels: Option<Vec<f64>> = label_col.map(|c| (0..table.n()).map(|i| table.row(i)[c]).collect());
    let rejected: Vec<bool> = match rejected_col {
        Some(c) => (0..table.n()).map(|i| table.row(i)[c] != 0.0).collect(),
        None => vec![false; table.n()],
    };

    let svg = scatter_svg(&pts, labels.as_deref(), &rejected);
    std::fs::write(&args.out, svg)?;
    println!("plotted {} points to {}", table.n(), args.out.display());
    Ok(())
}
