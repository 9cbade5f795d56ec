//! The `trimap` command-line surface: `embed`, `eval`, `test`, `plot` and
//! `sweep` subcommands over the CSV/JSON/SVG file formats.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dataset::Dataset;
use crate::error::{Result, TrimapError};
use crate::eval::precision_recall;
use crate::io::{
    load_labels, load_matrix_csv, save_matrix_csv, unix_ms_now, RunManifest,
};
use crate::optimizer::{embed, prepare_triplets, EmbedConfig, InitMethod};
use crate::stress::{reports_to_json, run_stress_suite, StressOptions, StressTest};
use crate::svg::{render_scatter_grid, write_scatter_svg, GridCell};

#[derive(Parser)]
#[command(
    name = "trimap",
    version,
    about = "Triplet-based dimensionality reduction",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Embed a dataset CSV into a low-dimensional CSV.
    Embed(EmbedArgs),
    /// Score an embedding against its source via mean precision-recall.
    Eval(EvalArgs),
    /// Run the global-structure stress suite on a dataset.
    Test(TestArgs),
    /// Render an embedding CSV as an SVG scatter plot.
    Plot(PlotArgs),
    /// Embed a grid of (t, t') parameter combinations.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Normalize {
    None,
    Minmax,
}

/// Pipeline flags shared by the embedding subcommands (everything in
/// `EmbedConfig` except `t`/`t'`, which `sweep` takes as lists).
#[derive(Args, Clone)]
struct BaseArgs {
    /// Output dimensionality.
    #[arg(long, default_value_t = 2)]
    dims: usize,
    /// Near points per anchor (nearest-neighbor count).
    #[arg(long, default_value_t = 50)]
    m: usize,
    /// Far points per (anchor, near) pair.
    #[arg(long = "m-prime", default_value_t = 10)]
    m_prime: usize,
    /// Random triplets per anchor.
    #[arg(long, default_value_t = 5)]
    s: usize,
    /// Weight bias.
    #[arg(long, default_value_t = 0.001)]
    gamma: f64,
    /// Descent iterations.
    #[arg(long, default_value_t = 400)]
    iters: usize,
    /// Seed for every random choice.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Embedding initialization.
    #[arg(long, value_enum, default_value_t = InitMethod::Pca)]
    init: InitMethod,
    /// Reduce inputs above this dimensionality with PCA first.
    #[arg(long = "pca", default_value_t = 50)]
    pca_dim: usize,
    /// Initial learning rate of the adaptive schedule.
    #[arg(long, default_value_t = 1.0)]
    lr: f64,
    /// Input rescaling applied before anything else.
    #[arg(long, value_enum, default_value_t = Normalize::None)]
    normalize: Normalize,
    /// Worker threads (0 = all available).
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

impl BaseArgs {
    fn config(&self, t: f64, t_prime: f64) -> EmbedConfig {
        EmbedConfig {
            out_dims: self.dims,
            t,
            t_prime,
            m: self.m,
            m_prime: self.m_prime,
            s: self.s,
            gamma: self.gamma,
            iterations: self.iters,
            seed: self.seed,
            init: self.init,
            lr_initial: self.lr,
            pca_dim: self.pca_dim,
            relaxed_accumulation: false,
        }
    }
}

#[derive(Args)]
struct EmbedArgs {
    /// Dataset CSV (rows are points).
    #[arg(long)]
    input: PathBuf,
    /// Companion label file, one integer per line.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Embedding CSV to write.
    #[arg(long)]
    output: PathBuf,
    /// Also write the loss trace CSV here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Also dump the sampled triplets (i,j,k,weight) here.
    #[arg(long = "dump-triplets")]
    dump_triplets: Option<PathBuf>,
    /// Loss-transformation parameter.
    #[arg(long, default_value_t = 2.0)]
    t: f64,
    /// Similarity tail-heaviness parameter.
    #[arg(long = "t-prime", default_value_t = 2.0)]
    t_prime: f64,
    #[command(flatten)]
    base: BaseArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// High-dimensional source CSV.
    #[arg(long)]
    high: PathBuf,
    /// Low-dimensional embedding CSV.
    #[arg(long)]
    low: PathBuf,
    /// High-dimensional neighborhood treated as relevant.
    #[arg(long = "relevant-k", default_value_t = 20)]
    relevant_k: usize,
    /// Largest low-dimensional neighborhood scanned.
    #[arg(long = "k-max", default_value_t = 100)]
    k_max: usize,
    /// PR-curve JSON to write.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct TestArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Directory for the stress JSON and SVGs.
    #[arg(long)]
    outdir: PathBuf,
    /// Comma-separated subset of: subset_random, subset_classes, outlier,
    /// multiple_scales. Defaults to every test the dataset supports.
    #[arg(long)]
    tests: Option<String>,
    /// Fraction kept by subset_random.
    #[arg(long = "subset-fraction", default_value_t = 0.1)]
    subset_fraction: f64,
    /// Point shifted by the outlier test.
    #[arg(long = "outlier-index", default_value_t = 0)]
    outlier_index: usize,
    /// Outlier shift in diameter units.
    #[arg(long = "outlier-factor", default_value_t = 5.0)]
    outlier_factor: f64,
    /// Duplicate-copy shift in diameter units.
    #[arg(long = "duplicate-factor", default_value_t = 3.0)]
    duplicate_factor: f64,
    #[arg(long, default_value_t = 2.0)]
    t: f64,
    #[arg(long = "t-prime", default_value_t = 2.0)]
    t_prime: f64,
    #[command(flatten)]
    base: BaseArgs,
}

#[derive(Args)]
struct PlotArgs {
    /// Embedding CSV (two columns).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// SVG to write.
    #[arg(long)]
    output: PathBuf,
    #[arg(long = "point-size", default_value_t = 1.5)]
    point_size: f64,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Directory for the per-cell CSVs/SVGs and the combined grid.
    #[arg(long)]
    outdir: PathBuf,
    /// Comma-separated t values (grid rows).
    #[arg(long, default_value = "0,1,2")]
    t: String,
    /// Comma-separated t' values (grid columns).
    #[arg(long = "t-prime", default_value = "1,2")]
    t_prime: String,
    #[command(flatten)]
    base: BaseArgs,
}

/// Parses argv, runs the requested subcommand, and returns the process exit
/// code (0 success, 2 usage problems, 1 internal failures).
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let argv: Vec<String> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let command_line = argv.join(" ");
    let result = match cli.command {
        Command::Embed(args) => embed_cmd(args, &command_line),
        Command::Eval(args) => eval_cmd(args, &command_line),
        Command::Test(args) => test_cmd(args, &command_line),
        Command::Plot(args) => plot_cmd(args, &command_line),
        Command::Sweep(args) => sweep_cmd(args, &command_line),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    #[cfg(feature = "parallel")]
    {
        if threads > 0 {
            match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
                Ok(pool) => return pool.install(f),
                Err(e) => eprintln!("warning: thread pool setup failed ({e}); using default"),
            }
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    f()
}

fn load_dataset(
    input: &Path,
    labels: Option<&Path>,
    normalize: Normalize,
) -> Result<Dataset> {
    let points = load_matrix_csv(input, ',')?;
    let data = match labels {
        Some(path) => Dataset::with_labels(points, load_labels(path)?),
        None => Dataset::new(points),
    }?;
    match normalize {
        Normalize::None => Ok(data),
        Normalize::Minmax => data.normalize_minmax(),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| TrimapError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn manifest_path_for(output: &Path) -> PathBuf {
    let mut name = output
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "output".into());
    name.push_str(".manifest.json");
    output.with_file_name(name)
}

fn write_manifest(
    command: &str,
    config: &EmbedConfig,
    inputs: &[&Path],
    outputs: &[&Path],
    started_unix_ms: u64,
    manifest_path: &Path,
) -> Result<()> {
    RunManifest {
        command: command.to_string(),
        config: config.clone(),
        input_paths: inputs.iter().map(|p| p.to_path_buf()).collect(),
        output_paths: outputs.iter().map(|p| p.to_path_buf()).collect(),
        started_unix_ms,
        finished_unix_ms: unix_ms_now(),
        seed: config.seed,
    }
    .write(manifest_path)
}

fn embed_cmd(args: EmbedArgs, command_line: &str) -> Result<()> {
    let started = unix_ms_now();
    let config = args.base.config(args.t, args.t_prime);
    let data = load_dataset(&args.input, args.labels.as_deref(), args.base.normalize)?;

    let (embedding, dump) = with_threads(args.base.threads, || -> Result<_> {
        let dump = match &args.dump_triplets {
            Some(_) => Some(prepare_triplets(&data, &config)?.2.to_csv()),
            None => None,
        };
        Ok((embed(&data, &config)?, dump))
    })?;

    save_matrix_csv(embedding.coords.view(), &args.output)?;
    let mut outputs: Vec<&Path> = vec![&args.output];
    if let Some(trace_path) = &args.trace {
        write_text(trace_path, &embedding.trace_csv())?;
        outputs.push(trace_path);
    }
    if let (Some(dump_path), Some(csv)) = (&args.dump_triplets, &dump) {
        write_text(dump_path, csv)?;
        outputs.push(dump_path);
    }

    let mut inputs: Vec<&Path> = vec![&args.input];
    if let Some(l) = &args.labels {
        inputs.push(l);
    }
    write_manifest(
        command_line,
        &config,
        &inputs,
        &outputs,
        started,
        &manifest_path_for(&args.output),
    )?;

    println!(
        "embedded {} points to {} dims: loss {:.6e} -> {:.6e} over {} iterations \
         ({} nearest-neighbor + {} random triplets)",
        data.n_points(),
        config.out_dims,
        embedding.loss_trace.first().unwrap(),
        embedding.loss_trace.last().unwrap(),
        embedding.loss_trace.len() - 1,
        embedding.counts.nearest,
        embedding.counts.random,
    );
    Ok(())
}

fn eval_cmd(args: EvalArgs, command_line: &str) -> Result<()> {
    let started = unix_ms_now();
    let high = Dataset::new(load_matrix_csv(&args.high, ',')?)?;
    let low = load_matrix_csv(&args.low, ',')?;
    let curve = precision_recall(&high, low.view(), args.relevant_k, args.k_max)?;
    let json = serde_json::to_string_pretty(&curve.to_json()).expect("curve serializes");
    write_text(&args.output, &json)?;
    write_manifest(
        command_line,
        &EmbedConfig::default(),
        &[&args.high, &args.low],
        &[&args.output],
        started,
        &manifest_path_for(&args.output),
    )?;
    println!("AUC {:.6}", curve.auc);
    Ok(())
}

fn test_cmd(args: TestArgs, command_line: &str) -> Result<()> {
    let started = unix_ms_now();
    let config = args.base.config(args.t, args.t_prime);
    let data = load_dataset(&args.input, args.labels.as_deref(), args.base.normalize)?;

    let tests: Vec<StressTest> = match &args.tests {
        Some(list) => list
            .split(',')
            .map(|s| s.trim().parse())
            .collect::<Result<Vec<_>>>()?,
        None => StressTest::ALL
            .into_iter()
            .filter(|t| *t != StressTest::SubsetClasses || data.labels().is_some())
            .collect(),
    };
    let options = StressOptions {
        subset_fraction: args.subset_fraction,
        keep_labels: None,
        outlier_index: args.outlier_index,
        outlier_factor: args.outlier_factor,
        duplicate_factor: args.duplicate_factor,
        transform_seed: config.seed,
    };

    std::fs::create_dir_all(&args.outdir).map_err(|e| TrimapError::Io {
        path: args.outdir.clone(),
        source: e,
    })?;
    let reports = with_threads(args.base.threads, || {
        run_stress_suite(&data, &config, &tests, &options)
    })?;

    let json_path = args.outdir.join("stress.json");
    write_text(
        &json_path,
        &serde_json::to_string_pretty(&reports_to_json(&reports)).expect("reports serialize"),
    )?;
    let mut outputs: Vec<PathBuf> = vec![json_path];

    if let Some(first) = reports.first() {
        let path = args.outdir.join("baseline.svg");
        write_scatter_svg(
            first.baseline.0.coords.view(),
            data.labels(),
            1.5,
            &path,
        )?;
        outputs.push(path);
    }
    for report in &reports {
        let path = args
            .outdir
            .join(format!("{}_transformed.svg", report.test.name()));
        // The transformed dataset's labels are not retained in the report;
        // recolor by nothing rather than guessing.
        write_scatter_svg(report.transformed.0.coords.view(), None, 1.5, &path)?;
        outputs.push(path);
        let metrics: Vec<String> = report
            .verdict_metrics
            .iter()
            .map(|(k, v)| format!("{k} = {v:.4}"))
            .collect();
        println!(
            "{}: baseline AUC {:.4}, transformed AUC {:.4}, {}",
            report.test.name(),
            report.baseline.1.auc,
            report.transformed.1.auc,
            metrics.join(", "),
        );
    }

    let mut inputs: Vec<&Path> = vec![&args.input];
    if let Some(l) = &args.labels {
        inputs.push(l);
    }
    let output_refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    write_manifest(
        command_line,
        &config,
        &inputs,
        &output_refs,
        started,
        &args.outdir.join("run_manifest.json"),
    )?;
    Ok(())
}

fn plot_cmd(args: PlotArgs, command_line: &str) -> Result<()> {
    let started = unix_ms_now();
    let coords = load_matrix_csv(&args.input, ',')?;
    let labels = args.labels.as_deref().map(load_labels).transpose()?;
    write_scatter_svg(coords.view(), labels.as_deref(), args.point_size, &args.output)?;
    let mut inputs: Vec<&Path> = vec![&args.input];
    if let Some(l) = &args.labels {
        inputs.push(l);
    }
    write_manifest(
        command_line,
        &EmbedConfig::default(),
        &inputs,
        &[&args.output],
        started,
        &manifest_path_for(&args.output),
    )?;
    println!("wrote {}", args.output.display());
    Ok(())
}

fn parse_float_list(text: &str, flag: &str) -> Result<Vec<f64>> {
    let values: Vec<f64> = text
        .split(',')
        .map(|s| {
            s.trim().parse::<f64>().map_err(|_| {
                TrimapError::Parameter(format!("{flag}: '{s}' is not a number"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        return Err(TrimapError::Parameter(format!("{flag}: empty list")));
    }
    Ok(values)
}

fn format_param(v: f64) -> String {
    // 2.0 -> "2", 0.5 -> "0.5"; keeps file names readable.
    if v == v.trunc() {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

fn sweep_cmd(args: SweepArgs, command_line: &str) -> Result<()> {
    let started = unix_ms_now();
    let ts = parse_float_list(&args.t, "--t")?;
    let t_primes = parse_float_list(&args.t_prime, "--t-prime")?;
    let data = load_dataset(&args.input, args.labels.as_deref(), args.base.normalize)?;
    std::fs::create_dir_all(&args.outdir).map_err(|e| TrimapError::Io {
        path: args.outdir.clone(),
        source: e,
    })?;

    let mut cells = Vec::with_capacity(ts.len() * t_primes.len());
    let mut outputs: Vec<PathBuf> = Vec::new();
    for &t in &ts {
        for &t_prime in &t_primes {
            let config = args.base.config(t, t_prime);
            let embedding = with_threads(args.base.threads, || embed(&data, &config))?;
            let stem = format!(
                "sweep_t{}_tp{}",
                format_param(t),
                format_param(t_prime)
            );
            let csv_path = args.outdir.join(format!("{stem}.csv"));
            save_matrix_csv(embedding.coords.view(), &csv_path)?;
            let svg_path = args.outdir.join(format!("{stem}.svg"));
            write_scatter_svg(embedding.coords.view(), data.labels(), 1.5, &svg_path)?;
            println!(
                "t={} t'={}: final loss {:.6e}",
                format_param(t),
                format_param(t_prime),
                embedding.loss_trace.last().unwrap()
            );
            cells.push(GridCell {
                title: format!("t={}, t'={}", format_param(t), format_param(t_prime)),
                coords: embedding.coords,
                labels: data.labels().map(|l| l.to_vec()),
            });
            outputs.push(csv_path);
            outputs.push(svg_path);
        }
    }

    let grid_path = args.outdir.join("sweep_grid.svg");
    write_text(&grid_path, &render_scatter_grid(&cells, t_primes.len(), 1.0)?)?;
    outputs.push(grid_path);

    let mut inputs: Vec<&Path> = vec![&args.input];
    if let Some(l) = &args.labels {
        inputs.push(l);
    }
    let config = args.base.config(ts[0], t_primes[0]);
    let output_refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    write_manifest(
        command_line,
        &config,
        &inputs,
        &output_refs,
        started,
        &args.outdir.join("run_manifest.json"),
    )?;
    Ok(())
}
