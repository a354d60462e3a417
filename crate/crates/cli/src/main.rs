use std::fmt::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use hodgeflow_core::dataset::{generate_dataset, DatasetConfig, SampleKind, MANIFEST_NAME};
use hodgeflow_core::hhd::{apply_edit_sequence_with, decompose_with, parse_edit_script, HhdOptions, LaplacianKind};
use hodgeflow_core::io::{
    decode_field_with_precision, read_pgm, write_field_with, write_pgm, Precision,
};
use hodgeflow_core::metrics::{cme, cs, evaluate, format_sig6, Metric};
use hodgeflow_core::poisson::SolveOptions;
use hodgeflow_core::sim::{density_frame, step_smoke, Inflow, SmokeState};
use hodgeflow_core::sketch::{
    format_strokes, parse_strokes, rasterize_sketch, rasterize_strokes, sketch_to_field_baseline,
    streamlines_to_strokes, trace_streamlines, SketchImage, TraceOptions,
};
use hodgeflow_core::{Error, VectorField};
use hodgeflow_service::ServiceConfig;

#[derive(Parser)]
#[command(name = "hodgeflow", version, about = "Design, decompose and edit 2D vector fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset of fields and pseudo-sketches.
    Dataset(DatasetArgs),
    /// Split a field into curl-free, divergence-free and harmonic parts.
    Decompose(DecomposeArgs),
    /// Apply an edit script to a field.
    Edit(EditArgs),
    /// Trace a pseudo-sketch from a field.
    Sketch(SketchArgs),
    /// Turn a sketch into a field with the baseline provider.
    Generate(GenerateArgs),
    /// Compare two fields.
    Metrics(MetricsArgs),
    /// Run the smoke simulator with a field as force.
    Simulate(SimulateArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct Solver {
    /// Relative residual target for the Poisson solves.
    #[arg(long, default_value_t = 1e-10)]
    tolerance: f64,
    /// Potential solve operator: `compatible` or `five-point`.
    #[arg(long, default_value = "compatible")]
    laplacian: LaplacianKind,
}

impl Solver {
    fn options(&self) -> HhdOptions {
        HhdOptions {
            solve: SolveOptions::with_tolerance(self.tolerance),
            operator: self.laplacian,
        }
    }
}

#[derive(Args)]
struct DatasetArgs {
    /// Sample kind: a category tag, `patterns`, `rules` or `inflow`. Repeatable.
    #[arg(long = "category", value_name = "KIND")]
    categories: Vec<String>,
    /// Samples per listed kind.
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Use a preset: `train` (500 per category) or `eval` (200 per category).
    #[arg(long, conflicts_with = "categories")]
    preset: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    /// Store fields as f32 instead of f64.
    #[arg(long)]
    f32: bool,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct DecomposeArgs {
    input: PathBuf,
    /// Directory for curl_free.vf2, div_free.vf2 and harmonic.vf2.
    #[arg(long, short)]
    out: PathBuf,
    /// Write f64 samples regardless of the input precision.
    #[arg(long)]
    f64: bool,
    #[command(flatten)]
    solver: Solver,
}

#[derive(Args)]
struct EditArgs {
    input: PathBuf,
    script: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long)]
    f64: bool,
    #[command(flatten)]
    solver: Solver,
}

#[derive(Args)]
struct SketchArgs {
    input: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    /// Also write the traced strokes as text.
    #[arg(long)]
    strokes: Option<PathBuf>,
    /// Seeds per axis.
    #[arg(long)]
    density: Option<usize>,
}

#[derive(Args)]
struct GenerateArgs {
    /// 256x256 binary PGM.
    #[arg(long, required_unless_present = "strokes")]
    sketch: Option<PathBuf>,
    /// Stroke file, one `x,y x,y ... [| dx,dy]` polyline per line.
    #[arg(long)]
    strokes: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    width: usize,
    #[arg(long, default_value_t = 256)]
    height: usize,
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long)]
    f64: bool,
}

#[derive(Args)]
struct MetricsArgs {
    /// Reference field.
    a: PathBuf,
    /// Candidate field; `cme` and `cs` are reported for it.
    b: PathBuf,
    /// Comma list of metrics; all by default.
    #[arg(long, value_delimiter = ',')]
    metrics: Vec<String>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Force field.
    input: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value_t = 150)]
    steps: usize,
    #[arg(long, default_value_t = 0.5)]
    dt: f64,
    #[arg(long, default_value_t = 1.0)]
    force_scale: f64,
    /// `cx,cy,radius,vx,vy[,density]`. Repeatable.
    #[arg(long = "inflow", value_name = "SPEC")]
    inflows: Vec<String>,
    /// Write every k-th frame.
    #[arg(long, default_value_t = 1)]
    every: usize,
    /// Also write velocity frames as .vf2.
    #[arg(long)]
    velocity: bool,
    /// Density mapped to white.
    #[arg(long, default_value_t = 1.0)]
    density_scale: f64,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "HODGEFLOW_HOST", default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    #[arg(long, env = "HODGEFLOW_PORT", default_value_t = 8080)]
    port: u16,
    /// Idle seconds before a session is dropped.
    #[arg(long, env = "HODGEFLOW_SESSION_TTL", default_value_t = 3600)]
    session_ttl: u64,
    #[arg(long, env = "HODGEFLOW_PERSIST_DIR")]
    persist_dir: Option<PathBuf>,
    #[arg(long, env = "HODGEFLOW_PROVIDER", default_value = "baseline")]
    provider: String,
    #[arg(long, env = "HODGEFLOW_PROVIDER_TIMEOUT", default_value_t = 60)]
    provider_timeout: u64,
    #[arg(long, env = "HODGEFLOW_TOLERANCE", default_value_t = 1e-10)]
    tolerance: f64,
}

/// A failure reported as `error: <Class>: message`.
struct Failure {
    class: &'static str,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            class: e.class(),
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        class: "Usage",
        message: message.into(),
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn read_input(path: &Path) -> CliResult<(VectorField, Precision)> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(decode_field_with_precision(&bytes)?)
}

fn read_text(path: &Path) -> CliResult<String> {
    Ok(std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?)
}

fn write_text(path: &Path, text: &str) -> CliResult {
    Ok(std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?)
}

fn create_dir(path: &Path) -> CliResult {
    Ok(std::fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?)
}

fn output_precision(input: Precision, force_f64: bool) -> Precision {
    if force_f64 {
        Precision::F64
    } else {
        input
    }
}

fn dataset(args: DatasetArgs) -> CliResult {
    let mut config = match args.preset.as_deref() {
        Some("train") => DatasetConfig::train_preset(args.seed),
        Some("eval") => DatasetConfig::eval_preset(args.seed),
        Some(other) => return Err(usage(format!("unknown preset `{other}`, expected train or eval"))),
        None => {
            if args.categories.is_empty() {
                return Err(usage("give at least one --category or a --preset"));
            }
            let counts = args
                .categories
                .iter()
                .map(|c| Ok((c.parse::<SampleKind>()?, args.count)))
                .collect::<CliResult<Vec<_>>>()?;
            DatasetConfig::new(counts, args.seed)
        }
    };
    config.width = args.width;
    config.height = args.height;
    if args.f32 {
        config.precision = Precision::F32;
    }
    let manifest = generate_dataset(&config, &args.out)?;
    println!(
        "wrote {} samples and {}",
        manifest.records.len(),
        args.out.join(MANIFEST_NAME).display()
    );
    Ok(())
}

fn decompose(args: DecomposeArgs) -> CliResult {
    let (f, input_precision) = read_input(&args.input)?;
    let parts = decompose_with(&f, &args.solver.options())?;
    create_dir(&args.out)?;
    let precision = output_precision(input_precision, args.f64);
    for (name, field) in [
        ("curl_free", &parts.curl_free),
        ("div_free", &parts.div_free),
        ("harmonic", &parts.harmonic),
    ] {
        write_field_with(field, args.out.join(format!("{name}.vf2")), precision)?;
    }
    let mut report = String::new();
    let rows = [
        ("curl_free.cme", cme(&parts.curl_free)),
        ("div_free.cs", cs(&parts.div_free)),
        ("harmonic.cme", cme(&parts.harmonic)),
        ("harmonic.cs", cs(&parts.harmonic)),
        ("phi.residual", parts.phi_report.final_residual),
        ("psi.residual", parts.psi_report.final_residual),
    ];
    for (k, v) in rows {
        let _ = writeln!(report, "{k}={}", format_sig6(v));
    }
    let _ = writeln!(report, "phi.iterations={}", parts.phi_report.iterations);
    let _ = writeln!(report, "psi.iterations={}", parts.psi_report.iterations);
    print!("{report}");
    Ok(())
}

fn edit(args: EditArgs) -> CliResult {
    let (f, input_precision) = read_input(&args.input)?;
    let edits = parse_edit_script(&read_text(&args.script)?, f.width(), f.height())?;
    let out = apply_edit_sequence_with(&f, &edits, &args.solver.options())?;
    write_field_with(&out, &args.out, output_precision(input_precision, args.f64))?;
    println!("applied {} edits", edits.len());
    Ok(())
}

fn sketch(args: SketchArgs) -> CliResult {
    let (f, _) = read_input(&args.input)?;
    let mut opts = TraceOptions::default();
    if let Some(d) = args.density {
        opts.density = d;
    }
    let lines = trace_streamlines(&f, &opts)?;
    let img = rasterize_sketch(&lines, f.width(), f.height());
    write_pgm(&img.to_gray(), &args.out)?;
    if let Some(path) = &args.strokes {
        write_text(path, &format_strokes(&streamlines_to_strokes(&lines, f.width(), f.height())))?;
    }
    println!("{} streamlines, coverage {}", lines.len(), format_sig6(img.coverage()));
    Ok(())
}

fn generate(args: GenerateArgs) -> CliResult {
    let strokes = match &args.strokes {
        Some(path) => Some(parse_strokes(&read_text(path)?)?),
        None => None,
    };
    let image = match (&args.sketch, &strokes) {
        (Some(path), _) => SketchImage::from_gray(&read_pgm(path)?)?,
        (None, Some(s)) => rasterize_strokes(s),
        (None, None) => return Err(usage("give --sketch or --strokes")),
    };
    let field = sketch_to_field_baseline(&image, strokes.as_deref(), args.width, args.height)?;
    let precision = if args.f64 { Precision::F64 } else { Precision::F32 };
    write_field_with(&field, &args.out, precision)?;
    Ok(())
}

fn metrics(args: MetricsArgs) -> CliResult {
    let (a, _) = read_input(&args.a)?;
    let (b, _) = read_input(&args.b)?;
    let selected = if args.metrics.is_empty() {
        Metric::ALL.to_vec()
    } else {
        args.metrics
            .iter()
            .map(|m| m.trim().parse::<Metric>().map_err(usage))
            .collect::<CliResult<Vec<_>>>()?
    };
    print!("{}", evaluate(&a, &b, &selected)?.to_kv());
    Ok(())
}

fn parse_inflow(spec: &str) -> CliResult<Inflow> {
    let nums = spec
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| usage(format!("inflow `{spec}` is not a comma list of numbers")))?;
    let inflow = match nums.as_slice() {
        [cx, cy, r, vx, vy] => Inflow {
            center: [*cx, *cy],
            radius: *r,
            velocity: [*vx, *vy],
            density: 1.0,
        },
        [cx, cy, r, vx, vy, d] => Inflow {
            center: [*cx, *cy],
            radius: *r,
            velocity: [*vx, *vy],
            density: *d,
        },
        _ => return Err(usage(format!("inflow `{spec}` needs cx,cy,radius,vx,vy[,density]"))),
    };
    inflow.validate()?;
    Ok(inflow)
}

fn simulate(args: SimulateArgs) -> CliResult {
    if args.every == 0 {
        return Err(usage("--every must be at least 1"));
    }
    if !(args.density_scale > 0.0) {
        return Err(usage("--density-scale must be positive"));
    }
    let (f, _) = read_input(&args.input)?;
    let force = f.scale(args.force_scale);
    let inflows = args.inflows.iter().map(|s| parse_inflow(s)).collect::<CliResult<Vec<_>>>()?;
    create_dir(&args.out)?;
    let mut state = SmokeState::still(f.width(), f.height())?;
    let mut worst = 0.0f64;
    let mut written = 0;
    for step in 1..=args.steps {
        state = step_smoke(&state, &force, args.dt, &inflows)?;
        worst = worst.max(cs(&state.velocity));
        if step % args.every == 0 {
            write_pgm(
                &density_frame(&state.density, args.density_scale),
                args.out.join(format!("density-{step:05}.pgm")),
            )?;
            if args.velocity {
                write_field_with(
                    &state.velocity,
                    args.out.join(format!("velocity-{step:05}.vf2")),
                    Precision::F64,
                )?;
            }
            written += 1;
        }
    }
    println!("frames={written}");
    println!("max_cs={}", format_sig6(worst));
    Ok(())
}

fn serve(args: ServeArgs) -> CliResult {
    let config = ServiceConfig {
        session_ttl: Duration::from_secs(args.session_ttl),
        persist_dir: args.persist_dir,
        provider: args.provider,
        provider_timeout: Duration::from_secs(args.provider_timeout),
        hhd: HhdOptions {
            solve: SolveOptions::with_tolerance(args.tolerance),
            ..HhdOptions::default()
        },
        ..ServiceConfig::default()
    };
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure {
        class: "Io",
        message: e.to_string(),
    })?;
    let addr = SocketAddr::new(args.host, args.port);
    runtime
        .block_on(hodgeflow_service::serve(config, addr))
        .map_err(|e| Failure {
            class: "Io",
            message: e.to_string(),
        })
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Dataset(a) => dataset(a),
        Command::Decompose(a) => decompose(a),
        Command::Edit(a) => edit(a),
        Command::Sketch(a) => sketch(a),
        Command::Generate(a) => generate(a),
        Command::Metrics(a) => metrics(a),
        Command::Simulate(a) => simulate(a),
        Command::Serve(a) => serve(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error: Usage: {first}");
            return ExitCode::from(2);
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}: {}", f.class, f.message.replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
