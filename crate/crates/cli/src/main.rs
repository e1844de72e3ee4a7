use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use wigner_ctx::hvm;
use wigner_ctx::measurement::{self, uniform_edges, QuadratureLabel};
use wigner_ctx::qcompile::{self, CircuitPlan, LabelExpr};
use wigner_ctx::states::{self, CatParity, GaussianState};
use wigner_ctx::wigner::{self, Axis, GridSpec};
use wigner_ctx::{Complex64, Error, LagrangianSubspace, Result, StateHandle};

/// Quadrature contextuality toolkit: states, Wigner functions, verdicts,
/// hidden-variable models and measurement compilation.
#[derive(Parser)]
#[command(name = "wigner-ctx", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a state and save it as JSON.
    State(StateArgs),
    /// Wigner function on a grid, as CSV.
    Wigner(GridArgs),
    /// Negativity report of the Wigner function on a grid.
    Negativity(GridArgs),
    /// Contextual / noncontextual verdict from the sign of the Wigner function.
    Verdict(VerdictArgs),
    /// Outcome distribution of one quadrature, as CSV.
    QuadPdf(QuadPdfArgs),
    /// Joint distribution of a Lagrangian context, as JSON.
    ContextPdf(ContextPdfArgs),
    /// Draw linear value assignments from the hidden-variable model.
    HvmSample(HvmSampleArgs),
    /// Compare hidden-variable statistics with the quantum predictions.
    HvmCheck(HvmCheckArgs),
    /// Compile a quadrature expression into a measurement circuit.
    Compile(CompileArgs),
    /// Simulate homodyne shots of a compiled circuit.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct Output {
    /// Output file (written atomically); standard output if omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Vacuum,
    Thermal,
    Squeezed,
    TwoModeSqueezed,
    Number,
    Coherent,
    Cat,
    Tensor,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Backbone {
    Gaussian,
    Fock,
}

#[derive(Clone, Copy, ValueEnum)]
enum Parity {
    Even,
    Odd,
}

#[derive(Args)]
struct StateArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long, value_enum, default_value = "gaussian")]
    backbone: Backbone,
    #[arg(long, default_value_t = 1)]
    modes: usize,
    /// Fock cutoff per mode.
    #[arg(long, default_value_t = 30)]
    cutoff: usize,
    /// Squeezing parameter.
    #[arg(long, default_value_t = 0.0)]
    r: f64,
    /// Mean photon number of the thermal state.
    #[arg(long, default_value_t = 0.0)]
    nbar: f64,
    /// Real part of α (coherent and cat states).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    alpha: f64,
    /// Imaginary part of α (coherent states).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    alpha_im: f64,
    #[arg(long, value_enum, default_value = "even")]
    parity: Parity,
    /// Photon numbers per mode, comma separated.
    #[arg(long, value_delimiter = ',')]
    occupations: Vec<usize>,
    /// State files to tensor together, in order.
    #[arg(long = "input")]
    inputs: Vec<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct StateGrid {
    #[arg(long)]
    state: PathBuf,
    /// `min:max:count`, once for all axes or once per axis (q_1..q_M, p_1..p_M).
    #[arg(long = "grid", required = true, allow_hyphen_values = true)]
    grid: Vec<String>,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    input: StateGrid,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct VerdictArgs {
    #[command(flatten)]
    input: StateGrid,
    /// Negativity tolerance; default 1e-6·max|W|.
    #[arg(long)]
    tol: Option<f64>,
    #[command(flatten)]
    output: Output,
}

#[derive(Clone, Copy, ValueEnum)]
enum RouteArg {
    Wigner,
    Born,
}

#[derive(Args)]
struct QuadPdfArgs {
    #[arg(long)]
    state: PathBuf,
    /// Quadrature expression, e.g. "q1 + 2 p1 + 5 q2".
    #[arg(long, allow_hyphen_values = true)]
    label: String,
    /// Bins as `min:max:bins`.
    #[arg(long, default_value = "-8:8:201", allow_hyphen_values = true)]
    edges: String,
    #[arg(long, value_enum, default_value = "wigner")]
    route: RouteArg,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct ContextPdfArgs {
    #[arg(long)]
    state: PathBuf,
    /// Basis quadratures of the context, one expression per flag.
    #[arg(long = "row", required = true, allow_hyphen_values = true)]
    rows: Vec<String>,
    /// Bins per basis quadrature as `min:max:bins`.
    #[arg(long, default_value = "-8:8:201", allow_hyphen_values = true)]
    edges: String,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct HvmSampleArgs {
    #[command(flatten)]
    input: StateGrid,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct HvmCheckArgs {
    #[command(flatten)]
    input: StateGrid,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100_000)]
    count: usize,
    /// Labels to compare by KS distance.
    #[arg(long = "label", allow_hyphen_values = true)]
    labels: Vec<String>,
    #[arg(long, default_value = "-8:8:201", allow_hyphen_values = true)]
    edges: String,
    /// Basis quadratures of a context to compare by TV distance.
    #[arg(long = "row", allow_hyphen_values = true)]
    rows: Vec<String>,
    #[arg(long, default_value = "-7.5:7.5:10", allow_hyphen_values = true)]
    context_edges: String,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct CompileArgs {
    #[arg(long, allow_hyphen_values = true)]
    label: String,
    #[arg(long)]
    modes: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    state: PathBuf,
    #[arg(long)]
    plan: PathBuf,
    #[arg(long, default_value_t = 1000)]
    shots: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn load_state(path: &Path) -> Result<StateHandle> {
    StateHandle::from_json(&read(path)?)
}

/// Writes to a temporary file next to the target and renames it into place.
fn emit(output: &Output, text: &str) -> Result<()> {
    match &output.out {
        None => {
            let mut stdout = std::io::stdout().lock();
            let written = stdout.write_all(text.as_bytes()).and_then(|_| {
                if text.ends_with('\n') {
                    Ok(())
                } else {
                    stdout.write_all(b"\n")
                }
            });
            match written {
                // a reader that closed early (`| head`) is not an error
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                other => Ok(other?),
            }
        }
        Some(path) => {
            let dir = match path.parent() {
                Some(p) if !p.as_os_str().is_empty() => p,
                _ => Path::new("."),
            };
            let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
            tmp.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                tmp.write_all(b"\n")?;
            }
            tmp.persist(path).map_err(|e| Error::Io(e.error))?;
            Ok(())
        }
    }
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)?)
}

fn grid_spec(modes: usize, flags: &[String]) -> Result<GridSpec> {
    let axes: Vec<Axis> = flags.iter().map(|s| s.parse()).collect::<Result<_>>()?;
    GridSpec::from_axes(modes, &axes)
}

/// `min:max:bins` → bin edges.
fn parse_edges(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidInput(format!("edges `{s}` are not of the form min:max:bins"));
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) || n == 0 {
        return Err(bad());
    }
    Ok(uniform_edges(lo, hi, n))
}

fn context_of(rows: &[String], modes: usize) -> Result<LagrangianSubspace> {
    let pts: Vec<_> = rows
        .iter()
        .map(|r| qcompile::parse_quadrature_expr(r, modes).map(|l| l.vector().clone()))
        .collect::<Result<_>>()?;
    LagrangianSubspace::from_rows(&pts)
}

fn build_state(a: &StateArgs) -> Result<StateHandle> {
    let fock = a.backbone == Backbone::Fock;
    let repeat = |single: StateHandle| -> Result<StateHandle> {
        let mut s = single.clone();
        for _ in 1..a.modes {
            s = s.tensor(&single)?;
        }
        Ok(s)
    };
    if a.modes == 0 {
        return Err(Error::InvalidInput("--modes must be at least 1".into()));
    }
    match a.kind {
        Kind::Vacuum if fock => repeat(states::make_fock(&[0], &[a.cutoff])?),
        Kind::Vacuum => Ok(GaussianState::vacuum(a.modes).into()),
        Kind::Thermal if fock => repeat(states::thermal_fock(a.nbar, a.cutoff)?.into()),
        Kind::Thermal => Ok(GaussianState::thermal(a.modes, a.nbar)?.into()),
        Kind::Squeezed if fock => repeat(states::squeezed_vacuum_fock(a.r, a.cutoff)?.into()),
        Kind::Squeezed => Ok(GaussianState::squeezed_vacuum(a.modes, a.r).into()),
        Kind::TwoModeSqueezed if fock => {
            Err(Error::Unsupported("two-mode squeezed states are built on the Gaussian backbone".into()))
        }
        Kind::TwoModeSqueezed => Ok(GaussianState::two_mode_squeezed(a.r).into()),
        Kind::Number => {
            if a.occupations.is_empty() {
                return Err(Error::InvalidInput("--occupations is required for number states".into()));
            }
            states::make_fock(&a.occupations, &vec![a.cutoff; a.occupations.len()])
        }
        Kind::Coherent => {
            repeat(states::coherent_fock(Complex64::new(a.alpha, a.alpha_im), a.cutoff)?.into())
        }
        Kind::Cat => {
            let parity = match a.parity {
                Parity::Even => CatParity::Even,
                Parity::Odd => CatParity::Odd,
            };
            repeat(states::make_cat(a.alpha, parity, a.cutoff)?)
        }
        Kind::Tensor => {
            let (first, rest) =
                a.inputs.split_first().ok_or_else(|| Error::InvalidInput("--input is required for tensor".into()))?;
            let mut s = load_state(first)?;
            for p in rest {
                s = s.tensor(&load_state(p)?)?;
            }
            Ok(s)
        }
    }
}

#[derive(Serialize)]
struct LabelCheck {
    label: String,
    ks: f64,
    tv: f64,
}

#[derive(Serialize)]
struct ContextCheck {
    rows: Vec<String>,
    tv: f64,
}

#[derive(Serialize)]
struct HvmCheckReport {
    seed: u64,
    count: usize,
    sampler: &'static str,
    labels: Vec<LabelCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    context: Option<ContextCheck>,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::State(a) => emit(&a.output, &build_state(&a)?.to_json()?),
        Command::Wigner(a) => {
            let st = load_state(&a.input.state)?;
            let grid = wigner::wigner_grid(&st, &grid_spec(st.modes(), &a.input.grid)?)?;
            emit(&a.output, &grid.to_csv())
        }
        Command::Negativity(a) => {
            let st = load_state(&a.input.state)?;
            let grid = wigner::wigner_grid(&st, &grid_spec(st.modes(), &a.input.grid)?)?;
            emit(&a.output, &json(&wigner::negativity_report(&grid))?)
        }
        Command::Verdict(a) => {
            let st = load_state(&a.input.state)?;
            let v = hvm::verdict(&st, &grid_spec(st.modes(), &a.input.grid)?, a.tol)?;
            emit(&a.output, &v.to_json()?)
        }
        Command::QuadPdf(a) => {
            let st = load_state(&a.state)?;
            let label = qcompile::parse_quadrature_expr(&a.label, st.modes())?;
            let edges = parse_edges(&a.edges)?;
            let pdf = match a.route {
                RouteArg::Wigner => measurement::quadrature_pdf(&st, &label, &edges)?,
                RouteArg::Born => measurement::born_quadrature_pdf_oracle(&st, &label, &edges)?,
            };
            emit(&a.output, &pdf.to_csv())
        }
        Command::ContextPdf(a) => {
            let st = load_state(&a.state)?;
            let l = context_of(&a.rows, st.modes())?;
            let edges = vec![parse_edges(&a.edges)?; st.modes()];
            emit(&a.output, &measurement::context_distribution(&st, &l, &edges)?.to_json()?)
        }
        Command::HvmSample(a) => {
            let st = load_state(&a.input.state)?;
            let model = hvm::build_hvm(&st, &grid_spec(st.modes(), &a.input.grid)?)?;
            let draws = hvm::sample_assignment(&model, a.seed, a.count);
            emit(&a.output, &hvm::assignments_to_csv(st.modes(), &draws))
        }
        Command::HvmCheck(a) => {
            let st = load_state(&a.input.state)?;
            let m = st.modes();
            let model = hvm::build_hvm(&st, &grid_spec(m, &a.input.grid)?)?;
            let edges = parse_edges(&a.edges)?;
            let mut labels = Vec::new();
            for text in &a.labels {
                let x: QuadratureLabel = qcompile::parse_quadrature_expr(text, m)?;
                let emp = hvm::empirical_label(&model, &x, &edges, a.seed, a.count)?;
                let exact = measurement::quadrature_pdf(&st, &x, &edges)?;
                labels.push(LabelCheck {
                    label: LabelExpr(&x).to_string(),
                    ks: emp.ks_distance(&exact)?,
                    tv: emp.tv_distance(&exact)?,
                });
            }
            let context = if a.rows.is_empty() {
                None
            } else {
                let l = context_of(&a.rows, m)?;
                let ce = vec![parse_edges(&a.context_edges)?; m];
                let emp = hvm::empirical_context(&model, &l, &ce, a.seed, a.count)?;
                let exact = measurement::context_distribution(&st, &l, &ce)?;
                Some(ContextCheck { rows: a.rows.clone(), tv: emp.tv_distance(&exact, &ce)? })
            };
            let sampler = match model.sampler {
                hvm::Sampler::GaussianDensity { .. } => "gaussian_density",
                hvm::Sampler::GridDensity(_) => "grid_density",
            };
            emit(&a.output, &json(&HvmCheckReport { seed: a.seed, count: a.count, sampler, labels, context })?)
        }
        Command::Compile(a) => {
            let x = qcompile::parse_quadrature_expr(&a.label, a.modes)?;
            emit(&a.output, &qcompile::compile_measurement(&x)?.to_json()?)
        }
        Command::Simulate(a) => {
            let st = load_state(&a.state)?;
            let plan = CircuitPlan::from_json(&read(&a.plan)?)?;
            let shots = qcompile::simulate_homodyne(&st, &plan, a.shots, a.seed)?;
            emit(&a.output, &qcompile::samples_to_csv(&shots))
        }
    }
}

fn configure_threads() -> Result<()> {
    let n = match std::env::var("WIGNER_CTX_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::InvalidInput(format!("WIGNER_CTX_THREADS=`{v}` is not a thread count")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| wigner::normalization_self_test()).and_then(|_| run(cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_domain() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
