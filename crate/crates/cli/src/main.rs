use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use trop_ampere::cconvex::{ctransform_discrete, ctransform_exact, DiscreteFn, MaxAffineFn};
use trop_ampere::fixtures::{run_all, run_fixture, FixtureRow};
use trop_ampere::geometry::{BaryPoint, Dim, Side};
use trop_ampere::ma_operator::{cells_from_weights, envelope_atoms, trop_ma, Backend, CellComplex, MaOptions};
use trop_ampere::measures::AtomicMeasure;
use trop_ampere::solver::{solve, Method, SolveConfig};

const THREADS_VAR: &str = "TROP_AMPERE_THREADS";

#[derive(Parser)]
#[command(name = "trop-ampere", version, about = "Symmetric tropical Monge-Ampere measures and solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the Monge-Ampere equation for an atomic target on B.
    Solve(SolveArgs),
    /// Monge-Ampere measure of an envelope on B.
    Ma(MaArgs),
    /// c-transform of a function, evaluated at points of the opposite side.
    Ctransform(QueryArgs),
    /// Evaluate a function at points of its own side.
    Eval(QueryArgs),
    /// Cell masses of the decomposition of A defined by atoms and weights.
    Cells(CellsArgs),
    /// Recompute the built-in reference examples and compare with their known values.
    PaperExamples(ExamplesArgs),
    /// Write cell polygons and the measure as CSV for plotting (d <= 2).
    ExportPlot(PlotArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Exact,
    Mc,
}

#[derive(Args)]
struct BackendArgs {
    #[arg(long, value_enum, default_value = "exact")]
    backend: BackendKind,
    /// Total number of Monte Carlo samples.
    #[arg(long, default_value_t = 1_000_000)]
    mc_samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl BackendArgs {
    fn backend(&self) -> Backend {
        match self.backend {
            BackendKind::Exact => Backend::Exact,
            BackendKind::Mc => Backend::MonteCarlo { samples: self.mc_samples, seed: self.seed },
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodKind {
    Newton,
    Gradient,
}

#[derive(Args)]
struct SolveArgs {
    /// Expected dimension of the target; checked against the file.
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    target: PathBuf,
    /// Largest allowed deviation of a cell mass from its target weight.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long, value_enum, default_value = "newton")]
    method: MethodKind,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MaArgs {
    #[arg(long = "fn")]
    function: PathBuf,
    /// Compute the pushforward even if the function is not G-invariant.
    #[arg(long)]
    allow_nonsymmetric: bool,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct QueryArgs {
    /// An envelope (`generators`) or a discrete function (`support`, `values`).
    #[arg(long = "fn")]
    function: PathBuf,
    /// JSON array of barycentric weight vectors.
    #[arg(long)]
    queries: PathBuf,
    /// Output file; standard output if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CellsArgs {
    /// JSON array of barycentric weight vectors of points of B.
    #[arg(long)]
    atoms: PathBuf,
    /// JSON array with one weight per atom.
    #[arg(long)]
    weights: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExamplesArgs {
    /// Run a single example; all of them if omitted.
    #[arg(long)]
    name: Option<String>,
    /// Dimension for the dimension-generic examples.
    #[arg(long)]
    dim: Option<usize>,
    /// Also write the rows as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// An envelope on B; its candidate atoms and values define the cells.
    #[arg(long = "fn", conflicts_with_all = ["atoms", "weights"])]
    function: Option<PathBuf>,
    #[arg(long, requires = "weights")]
    atoms: Option<PathBuf>,
    #[arg(long, requires = "atoms")]
    weights: Option<PathBuf>,
    /// Directory receiving `cells.csv` and `measure.csv`.
    #[arg(long)]
    out_dir: PathBuf,
}

/// Either form accepted by `--fn`.
#[derive(Deserialize)]
#[serde(untagged)]
enum FnFile {
    Envelope(MaxAffineFn),
    Discrete(DiscreteFn),
}

impl FnFile {
    fn side(&self) -> Side {
        match self {
            FnFile::Envelope(f) => f.side(),
            FnFile::Discrete(f) => f.side(),
        }
    }
}

#[derive(Serialize)]
struct QueryOutput {
    side: Side,
    queries: Vec<Vec<f64>>,
    values: Vec<f64>,
}

/// Failure of a reference comparison, as opposed to a usage or I/O error.
struct Mismatch;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|_| run(cli.command)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(Mismatch)) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_VAR) else { return Ok(()) };
    let n: usize = raw.trim().parse().with_context(|| format!("{THREADS_VAR} must be a positive integer, got `{raw}`"))?;
    if n == 0 {
        bail!("{THREADS_VAR} must be a positive integer, got 0");
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    Ok(())
}

fn run(command: Command) -> Result<std::result::Result<(), Mismatch>> {
    match command {
        Command::Solve(a) => run_solve(a),
        Command::Ma(a) => run_ma(a).map(Ok),
        Command::Ctransform(a) => run_query(a, true).map(Ok),
        Command::Eval(a) => run_query(a, false).map(Ok),
        Command::Cells(a) => run_cells(a).map(Ok),
        Command::PaperExamples(a) => run_examples(a),
        Command::ExportPlot(a) => run_plot(a).map(Ok),
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn points(side: Side, raw: Vec<Vec<f64>>) -> Result<Vec<BaryPoint>> {
    raw.into_iter()
        .enumerate()
        .map(|(k, w)| BaryPoint::new(side, w).with_context(|| format!("point {k}")))
        .collect()
}

fn run_solve(a: SolveArgs) -> Result<std::result::Result<(), Mismatch>> {
    let target: AtomicMeasure = read_json(&a.target)?;
    if let Some(d) = a.dim {
        let expected = Dim::new(d)?;
        match target.dim() {
            Some(found) if found != expected => bail!("target has dimension {found}, but --dim {d} was given"),
            _ => {}
        }
    }
    let mut cfg = SolveConfig {
        tol: a.tol,
        backend: a.backend.backend(),
        method: match a.method {
            MethodKind::Newton => Method::Newton,
            MethodKind::Gradient => Method::Gradient,
        },
        ..Default::default()
    };
    if let Some(m) = a.max_iter {
        cfg.max_iter = m;
    }
    let r = solve(&target, &cfg)?;
    write_json(&a.out, &r)?;
    eprintln!("residual {:e} after {} iterations", r.residual, r.iterations);
    if !r.converged {
        eprintln!("solve did not reach tolerance {:e}", cfg.tol);
        return Ok(Err(Mismatch));
    }
    Ok(Ok(()))
}

fn run_ma(a: MaArgs) -> Result<()> {
    let psi: MaxAffineFn = read_json(&a.function)?;
    let r = trop_ma(&psi, MaOptions { backend: a.backend.backend(), allow_nonsymmetric: a.allow_nonsymmetric })?;
    write_json(&a.out, &r)
}

fn run_query(a: QueryArgs, transform: bool) -> Result<()> {
    let f: FnFile = read_json(&a.function)?;
    let raw: Vec<Vec<f64>> = read_json(&a.queries)?;
    let side = if transform { f.side().opposite() } else { f.side() };
    let qs = points(side, raw)?;
    let values: Vec<f64> = match (&f, transform) {
        (FnFile::Envelope(g), true) => {
            let gc = ctransform_exact(g)?;
            qs.iter().map(|q| gc.eval(q)).collect::<trop_ampere::Result<_>>()?
        }
        (FnFile::Discrete(u), true) => {
            let uc = ctransform_discrete(u)?;
            qs.iter().map(|q| uc.eval(q)).collect::<trop_ampere::Result<_>>()?
        }
        (FnFile::Envelope(g), false) => qs.iter().map(|q| g.eval(q)).collect::<trop_ampere::Result<_>>()?,
        (FnFile::Discrete(u), false) => qs
            .iter()
            .map(|q| {
                u.support()
                    .iter()
                    .position(|p| p.dist_inf(q) <= 1e-9)
                    .map(|k| u.values()[k])
                    .with_context(|| format!("{:?} is not in the support of the discrete function", q.weights()))
            })
            .collect::<Result<_>>()?,
    };
    let out = QueryOutput { side, queries: qs.iter().map(|q| q.weights().to_vec()).collect(), values };
    match a.out {
        Some(p) => write_json(&p, &out),
        None => {
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(())
        }
    }
}

fn run_cells(a: CellsArgs) -> Result<()> {
    let atoms = points(Side::B, read_json(&a.atoms)?)?;
    let g: Vec<f64> = read_json(&a.weights)?;
    let cells = cells_from_weights(&atoms, &g, a.backend.backend())?;
    let mut w = csv::Writer::from_path(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let n = cells.dim.n();
    let mut header = vec!["atom".to_string()];
    header.extend((0..n).map(|k| format!("w{k}")));
    header.extend(["g", "mass", "closed_mass", "standard_error"].map(String::from));
    w.write_record(&header)?;
    for (k, atom) in atoms.iter().enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(atom.weights().iter().map(|x| x.to_string()));
        row.push(g[k].to_string());
        row.push(cells.masses[k].to_string());
        row.push(cells.closed_masses[k].to_string());
        row.push(cells.standard_errors[k].to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn print_table(rows: &[FixtureRow]) -> std::io::Result<()> {
    let mut out = std::io::stdout().lock();
    let width = rows.iter().map(|r| r.fixture.len() + r.quantity.len() + 2).max().unwrap_or(0);
    writeln!(out, "{:<width$}  {:>22}  {:>22}  {:>9}  result", "quantity", "expected", "computed", "tolerance")?;
    for r in rows {
        let label = format!("{}: {}", r.fixture, r.quantity);
        let status = match (r.pass, r.informational) {
            (true, _) => "pass",
            (false, true) => "info",
            (false, false) => "FAIL",
        };
        writeln!(out, "{label:<width$}  {:>22.15}  {:>22.15}  {:>9.1e}  {status}", r.expected, r.computed, r.tolerance)?;
    }
    out.flush()
}

fn run_examples(a: ExamplesArgs) -> Result<std::result::Result<(), Mismatch>> {
    let dim = a.dim.map(Dim::new).transpose()?;
    let rows = match &a.name {
        Some(name) => run_fixture(name, dim)?,
        None => run_all(dim)?,
    };
    match print_table(&rows) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
        other => other.context("writing the table")?,
    }
    if let Some(p) = &a.json {
        write_json(p, &rows)?;
    }
    let failed = rows.iter().filter(|r| !r.ok()).count();
    if failed > 0 {
        eprintln!("{failed} of {} rows failed", rows.len());
        return Ok(Err(Mismatch));
    }
    Ok(Ok(()))
}

/// Polygon vertices of a piece in cyclic order (the two points of an edge piece for d = 1).
fn ordered_vertices(face: usize, vertices: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = vertices[0].len();
    if n == 3 {
        return vertices.to_vec();
    }
    let free: Vec<usize> = (0..n).filter(|&k| k != face).take(2).collect();
    let cx = vertices.iter().map(|v| v[free[0]]).sum::<f64>() / vertices.len() as f64;
    let cy = vertices.iter().map(|v| v[free[1]]).sum::<f64>() / vertices.len() as f64;
    let mut out = vertices.to_vec();
    out.sort_by(|p, q| {
        let ap = (p[free[1]] - cy).atan2(p[free[0]] - cx);
        let aq = (q[free[1]] - cy).atan2(q[free[0]] - cx);
        ap.total_cmp(&aq)
    });
    out
}

fn write_plot(dir: &Path, cells: &CellComplex, measure: &AtomicMeasure) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let n = cells.dim.n();
    let path = dir.join("cells.csv");
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
    let mut header = vec!["piece", "atom", "face", "vertex"].into_iter().map(String::from).collect::<Vec<_>>();
    header.extend((0..n).map(|k| format!("a{k}")));
    w.write_record(&header)?;
    for (p, piece) in cells.pieces.iter().enumerate() {
        for (v, vert) in ordered_vertices(piece.face, &piece.vertices).iter().enumerate() {
            let mut row = vec![p.to_string(), piece.atoms[0].to_string(), piece.face.to_string(), v.to_string()];
            row.extend(vert.iter().map(|x| x.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    let path = dir.join("measure.csv");
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
    let mut header: Vec<String> = (0..n).map(|k| format!("b{k}")).collect();
    header.push("weight".into());
    w.write_record(&header)?;
    for atom in measure.atoms() {
        let mut row: Vec<String> = atom.point.weights().iter().map(|x| x.to_string()).collect();
        row.push(atom.weight.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn run_plot(a: PlotArgs) -> Result<()> {
    let (atoms, g) = match (&a.function, &a.atoms, &a.weights) {
        (Some(f), _, _) => envelope_atoms(&read_json::<MaxAffineFn>(f)?)?,
        (None, Some(at), Some(wt)) => (points(Side::B, read_json(at)?)?, read_json::<Vec<f64>>(wt)?),
        _ => bail!("export-plot needs --fn or both --atoms and --weights"),
    };
    let dim = atoms.first().context("no atoms to plot")?.dim();
    if dim.d() > 2 {
        bail!("plot export is limited to d <= 2, got d = {dim}");
    }
    let cells = cells_from_weights(&atoms, &g, Backend::Exact)?;
    let measure = AtomicMeasure::new(
        Side::B,
        atoms
            .iter()
            .zip(&cells.masses)
            .filter(|(_, &m)| m > 0.0)
            .map(|(p, &m)| trop_ampere::measures::Atom { point: p.clone(), weight: m })
            .collect(),
    )?;
    write_plot(&a.out_dir, &cells, &measure)
}
