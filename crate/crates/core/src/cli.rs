//! Command-line driver: convergence studies, single interpolants, power
//! function maps and pseudodifferential evaluations.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::geometry::{candidate_grid, read_points_csv, Domain, Generator, Point, PointSet, SpherePoint};
use crate::harness::{run_study, StudyConfig, StudyMetric, TargetSpec, SLOPE_TOLERANCE};
use crate::interpolation::{build_interpolant, power_function, GramSystem, Interpolant};
use crate::io::{read_numeric_table, write_numeric_table};
use crate::kernels::{parse_num, parse_pairs, Kernel, KernelSpec, KeyValues, SphereSeriesKernel};
use crate::spectral::{PseudoDiff, PseudoDiffSymbol};

/// Exit code for a study whose fitted rates miss their predictions.
pub const EXIT_RATES_FAILED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "phispline", version, about = "Kernel interpolation on spheres and Euclidean domains")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Multi-level convergence study; writes a report (CSV or JSON).
    Study(StudyArgs),
    /// Builds one interpolant from data, or reloads one from coefficients.
    Interp(InterpArgs),
    /// Power function P(x, Y) on an evaluation grid.
    Power(PowerArgs),
    /// Applies a pseudodifferential operator to a sphere interpolant.
    Pseudo(PseudoArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// `sphere2`, `sphere:d=1`, `box:d=1`, `box:lo=0;0,hi=1;2`, `ball:d=2,r=1`
    #[arg(long)]
    pub domain: String,
    /// `powerlaw:tau=2,N_max=300`, `series:coeffs=1;0.5;0.25`,
    /// `matern:m=1,rho=0.1,s=2`, `wendland:k=1,rho=0.5`; `d` defaults to the domain's
    #[arg(long)]
    pub kernel: String,
    /// Output file (default: stdout)
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// `zonal:beta=5[,seed=0,pole=x;y;z]`, `bandlimited:degree=8`,
    /// `bump:k=1,rho=0.2,center=0.5`, `translate:center=0.43`
    #[arg(long)]
    pub target: String,
    /// Point counts, strictly increasing (comma-separated)
    #[arg(long, value_delimiter = ',', required = true)]
    pub levels: Vec<usize>,
    /// sup, l2, native-residual, pseudo-sup, pseudo-l2, sup-inner, synthetic-h2
    #[arg(long, value_delimiter = ',', default_value = "sup")]
    pub metrics: Vec<String>,
    /// Operator order for pseudo-* metrics
    #[arg(long, default_value_t = 0.5)]
    pub sigma_op: f64,
    /// fibonacci-sphere, uniform-grid or halton (default by domain)
    #[arg(long)]
    pub generator: Option<String>,
    #[arg(long)]
    pub eval_points: Option<usize>,
    #[arg(long)]
    pub fill_candidates: Option<usize>,
    #[arg(long)]
    pub quadrature_nodes: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Exit with status 2 if a fitted slope is below its prediction minus the tolerance
    #[arg(long)]
    pub assert_rates: bool,
    #[arg(long, default_value_t = SLOPE_TOLERANCE)]
    pub tolerance: f64,
    /// Print the resolved configuration as JSON and exit
    #[arg(long)]
    pub dump_config: bool,
}

#[derive(Debug, Args)]
pub struct InterpolantSource {
    /// CSV with columns `x0,...,value`
    #[arg(long, conflicts_with = "coeffs", required_unless_present = "coeffs")]
    pub data: Option<PathBuf>,
    /// Coefficient CSV written by `interp` (`x0,...,alpha`)
    #[arg(long)]
    pub coeffs: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InterpArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub source: InterpolantSource,
    /// Writes the JSON sidecar (kernel, condition estimate, residual) here
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
    /// Points CSV (`x0,...`) at which to evaluate the interpolant
    #[arg(long)]
    pub eval: Option<PathBuf>,
    /// Destination of the evaluated values (`x0,...,value`; default: stdout)
    #[arg(long, requires = "eval")]
    pub eval_output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Points CSV (`x0,...`) to evaluate on
    #[arg(long, conflicts_with = "grid_size")]
    pub grid: Option<PathBuf>,
    /// Size of the built-in evaluation grid over the domain
    #[arg(long, default_value_t = 2000)]
    pub grid_size: usize,
}

#[derive(Debug, Args)]
pub struct PowerArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Centers CSV (`x0,...`); may have no rows
    #[arg(long)]
    pub centers: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
pub struct PseudoArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub source: InterpolantSource,
    /// `s=0.5`, `identity` or `values=l0;l1;...`
    #[arg(long)]
    pub symbol: String,
    #[command(flatten)]
    pub grid: GridArgs,
}

/// Parses `args` and runs; returns the process exit code.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                1
            } else {
                let _ = write!(out, "{text}");
                0
            };
        }
    };
    match execute(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn execute(cmd: Command, out: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Study(a) => cmd_study(a, out),
        Command::Interp(a) => cmd_interp(a, out).map(|_| 0),
        Command::Power(a) => cmd_power(a, out).map(|_| 0),
        Command::Pseudo(a) => cmd_pseudo(a, out).map(|_| 0),
    }
}

/// Parses `sphere2`, `sphere:d=2`, `box:d=1`, `box:lo=..,hi=..` or `ball:d=2,r=1[,center=..]`.
pub fn parse_domain(text: &str) -> Result<Domain<f64>> {
    let text = text.trim();
    if let Some(d) = text.strip_prefix("sphere").filter(|r| !r.is_empty() && r.chars().all(|c| c.is_ascii_digit())) {
        return Domain::sphere(parse_num(d, "domain")?);
    }
    let pairs = parse_pairs(text, "domain")?;
    let ctx = "domain spec";
    let mut kv = KeyValues::new(&pairs, ctx);
    let kind = kv.take("kind").unwrap_or_default();
    let vector = |v: Option<String>, key: &str| -> Result<Option<Vec<f64>>> {
        v.map(|v| v.split(';').map(|c| parse_num::<f64>(c.trim(), key)).collect()).transpose()
    };
    let domain = match kind.as_str() {
        "sphere" => Domain::sphere(kv.optional("d")?.unwrap_or(2))?,
        "box" => {
            let lo = vector(kv.take("lo"), "lo")?;
            let hi = vector(kv.take("hi"), "hi")?;
            let d: Option<usize> = kv.optional("d")?;
            match (lo, hi) {
                (Some(lo), Some(hi)) => Domain::boxed(lo, hi)?,
                (None, None) => Domain::unit_box(d.unwrap_or(1))?,
                _ => {
                    return Err(Error::Parse {
                        context: ctx.into(),
                        message: "box needs both `lo` and `hi`, or neither".into(),
                    })
                }
            }
        }
        "ball" => {
            let d: usize = kv.optional("d")?.unwrap_or(2);
            let center = vector(kv.take("center"), "center")?.unwrap_or_else(|| vec![0.0; d]);
            Domain::ball(center, kv.optional("r")?.unwrap_or(1.0))?
        }
        other => {
            return Err(Error::UnknownKey {
                key: other.to_string(),
                context: "domain kind (expected sphere<d>, box, ball)".into(),
            })
        }
    };
    kv.finish()?;
    Ok(domain)
}

fn parse_kernel(text: &str, domain: &Domain<f64>) -> Result<KernelSpec> {
    let spec = KernelSpec::parse(text, Some(domain.dim()))?;
    if spec.is_sphere() != matches!(domain, Domain::Sphere { .. }) {
        return Err(Error::InvalidArgument(format!("kernel `{spec}` does not match the domain")));
    }
    Ok(spec)
}

/// Parses `s=0.5`, `identity` or `values=l0;l1;...` for degrees `0..=n_max`.
pub fn parse_symbol(text: &str, d: usize, n_max: usize) -> Result<PseudoDiffSymbol<f64>> {
    if text.trim() == "identity" {
        return Ok(PseudoDiffSymbol::identity(n_max));
    }
    let pairs = parse_pairs(text, "symbol")?;
    let mut kv = KeyValues::new(&pairs, "symbol");
    let symbol = if let Some(s) = kv.optional::<f64>("s")? {
        PseudoDiffSymbol::assumption(d, s, n_max)?
    } else if let Some(v) = kv.take("values") {
        let values = v
            .split(';')
            .map(|c| parse_num::<f64>(c.trim(), "values"))
            .collect::<Result<Vec<_>>>()?;
        PseudoDiffSymbol::explicit(values)?
    } else {
        return Err(Error::Parse {
            context: "symbol".into(),
            message: "expected `s=<order>`, `identity` or `values=...`".into(),
        });
    };
    kv.finish()?;
    Ok(symbol)
}

fn with_output<F>(path: &Option<PathBuf>, out: &mut dyn Write, f: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            f(&mut w)?;
            w.flush()?;
            Ok(())
        }
        None => f(out),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| {
        Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?))
}

pub fn cmd_study(a: StudyArgs, out: &mut dyn Write) -> Result<i32> {
    let domain = parse_domain(&a.common.domain)?;
    let kernel = parse_kernel(&a.common.kernel, &domain)?;
    let target = TargetSpec::parse(&a.target, domain.dim())?;
    let mut cfg = StudyConfig::new(domain, kernel, target, a.levels);
    cfg.metrics = a
        .metrics
        .iter()
        .map(|m| m.trim().parse::<StudyMetric>())
        .collect::<Result<_>>()?;
    cfg.sigma_op = a.sigma_op;
    cfg.seed = a.seed;
    if let Some(g) = &a.generator {
        cfg.generator = g.parse::<Generator>()?;
    }
    if let Some(n) = a.eval_points {
        cfg.eval_points = n;
    }
    if let Some(n) = a.fill_candidates {
        cfg.fill_candidates = n;
    }
    if let Some(n) = a.quadrature_nodes {
        cfg.quadrature_nodes = n;
    }
    cfg.validate()?;
    if a.dump_config {
        with_output(&a.common.output, out, |w| {
            serde_json::to_writer_pretty(&mut *w, &cfg)?;
            writeln!(w)?;
            Ok(())
        })?;
        return Ok(0);
    }
    let report = run_study(&cfg)?;
    with_output(&a.common.output, out, |w| match a.format {
        Format::Csv => report.write_csv(w),
        Format::Json => report.write_json(w),
    })?;
    if a.assert_rates && report.rate_checks(a.tolerance).iter().any(|c| !c.passed) {
        return Ok(EXIT_RATES_FAILED);
    }
    Ok(0)
}

/// Reads `x0,...,value`.
pub fn read_data_csv<P: Point<f64>>(path: &Path) -> Result<(PointSet<P>, Vec<f64>)> {
    let table = read_numeric_table::<f64, _>(open(path)?)?;
    let vcol = table.column("value").ok_or_else(|| Error::Parse {
        context: format!("data CSV {}", path.display()),
        message: "missing `value` column".into(),
    })?;
    split_table(table, vcol, path)
}

/// Reads `x0,...,alpha` as written by [`Interpolant::write_csv`].
pub fn read_coeffs_csv<P: Point<f64>>(path: &Path) -> Result<(PointSet<P>, Vec<f64>)> {
    let table = read_numeric_table::<f64, _>(open(path)?)?;
    let acol = table.column("alpha").ok_or_else(|| Error::Parse {
        context: format!("coefficient CSV {}", path.display()),
        message: "missing `alpha` column".into(),
    })?;
    split_table(table, acol, path)
}

fn split_table<P: Point<f64>>(
    table: crate::io::NumericTable<f64>,
    value_col: usize,
    path: &Path,
) -> Result<(PointSet<P>, Vec<f64>)> {
    let coord_cols: Vec<usize> = (0..)
        .map_while(|i| table.column(&format!("x{i}")))
        .collect();
    if coord_cols.is_empty() || coord_cols.len() + 1 != table.headers.len() {
        return Err(Error::Parse {
            context: format!("CSV {}", path.display()),
            message: "expected columns x0,...,x<m-1> plus one value column".into(),
        });
    }
    let mut points = Vec::with_capacity(table.rows.len());
    let mut values = Vec::with_capacity(table.rows.len());
    for row in &table.rows {
        points.push(P::from_coords(coord_cols.iter().map(|&c| row[c]).collect())?);
        values.push(row[value_col]);
    }
    Ok((PointSet::new(points)?, values))
}

fn load_interpolant<K>(kernel: K, src: &InterpolantSource) -> Result<Interpolant<f64, K>>
where
    K: Kernel<f64>,
{
    if let Some(path) = &src.data {
        let (y, v) = read_data_csv::<K::Point>(path)?;
        build_interpolant(kernel, y, &v)
    } else if let Some(path) = &src.coeffs {
        let (y, a) = read_coeffs_csv::<K::Point>(path)?;
        Interpolant::from_coefficients(kernel, y, a)
    } else {
        Err(Error::InvalidArgument("either --data or --coeffs is required".into()))
    }
}

fn write_values<P: Point<f64>>(w: &mut dyn Write, points: &[P], values: &[f64], name: &str, dim: usize) -> Result<()> {
    let mut header: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
    header.push(name.into());
    let rows = points.iter().zip(values).map(|(p, &v)| {
        let mut r = p.coords().to_vec();
        r.push(v);
        r
    });
    write_numeric_table(w, &header, rows)
}

fn load_grid<P: Point<f64>>(domain: &Domain<f64>, g: &GridArgs) -> Result<Vec<P>> {
    match &g.grid {
        Some(path) => Ok(read_points_csv::<f64, P, _>(open(path)?)?.into_points()),
        None => candidate_grid(domain, g.grid_size),
    }
}

pub fn cmd_interp(a: InterpArgs, out: &mut dyn Write) -> Result<()> {
    let domain = parse_domain(&a.common.domain)?;
    let spec = parse_kernel(&a.common.kernel, &domain)?;
    if spec.is_sphere() {
        interp_with(spec.build_sphere::<f64>()?, &a, out)
    } else {
        interp_with(spec.build_euclid::<f64>()?, &a, out)
    }
}

fn interp_with<K: Kernel<f64>>(kernel: K, a: &InterpArgs, out: &mut dyn Write) -> Result<()> {
    let s = load_interpolant(kernel, &a.source)?;
    if !s.satisfies_conditions() {
        return Err(Error::InvalidArgument(format!(
            "interpolation residual {:e} exceeds tolerance",
            s.max_residual()
        )));
    }
    if let Some(path) = &a.sidecar {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, &s.sidecar())?;
        writeln!(w)?;
        w.flush()?;
    }
    let dim = s.kernel().ambient_dim();
    if let Some(eval) = &a.eval {
        let pts = read_points_csv::<f64, K::Point, _>(open(eval)?)?.into_points();
        let vals: Vec<f64> = pts.iter().map(|x| s.evaluate(x)).collect();
        with_output(&a.eval_output, out, |w| write_values(w, &pts, &vals, "value", dim))?;
        if a.common.output.is_none() && a.eval_output.is_none() {
            // stdout already carries the evaluated values
            return Ok(());
        }
    }
    with_output(&a.common.output, out, |w| s.write_csv(w))
}

pub fn cmd_power(a: PowerArgs, out: &mut dyn Write) -> Result<()> {
    let domain = parse_domain(&a.common.domain)?;
    let spec = parse_kernel(&a.common.kernel, &domain)?;
    if spec.is_sphere() {
        power_with(spec.build_sphere::<f64>()?, &domain, &a, out)
    } else {
        power_with(spec.build_euclid::<f64>()?, &domain, &a, out)
    }
}

fn power_with<K: Kernel<f64>>(kernel: K, domain: &Domain<f64>, a: &PowerArgs, out: &mut dyn Write) -> Result<()> {
    let y = read_points_csv::<f64, K::Point, _>(open(&a.centers)?)?;
    let grid = load_grid::<K::Point>(domain, &a.grid)?;
    let vals = if y.is_empty() {
        grid.iter().map(|x| power_function(&kernel, &y, x)).collect::<Result<Vec<_>>>()?
    } else {
        let system = GramSystem::new(kernel.clone(), y)?;
        grid.iter().map(|x| system.power_function(x)).collect()
    };
    with_output(&a.common.output, out, |w| write_values(w, &grid, &vals, "power", domain.ambient_dim()))
}

pub fn cmd_pseudo(a: PseudoArgs, out: &mut dyn Write) -> Result<()> {
    let domain = parse_domain(&a.common.domain)?;
    let spec = parse_kernel(&a.common.kernel, &domain)?;
    if !spec.is_sphere() {
        return Err(Error::InvalidArgument("`pseudo` needs a sphere kernel".into()));
    }
    let kernel: SphereSeriesKernel<f64> = spec.build_sphere()?;
    let symbol = parse_symbol(&a.symbol, kernel.d(), kernel.n_max())?;
    let s = load_interpolant(kernel, &a.source)?;
    let applied = (&s).apply_pseudodiff(&symbol)?;
    let grid: Vec<SpherePoint<f64>> = load_grid(&domain, &a.grid)?;
    let vals: Vec<f64> = grid.iter().map(|x| applied.eval(x)).collect();
    with_output(&a.common.output, out, |w| write_values(w, &grid, &vals, "value", domain.ambient_dim()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("phispline").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn domain_parsing() {
        assert_eq!(parse_domain("sphere2").unwrap(), Domain::sphere(2).unwrap());
        assert_eq!(parse_domain("sphere:d=1").unwrap(), Domain::sphere(1).unwrap());
        assert_eq!(parse_domain("box:d=2").unwrap(), Domain::unit_box(2).unwrap());
        assert_eq!(
            parse_domain("box:lo=0;-1,hi=1;1").unwrap(),
            Domain::boxed(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap()
        );
        assert!(matches!(parse_domain("torus"), Err(Error::UnknownKey { .. })));
        assert!(parse_domain("box:d=1,size=3").is_err());
    }

    #[test]
    fn symbol_parsing() {
        assert_eq!(parse_symbol("identity", 2, 3).unwrap().values, vec![1.0; 4]);
        assert_eq!(parse_symbol("s=0.5", 2, 3).unwrap().values, vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(parse_symbol("values=1;2", 2, 3).unwrap().values, vec![1.0, 2.0]);
        assert!(parse_symbol("order=1", 2, 3).is_err());
    }

    #[test]
    fn malformed_kernel_names_the_key() {
        let (code, _, err) = run_capture(&[
            "study", "--domain", "sphere2", "--kernel", "powrlaw", "--target", "zonal:beta=5", "--levels", "10,20,40",
        ]);
        assert_eq!(code, 1);
        assert!(err.contains("powrlaw"), "{err}");
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = run_capture(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("study"));
    }

    #[test]
    fn dump_config_echoes() {
        let (code, out, _) = run_capture(&[
            "study", "--domain", "box:d=1", "--kernel", "matern:m=1,rho=0.1,s=2", "--target", "bump:k=1",
            "--levels", "9,17,33", "--dump-config",
        ]);
        assert_eq!(code, 0);
        let cfg: StudyConfig = serde_json::from_str(&out).unwrap();
        assert_eq!(cfg.levels, vec![9, 17, 33]);
    }
}
