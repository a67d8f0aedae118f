//! Command-line front end. Arguments can also come from a `key = value`
//! config file whose keys are the long flag names; flags given on the
//! command line win.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cell_solver::{solve_with, BoundaryProblem, CellSolution, SolveOptions, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::geometry::CellConfig;
use crate::harmonic_basis::BackgroundField;
use crate::verify::{check_rates, default_grid, run_claim, CheckResult, RateFit, SuiteSpec, Tolerances, CLAIMS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CHECK: i32 = 3;

pub const CSV_HEADER: &str = "check,eps,delta,N,measured,expected,tol,pass,seconds";

#[derive(Debug, Parser)]
#[command(name = "tworow", version, about = "Periodic two-column perfect-conductor solver and its verification suite")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one configuration and write the solution document.
    Solve(CommonArgs),
    /// Run one claim over the sweep grids.
    Sweep(CommonArgs),
    /// Run the verification suite.
    Verify(CommonArgs),
    /// Print the summary of a previous `verify` or `sweep` run.
    Report(CommonArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
pub enum Kind {
    Solve,
    Sweep,
    Verify,
    Report,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// `key = value` file mirroring the long flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Half-width of the sampling window.
    #[arg(long)]
    pub m: Option<f64>,
    /// Background field, e.g. `x`, `x+2y`, `y + mode(1,0.2,0,0)`.
    #[arg(long = "H")]
    pub field: Option<String>,
    /// Multipole truncation order.
    #[arg(long = "N")]
    pub order: Option<usize>,
    /// Collocation points per circle.
    #[arg(long = "M")]
    pub points: Option<usize>,
    /// Row counts of the truncated arrays, comma separated.
    #[arg(long)]
    pub rows: Option<String>,
    /// Solve with the right column only.
    #[arg(long)]
    pub single_row: bool,
    /// `default` or a comma separated list.
    #[arg(long)]
    pub eps_grid: Option<String>,
    #[arg(long)]
    pub delta_grid: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `all` or a comma separated list of claims.
    #[arg(long)]
    pub suite: Option<String>,
    #[arg(long)]
    pub claim: Option<String>,
    /// Tolerance overrides as `name=value`; `--tol-name value` is accepted too.
    #[arg(long = "tol", value_name = "NAME=VALUE")]
    pub tol: Vec<String>,
}

/// Fully resolved run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub kind: Kind,
    pub config: Option<PathBuf>,
    pub cfg: CellConfig,
    pub field: Option<String>,
    pub order: Option<usize>,
    pub points: Option<usize>,
    pub single_row: bool,
    pub rows: Vec<usize>,
    pub eps_grid: Vec<f64>,
    pub delta_grid: Vec<f64>,
    pub out: PathBuf,
    pub claims: Vec<String>,
    pub tol: Tolerances,
}

impl RunSpec {
    /// Hash of everything that determines the outputs.
    pub fn hash(&self) -> String {
        let mut s = self.clone();
        s.out = PathBuf::new();
        s.config = None;
        let bytes = serde_json::to_vec(&s).expect("run spec serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    fn suite(&self) -> Result<SuiteSpec> {
        let mut s = SuiteSpec::new(self.cfg);
        s.field = self.field.as_deref().map(|t| BackgroundField::parse(t, self.cfg.period())).transpose()?;
        s.eps_grid = self.eps_grid.clone();
        s.delta_grid = self.delta_grid.clone();
        s.rows = self.rows.clone();
        s.tol = self.tol.clone();
        Ok(s)
    }
}

/// Moves `--tol-name value` and `--tol-name=value` into `--tol name=value`.
pub fn normalize_args<I: IntoIterator<Item = String>>(args: I) -> Vec<String> {
    let mut out = Vec::new();
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        match a.strip_prefix("--tol-") {
            Some(rest) => {
                let pair = match rest.split_once('=') {
                    Some((k, v)) => format!("{k}={v}"),
                    None => format!("{rest}={}", it.next().unwrap_or_default()),
                };
                out.push("--tol".into());
                out.push(pair);
            }
            None => out.push(a),
        }
    }
    out
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::InvalidConfig(format!("bad {what} entry '{s}'"))))
        .collect()
}

fn parse_grid(text: &str) -> Result<Vec<f64>> {
    if text.trim() == "default" {
        return Ok(default_grid());
    }
    let g: Vec<f64> = parse_list(text, "grid")?;
    if g.is_empty() || g.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
        return Err(Error::InvalidConfig(format!("grid entries must lie in (0,1): '{text}'")));
    }
    Ok(g)
}

/// Reads `key = value` lines; `#` starts a comment.
pub fn read_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("{}:{}: expected key = value", path.display(), i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn merge_file(a: &mut CommonArgs, pairs: Vec<(String, String)>) -> Result<()> {
    let num = |k: &str, v: &str| v.parse::<f64>().map_err(|_| Error::InvalidConfig(format!("{k}: not a number '{v}'")));
    let int = |k: &str, v: &str| v.parse::<usize>().map_err(|_| Error::InvalidConfig(format!("{k}: not an integer '{v}'")));
    for (k, v) in pairs {
        match k.as_str() {
            "eps" => a.eps = a.eps.or(Some(num(&k, &v)?)),
            "delta" => a.delta = a.delta.or(Some(num(&k, &v)?)),
            "m" => a.m = a.m.or(Some(num(&k, &v)?)),
            "H" => a.field = a.field.take().or(Some(v)),
            "N" => a.order = a.order.or(Some(int(&k, &v)?)),
            "M" => a.points = a.points.or(Some(int(&k, &v)?)),
            "rows" => a.rows = a.rows.take().or(Some(v)),
            "single-row" => a.single_row |= v == "true",
            "eps-grid" => a.eps_grid = a.eps_grid.take().or(Some(v)),
            "delta-grid" => a.delta_grid = a.delta_grid.take().or(Some(v)),
            "out" => a.out = a.out.take().or(Some(PathBuf::from(v))),
            "suite" => a.suite = a.suite.take().or(Some(v)),
            "claim" => a.claim = a.claim.take().or(Some(v)),
            other => match other.strip_prefix("tol-") {
                Some(name) => {
                    // Command-line overrides come later and win.
                    a.tol.insert(0, format!("{name}={v}"));
                }
                None => return Err(Error::InvalidConfig(format!("unknown config key '{other}'"))),
            },
        }
    }
    Ok(())
}

pub fn resolve(kind: Kind, mut a: CommonArgs) -> Result<RunSpec> {
    if let Some(p) = a.config.clone() {
        let pairs = read_config_file(&p)?;
        merge_file(&mut a, pairs)?;
    }
    let cfg = CellConfig::with_m(a.eps.unwrap_or(0.1), a.delta.unwrap_or(0.1), a.m.unwrap_or(4.0))?;
    if let Some(f) = &a.field {
        BackgroundField::parse(f, cfg.period())?;
    }
    let mut tol = Tolerances::default();
    for t in &a.tol {
        let (k, v) = t.split_once('=').ok_or_else(|| Error::InvalidConfig(format!("tolerance '{t}' is not name=value")))?;
        let v: f64 = v.parse().map_err(|_| Error::InvalidConfig(format!("tolerance {k}: not a number '{v}'")))?;
        tol.set(k, v)?;
    }
    let claims = match kind {
        Kind::Sweep => {
            let c = a.claim.clone().or(a.suite.clone()).ok_or_else(|| Error::InvalidConfig("sweep needs --claim".into()))?;
            parse_claims(&c)?
        }
        Kind::Verify => parse_claims(a.suite.as_deref().or(a.claim.as_deref()).unwrap_or("all"))?,
        _ => Vec::new(),
    };
    let rows = match &a.rows {
        Some(r) => parse_list(r, "rows")?,
        None => vec![10, 20, 50],
    };
    Ok(RunSpec {
        kind,
        config: a.config,
        cfg,
        field: a.field,
        order: a.order,
        points: a.points,
        single_row: a.single_row,
        rows,
        eps_grid: parse_grid(a.eps_grid.as_deref().unwrap_or("default"))?,
        delta_grid: parse_grid(a.delta_grid.as_deref().unwrap_or("default"))?,
        out: a.out.unwrap_or_else(|| PathBuf::from("out")),
        claims,
        tol,
    })
}

fn parse_claims(text: &str) -> Result<Vec<String>> {
    if text.trim() == "all" {
        return Ok(CLAIMS.iter().map(|s| s.to_string()).collect());
    }
    let c: Vec<String> = parse_list(text, "claim")?;
    for name in &c {
        if !CLAIMS.contains(&name.as_str()) {
            return Err(Error::InvalidConfig(format!("unknown claim '{name}'; expected one of {}", CLAIMS.join(", "))));
        }
    }
    Ok(c)
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn csv_rows(results: &[CheckResult]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in results {
        for row in &r.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{:.3}\n",
                r.name, row.eps, row.delta, row.n, row.measured, row.expected, row.tol, row.pass, row.seconds
            ));
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_hash: String,
    pub pass: bool,
    pub checks: Vec<CheckResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub package: String,
    pub version: String,
    pub format_version: u32,
    pub config_hash: String,
    pub spec: RunSpec,
    pub files: Vec<String>,
}

pub fn render(summary: &Summary) -> String {
    let mut s = String::new();
    for c in &summary.checks {
        s.push_str(&c.line());
        s.push('\n');
    }
    let failed = summary.checks.iter().filter(|c| !c.pass).count();
    s.push_str(&format!("{} of {} checks passed\n", summary.checks.len() - failed, summary.checks.len()));
    s
}

/// What a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub pass: bool,
    pub files: Vec<PathBuf>,
    pub text: String,
}

fn write_manifest(spec: &RunSpec, files: &[PathBuf]) -> Result<PathBuf> {
    let m = Manifest {
        package: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        format_version: FORMAT_VERSION,
        config_hash: spec.hash(),
        spec: spec.clone(),
        files: files.iter().filter_map(|f| f.file_name().map(|n| n.to_string_lossy().into_owned())).collect(),
    };
    let p = spec.out.join("manifest.json");
    write_atomic(&p, &serde_json::to_vec_pretty(&m)?)?;
    Ok(p)
}

fn run_solve(spec: &RunSpec) -> Result<Outcome> {
    let field = BackgroundField::parse(spec.field.as_deref().unwrap_or("x"), spec.cfg.period())?;
    let problem = if spec.single_row { BoundaryProblem::single_row(spec.cfg, field) } else { BoundaryProblem::new(spec.cfg, field) };
    let mut opts = SolveOptions::for_config(&spec.cfg);
    if let Some(n) = spec.order {
        opts = SolveOptions::new(n, 4 * n);
    }
    if let Some(m) = spec.points {
        opts.m = m;
    }
    let sol: CellSolution = solve_with(&problem, &opts)?;
    let p = spec.out.join("solution.json");
    write_atomic(&p, &serde_json::to_vec_pretty(&sol)?)?;
    let pass = sol.residual < opts.tol;
    let text = format!(
        "{} residual={:.3e} flux_residual={:.3e} c_L={} c_R={} N={} M={} rank={}/{}\n",
        if pass { "PASS" } else { "FAIL" },
        sol.residual,
        sol.flux_residual,
        sol.c_l(),
        sol.c_r(),
        sol.options.n,
        sol.options.m,
        sol.rank,
        sol.unknowns
    );
    let files = vec![p];
    let m = write_manifest(spec, &files)?;
    Ok(Outcome { pass, files: vec![files[0].clone(), m], text })
}

fn run_checks(spec: &RunSpec) -> Result<Outcome> {
    let suite = spec.suite()?;
    let mut checks = Vec::new();
    let mut fits: Vec<(&str, RateFit)> = Vec::new();
    for name in &spec.claims {
        if name == "rates" && spec.kind == Kind::Sweep {
            let (c, fh, fv) = check_rates(&suite.cfg, &suite.eps_grid, &suite.delta_grid, &suite.tol)?;
            checks.push(c);
            fits.push(("nh_vs_delta", fh));
            fits.push(("nv_vs_eps", fv));
        } else {
            checks.push(run_claim(name, &suite)?);
        }
    }
    let summary = Summary { config_hash: spec.hash(), pass: checks.iter().all(|c| c.pass), checks };
    let stem = if spec.kind == Kind::Sweep { "sweep" } else { "checks" };
    let mut files = vec![spec.out.join(format!("{stem}.csv")), spec.out.join("summary.json"), spec.out.join("summary.txt")];
    write_atomic(&files[0], csv_rows(&summary.checks).as_bytes())?;
    write_atomic(&files[1], &serde_json::to_vec_pretty(&summary)?)?;
    let mut text = render(&summary);
    if !fits.is_empty() {
        let mut t = String::from("fit,slope,intercept,residual,points\n");
        for (name, f) in &fits {
            t.push_str(&format!("{name},{},{},{},{}\n", f.slope, f.intercept, f.residual, f.abscissa.len()));
        }
        let p = spec.out.join("rates.csv");
        write_atomic(&p, t.as_bytes())?;
        files.push(p);
        text.push_str(&t);
    }
    write_atomic(&files[2], text.as_bytes())?;
    files.push(write_manifest(spec, &files)?);
    Ok(Outcome { pass: summary.pass, files, text })
}

fn run_report(spec: &RunSpec) -> Result<Outcome> {
    let p = spec.out.join("summary.json");
    let summary: Summary = serde_json::from_slice(&fs::read(&p)?)?;
    Ok(Outcome { pass: summary.pass, files: Vec::new(), text: render(&summary) })
}

pub fn run(spec: &RunSpec) -> Result<Outcome> {
    match spec.kind {
        Kind::Solve => run_solve(spec),
        Kind::Sweep | Kind::Verify => run_checks(spec),
        Kind::Report => run_report(spec),
    }
}

/// Exit status for a finished run or its error.
pub fn exit_code(r: &Result<Outcome>) -> i32 {
    match r {
        Ok(o) if o.pass => EXIT_OK,
        Ok(_) => EXIT_CHECK,
        Err(Error::InvalidConfig(_) | Error::Parse(_)) => EXIT_USAGE,
        Err(Error::NonConvergent { .. } | Error::Quadrature(_)) => EXIT_CHECK,
        Err(_) => EXIT_FAILURE,
    }
}

/// Entry point shared by the binary and the tests.
pub fn main_with_args<I: IntoIterator<Item = String>>(args: I) -> i32 {
    let cli = match Cli::try_parse_from(normalize_args(args)) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let (kind, a) = match cli.command {
        Command::Solve(a) => (Kind::Solve, a),
        Command::Sweep(a) => (Kind::Sweep, a),
        Command::Verify(a) => (Kind::Verify, a),
        Command::Report(a) => (Kind::Report, a),
    };
    let r = resolve(kind, a).and_then(|s| run(&s));
    match &r {
        Ok(o) => print!("{}", o.text),
        Err(e) => eprintln!("error: {e}"),
    }
    exit_code(&r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn tol_flags_are_rewritten() {
        let a = normalize_args(args("tworow verify --tol-shift 1e-6 --tol-oracle=0.01 --eps 0.1"));
        assert_eq!(a, args("tworow verify --tol shift=1e-6 --tol oracle=0.01 --eps 0.1"));
    }

    #[test]
    fn resolve_defaults_and_overrides() {
        let cli = Cli::try_parse_from(normalize_args(args("tworow verify --suite rates,oracle --eps-grid 0.1,0.01 --tol-slope 0.1"))).unwrap();
        let Command::Verify(a) = cli.command else { panic!() };
        let s = resolve(Kind::Verify, a).unwrap();
        assert_eq!(s.claims, vec!["rates", "oracle"]);
        assert_eq!(s.eps_grid, vec![0.1, 0.01]);
        assert_eq!(s.delta_grid, default_grid());
        assert_eq!(s.tol.slope, 0.1);
        assert_eq!(s.rows, vec![10, 20, 50]);
    }

    #[test]
    fn usage_errors() {
        let bad = |kind, a: CommonArgs| exit_code(&resolve(kind, a).and_then(|s| run(&s)));
        assert_eq!(bad(Kind::Solve, CommonArgs { eps: Some(1.5), ..Default::default() }), EXIT_USAGE);
        assert_eq!(bad(Kind::Solve, CommonArgs { field: Some("x +* y".into()), ..Default::default() }), EXIT_USAGE);
        assert_eq!(bad(Kind::Sweep, CommonArgs::default()), EXIT_USAGE);
        assert_eq!(bad(Kind::Verify, CommonArgs { suite: Some("nope".into()), ..Default::default() }), EXIT_USAGE);
        assert_eq!(bad(Kind::Verify, CommonArgs { tol: vec!["bogus=1".into()], ..Default::default() }), EXIT_USAGE);
        assert_eq!(main_with_args(args("tworow frobnicate")), EXIT_USAGE);
    }

    #[test]
    fn config_file_mirrors_flags() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.cfg");
        fs::write(&p, "# study\neps = 0.05\ndelta=0.2\nH = x+2y\nrows = 1,2\ntol-shift = 1e-7\n").unwrap();
        let a = CommonArgs { config: Some(p.clone()), delta: Some(0.3), ..Default::default() };
        let s = resolve(Kind::Solve, a).unwrap();
        assert_eq!((s.cfg.eps, s.cfg.delta), (0.05, 0.3));
        assert_eq!(s.field.as_deref(), Some("x+2y"));
        assert_eq!(s.rows, vec![1, 2]);
        assert_eq!(s.tol.shift, 1e-7);
        fs::write(&p, "colour = blue\n").unwrap();
        assert!(resolve(Kind::Solve, CommonArgs { config: Some(p), ..Default::default() }).is_err());
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = resolve(Kind::Solve, CommonArgs { out: Some("a".into()), ..Default::default() }).unwrap();
        let b = resolve(Kind::Solve, CommonArgs { out: Some("b".into()), ..Default::default() }).unwrap();
        let c = resolve(Kind::Solve, CommonArgs { eps: Some(0.2), ..Default::default() }).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("f.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
