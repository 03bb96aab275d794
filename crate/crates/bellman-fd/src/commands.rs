//! Subcommands and their exit codes: 0 success, 1 configuration error,
//! 2 solver failure, 3 failed check.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::PathBuf;
use std::sync::Arc;

use bellman_fd_core::diagnostics::{
    check_comparison, check_obstacle_complementarity, convergence_study, fit_order, margin_width,
    measure_regularity, MarginRule, StudyConfig, StudyScheme, COMPARISON_TOL,
};
use bellman_fd_core::elliptic::{solve_elliptic, EllipticConfig, EllipticMode};
use bellman_fd_core::implicit::{solve_parabolic, Method};
use bellman_fd_core::perturbation::{shake_gap, ShakeSpec};
use bellman_fd_core::problems::{catalog, TauRule, CATALOG};
use bellman_fd_core::semidiscrete::solve_semidiscrete;
use bellman_fd_core::{ExteriorPolicy, GridFunction, Mesh, MeshSpec};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{ConfigError, FileConfig, Format, Overrides, Resolved, RunConfig, Scheme, ELLIPTIC_COS};
use crate::io::{write_grid_csv, write_spatial_csv};
use crate::report::{convergence_csv, convergence_table, key_values, num, opt, to_json, OutputDir, Table};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_CHECK: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "bellman-fd", version, about = "Monotone finite-difference solver for Bellman equations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one problem and write the field and its regularity statistics.
    Solve(Common),
    /// Run a mesh-refinement study against the exact solution.
    Study(StudyArgs),
    /// Measure how far shaking the coefficients moves the solution.
    Shake(ShakeArgs),
    /// Check that raising f and g raises the solution.
    Compare(CompareArgs),
    /// Solve the stationary problem by value iteration and by long horizons.
    Elliptic(Common),
    /// List the built-in problems.
    Catalog,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Banach,
    Howard,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TauRuleArg {
    /// tau = h
    Linear,
    /// tau = h^2
    Square,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ShiftPreset {
    /// 8 points of radius 0.99 (±0.99k/4 on a line)
    Ring,
    /// 0 and ±0.99 along each axis
    Axes,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TimeShiftPreset {
    /// no time shifts
    None,
    /// -1/4, -1/2, -3/4
    Default,
}

fn parse_exterior(s: &str) -> Result<ExteriorPolicy, String> {
    match s {
        "clamp" => Ok(ExteriorPolicy::Clamp),
        "extend_terminal" => Ok(ExteriorPolicy::ExtendTerminal),
        _ => s
            .strip_prefix("constant:")
            .and_then(|v| v.parse().ok())
            .map(ExteriorPolicy::Constant)
            .ok_or_else(|| format!("expected clamp, extend_terminal or constant:<value>, got '{s}'")),
    }
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Catalog name, or a TOML file with a [problem] section.
    #[arg(long)]
    pub problem: Option<String>,
    /// TOML run configuration; flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Horizon [default: from the catalog, else 1]
    #[arg(long = "T")]
    pub horizon: Option<f64>,
    /// Time step [default: from the catalog, else 0.1]
    #[arg(long)]
    pub tau: Option<f64>,
    /// Space step [default: from the catalog, else 0.1]
    #[arg(long)]
    pub h: Option<f64>,
    /// Index box radius [default: from the catalog, else 20]
    #[arg(long = "R")]
    pub index_radius: Option<usize>,
    /// [default: implicit; elliptic for elliptic_cos]
    #[arg(long, value_enum)]
    pub scheme: Option<Scheme>,
    /// Slice solver [default: banach]
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Fixed-point tolerance [default: 1e-10 (1 - contraction factor)]
    #[arg(long)]
    pub tol: Option<f64>,
    /// clamp, extend_terminal or constant:<value> [default: clamp]
    #[arg(long, value_parser = parse_exterior)]
    pub exterior: Option<ExteriorPolicy>,
    /// Discount level of twocontrol_diffusion or a custom problem [default: 0]
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Penalty weight of obstacle1d [default: 1000]
    #[arg(long)]
    pub penalty: Option<f64>,
    /// Worker threads [default: available cores]
    #[arg(long, env = "BELLMAN_FD_THREADS")]
    pub threads: Option<usize>,
    /// Output directory [default: bellman-fd-out]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report formats, comma separated [default: csv,json,text]
    #[arg(long, value_enum, value_delimiter = ',')]
    pub format: Option<Vec<Format>>,
}

#[derive(Debug, Clone, Args)]
pub struct StudyArgs {
    #[command(flatten)]
    pub common: Common,
    /// Space steps of the mesh family [default: 0.2,0.1,0.05,0.025]
    #[arg(long, value_delimiter = ',')]
    pub h_list: Option<Vec<f64>>,
    /// Time step rule [default: from the catalog]
    #[arg(long, value_enum)]
    pub tau_rule: Option<TauRuleArg>,
    /// Boundary strip left out of the error, in space units [default: automatic]
    #[arg(long)]
    pub margin: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct ShakeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Shake sizes
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.1,0.05")]
    pub eps: Vec<f64>,
    /// Space shift set
    #[arg(long, value_enum, default_value = "ring")]
    pub shifts: ShiftPreset,
    /// Time shift set
    #[arg(long, value_enum, default_value = "none")]
    pub time_shifts: TimeShiftPreset,
    /// Leave the terminal data unshifted
    #[arg(long)]
    pub keep_terminal: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: Common,
    /// Amount added to the running cost of the second problem
    #[arg(long, default_value_t = 1.0)]
    pub bump_f: f64,
    /// Amount added to the terminal data of the second problem
    #[arg(long, default_value_t = 0.0)]
    pub bump_g: f64,
}

/// A failure with its exit code and the stage that produced it.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn config(msg: impl Into<String>) -> Self {
        Failure {
            code: EXIT_CONFIG,
            message: msg.into(),
        }
    }

    fn core(stage: &str, e: bellman_fd_core::Error) -> Self {
        Failure {
            code: if e.is_solver_failure() { EXIT_SOLVER } else { EXIT_CONFIG },
            message: format!("{stage}: {e}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::config(format!("config: {e}"))
    }
}

fn io_failure(what: &std::path::Path, e: std::io::Error) -> Failure {
    Failure::config(format!("output: cannot write {}: {e}", what.display()))
}

/// Parses arguments and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32, Failure> {
    match cmd {
        Command::Solve(c) => cmd_solve(&Session::open(&c)?),
        Command::Study(a) => cmd_study(&Session::open(&a.common)?, &a),
        Command::Shake(a) => cmd_shake(&Session::open(&a.common)?, &a),
        Command::Compare(a) => cmd_compare(&Session::open(&a.common)?, &a),
        Command::Elliptic(c) => cmd_elliptic(&Session::open(&c)?),
        Command::Catalog => cmd_catalog(),
    }
}

/// Resolved config, problem, mesh and output directory of one run.
struct Session {
    cfg: RunConfig,
    run: Resolved,
    mesh: Arc<Mesh>,
    out: OutputDir,
}

impl Session {
    fn open(c: &Common) -> Result<Self, Failure> {
        let mut file = match &c.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let mut problem = c.problem.clone();
        if let Some(p) = problem.as_deref().map(std::path::Path::new).filter(|p| p.is_file()) {
            file.problem = FileConfig::load(p)?.problem;
            problem = None;
        }
        let flags = Overrides {
            problem,
            horizon: c.horizon,
            tau: c.tau,
            h: c.h,
            index_radius: c.index_radius,
            scheme: c.scheme,
            method: c.method.map(|m| match m {
                MethodArg::Banach => Method::Banach,
                MethodArg::Howard => Method::Howard,
            }),
            tol: c.tol,
            exterior: c.exterior,
            lambda: c.lambda,
            penalty: c.penalty,
            threads: c.threads,
            out: c.out.clone(),
            formats: c.format.clone(),
        };
        let cfg = RunConfig::resolve(file, &flags)?;
        if let Some(n) = cfg.threads {
            // a second call in the same process keeps the first pool
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        let run = cfg.build_problem()?;
        let mesh = Arc::new(Mesh::new(cfg.mesh.clone()).map_err(|e| Failure::core("mesh", e))?);
        let report = run.problem.validate(&mesh).map_err(|e| Failure::core("problem", e))?;
        for w in &report.warnings {
            eprintln!("warning: {w}");
        }
        let out = OutputDir::create(&cfg.output.dir).map_err(|e| io_failure(&cfg.output.dir, e))?;
        Ok(Session { cfg, run, mesh, out })
    }

    fn wants(&self, f: Format) -> bool {
        self.cfg.output.wants(f)
    }

    /// Writes JSON and text reports and echoes the text to stdout.
    fn finish<T: Serialize>(&self, command: &str, passed: Option<bool>, result: &T, text: &str) -> Result<(), Failure> {
        if self.wants(Format::Json) {
            let name = format!("{command}.json");
            self.out
                .write(&name, &to_json(command, &self.cfg, passed, result))
                .map_err(|e| io_failure(&self.out.path(&name), e))?;
        }
        if self.wants(Format::Text) {
            let name = format!("{command}.txt");
            self.out.write(&name, text).map_err(|e| io_failure(&self.out.path(&name), e))?;
        }
        print!("{text}");
        Ok(())
    }

    fn write_csv(&self, name: &str, body: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<(), Failure> {
        if !self.wants(Format::Csv) {
            return Ok(());
        }
        let mut buf = Vec::new();
        body(&mut buf).map_err(|e| io_failure(&self.out.path(name), e))?;
        let path = self.out.path(name);
        std::fs::write(&path, buf).map_err(|e| io_failure(&path, e))
    }

    fn study_scheme(&self) -> StudyScheme {
        match self.cfg.scheme {
            Scheme::Implicit => StudyScheme::Implicit(self.cfg.solver),
            Scheme::Semidiscrete => StudyScheme::Semidiscrete(self.cfg.semidiscrete),
            Scheme::Elliptic => StudyScheme::Elliptic(self.cfg.elliptic),
        }
    }

    fn require_parabolic(&self, command: &str) -> Result<(), Failure> {
        if self.cfg.scheme == Scheme::Elliptic {
            return Err(Failure::config(format!("config: {command} needs a time-dependent scheme")));
        }
        Ok(())
    }

    fn solve_field(&self, problem: &bellman_fd_core::ControlProblem) -> Result<GridFunction, Failure> {
        match self.cfg.scheme {
            Scheme::Semidiscrete => solve_semidiscrete(problem, &self.mesh, &self.cfg.semidiscrete)
                .map(|s| s.field)
                .map_err(|e| Failure::core("semidiscrete solve", e)),
            _ => solve_parabolic(problem, &self.mesh, &self.cfg.solver)
                .map(|s| s.field)
                .map_err(|e| Failure::core("implicit solve", e)),
        }
    }

    /// Interior sup error against the exact solution, when there is one.
    fn interior_error(&self, u: &GridFunction) -> Result<Option<f64>, Failure> {
        let Some(exact) = &self.run.exact else { return Ok(None) };
        let study = StudyConfig {
            scheme: self.study_scheme(),
            margin: MarginRule::Auto,
        };
        let width = margin_width(&self.run.problem, &self.mesh, &study).map_err(|e| Failure::core("error margin", e))?;
        let layers = (width / self.mesh.h()).ceil() as usize;
        let mut err: Option<f64> = None;
        for node in (0..self.mesh.n_nodes()).filter(|&i| self.mesh.depth(i) >= layers) {
            let x = self.mesh.position(node);
            for (j, &t) in self.mesh.time_levels().iter().enumerate() {
                let e = (u.get(j, node) - exact.eval(t, x)).abs();
                err = Some(err.unwrap_or(0.0).max(e));
            }
        }
        Ok(err)
    }
}

#[derive(Serialize)]
struct SolveResult {
    scheme: Scheme,
    nodes: usize,
    time_levels: usize,
    min: f64,
    max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    regularity: Option<bellman_fd_core::diagnostics::RegularityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    interior_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    residual: Option<f64>,
}

fn range(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

fn cmd_solve(s: &Session) -> Result<i32, Failure> {
    let result = if s.cfg.scheme == Scheme::Elliptic {
        let sol = solve_elliptic(&s.run.problem, &s.mesh, &s.cfg.elliptic).map_err(|e| Failure::core("elliptic solve", e))?;
        s.write_csv("solve_field.csv", |w| write_spatial_csv(w, &s.mesh, &sol.field))?;
        let (min, max) = range(&sol.field);
        let interior_error = match &s.run.exact {
            Some(_) => {
                let levels = s.mesh.n_time() + 1;
                let field = GridFunction::from_values(s.mesh.clone(), sol.field.repeat(levels))
                    .map_err(|e| Failure::core("elliptic solve", e))?;
                s.interior_error(&field)?
            }
            None => None,
        };
        SolveResult {
            scheme: Scheme::Elliptic,
            nodes: s.mesh.n_nodes(),
            time_levels: 0,
            min,
            max,
            regularity: None,
            interior_error,
            iterations: Some(sol.iterations),
            residual: Some(sol.residual),
        }
    } else {
        let field = s.solve_field(&s.run.problem)?;
        s.write_csv("solve_field.csv", |w| write_grid_csv(w, &field))?;
        let (min, max) = range(field.values());
        SolveResult {
            scheme: s.cfg.scheme,
            nodes: s.mesh.n_nodes(),
            time_levels: s.mesh.n_time() + 1,
            min,
            max,
            regularity: Some(measure_regularity(&field)),
            interior_error: s.interior_error(&field)?,
            iterations: None,
            residual: None,
        }
    };
    let mut lines = vec![
        ("problem", s.run.problem.name.clone()),
        ("scheme", format!("{:?}", result.scheme).to_lowercase()),
        ("nodes", result.nodes.to_string()),
        ("min", num(result.min)),
        ("max", num(result.max)),
    ];
    if let Some(r) = &result.regularity {
        lines.push(("lipschitz_x", num(r.lipschitz_x)));
        lines.push(("holder_t", num(r.holder_t)));
    }
    if let Some(e) = result.interior_error {
        lines.push(("interior_error", num(e)));
    }
    if let Some(r) = result.residual {
        lines.push(("residual", num(r)));
    }
    s.finish("solve", None, &result, &key_values(&lines))?;
    Ok(EXIT_OK)
}

fn cmd_study(s: &Session, a: &StudyArgs) -> Result<i32, Failure> {
    let Some(exact) = &s.run.exact else {
        return Err(Failure::config(format!(
            "config: '{}' has no exact solution to study against",
            s.run.problem.name
        )));
    };
    let rule = match a.tau_rule {
        Some(TauRuleArg::Linear) => TauRule::Linear,
        Some(TauRuleArg::Square) => TauRule::Square,
        None => s.run.tau_rule(),
    };
    let hs = a.h_list.clone().unwrap_or_else(|| vec![0.2, 0.1, 0.05, 0.025]);
    if hs.len() < 3 {
        return Err(Failure::config(format!("config: a study needs at least 3 meshes, got {}", hs.len())));
    }
    let half_width = match &s.run.entry {
        Some(e) if a.common.h.is_none() && a.common.index_radius.is_none() => e.box_half_width,
        _ => s.cfg.mesh.h * s.cfg.mesh.index_radius as f64,
    };
    let family: Vec<MeshSpec> = hs
        .iter()
        .map(|&h| {
            s.cfg
                .mesh
                .with_time(s.cfg.mesh.horizon, rule.tau(h))
                .with_space_step(h, (half_width / h - 1e-9).ceil() as usize)
        })
        .collect();
    let study = StudyConfig {
        scheme: s.study_scheme(),
        margin: a.margin.map_or(MarginRule::Auto, MarginRule::Width),
    };
    let report = convergence_study(&s.run.problem, exact, &family, &study).map_err(|e| Failure::core("study", e))?;
    s.write_csv("study_convergence.csv", |w| w.write_all(convergence_csv(&report).as_bytes()))?;

    let floor = s.run.rate_floor();
    let passed = report.failures.is_empty() && report.fitted_order.is_some_and(|p| p >= floor);
    #[derive(Serialize)]
    struct StudyResult<'a> {
        order_floor: f64,
        #[serde(flatten)]
        report: &'a bellman_fd_core::diagnostics::ConvergenceReport,
    }
    let mut text = convergence_table(&report).render();
    for (i, msg) in &report.failures {
        text.push_str(&format!("mesh {i} failed: {msg}\n"));
    }
    text.push_str(&key_values(&[
        ("fitted order", opt(report.fitted_order)),
        ("order floor", num(floor)),
        ("verdict", verdict(passed).into()),
    ]));
    s.finish("study", Some(passed), &StudyResult { order_floor: floor, report: &report }, &text)?;
    Ok(if passed { EXIT_OK } else { EXIT_CHECK })
}

fn verdict(passed: bool) -> &'static str {
    if passed {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Largest over smallest of a list of positive ratios.
fn spread(r: &[f64]) -> f64 {
    let (lo, hi) = range(r);
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

fn cmd_shake(s: &Session, a: &ShakeArgs) -> Result<i32, Failure> {
    s.require_parabolic("shake")?;
    if a.eps.is_empty() || a.eps.iter().any(|&e| !(e > 0.0)) {
        return Err(Failure::config("config: --eps needs positive values"));
    }
    let dim = s.mesh.dim();
    let mut rows = Vec::new();
    for &eps in &a.eps {
        let mut spec = match a.shifts {
            ShiftPreset::Ring => ShakeSpec::ring(eps, dim, 8, 0.99),
            ShiftPreset::Axes => ShakeSpec::with_defaults(eps, dim),
        };
        spec.time_shifts = match a.time_shifts {
            TimeShiftPreset::None => Vec::new(),
            TimeShiftPreset::Default => vec![-0.25, -0.5, -0.75],
        };
        spec.shift_terminal = !a.keep_terminal;
        let gap = shake_gap(&s.run.problem, &s.mesh, &spec, &s.cfg.solver).map_err(|e| Failure::core("shake", e))?;
        rows.push((eps, gap, gap / eps));
    }
    let ratios: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let eps: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let gaps: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let slope = fit_order(&eps, &gaps).map(|(p, _)| p);
    let ratio_spread = spread(&ratios);
    let passed = ratio_spread < 2.0;

    #[derive(Serialize)]
    struct ShakeResult {
        epsilon: Vec<f64>,
        gap: Vec<f64>,
        ratio: Vec<f64>,
        ratio_spread: f64,
        slope: Option<f64>,
    }
    let mut t = Table::new(&["eps", "gap", "gap/eps"]);
    for &(e, g, r) in &rows {
        t.row(vec![num(e), num(g), num(r)]);
    }
    let mut text = t.render();
    text.push_str(&key_values(&[
        ("ratio spread", num(ratio_spread)),
        ("slope", opt(slope)),
        ("verdict", verdict(passed).into()),
    ]));
    let result = ShakeResult {
        epsilon: eps,
        gap: gaps,
        ratio: ratios,
        ratio_spread,
        slope,
    };
    s.finish("shake", Some(passed), &result, &text)?;
    Ok(if passed { EXIT_OK } else { EXIT_CHECK })
}

fn cmd_compare(s: &Session, a: &CompareArgs) -> Result<i32, Failure> {
    s.require_parabolic("compare")?;
    if !(a.bump_f >= 0.0 && a.bump_g >= 0.0) {
        return Err(Failure::config("config: --bump-f and --bump-g must be nonnegative"));
    }
    let upper = s.run.problem.clone().shift_running(a.bump_f).shift_terminal(a.bump_g);
    let r = check_comparison(&s.run.problem, &upper, &s.mesh, &s.cfg.solver).map_err(|e| Failure::core("compare", e))?;
    if !r.applicable {
        return Err(Failure::config(format!(
            "config: comparison does not apply: {}",
            r.reason.clone().unwrap_or_default()
        )));
    }
    // with c ≥ 0 the raised solution moves by at most bump_g + T·bump_f
    let bound = a.bump_g + s.mesh.horizon() * a.bump_f + COMPARISON_TOL;
    let within = r.max_gap <= bound;
    let passed = r.passed && within;

    #[derive(Serialize)]
    struct CompareResult<'a> {
        bump_f: f64,
        bump_g: f64,
        gap_bound: f64,
        #[serde(flatten)]
        report: &'a bellman_fd_core::diagnostics::ComparisonReport,
    }
    let text = key_values(&[
        ("problem", s.run.problem.name.clone()),
        ("violation", num(r.violation)),
        ("min gap", num(r.min_gap)),
        ("max gap", num(r.max_gap)),
        ("gap bound", num(bound)),
        ("verdict", verdict(passed).into()),
    ]);
    let result = CompareResult {
        bump_f: a.bump_f,
        bump_g: a.bump_g,
        gap_bound: bound,
        report: &r,
    };
    s.finish("compare", Some(passed), &result, &text)?;
    Ok(if passed { EXIT_OK } else { EXIT_CHECK })
}

fn cmd_elliptic(s: &Session) -> Result<i32, Failure> {
    let solve = |mode| {
        let cfg = EllipticConfig { mode, ..s.cfg.elliptic };
        solve_elliptic(&s.run.problem, &s.mesh, &cfg)
    };
    let vi = solve(EllipticMode::ValueIteration).map_err(|e| Failure::core("value iteration", e))?;
    let lh = solve(EllipticMode::LongHorizon).map_err(|e| Failure::core("long horizon", e))?;
    let agreement = vi.field.iter().zip(&lh.field).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let tolerance = 10.0 * s.cfg.elliptic.tol;
    let mut passed = agreement <= tolerance;
    s.write_csv("elliptic_field.csv", |w| write_spatial_csv(w, &s.mesh, &vi.field))?;

    let complementarity = s.run.entry.as_ref().and_then(|e| e.obstacle).map(|ob| {
        check_obstacle_complementarity(&vi.field, &|x| ob.obstacle(x), &s.mesh, &ob)
    });
    if let Some(c) = &complementarity {
        passed &= c.passed;
    }

    #[derive(Serialize)]
    struct EllipticResult {
        agreement: f64,
        tolerance: f64,
        value_iteration: Summary,
        long_horizon: Summary,
        #[serde(skip_serializing_if = "Option::is_none")]
        complementarity: Option<bellman_fd_core::diagnostics::ComplementarityReport>,
    }
    #[derive(Serialize)]
    struct Summary {
        iterations: usize,
        residual: f64,
        horizon: Option<f64>,
    }
    let summary = |sol: &bellman_fd_core::elliptic::EllipticSolution| Summary {
        iterations: sol.iterations,
        residual: sol.residual,
        horizon: sol.horizon,
    };
    let mut lines = vec![
        ("problem", s.run.problem.name.clone()),
        ("value iteration residual", num(vi.residual)),
        ("long horizon reached", opt(lh.horizon)),
        ("mode agreement", num(agreement)),
        ("tolerance", num(tolerance)),
    ];
    if let Some(c) = &complementarity {
        lines.push(("complementarity", format!("{} {} {}", num(c.residual1), num(c.residual2), num(c.residual3))));
    }
    lines.push(("verdict", verdict(passed).into()));
    let result = EllipticResult {
        agreement,
        tolerance,
        value_iteration: summary(&vi),
        long_horizon: summary(&lh),
        complementarity,
    };
    s.finish("elliptic", Some(passed), &result, &key_values(&lines))?;
    Ok(if passed { EXIT_OK } else { EXIT_CHECK })
}

fn cmd_catalog() -> Result<i32, Failure> {
    let mut t = Table::new(&["name", "controls", "rate", "tau rule", "T", "tau", "h", "R", "exact"]);
    for name in CATALOG {
        let e = catalog(name).map_err(|e| Failure::core("catalog", e))?;
        let m = &e.default_mesh;
        t.row(vec![
            name.to_string(),
            e.problem.n_controls().to_string(),
            format!("{:?}", e.rate_class).to_lowercase(),
            format!("{:?}", e.tau_rule).to_lowercase(),
            num(m.horizon),
            num(m.tau),
            num(m.h),
            m.index_radius.to_string(),
            e.exact.as_ref().map_or("-".into(), |x| x.description.clone()),
        ]);
    }
    print!("{}", t.render());
    println!("{ELLIPTIC_COS}: stationary, lambda = 1, exact cos x");
    Ok(EXIT_OK)
}
