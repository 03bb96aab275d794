//! Run configuration: a TOML file, command-line overrides, and the resolved
//! result that every report embeds.
//!
//! ```toml
//! [problem]
//! name = "heat1d"              # a catalog entry, or describe controls instead:
//! # K = 2.0
//! # lambda = 0.0
//! # terminal = "max(1 - abs(x1), 0)"
//! # [[problem.controls]]
//! # label = "right"
//! # sigma = ["0"]              # one entry per direction, or one for all
//! # drift_forward = ["1"]
//! # drift_backward = ["0"]
//! # discount = "0"
//! # running = "0"
//!
//! [mesh]
//! T = 1.0
//! tau = 0.05
//! h = 0.05
//! R = 60
//! # dim = 1, directions = [[1.0]], origin = [0.0]
//!
//! [solver]
//! scheme = "implicit"          # implicit | semidiscrete | elliptic
//! method = "banach"            # banach | howard
//! exterior = "clamp"           # clamp | extend_terminal | { constant = 0.0 }
//!
//! [output]
//! dir = "out"
//! formats = ["csv", "json", "text"]
//! threads = 4
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use bellman_fd_core::elliptic::{EllipticConfig, EllipticMode};
use bellman_fd_core::implicit::{Method, SolverConfig};
use bellman_fd_core::problems::{
    catalog_with, manufactured_elliptic_cos, CatalogEntry, CatalogParams, RateClass, TauRule, CATALOG,
};
use bellman_fd_core::semidiscrete::SemidiscreteConfig;
use bellman_fd_core::{ControlProblem, ExactSolution, ExteriorPolicy, MeshSpec};
use serde::{Deserialize, Serialize};

use crate::expr::Expr;

/// Name of the manufactured stationary problem `½u'' − u + (3/2)cos x = 0`.
pub const ELLIPTIC_COS: &str = "elliptic_cos";

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

impl From<bellman_fd_core::Error> for ConfigError {
    fn from(e: bellman_fd_core::Error) -> Self {
        ConfigError(e.to_string())
    }
}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Implicit,
    Semidiscrete,
    Elliptic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
    Text,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub problem: FileProblem,
    #[serde(default)]
    pub mesh: FileMesh,
    #[serde(default)]
    pub solver: FileSolver,
    #[serde(default)]
    pub output: FileOutput,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileProblem {
    pub name: Option<String>,
    pub lambda: Option<f64>,
    pub penalty: Option<f64>,
    #[serde(rename = "K")]
    pub bound: Option<f64>,
    pub terminal: Option<String>,
    pub controls: Option<Vec<CustomControl>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileMesh {
    #[serde(rename = "T")]
    pub horizon: Option<f64>,
    pub tau: Option<f64>,
    pub h: Option<f64>,
    #[serde(rename = "R")]
    pub index_radius: Option<usize>,
    pub dim: Option<usize>,
    pub directions: Option<Vec<Vec<f64>>>,
    pub origin: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSolver {
    pub scheme: Option<Scheme>,
    pub method: Option<Method>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub exterior: Option<ExteriorPolicy>,
    pub internal_step: Option<f64>,
    pub safety: Option<f64>,
    pub elliptic_mode: Option<EllipticMode>,
    pub elliptic_tol: Option<f64>,
    pub horizon_max: Option<f64>,
    pub horizon_tau: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileOutput {
    pub dir: Option<PathBuf>,
    pub formats: Option<Vec<Format>>,
    pub threads: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
    }
}

/// Command-line values; each one overrides the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub problem: Option<String>,
    pub horizon: Option<f64>,
    pub tau: Option<f64>,
    pub h: Option<f64>,
    pub index_radius: Option<usize>,
    pub scheme: Option<Scheme>,
    pub method: Option<Method>,
    pub tol: Option<f64>,
    pub exterior: Option<ExteriorPolicy>,
    pub lambda: Option<f64>,
    pub penalty: Option<f64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub formats: Option<Vec<Format>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomControl {
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub sigma: Vec<String>,
    #[serde(default)]
    pub drift_forward: Vec<String>,
    #[serde(default)]
    pub drift_backward: Vec<String>,
    #[serde(default)]
    pub discount: Option<String>,
    #[serde(default)]
    pub running: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CustomProblem {
    #[serde(rename = "K")]
    pub bound: f64,
    pub lambda: f64,
    pub terminal: String,
    pub controls: Vec<CustomControl>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSource {
    Catalog {
        name: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        lambda: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        penalty: Option<f64>,
    },
    Manufactured { name: String },
    Custom(CustomProblem),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

/// Everything a run needs, after defaults, file and flags are merged.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub problem: ProblemSource,
    pub mesh: MeshSpec,
    pub scheme: Scheme,
    pub solver: SolverConfig,
    pub semidiscrete: SemidiscreteConfig,
    pub elliptic: EllipticConfig,
    pub output: OutputConfig,
    /// `None` uses every available core.
    pub threads: Option<usize>,
}

/// A problem ready to solve, with whatever the catalog knows about it.
pub struct Resolved {
    pub problem: ControlProblem,
    pub exact: Option<ExactSolution>,
    pub entry: Option<CatalogEntry>,
}

impl Resolved {
    pub fn rate_floor(&self) -> f64 {
        self.entry.as_ref().map_or(RateClass::Lipschitz, |e| e.rate_class).order_floor()
    }

    pub fn tau_rule(&self) -> TauRule {
        self.entry.as_ref().map_or(TauRule::Linear, |e| e.tau_rule)
    }
}

impl RunConfig {
    pub fn resolve(file: FileConfig, flags: &Overrides) -> Result<Self, ConfigError> {
        let p = &file.problem;
        let custom_given = p.controls.is_some() || p.terminal.is_some() || p.bound.is_some();
        let name = flags.problem.clone().or_else(|| p.name.clone());
        let lambda = flags.lambda.or(p.lambda);
        let penalty = flags.penalty.or(p.penalty);

        let problem = match (name, custom_given) {
            (Some(_), true) if flags.problem.is_none() => {
                return err("[problem] gives both a catalog name and custom controls; choose one")
            }
            (Some(name), _) if name == ELLIPTIC_COS => ProblemSource::Manufactured { name },
            (Some(name), _) => {
                if !CATALOG.contains(&name.as_str()) {
                    return err(format!("unknown problem '{name}'; available: {}, {ELLIPTIC_COS}", CATALOG.join(", ")));
                }
                if lambda.is_some() && name != "twocontrol_diffusion" {
                    return err("lambda applies only to twocontrol_diffusion or custom problems");
                }
                if penalty.is_some() && name != "obstacle1d" {
                    return err("penalty applies only to obstacle1d");
                }
                ProblemSource::Catalog { name, lambda, penalty }
            }
            (None, true) => ProblemSource::Custom(CustomProblem {
                bound: p.bound.unwrap_or(1.0),
                lambda: lambda.unwrap_or(0.0),
                terminal: p.terminal.clone().unwrap_or_else(|| "0".into()),
                controls: p.controls.clone().unwrap_or_default(),
            }),
            (None, false) => {
                return err(format!("no problem given; use --problem with one of: {}, {ELLIPTIC_COS}", CATALOG.join(", ")))
            }
        };

        let m = &file.mesh;
        let base = match &problem {
            ProblemSource::Catalog { name, lambda, penalty } => {
                catalog_with(name, CatalogParams { lambda: *lambda, penalty: *penalty })?.default_mesh
            }
            ProblemSource::Manufactured { .. } => MeshSpec::line(1.0, 0.1, 0.1, 120),
            ProblemSource::Custom(_) => MeshSpec::cartesian(m.dim.unwrap_or(1), 1.0, 0.1, 0.1, 20),
        };
        let mut mesh = base;
        if let Some(d) = &m.directions {
            mesh.directions = d.clone();
            mesh.origin = vec![0.0; d.first().map_or(0, Vec::len)];
        }
        if let Some(o) = &m.origin {
            mesh.origin = o.clone();
        }
        mesh.horizon = flags.horizon.or(m.horizon).unwrap_or(mesh.horizon);
        mesh.tau = flags.tau.or(m.tau).unwrap_or(mesh.tau);
        mesh.h = flags.h.or(m.h).unwrap_or(mesh.h);
        mesh.index_radius = flags.index_radius.or(m.index_radius).unwrap_or(mesh.index_radius);
        bellman_fd_core::Mesh::new(mesh.clone())?;

        let s = &file.solver;
        let solver = SolverConfig {
            method: flags.method.or(s.method).unwrap_or_default(),
            tol: flags.tol.or(s.tol),
            max_iter: s.max_iter,
            exterior: flags.exterior.or(s.exterior).unwrap_or_default(),
        };
        let semidiscrete = SemidiscreteConfig {
            internal_step: s.internal_step,
            safety: s.safety.unwrap_or(SemidiscreteConfig::default().safety),
            exterior: solver.exterior,
        };
        let defaults = EllipticConfig::default();
        let elliptic = EllipticConfig {
            mode: s.elliptic_mode.unwrap_or_default(),
            tol: s.elliptic_tol.unwrap_or(defaults.tol),
            max_iter: s.max_iter.unwrap_or(defaults.max_iter),
            horizon_max: s.horizon_max.unwrap_or(defaults.horizon_max),
            horizon_tau: s.horizon_tau.unwrap_or(defaults.horizon_tau),
            exterior: solver.exterior,
            ..defaults
        };
        let output = OutputConfig {
            dir: flags.out.clone().or_else(|| file.output.dir.clone()).unwrap_or_else(|| PathBuf::from("bellman-fd-out")),
            formats: flags
                .formats
                .clone()
                .or_else(|| file.output.formats.clone())
                .unwrap_or_else(|| vec![Format::Csv, Format::Json, Format::Text]),
        };
        let threads = flags.threads.or(file.output.threads);
        if threads == Some(0) {
            return err("threads must be at least 1");
        }
        let default_scheme = match problem {
            ProblemSource::Manufactured { .. } => Scheme::Elliptic,
            _ => Scheme::Implicit,
        };
        Ok(RunConfig {
            problem,
            mesh,
            scheme: flags.scheme.or(s.scheme).unwrap_or(default_scheme),
            solver,
            semidiscrete,
            elliptic,
            output,
            threads,
        })
    }

    pub fn build_problem(&self) -> Result<Resolved, ConfigError> {
        match &self.problem {
            ProblemSource::Catalog { name, lambda, penalty } => {
                let entry = catalog_with(name, CatalogParams { lambda: *lambda, penalty: *penalty })?;
                Ok(Resolved {
                    problem: entry.problem.clone(),
                    exact: entry.exact.clone(),
                    entry: Some(entry),
                })
            }
            ProblemSource::Manufactured { .. } => {
                let (problem, exact) = manufactured_elliptic_cos();
                Ok(Resolved { problem, exact: Some(exact), entry: None })
            }
            ProblemSource::Custom(c) => Ok(Resolved {
                problem: c.build(self.mesh.dim(), self.mesh.n_directions())?,
                exact: None,
                entry: None,
            }),
        }
    }
}

struct Compiled {
    sigma: Vec<Expr>,
    forward: Vec<Expr>,
    backward: Vec<Expr>,
    discount: Expr,
    running: Expr,
}

fn parse(src: &str, dim: usize, what: &str) -> Result<Expr, ConfigError> {
    Expr::parse(src, dim).map_err(|e| ConfigError(format!("{what}: '{src}': {e}")))
}

/// One expression per direction; a single expression is used for all.
fn per_direction(list: &[String], dim: usize, d1: usize, what: &str) -> Result<Vec<Expr>, ConfigError> {
    match list.len() {
        0 => Ok(vec![Expr::Num(0.0); d1]),
        1 => Ok(vec![parse(&list[0], dim, what)?; d1]),
        n if n == d1 => list.iter().map(|s| parse(s, dim, what)).collect(),
        n => err(format!("{what}: expected 1 or {d1} expressions, got {n}")),
    }
}

impl CustomProblem {
    pub fn build(&self, dim: usize, d1: usize) -> Result<ControlProblem, ConfigError> {
        if self.controls.is_empty() {
            return err("a custom problem needs at least one [[problem.controls]] entry");
        }
        let mut compiled = Vec::new();
        for (a, c) in self.controls.iter().enumerate() {
            let at = |field: &str| format!("control {} {field}", a + 1);
            compiled.push(Compiled {
                sigma: per_direction(&c.sigma, dim, d1, &at("sigma"))?,
                forward: per_direction(&c.drift_forward, dim, d1, &at("drift_forward"))?,
                backward: per_direction(&c.drift_backward, dim, d1, &at("drift_backward"))?,
                discount: parse(c.discount.as_deref().unwrap_or("0"), dim, &at("discount"))?,
                running: parse(c.running.as_deref().unwrap_or("0"), dim, &at("running"))?,
            });
        }
        let terminal = parse(&self.terminal, dim, "terminal")?;
        let uses_time = compiled.iter().any(|c| {
            c.sigma.iter().chain(&c.forward).chain(&c.backward).any(Expr::uses_time)
                || c.discount.uses_time()
                || c.running.uses_time()
        });
        if terminal.uses_time() {
            return err("terminal data cannot depend on t");
        }
        let labels: Vec<String> = self
            .controls
            .iter()
            .enumerate()
            .map(|(a, c)| c.label.clone().unwrap_or_else(|| format!("a{}", a + 1)))
            .collect();
        let cs = Arc::new(compiled);
        let (c1, c2, c3, c4) = (cs.clone(), cs.clone(), cs.clone(), cs);
        let mut p = ControlProblem::new("custom", labels.len())
            .with_labels(labels)
            .with_sigma(move |a, k, t, x| c1[a].sigma[k].eval(t, x))
            .with_drift(move |a, dir, t, x| {
                let list = if dir.forward { &c2[a].forward } else { &c2[a].backward };
                list[dir.axis].eval(t, x)
            })
            .with_discount(move |a, t, x| c3[a].discount.eval(t, x))
            .with_running(move |a, t, x| c4[a].running.eval(t, x))
            .with_terminal(move |x| terminal.eval(0.0, x))
            .with_constants(self.bound, self.lambda);
        if uses_time {
            p = p.time_dependent();
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use bellman_fd_core::Direction;

    fn file(src: &str) -> FileConfig {
        toml::from_str(src).unwrap()
    }

    #[test]
    fn flags_override_file_and_catalog_defaults() {
        let f = file("[problem]\nname = \"heat1d\"\n[mesh]\nh = 0.2\nR = 10\n[solver]\nmethod = \"howard\"\n");
        let flags = Overrides {
            h: Some(0.25),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(f, &flags).unwrap();
        assert_eq!(cfg.mesh.h, 0.25);
        assert_eq!(cfg.mesh.index_radius, 10);
        assert_eq!(cfg.mesh.tau, 0.01);
        assert_eq!(cfg.solver.method, Method::Howard);
    }

    #[test]
    fn problem_source_rules() {
        assert!(RunConfig::resolve(FileConfig::default(), &Overrides::default()).is_err());
        let both = file("[problem]\nname = \"heat1d\"\nterminal = \"1\"\n");
        assert!(RunConfig::resolve(both, &Overrides::default()).is_err());
        let unknown = Overrides {
            problem: Some("nope".into()),
            ..Default::default()
        };
        let e = RunConfig::resolve(FileConfig::default(), &unknown).unwrap_err();
        assert!(e.0.contains("heat1d"));
        let lambda = Overrides {
            problem: Some("heat1d".into()),
            lambda: Some(1.0),
            ..Default::default()
        };
        assert!(RunConfig::resolve(FileConfig::default(), &lambda).is_err());
    }

    #[test]
    fn custom_problem_from_expressions() {
        let f = file(
            r#"
            [problem]
            K = 1.0
            terminal = "max(1 - abs(x1), 0)"
            [[problem.controls]]
            label = "right"
            drift_forward = ["1"]
            [[problem.controls]]
            sigma = ["1"]
            running = "0.5 * t"
            [mesh]
            h = 0.2
            "#,
        );
        let cfg = RunConfig::resolve(f, &Overrides::default()).unwrap();
        let p = cfg.build_problem().unwrap().problem;
        assert_eq!(p.controls, vec!["right".to_string(), "a2".to_string()]);
        assert!(!p.time_independent);
        let fwd = Direction { axis: 0, forward: true };
        assert_eq!(p.drift(0, fwd, 0.0, &[0.0]), 1.0);
        assert_eq!(p.drift(1, fwd, 0.0, &[0.0]), 0.0);
        assert_eq!(p.diffusion(1, 0, 0.0, &[0.0]), 0.5);
        assert_eq!(p.running(1, 2.0, &[0.0]), 1.0);
        assert_eq!(p.terminal(&[0.5]), 0.5);
    }

    #[test]
    fn bad_expressions_are_config_errors() {
        let f = file("[problem]\nterminal = \"x2\"\n[[problem.controls]]\n");
        let cfg = RunConfig::resolve(f, &Overrides::default()).unwrap();
        assert!(cfg.build_problem().is_err());
        let f = file("[problem]\nterminal = \"1\"\n[[problem.controls]]\nsigma = [\"1\", \"2\"]\n");
        let cfg = RunConfig::resolve(f, &Overrides::default()).unwrap();
        assert!(cfg.build_problem().is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("[mesh]\nH = 0.1\n").is_err());
    }
}
