//! Control problems: a finite control set with coefficient evaluators, plus
//! the built-in catalog of verification problems with known solutions.

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::lattice::{Direction, Mesh, MeshSpec};

#[cfg(feature = "serde")]
use serde::Serialize;

/// `σ_k^α(t, x)` for `k = 1..d₁` (the value for `−k` is the same).
pub type SigmaFn = Arc<dyn Fn(usize, usize, f64, &[f64]) -> f64 + Send + Sync>;
/// `b_k^α(t, x)` for signed `k`.
pub type DriftFn = Arc<dyn Fn(usize, Direction, f64, &[f64]) -> f64 + Send + Sync>;
/// `c^α(t, x)` or `f^α(t, x)`.
pub type ScalarFn = Arc<dyn Fn(usize, f64, &[f64]) -> f64 + Send + Sync>;
/// `g(x)`.
pub type TerminalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// `v(t, x)`.
pub type SolutionFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

/// A Bellman problem over a finite control set.
///
/// Coefficients are closures so they can be evaluated off-lattice (the
/// shaking transform needs that). All evaluators must be pure; solvers call
/// them from several threads.
#[derive(Clone)]
pub struct ControlProblem {
    pub name: String,
    pub controls: Vec<String>,
    sigma: SigmaFn,
    drift: DriftFn,
    discount: ScalarFn,
    running: ScalarFn,
    terminal: TerminalFn,
    /// Bound and Lipschitz constant `K`.
    pub bound: f64,
    /// Lower bound `λ` on the discount.
    pub lambda: f64,
    /// Coefficients do not depend on `t`.
    pub time_independent: bool,
}

impl fmt::Debug for ControlProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlProblem")
            .field("name", &self.name)
            .field("controls", &self.controls)
            .field("bound", &self.bound)
            .field("lambda", &self.lambda)
            .field("time_independent", &self.time_independent)
            .finish_non_exhaustive()
    }
}

impl ControlProblem {
    /// Problem with `n_controls` controls and all coefficients zero.
    pub fn new(name: impl Into<String>, n_controls: usize) -> Self {
        ControlProblem {
            name: name.into(),
            controls: (0..n_controls).map(|a| alloc::format!("a{}", a + 1)).collect(),
            sigma: Arc::new(|_, _, _, _| 0.0),
            drift: Arc::new(|_, _, _, _| 0.0),
            discount: Arc::new(|_, _, _| 0.0),
            running: Arc::new(|_, _, _| 0.0),
            terminal: Arc::new(|_| 0.0),
            bound: 1.0,
            lambda: 0.0,
            time_independent: true,
        }
    }

    pub fn with_labels(mut self, labels: impl IntoIterator<Item = impl Into<String>>) -> Self {
        self.controls = labels.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_sigma(mut self, f: impl Fn(usize, usize, f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.sigma = Arc::new(f);
        self
    }

    pub fn with_drift(
        mut self,
        f: impl Fn(usize, Direction, f64, &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.drift = Arc::new(f);
        self
    }

    pub fn with_discount(mut self, f: impl Fn(usize, f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.discount = Arc::new(f);
        self
    }

    pub fn with_running(mut self, f: impl Fn(usize, f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.running = Arc::new(f);
        self
    }

    pub fn with_terminal(mut self, g: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.terminal = Arc::new(g);
        self
    }

    pub fn with_constants(mut self, bound: f64, lambda: f64) -> Self {
        self.bound = bound;
        self.lambda = lambda;
        self
    }

    pub fn time_dependent(mut self) -> Self {
        self.time_independent = false;
        self
    }

    pub fn n_controls(&self) -> usize {
        self.controls.len()
    }

    pub fn sigma(&self, control: usize, axis: usize, t: f64, x: &[f64]) -> f64 {
        (self.sigma)(control, axis, t, x)
    }

    /// `a_k^α = σ²/2`, always derived from `σ`.
    pub fn diffusion(&self, control: usize, axis: usize, t: f64, x: &[f64]) -> f64 {
        let s = self.sigma(control, axis, t, x);
        0.5 * s * s
    }

    pub fn drift(&self, control: usize, dir: Direction, t: f64, x: &[f64]) -> f64 {
        (self.drift)(control, dir, t, x)
    }

    pub fn discount(&self, control: usize, t: f64, x: &[f64]) -> f64 {
        (self.discount)(control, t, x)
    }

    pub fn running(&self, control: usize, t: f64, x: &[f64]) -> f64 {
        (self.running)(control, t, x)
    }

    pub fn terminal(&self, x: &[f64]) -> f64 {
        (self.terminal)(x)
    }

    pub fn sigma_fn(&self) -> &SigmaFn {
        &self.sigma
    }

    pub fn drift_fn(&self) -> &DriftFn {
        &self.drift
    }

    pub fn discount_fn(&self) -> &ScalarFn {
        &self.discount
    }

    pub fn running_fn(&self) -> &ScalarFn {
        &self.running
    }

    pub fn terminal_fn(&self) -> &TerminalFn {
        &self.terminal
    }

    /// Replaces the terminal data by evaluator.
    pub fn with_terminal_fn(mut self, g: TerminalFn) -> Self {
        self.terminal = g;
        self
    }

    pub fn with_running_fn(mut self, f: ScalarFn) -> Self {
        self.running = f;
        self
    }

    /// `f^α + shift`.
    pub fn shift_running(self, shift: f64) -> Self {
        let f = self.running.clone();
        self.with_running(move |a, t, x| f(a, t, x) + shift)
    }

    /// `g + shift`.
    pub fn shift_terminal(self, shift: f64) -> Self {
        let g = self.terminal.clone();
        self.with_terminal(move |x| g(x) + shift)
    }

    /// Samples the coefficients on the mesh and checks the structural
    /// assumptions. Sign violations (`b < 0`, `c < λ`) and non-finite values
    /// are errors; exceeded bounds are reported as warnings.
    pub fn validate(&self, mesh: &Mesh) -> Result<ValidationReport> {
        validate(self, mesh)
    }
}

#[derive(Clone)]
pub struct ExactSolution {
    eval: SolutionFn,
    pub description: String,
}

impl fmt::Debug for ExactSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExactSolution")
            .field("description", &self.description)
            .finish_non_exhaustive()
    }
}

impl ExactSolution {
    pub fn new(description: impl Into<String>, v: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        ExactSolution {
            eval: Arc::new(v),
            description: description.into(),
        }
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        (self.eval)(t, x)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize))]
pub struct ValidationReport {
    /// Largest of `|σ|, |b|, |c − λ|, |f|, |g|` seen.
    pub max_value: f64,
    /// Largest spatial difference quotient of any coefficient.
    pub max_spatial_quotient: f64,
    /// Largest `|ψ(t,x) − ψ(s,x)| / |t − s|^{1/2}`.
    pub max_time_holder: f64,
    /// Largest `|ℓ_k|`.
    pub max_direction_norm: f64,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.warnings.is_empty()
    }
}

/// Evaluates every coefficient of one control at one point, in a fixed order:
/// `σ_1..σ_{d₁}, b_{±1}..b_{±d₁}, c − λ, f`.
fn coefficient_values(p: &ControlProblem, d1: usize, a: usize, t: f64, x: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.extend((0..d1).map(|k| p.sigma(a, k, t, x)));
    out.extend(Direction::all(d1).map(|dir| p.drift(a, dir, t, x)));
    out.push(p.discount(a, t, x) - p.lambda);
    out.push(p.running(a, t, x));
}

const MAX_SAMPLED_LEVELS: usize = 64;

fn validate(p: &ControlProblem, mesh: &Mesh) -> Result<ValidationReport> {
    if p.n_controls() == 0 {
        return Err(Error::EmptyControlSet);
    }
    if p.lambda < 0.0 {
        return Err(Error::Config(alloc::format!("λ must be nonnegative, got {}", p.lambda)));
    }
    let d1 = mesh.n_directions();
    let h = mesh.h();
    let levels = mesh.time_levels();
    let n_levels = levels.len() - 1;
    let step = n_levels.div_ceil(MAX_SAMPLED_LEVELS).max(1);
    let sampled: Vec<usize> = (0..n_levels).step_by(step).collect();

    let mut report = ValidationReport {
        max_direction_norm: (0..d1).map(|k| mesh.direction_norm(k)).fold(0.0, f64::max),
        ..Default::default()
    };
    let (mut here, mut there) = (Vec::new(), Vec::new());
    let mut shifted = alloc::vec![0.0; mesh.dim()];

    for node in 0..mesh.n_nodes() {
        let x = mesh.position(node);
        let gx = p.terminal(x);
        if !gx.is_finite() {
            return Err(non_finite("g", 0, mesh.horizon(), x));
        }
        report.max_value = report.max_value.max(gx.abs());
        for k in 0..d1 {
            for frac in [0.5, 1.0] {
                shift_into(x, &mesh.spec().directions[k], frac * h, &mut shifted);
                let dist = frac * h * mesh.direction_norm(k);
                if dist > 0.0 {
                    let q = (p.terminal(&shifted) - gx).abs() / dist;
                    report.max_spatial_quotient = report.max_spatial_quotient.max(q);
                }
            }
        }

        for &j in &sampled {
            let t = levels[j];
            for a in 0..p.n_controls() {
                coefficient_values(p, d1, a, t, x, &mut here);
                for (slot, v) in here.iter().enumerate() {
                    if !v.is_finite() {
                        return Err(non_finite(coefficient_name(slot, d1), a, t, x));
                    }
                }
                for (s, dir) in Direction::all(d1).enumerate() {
                    let b = here[d1 + s];
                    if b < 0.0 {
                        return Err(Error::Validation {
                            control: a,
                            direction: Some(dir.label()),
                            t,
                            x: x.to_vec(),
                            reason: alloc::format!("drift coefficient {b} is negative"),
                        });
                    }
                }
                let c_excess = here[3 * d1];
                if c_excess < 0.0 {
                    return Err(Error::Validation {
                        control: a,
                        direction: None,
                        t,
                        x: x.to_vec(),
                        reason: alloc::format!("discount {} is below λ = {}", c_excess + p.lambda, p.lambda),
                    });
                }
                report.max_value = here.iter().fold(report.max_value, |m, v| m.max(v.abs()));

                for k in 0..d1 {
                    for frac in [0.5, 1.0] {
                        shift_into(x, &mesh.spec().directions[k], frac * h, &mut shifted);
                        let dist = frac * h * mesh.direction_norm(k);
                        if dist == 0.0 {
                            continue;
                        }
                        coefficient_values(p, d1, a, t, &shifted, &mut there);
                        let q = max_abs_diff(&here, &there) / dist;
                        report.max_spatial_quotient = report.max_spatial_quotient.max(q);
                    }
                }
                if !p.time_independent {
                    let dt = mesh.step_after(j);
                    for s in [0.25 * dt, dt] {
                        coefficient_values(p, d1, a, t + s, x, &mut there);
                        let q = max_abs_diff(&here, &there) / libm::sqrt(s);
                        report.max_time_holder = report.max_time_holder.max(q);
                    }
                }
            }
        }
    }

    let k = p.bound;
    // sampled quotients include O(h) curvature effects; allow that slack
    let slack = 1.0 + 1e-9;
    if report.max_value > k * slack {
        report.warnings.push(alloc::format!(
            "coefficient magnitude {} exceeds K = {k}",
            report.max_value
        ));
    }
    if report.max_spatial_quotient > k * slack {
        report.warnings.push(alloc::format!(
            "spatial difference quotient {} exceeds K = {k}",
            report.max_spatial_quotient
        ));
    }
    if report.max_time_holder > k * slack {
        report.warnings.push(alloc::format!(
            "time Hölder quotient {} exceeds K = {k} (assumption (H))",
            report.max_time_holder
        ));
    }
    if report.max_direction_norm > k * slack {
        report.warnings.push(alloc::format!(
            "direction norm {} exceeds K = {k}",
            report.max_direction_norm
        ));
    }
    Ok(report)
}

fn shift_into(x: &[f64], l: &[f64], s: f64, out: &mut [f64]) {
    for ((o, xc), lc) in out.iter_mut().zip(x).zip(l) {
        *o = xc + s * lc;
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn coefficient_name(slot: usize, d1: usize) -> &'static str {
    if slot < d1 {
        "sigma"
    } else if slot < 3 * d1 {
        "drift"
    } else if slot == 3 * d1 {
        "discount"
    } else {
        "running cost"
    }
}

fn non_finite(what: &'static str, control: usize, t: f64, x: &[f64]) -> Error {
    Error::Evaluation {
        what,
        control,
        t,
        x: x.to_vec(),
    }
}

// --- catalog ---------------------------------------------------------------

/// Names accepted by [`catalog`].
pub const CATALOG: [&str; 6] = [
    "const",
    "heat1d",
    "transport_kink",
    "eikonal2ctl",
    "obstacle1d",
    "twocontrol_diffusion",
];

/// Default penalty weight of the obstacle problem.
pub const DEFAULT_PENALTY: f64 = 1e3;

/// Regularity class of a catalog problem, which fixes the convergence-order
/// floor a study must reach.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RateClass {
    Smooth,
    Lipschitz,
}

impl RateClass {
    pub fn order_floor(self) -> f64 {
        match self {
            RateClass::Smooth => 1.9,
            RateClass::Lipschitz => 0.5,
        }
    }
}

/// How the study time step follows the space step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TauRule {
    /// `τ = h`
    Linear,
    /// `τ = h²`
    Square,
}

impl TauRule {
    pub fn tau(self, h: f64) -> f64 {
        match self {
            TauRule::Linear => h,
            TauRule::Square => h * h,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub problem: ControlProblem,
    pub exact: Option<ExactSolution>,
    pub default_mesh: MeshSpec,
    pub rate_class: RateClass,
    pub tau_rule: TauRule,
    /// Physical half-width of the default index box.
    pub box_half_width: f64,
    /// `f` and `g` vanish outside a bounded set.
    pub compact_support: bool,
    /// Obstacle data, for `obstacle1d`.
    pub obstacle: Option<Obstacle>,
}

/// Overrides for parametrized catalog entries.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CatalogParams {
    /// Discount level for `twocontrol_diffusion` (default 0).
    pub lambda: Option<f64>,
    /// Penalty weight `M` for `obstacle1d` (default 10³).
    pub penalty: Option<f64>,
}

pub fn catalog(name: &str) -> Result<CatalogEntry> {
    catalog_with(name, CatalogParams::default())
}

pub fn catalog_with(name: &str, params: CatalogParams) -> Result<CatalogEntry> {
    match name {
        "const" => Ok(constant()),
        "heat1d" => Ok(heat1d()),
        "transport_kink" => Ok(transport_kink()),
        "eikonal2ctl" => Ok(eikonal2ctl()),
        "obstacle1d" => Ok(obstacle1d(params.penalty.unwrap_or(DEFAULT_PENALTY))),
        "twocontrol_diffusion" => Ok(twocontrol_diffusion(params.lambda.unwrap_or(0.0))),
        _ => Err(Error::UnknownProblem {
            name: name.to_string(),
            available: CATALOG.join(", "),
        }),
    }
}

fn tent(x: f64) -> f64 {
    (1.0 - x.abs()).max(0.0)
}

/// `c = 1, f = 1, g = 1`: the solution is identically one.
fn constant() -> CatalogEntry {
    let problem = ControlProblem::new("const", 1)
        .with_discount(|_, _, _| 1.0)
        .with_running(|_, _, _| 1.0)
        .with_terminal(|_| 1.0)
        .with_constants(1.0, 1.0);
    CatalogEntry {
        problem,
        exact: Some(ExactSolution::new("v ≡ 1", |_, _| 1.0)),
        default_mesh: MeshSpec::line(1.0, 0.25, 0.5, 4),
        rate_class: RateClass::Smooth,
        tau_rule: TauRule::Linear,
        box_half_width: 2.0,
        compact_support: false,
        obstacle: None,
    }
}

/// `∂_t u + ½ u_xx = 0`, `g = cos x`.
fn heat1d() -> CatalogEntry {
    let horizon = 1.0;
    let problem = ControlProblem::new("heat1d", 1)
        .with_sigma(|_, _, _, _| 1.0)
        .with_terminal(|x| libm::cos(x[0]))
        .with_constants(1.0, 0.0);
    let exact = ExactSolution::new("e^{-(T-t)/2} cos x", move |t, x| {
        libm::exp(-(horizon - t) / 2.0) * libm::cos(x[0])
    });
    CatalogEntry {
        problem,
        exact: Some(exact),
        default_mesh: MeshSpec::line(horizon, 0.01, 0.1, 90),
        rate_class: RateClass::Smooth,
        tau_rule: TauRule::Square,
        box_half_width: 9.0,
        compact_support: false,
        obstacle: None,
    }
}

/// `∂_t u + |u_x| = 0` realized by two one-sided drifts, with the kinked,
/// bounded terminal data `g = −min(|x|, 1)`. Hopf–Lax gives
/// `v(t,x) = −min((|x| − (T − t))₊, 1)`.
fn transport_kink() -> CatalogEntry {
    let horizon = 1.0;
    let problem = ControlProblem::new("transport_kink", 2)
        .with_labels(["right", "left"])
        .with_drift(|a, dir, _, _| match (a, dir.forward) {
            (0, true) | (1, false) => 1.0,
            _ => 0.0,
        })
        .with_terminal(|x| -x[0].abs().min(1.0))
        .with_constants(1.0, 0.0);
    let exact = ExactSolution::new("Hopf-Lax: -min((|x| - (T - t))_+, 1)", move |t, x| {
        -(x[0].abs() - (horizon - t)).clamp(0.0, 1.0)
    });
    CatalogEntry {
        problem,
        exact: Some(exact),
        default_mesh: MeshSpec::line(horizon, 0.05, 0.05, 60),
        rate_class: RateClass::Lipschitz,
        tau_rule: TauRule::Linear,
        box_half_width: 3.0,
        compact_support: false,
        obstacle: None,
    }
}

/// Two-dimensional transport with the four drifts `±e₁, ±e₂`; continuum
/// equation `∂_t u + max(|u_x|, |u_y|) = 0`. With `g = (1 − |x|₁)₊` the
/// value is `(1 − (|x|₁ − (T − t))₊)₊`.
fn eikonal2ctl() -> CatalogEntry {
    let horizon = 1.0;
    let problem = ControlProblem::new("eikonal2ctl", 4)
        .with_labels(["+e1", "-e1", "+e2", "-e2"])
        .with_drift(|a, dir, _, _| if dir.slot() == a { 1.0 } else { 0.0 })
        .with_terminal(|x| tent(x[0].abs() + x[1].abs()))
        .with_constants(1.0, 0.0);
    let exact = ExactSolution::new("Hopf-Lax over the l1 ball", move |t, x| {
        let r = x[0].abs() + x[1].abs();
        tent((r - (horizon - t)).max(0.0))
    });
    CatalogEntry {
        problem,
        exact: Some(exact),
        default_mesh: MeshSpec::cartesian(2, horizon, 0.1, 0.1, 35),
        rate_class: RateClass::Lipschitz,
        tau_rule: TauRule::Linear,
        box_half_width: 3.5,
        compact_support: true,
        obstacle: None,
    }
}

/// Obstacle data for the penalized stopping problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    pub penalty: f64,
    /// Diffusion `a` of the continuation operator `aΔ_h u − c u`.
    pub diffusion: f64,
    pub discount: f64,
}

impl Obstacle {
    pub fn obstacle(&self, x: &[f64]) -> f64 {
        1.0 - x[0] * x[0]
    }
}

/// `max(½u'' − u, ½u'' − u + M(g − u)) = 0` with `g = 1 − x²`: the penalized
/// form of the stopping problem `max(½u'' − u, g − u) = 0`.
pub fn obstacle1d(penalty: f64) -> CatalogEntry {
    let obstacle = Obstacle {
        penalty,
        diffusion: 0.5,
        discount: 1.0,
    };
    let g = move |x: &[f64]| obstacle.obstacle(x);
    let problem = ControlProblem::new("obstacle1d", 2)
        .with_labels(["continue", "penalize"])
        .with_sigma(|_, _, _, _| 1.0)
        .with_discount(move |a, _, _| if a == 0 { 1.0 } else { 1.0 + penalty })
        .with_running(move |a, _, x| if a == 0 { 0.0 } else { penalty * g(x) })
        .with_terminal(g)
        .with_constants(5.0 * penalty, 1.0);
    CatalogEntry {
        problem,
        exact: None,
        default_mesh: MeshSpec::line(1.0, 0.05, 0.05, 40),
        rate_class: RateClass::Lipschitz,
        tau_rule: TauRule::Linear,
        box_half_width: 2.0,
        compact_support: false,
        obstacle: Some(obstacle),
    }
}

/// Switching between full diffusion and none:
/// `∂_t u + max(½u_xx − λu + φ/2, −λu + φ) = 0`, `g = φ = (1 − |x|)₊`.
fn twocontrol_diffusion(lambda: f64) -> CatalogEntry {
    let problem = ControlProblem::new("twocontrol_diffusion", 2)
        .with_labels(["diffuse", "frozen"])
        .with_sigma(|a, _, _, _| if a == 0 { 1.0 } else { 0.0 })
        .with_discount(move |_, _, _| lambda)
        .with_running(|a, _, x| if a == 0 { 0.5 * tent(x[0]) } else { tent(x[0]) })
        .with_terminal(|x| tent(x[0]))
        .with_constants(1.0_f64.max(lambda), lambda);
    CatalogEntry {
        problem,
        exact: None,
        default_mesh: MeshSpec::line(1.0, 0.01, 0.1, 100),
        rate_class: RateClass::Lipschitz,
        tau_rule: TauRule::Square,
        box_half_width: 10.0,
        compact_support: true,
        obstacle: None,
    }
}

/// `½u'' − u + f = 0` with `f = (3/2) cos x`, so `u = cos x`.
pub fn manufactured_elliptic_cos() -> (ControlProblem, ExactSolution) {
    let problem = ControlProblem::new("elliptic_cos", 1)
        .with_sigma(|_, _, _, _| 1.0)
        .with_discount(|_, _, _| 1.0)
        .with_running(|_, _, x| 1.5 * libm::cos(x[0]))
        .with_constants(1.5, 1.0);
    (problem, ExactSolution::new("cos x", |_, x| libm::cos(x[0])))
}
