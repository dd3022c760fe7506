//! Projected nonlinear conjugate gradients over the admissible box, and the
//! reconstruction driver built on the forward/adjoint pair.

use serde::{Deserialize, Serialize};

use crate::adjoint::{assemble_gradient, solve_adjoint, tikhonov_misfit, MisfitResidual, MisfitSpec};
use crate::error::{Error, Result};
use crate::forward::{solve_forward, BoundaryRecord, ForwardProblem, HistoryMode};
use crate::grid::{RegionMask, ScalarField3};
use crate::model::ConductivityModel;

/// Box constraint on the unknown coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub low: f64,
    pub high: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Self { low: 1.0, high: 10.0 }
    }
}

impl Bounds {
    pub fn validate(&self) -> Result<()> {
        if !(self.low < self.high) || !self.low.is_finite() || !self.high.is_finite() {
            return Err(Error::InvalidArgument(format!("bounds [{}, {}] are not an interval", self.low, self.high)));
        }
        Ok(())
    }

    #[inline]
    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.low, self.high)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InverseConfig {
    pub gamma: f64,
    pub bounds: Bounds,
    pub max_iters: usize,
    /// Observation window used by the inversion; data beyond it are dropped.
    pub t_inv: f64,
    pub armijo_c1: f64,
    pub backtrack: f64,
    /// Largest nodal change attempted on the first trial of each line search.
    pub initial_step: f64,
    pub grad_tol: f64,
    pub stall_tol: f64,
    pub cutoff_width: f64,
    /// True maximal contrast, used only for the error column of the trace.
    pub reference_max: f64,
}

impl Default for InverseConfig {
    fn default() -> Self {
        Self {
            gamma: 0.01,
            bounds: Bounds::default(),
            max_iters: 30,
            t_inv: 3.0,
            armijo_c1: 1e-4,
            backtrack: 0.5,
            initial_step: 1.0,
            grad_tol: 1e-3,
            stall_tol: 1e-6,
            cutoff_width: crate::adjoint::DEFAULT_CUTOFF_WIDTH,
            reference_max: 6.0,
        }
    }
}

impl InverseConfig {
    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.gamma >= 0.0) {
            return bad("gamma must be non-negative");
        }
        if !(self.t_inv > 0.0) {
            return bad("t_inv must be positive");
        }
        if !(self.armijo_c1 > 0.0 && self.armijo_c1 < 1.0) {
            return bad("armijo_c1 must lie in (0, 1)");
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return bad("backtrack must lie in (0, 1)");
        }
        if !(self.initial_step > 0.0) || !(self.grad_tol >= 0.0) || !(self.stall_tol >= 0.0) {
            return bad("step and tolerances must be positive");
        }
        if !(self.cutoff_width >= 0.0) || !(self.reference_max > 0.0) {
            return bad("cutoff_width and reference_max must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iter: usize,
    pub j: f64,
    pub grad_norm: f64,
    pub max_c: f64,
    pub contrast_error_pct: f64,
    /// Largest nodal change of the accepted step (0 for the initial entry).
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    Stagnation,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptTrace {
    pub entries: Vec<TraceEntry>,
    pub stop: StopReason,
}

impl OptTrace {
    /// Number of accepted steps.
    pub fn iterations(&self) -> usize {
        self.entries.len().saturating_sub(1)
    }
}

/// Node-wise clamp to the admissible box.
pub fn project_admissible(c: &ScalarField3, bounds: Bounds) -> ScalarField3 {
    let mut out = c.clone();
    for v in out.values_mut() {
        *v = bounds.clamp(*v);
    }
    out
}

/// `100 |max c_rec - c_true_max| / c_true_max` with the maximum over the mask.
pub fn contrast_error(c_rec: &ScalarField3, mask: &RegionMask, c_true_max: f64) -> f64 {
    let (max, _) = c_rec.max_on(mask);
    contrast_error_from_max(max, c_true_max)
}

pub fn contrast_error_from_max(max: f64, c_true_max: f64) -> f64 {
    100.0 * (max - c_true_max).abs() / c_true_max
}

/// Resets nodes below `1 + p (max c - 1)` to the background value 1 and
/// clamps the rest to the admissible box.
pub fn postprocess(c: &ScalarField3, fraction: f64, bounds: Bounds) -> Result<ScalarField3> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("fraction must lie in (0, 1), got {fraction}")));
    }
    let background = bounds.low;
    let max = c.max();
    let threshold = background + fraction * (max - background);
    let mut out = c.clone();
    for v in out.values_mut() {
        *v = if *v < threshold { background } else { bounds.clamp(*v) };
    }
    Ok(out)
}

/// A differentiable functional of a finite vector.
pub trait Objective {
    /// Value and gradient. The gradient is taken with respect to the
    /// weighted inner product `<a, b> = weight * sum a_i b_i`.
    fn evaluate(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

/// Optimizer settings independent of the PDE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgSettings {
    pub bounds: Bounds,
    pub max_iters: usize,
    pub armijo_c1: f64,
    pub backtrack: f64,
    pub initial_step: f64,
    pub grad_tol: f64,
    pub stall_tol: f64,
    /// Weight of the inner product the gradient refers to.
    pub weight: f64,
}

impl CgSettings {
    pub fn from_config(cfg: &InverseConfig, weight: f64) -> Self {
        Self {
            bounds: cfg.bounds,
            max_iters: cfg.max_iters,
            armijo_c1: cfg.armijo_c1,
            backtrack: cfg.backtrack,
            initial_step: cfg.initial_step,
            grad_tol: cfg.grad_tol,
            stall_tol: cfg.stall_tol,
            weight,
        }
    }
}

/// One accepted iterate, as seen by an observer.
#[derive(Debug, Clone, Copy)]
pub struct IterInfo<'a> {
    pub iter: usize,
    pub x: &'a [f64],
    pub j: f64,
    pub grad_norm: f64,
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub stop: StopReason,
}

/// Gradient with components that would push through an active bound
/// removed.
fn projected_gradient(x: &[f64], g: &[f64], bounds: Bounds) -> Vec<f64> {
    x.iter()
        .zip(g)
        .map(|(&xi, &gi)| {
            if (xi <= bounds.low && gi > 0.0) || (xi >= bounds.high && gi < 0.0) {
                0.0
            } else {
                gi
            }
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sup_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Projected Polak-Ribiere+ conjugate gradients with Armijo backtracking
/// along the projected path. `observe` sees every accepted iterate,
/// including the starting point.
pub fn projected_cg<O: Objective>(
    objective: &mut O,
    x0: &[f64],
    settings: CgSettings,
    mut observe: impl FnMut(IterInfo<'_>),
) -> Result<CgOutcome> {
    let b = settings.bounds;
    let w = settings.weight;
    let norm = |v: &[f64]| (w * dot(v, v)).sqrt();

    let mut x: Vec<f64> = x0.iter().map(|&v| b.clamp(v)).collect();
    let (mut j, mut g) = objective.evaluate(&x)?;
    if !j.is_finite() {
        return Err(Error::NonFiniteState { step: 0 });
    }
    let mut pg = projected_gradient(&x, &g, b);
    let g0_norm = norm(&pg);
    let j0 = j;
    observe(IterInfo { iter: 0, x: &x, j, grad_norm: g0_norm, step: 0.0 });
    if g0_norm == 0.0 {
        return Ok(CgOutcome { x, stop: StopReason::GradientTolerance });
    }

    let mut d: Vec<f64> = pg.iter().map(|v| -v).collect();
    for iter in 1..=settings.max_iters {
        if dot(&pg, &d) >= 0.0 {
            d = pg.iter().map(|v| -v).collect();
        }
        let mut restarted = false;
        let mut alpha = settings.initial_step / sup_norm(&d);
        let (x_new, j_new, g_new, step) = loop {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(&xi, &di)| b.clamp(xi + alpha * di)).collect();
            let dx: Vec<f64> = trial.iter().zip(&x).map(|(a, c)| a - c).collect();
            let step = sup_norm(&dx);
            if step < 1e-12 {
                if restarted {
                    return Err(Error::LineSearchFailure { iteration: iter });
                }
                restarted = true;
                d = pg.iter().map(|v| -v).collect();
                alpha = settings.initial_step / sup_norm(&d);
                continue;
            }
            let (jt, gt) = objective.evaluate(&trial)?;
            if jt.is_finite() && jt <= j + settings.armijo_c1 * w * dot(&g, &dx) {
                break (trial, jt, gt, step);
            }
            alpha *= settings.backtrack;
        };

        let pg_new = projected_gradient(&x_new, &g_new, b);
        let gn = norm(&pg_new);
        observe(IterInfo { iter, x: &x_new, j: j_new, grad_norm: gn, step });
        let dj = (j - j_new).abs();
        x = x_new;
        j = j_new;
        g = g_new;
        if gn <= settings.grad_tol * g0_norm {
            return Ok(CgOutcome { x, stop: StopReason::GradientTolerance });
        }
        if dj <= settings.stall_tol * j0 {
            return Ok(CgOutcome { x, stop: StopReason::Stagnation });
        }
        let diff: Vec<f64> = pg_new.iter().zip(&pg).map(|(a, b)| a - b).collect();
        let beta = (dot(&pg_new, &diff) / dot(&pg, &pg)).max(0.0);
        for (di, &gi) in d.iter_mut().zip(&pg_new) {
            *di = -gi + beta * *di;
        }
        pg = pg_new;
    }
    Ok(CgOutcome { x, stop: StopReason::MaxIterations })
}

/// The regularized misfit as a function of the coefficient values on the
/// mask; everything outside the mask stays at the known model's values.
pub struct PdeObjective<'a> {
    pub known: &'a ConductivityModel,
    pub problem: &'a ForwardProblem,
    pub data: &'a BoundaryRecord,
    pub mask: &'a RegionMask,
    pub c_guess: &'a ScalarField3,
    pub spec: MisfitSpec,
    /// Number of forward/adjoint pairs evaluated so far.
    pub evaluations: usize,
}

impl<'a> PdeObjective<'a> {
    pub fn field(&self, x: &[f64]) -> ScalarField3 {
        let mut c = self.known.space_part().clone();
        self.mask.scatter(x, c.values_mut());
        c
    }
}

impl Objective for PdeObjective<'_> {
    fn evaluate(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.evaluations += 1;
        let c = self.field(x);
        let model = self.known.with_space_part(c.clone())?;
        let (hist, rec) = solve_forward(&model, self.problem, HistoryMode::Every(1))?;
        let j = tikhonov_misfit(&rec, self.data, &c, self.c_guess, self.mask, self.spec)?;
        let residual = MisfitResidual::new(&rec, self.data, self.spec.cutoff_width)?;
        let lam = solve_adjoint(&model, self.problem, &residual)?;
        let grad = assemble_gradient(self.problem, &hist, &lam, &c, self.c_guess, self.spec.gamma, self.mask)?;
        Ok((j, self.mask.gather(grad.field.values())))
    }
}

/// Reconstructs the space part on the mask from front-face data, starting
/// from (and regularizing towards) the known model's space part.
pub fn invert(
    config: &InverseConfig,
    data: &BoundaryRecord,
    known: &ConductivityModel,
    problem: &ForwardProblem,
    mask: &RegionMask,
) -> Result<(ScalarField3, OptTrace)> {
    config.validate()?;
    let grid = problem.grid;
    if !known.grid().same_geometry(&grid) || !mask.grid().same_geometry(&grid) {
        return Err(Error::ShapeMismatch("model, mask and problem grids differ".into()));
    }
    if !data.grid.same_geometry(&grid) {
        return Err(Error::DataMismatch("data were recorded on a different grid".into()));
    }
    if (data.tau - problem.tau).abs() > 1e-12 * problem.tau {
        return Err(Error::DataMismatch(format!("data step {} differs from solver step {}", data.tau, problem.tau)));
    }
    let ratio = config.t_inv / problem.tau;
    let steps = ratio.round() as usize;
    if (ratio - steps as f64).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::NonDivisibleHorizon { t_final: config.t_inv, tau: problem.tau });
    }
    let data = data.truncated(steps)?;
    let mut inv_problem = problem.clone();
    inv_problem.steps = steps;

    let c_guess = known.space_part().clone();
    let mut objective = PdeObjective {
        known,
        problem: &inv_problem,
        data: &data,
        mask,
        c_guess: &c_guess,
        spec: MisfitSpec { gamma: config.gamma, cutoff_width: config.cutoff_width },
        evaluations: 0,
    };
    let x0 = mask.gather(c_guess.values());
    let settings = CgSettings::from_config(config, grid.cell_volume());
    let mut entries = Vec::new();
    let outcome = projected_cg(&mut objective, &x0, settings, |info| {
        let max_c = info.x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        entries.push(TraceEntry {
            iter: info.iter,
            j: info.j,
            grad_norm: info.grad_norm,
            max_c,
            contrast_error_pct: contrast_error_from_max(max_c, config.reference_max),
            step: info.step,
        });
    })?;
    let c = objective.field(&outcome.x);
    Ok((c, OptTrace { entries, stop: outcome.stop }))
}
