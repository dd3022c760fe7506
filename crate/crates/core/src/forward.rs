//! Explicit three-level time stepping for `u_tt - div(c~ grad u) = 0`.
//!
//! The front face carries the source pulse until the switch time and a
//! first-order absorbing condition afterwards, the back face is absorbing,
//! the lateral faces are homogeneous Neumann (or Dirichlet for the
//! stability probe). Every condition enters through ghost nodes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FaceClass, Grid3, ScalarField3};
use crate::model::{ConductivityModel, SourcePulse};
use crate::stencil::Stencil;

const BLOWUP_CHECK_INTERVAL: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaceCondition {
    /// `d_n u = f(t)` up to the switch time, absorbing afterwards.
    SourceThenAbsorbing,
    /// `d_n u = -d_t u`.
    Absorbing,
    /// `d_n u = 0`.
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LateralCondition {
    Neumann,
    Dirichlet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryConditions {
    pub front: FaceCondition,
    pub back: FaceCondition,
    pub lateral: LateralCondition,
}

impl BoundaryConditions {
    /// Source then absorbing on the front, absorbing back, Neumann sides.
    pub fn standard() -> Self {
        Self { front: FaceCondition::SourceThenAbsorbing, back: FaceCondition::Absorbing, lateral: LateralCondition::Neumann }
    }

    pub fn all_neumann() -> Self {
        Self { front: FaceCondition::Neumann, back: FaceCondition::Neumann, lateral: LateralCondition::Neumann }
    }

    /// Homogeneous Dirichlet sides with absorbing ends and no source.
    pub fn dirichlet_lateral() -> Self {
        Self { front: FaceCondition::Absorbing, back: FaceCondition::Absorbing, lateral: LateralCondition::Dirichlet }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CflReport {
    pub ok: bool,
    pub tau_max: f64,
}

/// `tau_max = h / (sqrt(3) max sqrt(c~))`.
pub fn cfl_check(model: &ConductivityModel, h: f64, tau: f64) -> CflReport {
    let tau_max = h / (3f64.sqrt() * model.max_ctilde().sqrt());
    CflReport { ok: tau <= tau_max, tau_max }
}

/// Everything except the coefficient that defines one forward run.
#[derive(Debug, Clone)]
pub struct ForwardProblem {
    pub grid: Grid3,
    pub tau: f64,
    pub steps: usize,
    pub pulse: SourcePulse,
    pub bc: BoundaryConditions,
    pub theta0: ScalarField3,
    pub theta1: ScalarField3,
}

impl ForwardProblem {
    pub fn new(
        grid: Grid3,
        tau: f64,
        t_final: f64,
        pulse: SourcePulse,
        bc: BoundaryConditions,
        theta0: ScalarField3,
        theta1: ScalarField3,
    ) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
        }
        let ratio = t_final / tau;
        let steps = ratio.round();
        if !(t_final > 0.0) || (ratio - steps).abs() > 1e-9 * ratio.max(1.0) || steps < 1.0 {
            return Err(Error::NonDivisibleHorizon { t_final, tau });
        }
        for f in [&theta0, &theta1] {
            if !f.grid().same_geometry(&grid) {
                return Err(Error::ShapeMismatch("initial state lives on a different grid".into()));
            }
        }
        Ok(Self { grid, tau, steps: steps as usize, pulse, bc, theta0, theta1 })
    }

    pub fn t_final(&self) -> f64 {
        self.tau * self.steps as f64
    }

    pub fn time(&self, m: usize) -> f64 {
        self.tau * m as f64
    }
}

/// Time series of the solution at the front-face nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryRecord {
    pub grid: Grid3,
    pub face: FaceClass,
    /// Grid indices of the recorded nodes, ascending.
    pub nodes: Vec<usize>,
    pub tau: f64,
    pub steps: usize,
    /// `samples[m * nodes.len() + s]` is `u` at node `s` and time `m tau`.
    pub samples: Vec<f64>,
}

impl BoundaryRecord {
    pub fn zeros(grid: Grid3, tau: f64, steps: usize) -> Self {
        let nodes = grid.face_nodes(FaceClass::Front);
        let samples = vec![0.0; (steps + 1) * nodes.len()];
        Self { grid, face: FaceClass::Front, nodes, tau, steps, samples }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn at_step(&self, m: usize) -> &[f64] {
        let n = self.nodes.len();
        &self.samples[m * n..(m + 1) * n]
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(move |m| m as f64 * self.tau)
    }

    /// Same grid, face, node set and time axis.
    pub fn compatible(&self, other: &BoundaryRecord) -> Result<()> {
        if !self.grid.same_geometry(&other.grid) {
            return Err(Error::DataMismatch("records live on different grids".into()));
        }
        if self.face != other.face || self.nodes != other.nodes {
            return Err(Error::DataMismatch("records observe different nodes".into()));
        }
        if self.steps != other.steps || (self.tau - other.tau).abs() > 1e-12 * self.tau {
            return Err(Error::DataMismatch(format!(
                "time axes differ: {} x {} vs {} x {}",
                self.steps, self.tau, other.steps, other.tau
            )));
        }
        Ok(())
    }

    /// Keeps the first `steps` steps.
    pub fn truncated(&self, steps: usize) -> Result<BoundaryRecord> {
        if steps > self.steps {
            return Err(Error::DataMismatch(format!("record has {} steps, {steps} requested", self.steps)));
        }
        let n = self.nodes.len();
        Ok(BoundaryRecord { samples: self.samples[..(steps + 1) * n].to_vec(), steps, ..self.clone() })
    }
}

/// Stored wavefield snapshots.
#[derive(Debug, Clone)]
pub struct WaveHistory {
    pub grid: Grid3,
    pub tau: f64,
    pub steps: usize,
    /// Distance in steps between stored snapshots; 0 when nothing is kept.
    pub stride: usize,
    data: Vec<f64>,
}

impl WaveHistory {
    pub fn empty(grid: Grid3, tau: f64, steps: usize) -> Self {
        Self { grid, tau, steps, stride: 0, data: Vec::new() }
    }

    pub(crate) fn from_data(grid: Grid3, tau: f64, steps: usize, stride: usize, data: Vec<f64>) -> Self {
        Self { grid, tau, steps, stride, data }
    }

    pub fn snapshot_count(&self) -> usize {
        if self.grid.is_empty() {
            0
        } else {
            self.data.len() / self.grid.len()
        }
    }

    /// Snapshot number `s` (time step `s * stride`).
    pub fn snapshot(&self, s: usize) -> &[f64] {
        let n = self.grid.len();
        &self.data[s * n..(s + 1) * n]
    }

    /// Field at time step `m`, when it was stored.
    pub fn at_step(&self, m: usize) -> Option<&[f64]> {
        if self.stride == 0 || m % self.stride != 0 || m / self.stride >= self.snapshot_count() {
            return None;
        }
        Some(self.snapshot(m / self.stride))
    }

    pub fn is_full(&self) -> bool {
        self.stride == 1 && self.snapshot_count() == self.steps + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistoryMode {
    None,
    Every(usize),
}

/// How a normal-face condition acts at one time level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum FaceMode {
    Off,
    /// Prescribed flux `d_n u = g`.
    Flux(f64),
    /// `d_n u = -d_t u` by a backward difference (or `-theta1` at `t = 0`).
    Absorb,
}

/// Boundary bookkeeping shared by the forward, tangent and adjoint solvers.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub stencil: Stencil,
    /// `(boundary node, inner neighbour)` on the front face.
    pub front: Vec<(usize, usize)>,
    pub back: Vec<(usize, usize)>,
    pub dirichlet: Vec<usize>,
    pub record_nodes: Vec<usize>,
}

impl Layout {
    pub fn new(grid: &Grid3, bc: &BoundaryConditions) -> Self {
        let a = grid.normal_axis;
        let s = grid.stride(a);
        let mut front = Vec::new();
        let mut back = Vec::new();
        let mut dirichlet = Vec::new();
        for idx in 0..grid.len() {
            let ijk = grid.ijk(idx);
            if ijk[a] == 0 {
                front.push((idx, idx + s));
            } else if ijk[a] + 1 == grid.n[a] {
                back.push((idx, idx - s));
            }
            let lateral = (0..3).any(|k| k != a && (ijk[k] == 0 || ijk[k] + 1 == grid.n[k]));
            if lateral && bc.lateral == LateralCondition::Dirichlet {
                dirichlet.push(idx);
            }
        }
        let record_nodes = front.iter().map(|&(i, _)| i).collect();
        Self { stencil: Stencil::new(grid), front, back, dirichlet, record_nodes }
    }

    pub fn zero_dirichlet(&self, u: &mut [f64]) {
        for &i in &self.dirichlet {
            u[i] = 0.0;
        }
    }
}

pub(crate) fn face_mode(cond: FaceCondition, pulse: &SourcePulse, t: f64) -> FaceMode {
    match cond {
        FaceCondition::Neumann => FaceMode::Off,
        FaceCondition::Absorbing => FaceMode::Absorb,
        FaceCondition::SourceThenAbsorbing => {
            if t <= pulse.switch_time() + 1e-12 {
                FaceMode::Flux(pulse.eval(t))
            } else {
                FaceMode::Absorb
            }
        }
    }
}

/// Runs the forward solver and records the front face at every step.
pub fn solve_forward(
    model: &ConductivityModel,
    problem: &ForwardProblem,
    history: HistoryMode,
) -> Result<(WaveHistory, BoundaryRecord)> {
    let grid = problem.grid;
    if !model.grid().same_geometry(&grid) {
        return Err(Error::ShapeMismatch("model and problem grids differ".into()));
    }
    let cfl = cfl_check(model, grid.h, problem.tau);
    if !cfl.ok {
        return Err(Error::CflViolation { tau: problem.tau, tau_max: cfl.tau_max });
    }
    let layout = Layout::new(&grid, &problem.bc);
    let n = grid.len();
    let tau = problem.tau;
    let tau2 = tau * tau;
    let h = grid.h;
    let steps = problem.steps;

    let mut record = BoundaryRecord::zeros(grid, tau, steps);
    debug_assert_eq!(record.nodes, layout.record_nodes);
    let nrec = record.nodes.len();
    let stride = match history {
        HistoryMode::None => 0,
        HistoryMode::Every(k) => k.max(1),
    };
    let mut hist = Vec::new();
    if stride > 0 {
        hist.reserve((steps / stride + 1) * n);
    }

    let mut c = vec![0.0; n];
    let mut lu = vec![0.0; n];
    let mut prev = problem.theta0.values().to_vec();
    layout.zero_dirichlet(&mut prev);
    let theta1 = problem.theta1.values();

    let store = |m: usize, u: &[f64], record: &mut BoundaryRecord, hist: &mut Vec<f64>| {
        let row = &mut record.samples[m * nrec..(m + 1) * nrec];
        for (r, &node) in row.iter_mut().zip(&layout.record_nodes) {
            *r = u[node];
        }
        if stride > 0 && m % stride == 0 {
            hist.extend_from_slice(u);
        }
    };
    store(0, &prev, &mut record, &mut hist);

    // first step from the Taylor expansion
    model.fill_ctilde(0.0, &mut c);
    layout.stencil.apply(&c, &prev, &mut lu);
    let mut cur: Vec<f64> = (0..n).map(|i| prev[i] + tau * theta1[i] + 0.5 * tau2 * lu[i]).collect();
    for (faces, cond) in [(&layout.front, problem.bc.front), (&layout.back, problem.bc.back)] {
        let mode = face_mode(cond, &problem.pulse, 0.0);
        for &(i, k) in faces.iter() {
            let g = match mode {
                FaceMode::Off => continue,
                FaceMode::Flux(f) => f,
                FaceMode::Absorb => -theta1[i],
            };
            cur[i] += 0.5 * tau2 * (c[i] + c[k]) * g / h;
        }
    }
    layout.zero_dirichlet(&mut cur);
    store(1, &cur, &mut record, &mut hist);

    let mut next = vec![0.0; n];
    for m in 1..steps {
        let t = problem.time(m);
        model.fill_ctilde(t, &mut c);
        layout.stencil.apply(&c, &cur, &mut lu);
        for i in 0..n {
            next[i] = 2.0 * cur[i] - prev[i] + tau2 * lu[i];
        }
        for (faces, cond) in [(&layout.front, problem.bc.front), (&layout.back, problem.bc.back)] {
            let mode = face_mode(cond, &problem.pulse, t);
            for &(i, k) in faces.iter() {
                let g = match mode {
                    FaceMode::Off => continue,
                    FaceMode::Flux(f) => f,
                    FaceMode::Absorb => -(cur[i] - prev[i]) / tau,
                };
                next[i] += tau2 * (c[i] + c[k]) * g / h;
            }
        }
        layout.zero_dirichlet(&mut next);
        if (m + 1) % BLOWUP_CHECK_INTERVAL == 0 || m + 1 == steps {
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteState { step: m + 1 });
            }
        }
        store(m + 1, &next, &mut record, &mut hist);
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
    }

    Ok((WaveHistory::from_data(grid, tau, steps, stride, hist), record))
}

/// Discrete energy between levels `u0 = u^m` and `u1 = u^{m+1}`:
/// `1/2 |(u1 - u0)/tau|_M^2 - 1/2 <u1, M L(c) u0>`, scaled by the cell
/// volume. Conserved by the scheme for time-independent `c` and
/// homogeneous Neumann conditions.
pub fn discrete_energy(grid: &Grid3, c: &[f64], u0: &[f64], u1: &[f64], tau: f64) -> f64 {
    let st = Stencil::new(grid);
    let mut lu = vec![0.0; grid.len()];
    st.apply(c, u0, &mut lu);
    let mass = st.mass();
    let mut kinetic = 0.0;
    let mut potential = 0.0;
    for i in 0..grid.len() {
        let v = (u1[i] - u0[i]) / tau;
        kinetic += mass[i] * v * v;
        potential -= mass[i] * u1[i] * lu[i];
    }
    0.5 * (kinetic + potential) * grid.cell_volume()
}
