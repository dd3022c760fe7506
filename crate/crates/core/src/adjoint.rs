//! Misfit functional, discrete adjoint solver and gradient assembly.
//!
//! The adjoint is the exact transpose of the time stepping in
//! [`crate::forward`], so the assembled gradient is the derivative of the
//! discrete functional and not an approximation of a continuous one.

use crate::error::{Error, Result};
use crate::forward::{face_mode, BoundaryRecord, FaceMode, ForwardProblem, Layout, WaveHistory};
use crate::grid::{RegionMask, ScalarField3};
use crate::model::ConductivityModel;

/// Default length of the window over which observations are faded out
/// before the final time.
pub const DEFAULT_CUTOFF_WIDTH: f64 = 0.1;

/// Data weight `z(t)`: 1 up to `t_final - width`, then a cubic smoothstep
/// down to 0 at `t_final`.
pub fn data_cutoff(t: f64, t_final: f64, width: f64) -> f64 {
    if width <= 0.0 {
        return if t <= t_final { 1.0 } else { 0.0 };
    }
    let start = t_final - width;
    if t <= start {
        1.0
    } else if t >= t_final {
        0.0
    } else {
        let s = (t - start) / width;
        1.0 - s * s * (3.0 - 2.0 * s)
    }
}

/// `(u - u_obs) z(t)` on the front face, plus the quadrature weight
/// `h^2 tau` that turns it into the adjoint load.
#[derive(Debug, Clone)]
pub struct MisfitResidual {
    pub record: BoundaryRecord,
    pub weight: f64,
}

impl MisfitResidual {
    pub fn new(u_rec: &BoundaryRecord, u_obs: &BoundaryRecord, cutoff_width: f64) -> Result<Self> {
        u_rec.compatible(u_obs).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        let n = u_rec.node_count();
        let t_final = u_rec.tau * u_rec.steps as f64;
        let mut record = u_rec.clone();
        for m in 0..=u_rec.steps {
            let z = data_cutoff(m as f64 * u_rec.tau, t_final, cutoff_width);
            for s in 0..n {
                let k = m * n + s;
                record.samples[k] = (u_rec.samples[k] - u_obs.samples[k]) * z;
            }
        }
        let h = u_rec.grid.h;
        Ok(Self { record, weight: h * h * u_rec.tau })
    }

    /// An arbitrary load, used directly (weight 1).
    pub fn raw(record: BoundaryRecord) -> Self {
        Self { record, weight: 1.0 }
    }
}

/// Misfit weighting and regularization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MisfitSpec {
    pub gamma: f64,
    pub cutoff_width: f64,
}

impl Default for MisfitSpec {
    fn default() -> Self {
        Self { gamma: 0.01, cutoff_width: DEFAULT_CUTOFF_WIDTH }
    }
}

/// `1/2 sum (u - u_obs)^2 z h^2 tau + gamma/2 sum_mask (c - c_guess)^2 h^3`.
pub fn tikhonov_misfit(
    u_rec: &BoundaryRecord,
    u_obs: &BoundaryRecord,
    c: &ScalarField3,
    c_guess: &ScalarField3,
    mask: &RegionMask,
    spec: MisfitSpec,
) -> Result<f64> {
    if spec.gamma < 0.0 {
        return Err(Error::InvalidArgument("regularization weight must be non-negative".into()));
    }
    if !c.grid().same_geometry(c_guess.grid()) || !c.grid().same_geometry(mask.grid()) {
        return Err(Error::ShapeMismatch("coefficient fields and mask differ in grid".into()));
    }
    let residual = MisfitResidual::new(u_rec, u_obs, spec.cutoff_width)?;
    let n = u_rec.node_count();
    let t_final = u_rec.tau * u_rec.steps as f64;
    let mut data = 0.0;
    for m in 0..=u_rec.steps {
        let z = data_cutoff(m as f64 * u_rec.tau, t_final, spec.cutoff_width);
        if z == 0.0 {
            continue;
        }
        // r = (u - u_obs) z, so r^2 / z = (u - u_obs)^2 z
        let row = &residual.record.samples[m * n..(m + 1) * n];
        data += row.iter().map(|r| r * r).sum::<f64>() / z;
    }
    let h = c.grid().h;
    let reg: f64 = mask.indices().iter().map(|&i| (c.get(i) - c_guess.get(i)).powi(2)).sum();
    Ok(0.5 * data * residual.weight + 0.5 * spec.gamma * reg * h * h * h)
}

/// Backward sweep of the transposed scheme. Returns `lambda^m`, the
/// sensitivity of the functional to `u^m`, for `m = 0..=steps`.
pub fn solve_adjoint(
    model: &ConductivityModel,
    problem: &ForwardProblem,
    residual: &MisfitResidual,
) -> Result<WaveHistory> {
    let grid = problem.grid;
    let rec = &residual.record;
    if !model.grid().same_geometry(&grid) || !rec.grid.same_geometry(&grid) {
        return Err(Error::ShapeMismatch("adjoint inputs live on different grids".into()));
    }
    if rec.steps != problem.steps || (rec.tau - problem.tau).abs() > 1e-12 * problem.tau {
        return Err(Error::ShapeMismatch("residual and problem time axes differ".into()));
    }
    let layout = Layout::new(&grid, &problem.bc);
    if rec.nodes != layout.record_nodes {
        return Err(Error::ShapeMismatch("residual observes different nodes".into()));
    }
    let n = grid.len();
    let steps = problem.steps;
    let tau = problem.tau;
    let tau2 = tau * tau;
    let h = grid.h;
    let nrec = rec.nodes.len();

    let mut lam = vec![0.0; (steps + 1) * n];
    for m in 0..=steps {
        let row = &rec.samples[m * nrec..(m + 1) * nrec];
        let lm = &mut lam[m * n..(m + 1) * n];
        for (&node, &r) in rec.nodes.iter().zip(row) {
            lm[node] += r * residual.weight;
        }
    }

    let mut c = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut lt = vec![0.0; n];
    for m in (1..steps).rev() {
        let (head, tail) = lam.split_at_mut((m + 1) * n);
        let mu = &mut tail[..n];
        layout.zero_dirichlet(mu);
        let (older, lm) = head.split_at_mut(m * n);
        let lm1 = &mut older[(m - 1) * n..];

        let t = problem.time(m);
        model.fill_ctilde(t, &mut c);
        layout.stencil.apply_transpose(&c, mu, &mut scratch, &mut lt);
        for i in 0..n {
            lm[i] += 2.0 * mu[i] + tau2 * lt[i];
            lm1[i] -= mu[i];
        }
        for (faces, cond) in [(&layout.front, problem.bc.front), (&layout.back, problem.bc.back)] {
            if face_mode(cond, &problem.pulse, t) != FaceMode::Absorb {
                continue;
            }
            for &(i, k) in faces.iter() {
                let coef = tau2 * (c[i] + c[k]) / (h * tau) * mu[i];
                lm[i] -= coef;
                lm1[i] += coef;
            }
        }
        if m % 100 == 0 && lm.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { step: m });
        }
    }
    layout.zero_dirichlet(&mut lam[n..2 * n]);
    layout.zero_dirichlet(&mut lam[..n]);
    if lam.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState { step: 0 });
    }
    Ok(WaveHistory::from_data(grid, tau, steps, 1, lam))
}

/// Gradient of the functional with respect to the nodal values of `c`,
/// expressed as a density (divided by the cell volume) and supported on the
/// mask.
#[derive(Debug, Clone)]
pub struct GradientField {
    pub field: ScalarField3,
}

impl GradientField {
    /// Nodal derivative `dJ/dc_i` (density times cell volume).
    pub fn euclidean(&self) -> Vec<f64> {
        let vol = self.field.grid().cell_volume();
        self.field.values().iter().map(|g| g * vol).collect()
    }
}

/// Sums the time-step sensitivities `d/dc [lambda^{m+1} . step_m(u)]` and
/// adds the regularization term.
#[allow(clippy::too_many_arguments)]
pub fn assemble_gradient(
    problem: &ForwardProblem,
    u_hist: &WaveHistory,
    lam_hist: &WaveHistory,
    c: &ScalarField3,
    c_guess: &ScalarField3,
    gamma: f64,
    mask: &RegionMask,
) -> Result<GradientField> {
    let grid = problem.grid;
    for hist in [u_hist, lam_hist] {
        if !hist.is_full() || hist.steps != problem.steps || !hist.grid.same_geometry(&grid) {
            return Err(Error::ShapeMismatch("histories must hold every step of the problem's grid".into()));
        }
    }
    if !c.grid().same_geometry(&grid) || !c_guess.grid().same_geometry(&grid) || !mask.grid().same_geometry(&grid) {
        return Err(Error::ShapeMismatch("coefficient fields differ in grid".into()));
    }
    let grad = data_sensitivity(problem, u_hist, lam_hist);
    let vol = grid.cell_volume();
    let mut out = vec![0.0; grid.len()];
    for &i in mask.indices() {
        out[i] = grad[i] / vol + gamma * (c.get(i) - c_guess.get(i));
    }
    Ok(GradientField { field: ScalarField3::new(grid, out)? })
}

fn data_sensitivity(problem: &ForwardProblem, u_hist: &WaveHistory, lam_hist: &WaveHistory) -> Vec<f64> {
    let grid = problem.grid;
    let layout = Layout::new(&grid, &problem.bc);
    let tau = problem.tau;
    let tau2 = tau * tau;
    let h = grid.h;
    let theta1 = problem.theta1.values();
    let mut grad = vec![0.0; grid.len()];

    for m in 0..problem.steps {
        let mu = lam_hist.snapshot(m + 1);
        let u = u_hist.snapshot(m);
        let scale = if m == 0 { 0.5 * tau2 } else { tau2 };
        layout.stencil.accumulate_coefficient_derivative(mu, u, scale, &mut grad);
        let t = problem.time(m);
        for (faces, cond) in [(&layout.front, problem.bc.front), (&layout.back, problem.bc.back)] {
            let mode = face_mode(cond, &problem.pulse, t);
            for &(i, k) in faces.iter() {
                let g = match mode {
                    FaceMode::Off => continue,
                    FaceMode::Flux(f) => f,
                    FaceMode::Absorb if m == 0 => -theta1[i],
                    FaceMode::Absorb => -(u[i] - u_hist.snapshot(m - 1)[i]) / tau,
                };
                let d = scale * mu[i] * g / h;
                grad[i] += d;
                grad[k] += d;
            }
        }
    }
    grad
}

/// Tangent-linear solve: the front-face record of `du` for a coefficient
/// perturbation `dc`, linearized about the stored forward history.
pub fn linearized_record(
    model: &ConductivityModel,
    problem: &ForwardProblem,
    u_hist: &WaveHistory,
    dc: &ScalarField3,
) -> Result<BoundaryRecord> {
    let grid = problem.grid;
    if !u_hist.is_full() || u_hist.steps != problem.steps {
        return Err(Error::ShapeMismatch("linearization needs the full forward history".into()));
    }
    if !dc.grid().same_geometry(&grid) || !model.grid().same_geometry(&grid) {
        return Err(Error::ShapeMismatch("perturbation lives on a different grid".into()));
    }
    let layout = Layout::new(&grid, &problem.bc);
    let n = grid.len();
    let tau = problem.tau;
    let tau2 = tau * tau;
    let h = grid.h;
    let dcv = dc.values();
    let theta1 = problem.theta1.values();
    let mut record = BoundaryRecord::zeros(grid, tau, problem.steps);
    let nrec = record.nodes.len();

    let mut c = vec![0.0; n];
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    let mut prev = vec![0.0; n];

    // du^1 = tau^2/2 [L(dc) u^0 + ds_0]
    layout.stencil.apply(dcv, u_hist.snapshot(0), &mut b);
    let mut cur: Vec<f64> = b.iter().map(|v| 0.5 * tau2 * v).collect();
    for (faces, cond) in [(&layout.front, problem.bc.front), (&layout.back, problem.bc.back)] {
        let mode = face_mode(cond, &problem.pulse, 0.0);
        for &(i, k) in faces.iter() {
            let g = match mode {
                FaceMode::Off => continue,
                FaceMode::Flux(f) => f,
                FaceMode::Absorb => -theta1[i],
            };
            cur[i] += 0.5 * tau2 * (dcv[i] + dcv[k]) * g / h;
        }
    }
    layout.zero_dirichlet(&mut cur);
    let write = |m: usize, v: &[f64], record: &mut BoundaryRecord| {
        for (s, &node) in layout.record_nodes.iter().enumerate() {
            record.samples[m * nrec + s] = v[node];
        }
    };
    write(1, &cur, &mut record);

    let mut next = vec![0.0; n];
    for m in 1..problem.steps {
        let t = problem.time(m);
        let u = u_hist.snapshot(m);
        let u_prev = u_hist.snapshot(m - 1);
        model.fill_ctilde(t, &mut c);
        layout.stencil.apply(&c, &cur, &mut a);
        layout.stencil.apply(dcv, u, &mut b);
        for i in 0..n {
            next[i] = 2.0 * cur[i] - prev[i] + tau2 * (a[i] + b[i]);
        }
        for (faces, cond) in [(&layout.front, problem.bc.front), (&layout.back, problem.bc.back)] {
            let mode = face_mode(cond, &problem.pulse, t);
            for &(i, k) in faces.iter() {
                let (g, dg) = match mode {
                    FaceMode::Off => continue,
                    FaceMode::Flux(f) => (f, 0.0),
                    FaceMode::Absorb => (-(u[i] - u_prev[i]) / tau, -(cur[i] - prev[i]) / tau),
                };
                next[i] += tau2 * ((dcv[i] + dcv[k]) * g + (c[i] + c[k]) * dg) / h;
            }
        }
        layout.zero_dirichlet(&mut next);
        write(m + 1, &next, &mut record);
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{solve_forward, BoundaryConditions, HistoryMode};
    use crate::grid::{build_grid, build_mask, Box3};
    use crate::model::SourcePulse;

    #[test]
    fn cutoff_profile() {
        assert_eq!(data_cutoff(0.0, 3.0, 0.1), 1.0);
        assert_eq!(data_cutoff(2.9, 3.0, 0.1), 1.0);
        assert_eq!(data_cutoff(3.0, 3.0, 0.1), 0.0);
        assert!((data_cutoff(2.95, 3.0, 0.1) - 0.5).abs() < 1e-12);
        let mut last = 1.0;
        for i in 0..=100 {
            let z = data_cutoff(2.9 + 0.001 * i as f64, 3.0, 0.1);
            assert!(z <= last + 1e-15);
            last = z;
        }
    }

    fn standard_grid() -> crate::grid::Grid3 {
        build_grid(Box3::standard_domain(), 0.1).unwrap()
    }

    #[test]
    fn misfit_examples() {
        let g = standard_grid();
        let mask = build_mask(&g, Box3::standard_inner()).unwrap();
        let obs = BoundaryRecord::zeros(g, 0.003, 1000);
        let ones = ScalarField3::constant(g, 1.0);
        let spec = MisfitSpec { gamma: 0.01, cutoff_width: 0.1 };
        assert_eq!(tikhonov_misfit(&obs, &obs, &ones, &ones, &mask, spec).unwrap(), 0.0);

        let mut rec = obs.clone();
        let nrec = rec.node_count();
        rec.samples[10 * nrec + 5] = 1.0;
        let j = tikhonov_misfit(&rec, &obs, &ones, &ones, &mask, MisfitSpec { gamma: 0.0, ..spec }).unwrap();
        assert!((j - 0.5 * 0.01 * 0.003).abs() < 1e-18, "{j}");
        assert!((j - 1.5e-5).abs() < 1e-18);

        let twos = ScalarField3::constant(g, 2.0);
        let j = tikhonov_misfit(&obs, &obs, &twos, &ones, &mask, spec).unwrap();
        let expected = 0.5 * 0.01 * mask.count() as f64 * 1e-3;
        assert_eq!(mask.count(), 5577);
        assert!((j - expected).abs() < 1e-12, "{j}");
        assert!((j - 0.027885).abs() < 1e-12);
    }

    #[test]
    fn misfit_rejects_mismatch() {
        let g = standard_grid();
        let mask = build_mask(&g, Box3::standard_inner()).unwrap();
        let a = BoundaryRecord::zeros(g, 0.003, 100);
        let b = BoundaryRecord::zeros(g, 0.003, 101);
        let ones = ScalarField3::constant(g, 1.0);
        assert!(matches!(
            tikhonov_misfit(&a, &b, &ones, &ones, &mask, MisfitSpec::default()),
            Err(Error::ShapeMismatch(_))
        ));
    }

    fn tiny_problem() -> (ForwardProblem, ConductivityModel, RegionMask) {
        let g = build_grid(Box3::new([0.0; 3], [0.7; 3]).unwrap(), 0.1).unwrap();
        let theta0 = ScalarField3::from_fn(g, |x| (-((x[0] - 0.3).powi(2) + (x[1] - 0.35).powi(2) + (x[2] - 0.35).powi(2)) / 0.05).exp());
        let zero = ScalarField3::constant(g, 0.0);
        let p = ForwardProblem::new(g, 0.01, 0.5, SourcePulse::new(40.0), BoundaryConditions::standard(), theta0, zero).unwrap();
        let model = ConductivityModel::uniform(g, 1.5).unwrap();
        let mask = build_mask(&g, Box3::new([0.15; 3], [0.55; 3]).unwrap()).unwrap();
        (p, model, mask)
    }

    #[test]
    fn zero_residual_gives_zero_adjoint() {
        let (p, model, mask) = tiny_problem();
        let (hist, rec) = solve_forward(&model, &p, HistoryMode::Every(1)).unwrap();
        let res = MisfitResidual::new(&rec, &rec, 0.1).unwrap();
        let lam = solve_adjoint(&model, &p, &res).unwrap();
        assert!((0..lam.snapshot_count()).all(|s| lam.snapshot(s).iter().all(|&v| v == 0.0)));
        let c = model.space_part().clone();
        let g = assemble_gradient(&p, &hist, &lam, &c, &c, 0.0, &mask).unwrap();
        assert!(g.field.values().iter().all(|&v| v == 0.0));
        let guess = ScalarField3::constant(*c.grid(), -0.5);
        let g = assemble_gradient(&p, &hist, &lam, &c, &guess, 0.01, &mask).unwrap();
        for i in 0..c.grid().len() {
            let expected = if mask.contains(i) { 0.02 } else { 0.0 };
            assert!((g.field.get(i) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_load_adjoint_is_transversely_symmetric() {
        let (p, model, _) = tiny_problem();
        let g = p.grid;
        let mut rec = BoundaryRecord::zeros(g, p.tau, p.steps);
        let nrec = rec.nodes.len();
        for m in 20..40 {
            for v in &mut rec.samples[m * nrec..(m + 1) * nrec] {
                *v = 1.0;
            }
        }
        let lam = solve_adjoint(&model, &p, &MisfitResidual::raw(rec)).unwrap();
        for m in 0..=p.steps {
            let l = lam.snapshot(m);
            for idx in 0..g.len() {
                let [i, j, k] = g.ijk(idx);
                let mj = g.index([i, g.n[1] - 1 - j, k]);
                let mk = g.index([i, j, g.n[2] - 1 - k]);
                assert!((l[idx] - l[mj]).abs() <= 1e-12 * (1.0 + l[idx].abs()));
                assert!((l[idx] - l[mk]).abs() <= 1e-12 * (1.0 + l[idx].abs()));
            }
        }
    }

    fn random_field(g: crate::grid::Grid3, seed: u64, lo: f64, hi: f64) -> ScalarField3 {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        ScalarField3::new(g, (0..g.len()).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
    }

    #[test]
    fn adjoint_dot_test() {
        // <J' dc, r> computed by the tangent model must equal <dc, J'^T r>
        // computed by the adjoint, to rounding.
        for bc in [BoundaryConditions::standard(), BoundaryConditions::dirichlet_lateral()] {
            let (mut p, _, _) = tiny_problem();
            p.bc = bc;
            let g = p.grid;
            let c = random_field(g, 1, 1.0, 2.0);
            let model = ConductivityModel::new(c.clone(), None, None, 1.0).unwrap();
            let (hist, rec) = solve_forward(&model, &p, HistoryMode::Every(1)).unwrap();
            let dc = random_field(g, 2, -1.0, 1.0);
            let mut r = rec.clone();
            let r_vals = random_field(g, 3, -1.0, 1.0);
            for (k, v) in r.samples.iter_mut().enumerate() {
                *v = r_vals.values()[k % g.len()];
            }
            let du = linearized_record(&model, &p, &hist, &dc).unwrap();
            let lhs: f64 = du.samples.iter().zip(&r.samples).map(|(a, b)| a * b).sum();
            let lam = solve_adjoint(&model, &p, &MisfitResidual::raw(r)).unwrap();
            let sens = data_sensitivity(&p, &hist, &lam);
            let rhs: f64 = sens.iter().zip(dc.values()).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1e-30), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (p, _, mask) = tiny_problem();
        let g = p.grid;
        let c_true = ScalarField3::from_fn(g, |x| 1.5 + 0.8 * (-((x[0] - 0.35).powi(2) + (x[1] - 0.35).powi(2) + (x[2] - 0.35).powi(2)) / 0.02).exp());
        let true_model = ConductivityModel::new(c_true, None, None, 1.5).unwrap();
        let (_, obs) = solve_forward(&true_model, &p, HistoryMode::None).unwrap();
        let c = ScalarField3::constant(g, 1.5);
        let guess = ScalarField3::constant(g, 1.4);
        let spec = MisfitSpec { gamma: 0.01, cutoff_width: 0.1 };
        let model = ConductivityModel::new(c.clone(), None, None, 1.5).unwrap();
        let (hist, rec) = solve_forward(&model, &p, HistoryMode::Every(1)).unwrap();
        let res = MisfitResidual::new(&rec, &obs, spec.cutoff_width).unwrap();
        let lam = solve_adjoint(&model, &p, &res).unwrap();
        let grad = assemble_gradient(&p, &hist, &lam, &c, &guess, spec.gamma, &mask).unwrap();
        let eucl = grad.euclidean();

        let j_at = |field: &ScalarField3| {
            let m = ConductivityModel::new(field.clone(), None, None, 1.5).unwrap();
            let (_, r) = solve_forward(&m, &p, HistoryMode::None).unwrap();
            tikhonov_misfit(&r, &obs, field, &guess, &mask, spec).unwrap()
        };
        let eps = 1e-4;
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let nodes: Vec<usize> = mask.indices().choose_multiple(&mut rng, 20).copied().collect();
        for node in nodes {
            let mut plus = c.clone();
            plus.values_mut()[node] += eps;
            let mut minus = c.clone();
            minus.values_mut()[node] -= eps;
            let fd = (j_at(&plus) - j_at(&minus)) / (2.0 * eps);
            let rel = (fd - eucl[node]).abs() / eucl[node].abs();
            assert!(rel <= 1e-5, "node {node}: fd {fd} vs {}", eucl[node]);
        }
    }

    #[test]
    fn impulse_adjoint_is_symmetric_about_source_node() {
        let g = build_grid(Box3::new([0.0; 3], [0.8; 3]).unwrap(), 0.1).unwrap();
        let zero = ScalarField3::constant(g, 0.0);
        let p = ForwardProblem::new(g, 0.01, 0.5, SourcePulse::new(40.0), BoundaryConditions::standard(), zero.clone(), zero).unwrap();
        let model = ConductivityModel::uniform(g, 1.5).unwrap();
        let mut rec = BoundaryRecord::zeros(g, p.tau, p.steps);
        let s = rec.nodes.iter().position(|&n| n == g.index([0, 4, 4])).unwrap();
        let nrec = rec.node_count();
        rec.samples[30 * nrec + s] = 1.0;
        let lam = solve_adjoint(&model, &p, &MisfitResidual::raw(rec)).unwrap();
        for m in 0..=p.steps {
            let l = lam.snapshot(m);
            for idx in 0..g.len() {
                let [i, j, k] = g.ijk(idx);
                for mirror in [g.index([i, 8 - j, k]), g.index([i, j, 8 - k]), g.index([i, k, j])] {
                    assert!((l[idx] - l[mirror]).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn negative_gradient_descends() {
        let (p, _, mask) = tiny_problem();
        let g = p.grid;
        let c_true = ScalarField3::from_fn(g, |x| 1.5 + (-((x[0] - 0.35).powi(2) + (x[1] - 0.35).powi(2)) / 0.02).exp());
        let (_, obs) = solve_forward(&ConductivityModel::new(c_true, None, None, 1.5).unwrap(), &p, HistoryMode::None).unwrap();
        let c = ScalarField3::constant(g, 1.5);
        let spec = MisfitSpec { gamma: 0.0, cutoff_width: 0.1 };
        let model = ConductivityModel::new(c.clone(), None, None, 1.5).unwrap();
        let (hist, rec) = solve_forward(&model, &p, HistoryMode::Every(1)).unwrap();
        let j0 = tikhonov_misfit(&rec, &obs, &c, &c, &mask, spec).unwrap();
        let lam = solve_adjoint(&model, &p, &MisfitResidual::new(&rec, &obs, 0.1).unwrap()).unwrap();
        let grad = assemble_gradient(&p, &hist, &lam, &c, &c, 0.0, &mask).unwrap();
        let gmax = grad.field.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut stepped = c.clone();
        for (v, gv) in stepped.values_mut().iter_mut().zip(grad.field.values()) {
            *v -= 1e-3 * gv / gmax;
        }
        let (_, r1) = solve_forward(&ConductivityModel::new(stepped.clone(), None, None, 1.5).unwrap(), &p, HistoryMode::None).unwrap();
        let j1 = tikhonov_misfit(&r1, &obs, &stepped, &c, &mask, spec).unwrap();
        assert!(j1 < j0, "{j1} !< {j0}");
    }
}
