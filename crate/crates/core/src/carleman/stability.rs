//! Empirical Hölder-stability probe: coefficient distance in `H^1(Omega_l)`
//! against the distance of lateral fluxes in `H^3(0, T; L^2(Gamma_L))`.
//!
//! The probe uses homogeneous Dirichlet lateral faces, absorbing ends and no
//! source, so that the lateral flux is the observation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{solve_forward, BoundaryConditions, ForwardProblem, HistoryMode, WaveHistory};
use crate::grid::{build_grid, Box3, Grid3, ScalarField3};
use crate::model::{ConductivityModel, InitialProfile, SourcePulse};

#[derive(Debug, Clone)]
pub struct ProbeSetup {
    pub grid: Grid3,
    pub tau: f64,
    pub t_final: f64,
    /// Half-length of `Omega_l` along the axis.
    pub ell: f64,
    /// Half-length of the observed lateral band `Gamma_L`.
    pub big_l: f64,
    pub theta0: ScalarField3,
}

/// Default probe: the standard box at `h = 0.1`, the monotone coefficient
/// `2 + 0.5 x2`, and a Gaussian bump kept inside `Omega_l` away from the
/// boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub h: f64,
    pub tau: f64,
    pub t_final: f64,
    pub ell: f64,
    pub big_l: f64,
    pub eps_min: f64,
    pub eps_max: f64,
    pub eps_count: usize,
    pub bump_width: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { h: 0.1, tau: 0.003, t_final: 1.5, ell: 1.0, big_l: 1.7, eps_min: 1e-2, eps_max: 1e-1, eps_count: 5, bump_width: 0.3 }
    }
}

impl ProbeConfig {
    /// `(c1, p, setup, epsilons)`.
    pub fn build(&self) -> Result<(ConductivityModel, ScalarField3, ProbeSetup, Vec<f64>)> {
        if self.eps_count < 2 || !(self.eps_min > 0.0 && self.eps_max > self.eps_min) {
            return Err(Error::InvalidArgument("need eps_count >= 2 and 0 < eps_min < eps_max".into()));
        }
        let grid = build_grid(Box3::standard_domain(), self.h)?;
        let c1 = ConductivityModel::new(ScalarField3::from_fn(grid, |x| 2.0 + 0.5 * x[1]), None, None, 2.0)?;
        let w2 = self.bump_width * self.bump_width;
        let (ell, h) = (self.ell, self.h);
        let p = ScalarField3::from_fn(grid, |x| {
            let inside = x[0].abs() < ell - 0.5 * h
                && (1..3).all(|k| x[k] > grid.bbox.lo[k] + 0.5 * h && x[k] < grid.bbox.hi[k] - 0.5 * h);
            if inside {
                (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / w2).exp()
            } else {
                0.0
            }
        });
        let setup = ProbeSetup {
            grid,
            tau: self.tau,
            t_final: self.t_final,
            ell: self.ell,
            big_l: self.big_l,
            theta0: InitialProfile::standard().sample(&grid),
        };
        Ok((c1, p, setup, log_spaced(self.eps_min, self.eps_max, self.eps_count)))
    }

    pub fn run(&self) -> Result<SweepReport> {
        let (c1, p, setup, eps) = self.build()?;
        stability_probe(&c1, &p, &eps, &setup)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeDistance {
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub epsilons: Vec<f64>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    /// Least-squares slope of `log lhs` against `log rhs`.
    pub kappa_fit: f64,
    pub lhs_increasing: bool,
    pub rhs_increasing: bool,
    /// Whether the fitted exponent falls in the open unit interval asserted
    /// by the stability theorem.
    pub kappa_in_unit_interval: bool,
}

/// `(boundary node, inner neighbour)` for every lateral face sample with
/// `|x1| < L`; edge nodes contribute once per transverse face.
fn lateral_pairs(grid: &Grid3, big_l: f64) -> Vec<(usize, usize)> {
    let a = grid.normal_axis;
    let mut out = Vec::new();
    for idx in 0..grid.len() {
        let ijk = grid.ijk(idx);
        if ijk[a] == 0 || ijk[a] + 1 == grid.n[a] || grid.coords(idx)[a].abs() >= big_l {
            continue;
        }
        for k in (0..3).filter(|&k| k != a) {
            let s = grid.stride(k);
            if ijk[k] == 0 {
                out.push((idx, idx + s));
            } else if ijk[k] + 1 == grid.n[k] {
                out.push((idx, idx - s));
            }
        }
    }
    out
}

fn flux_history(hist: &WaveHistory, pairs: &[(usize, usize)], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(hist.snapshot_count() * pairs.len());
    for s in 0..hist.snapshot_count() {
        let u = hist.snapshot(s);
        out.extend(pairs.iter().map(|&(b, i)| (u[b] - u[i]) / h));
    }
    out
}

/// `H^3(0, T; L^2)` norm of a sampled time series (`w[m * n + s]`), with
/// centered differences for the time derivatives of orders 1 to 3. All
/// orders are integrated over the steps where the widest stencil fits.
pub fn h3_time_norm(w: &[f64], n: usize, tau: f64, area: f64) -> f64 {
    let steps = w.len() / n;
    if steps < 5 {
        return 0.0;
    }
    let at = |m: usize, s: usize| w[m * n + s];
    let mut total = 0.0;
    for m in 2..steps - 2 {
        for s in 0..n {
            let d0 = at(m, s);
            let d1 = (at(m + 1, s) - at(m - 1, s)) / (2.0 * tau);
            let d2 = (at(m + 1, s) - 2.0 * d0 + at(m - 1, s)) / (tau * tau);
            let d3 = (at(m + 2, s) - 2.0 * at(m + 1, s) + 2.0 * at(m - 1, s) - at(m - 2, s)) / (2.0 * tau * tau * tau);
            total += d0 * d0 + d1 * d1 + d2 * d2 + d3 * d3;
        }
    }
    (total * area * tau).sqrt()
}

/// Discrete `H^1` norm over nodes with `|x1| <= l` (forward differences on
/// edges inside the region).
pub fn h1_norm_on_slab(field: &[f64], grid: &Grid3, ell: f64) -> f64 {
    let a = grid.normal_axis;
    let inside = |i: usize| grid.coords(i)[a].abs() <= ell + 1e-9 * grid.h;
    let mut sum = 0.0;
    for i in (0..grid.len()).filter(|&i| inside(i)) {
        sum += field[i] * field[i];
        let ijk = grid.ijk(i);
        for k in 0..3 {
            if ijk[k] + 1 < grid.n[k] {
                let j = i + grid.stride(k);
                if inside(j) {
                    let d = (field[j] - field[i]) / grid.h;
                    sum += d * d;
                }
            }
        }
    }
    (sum * grid.cell_volume()).sqrt()
}

fn run(model: &ConductivityModel, probe: &ProbeSetup) -> Result<WaveHistory> {
    let zero = ScalarField3::constant(probe.grid, 0.0);
    let problem = ForwardProblem::new(
        probe.grid,
        probe.tau,
        probe.t_final,
        SourcePulse::silent(1.0),
        BoundaryConditions::dirichlet_lateral(),
        probe.theta0.clone(),
        zero,
    )?;
    Ok(solve_forward(model, &problem, HistoryMode::Every(1))?.0)
}

fn distance_from_fluxes(c1: &ConductivityModel, c2: &ConductivityModel, f1: &[f64], f2: &[f64], n: usize, probe: &ProbeSetup) -> ProbeDistance {
    let d: Vec<f64> = c1.space_part().values().iter().zip(c2.space_part().values()).map(|(a, b)| a - b).collect();
    let lhs = h1_norm_on_slab(&d, &probe.grid, probe.ell);
    let w: Vec<f64> = f1.iter().zip(f2).map(|(a, b)| a - b).collect();
    let h = probe.grid.h;
    let rhs = h3_time_norm(&w, n, probe.tau, h * h);
    ProbeDistance { lhs, rhs }
}

fn check_pair(c1: &ConductivityModel, c2: &ConductivityModel, probe: &ProbeSetup) -> Result<()> {
    if !c1.grid().same_geometry(&probe.grid) || !c2.grid().same_geometry(&probe.grid) {
        return Err(Error::ShapeMismatch("probe models and grid differ".into()));
    }
    if c1.time_part() != c2.time_part() {
        return Err(Error::InvalidArgument("probe models must share the known time part".into()));
    }
    if !(probe.big_l > probe.ell) {
        return Err(Error::InvalidArgument("need L > l".into()));
    }
    Ok(())
}

/// Distances between two coefficients and their lateral fluxes.
pub fn stability_distance(c1: &ConductivityModel, c2: &ConductivityModel, probe: &ProbeSetup) -> Result<ProbeDistance> {
    check_pair(c1, c2, probe)?;
    let pairs = lateral_pairs(&probe.grid, probe.big_l);
    let f1 = flux_history(&run(c1, probe)?, &pairs, probe.grid.h);
    let f2 = flux_history(&run(c2, probe)?, &pairs, probe.grid.h);
    Ok(distance_from_fluxes(c1, c2, &f1, &f2, pairs.len(), probe))
}

/// `n` values log-spaced on `[lo, hi]`.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Sweeps `c2 = c1 + eps p` and fits the exponent.
pub fn stability_probe(c1: &ConductivityModel, p: &ScalarField3, epsilons: &[f64], probe: &ProbeSetup) -> Result<SweepReport> {
    if epsilons.len() < 2 || epsilons.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidArgument("the sweep needs at least two positive perturbation sizes".into()));
    }
    check_pair(c1, c1, probe)?;
    let pairs = lateral_pairs(&probe.grid, probe.big_l);
    let f1 = flux_history(&run(c1, probe)?, &pairs, probe.grid.h);
    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    for &eps in epsilons {
        let mut space = c1.space_part().clone();
        for (v, dp) in space.values_mut().iter_mut().zip(p.values()) {
            *v += eps * dp;
        }
        let c2 = c1.with_space_part(space)?;
        let f2 = flux_history(&run(&c2, probe)?, &pairs, probe.grid.h);
        let d = distance_from_fluxes(c1, &c2, &f1, &f2, pairs.len(), probe);
        if d.rhs < 1e-14 {
            return Err(Error::DegenerateSweep(d.rhs));
        }
        lhs.push(d.lhs);
        rhs.push(d.rhs);
    }
    let xs: Vec<f64> = rhs.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = lhs.iter().map(|v| v.ln()).collect();
    let kappa_fit = least_squares_slope(&xs, &ys);
    let increasing = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
    Ok(SweepReport {
        epsilons: epsilons.to_vec(),
        lhs_increasing: increasing(&lhs),
        rhs_increasing: increasing(&rhs),
        kappa_in_unit_interval: kappa_fit > 0.0 && kappa_fit < 1.0,
        lhs,
        rhs,
        kappa_fit,
    })
}

pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
