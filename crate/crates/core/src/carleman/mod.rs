//! Numerical checks of the hypotheses behind the Carleman estimate and the
//! Hölder stability result, for a cylinder `omega x R` whose axis `x_n` is
//! the computational `x1` and whose cross-section lives in `(x2, x3)`.
//!
//! All weight comparisons are carried out on `psi`, since `phi = exp(gamma
//! psi)` is monotone in `psi` and overflows for realistic `delta`.

pub mod stability;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{InitialProfile, ModelSpec};

/// Space dimension of the cylinder.
const N: f64 = 3.0;
const DELTA_SCAN_FACTOR: f64 = 1.05;
const DELTA_CAP: f64 = 1e6;
/// Above this exponent `phi` is only reported through its logarithm.
pub const LOG_SPACE_THRESHOLD: f64 = 700.0;

/// Closed rectangle in the cross-section plane; `lo == hi` is allowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Rect {
    pub fn corners(&self) -> [[f64; 2]; 4] {
        [[self.lo[0], self.lo[1]], [self.hi[0], self.lo[1]], [self.lo[0], self.hi[1]], [self.hi[0], self.hi[1]]]
    }

    pub fn diameter(&self) -> f64 {
        ((self.hi[0] - self.lo[0]).powi(2) + (self.hi[1] - self.lo[1]).powi(2)).sqrt()
    }

    /// `sup |y - p|^2` over the rectangle (attained at a corner).
    pub fn sup_dist2(&self, p: [f64; 2]) -> f64 {
        self.corners().iter().map(|c| dist2(*c, p)).fold(0.0, f64::max)
    }

    /// `inf |y - p|^2` over the rectangle (attained at the clamped point).
    pub fn inf_dist2(&self, p: [f64; 2]) -> f64 {
        dist2(self.clamp(p), p)
    }

    pub fn clamp(&self, p: [f64; 2]) -> [f64; 2] {
        [p[0].clamp(self.lo[0], self.hi[0]), p[1].clamp(self.lo[1], self.hi[1])]
    }

    /// `k x k` lattice including the edges.
    fn lattice(&self, k: usize) -> impl Iterator<Item = [f64; 2]> + '_ {
        let k = k.max(2);
        (0..k).flat_map(move |i| {
            (0..k).map(move |j| {
                let s = |a: usize, d: usize| a as f64 / (k - 1) as f64 * (self.hi[d] - self.lo[d]) + self.lo[d];
                [s(i, 0), s(j, 1)]
            })
        })
    }
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Constants of the Carleman setting. Symbols follow the theory: `a0` is
/// the monotonicity constant, `c_m`/`c_big_m` the ellipticity and norm
/// bounds, `ell`/`big_l`/`big_t` the lengths `l`, `L`, `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CarlemanSetup {
    pub cross_section: Rect,
    /// Half-length of the axis interval sampled by the hypothesis checks.
    pub axis_extent: f64,
    pub a_prime: [f64; 2],
    pub a0: f64,
    pub c_m: f64,
    pub c_big_m: f64,
    pub delta: f64,
    pub gamma_w: f64,
    pub ell: f64,
    pub big_l: f64,
    pub big_t: f64,
    pub epsilon: f64,
    pub zeta: f64,
    /// Required lower constant in the initial-state sign condition.
    pub eta0: f64,
    /// Required bound on the sampled initial-state norm.
    pub m0: f64,
}

impl CarlemanSetup {
    /// Monotone fixture over the standard cross-section: `c~ = 2 + 0.5 x2`
    /// (increasing along `a' = (1, 0)`), whose range `[1.6, 2.4]` sits
    /// strictly inside `[c_m, c_M] = [1.5, 2.5]` with `a0 = 0.45 < 0.5`.
    pub fn monotone_fixture() -> Self {
        Self {
            cross_section: Rect { lo: [-0.8, -0.8], hi: [0.8, 0.8] },
            axis_extent: 1.8,
            a_prime: [1.0, 0.0],
            a0: 0.45,
            c_m: 1.5,
            c_big_m: 2.5,
            delta: 1.0,
            gamma_w: 1.0,
            ell: 1.6,
            big_l: 2.0,
            big_t: 2.0,
            epsilon: 0.01,
            zeta: 0.01,
            eta0: 1.0,
            m0: 50.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        let r = &self.cross_section;
        if (0..2).any(|k| !(r.lo[k] <= r.hi[k])) {
            return bad("cross-section rectangle is inverted");
        }
        let norm = (self.a_prime[0].powi(2) + self.a_prime[1].powi(2)).sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return bad("a' must be a unit vector");
        }
        if !(self.c_m > 0.0 && self.c_m <= self.c_big_m) && !(self.c_big_m == 0.0 && self.c_m > 0.0) {
            return bad("need 0 < c_m <= c_M");
        }
        if !(self.a0 > 0.0) || !(self.delta > 0.0) || !(self.gamma_w > 0.0) || !(self.ell >= 0.0) {
            return bad("a0, delta and gamma must be positive, ell non-negative");
        }
        if !(self.axis_extent > 0.0) {
            return bad("axis extent must be positive");
        }
        Ok(())
    }

    /// `|omega|`, read as the cross-section diameter.
    pub fn omega_size(&self) -> f64 {
        self.cross_section.diameter()
    }

    fn anchor(&self, delta: f64) -> [f64; 2] {
        [delta * self.a_prime[0], delta * self.a_prime[1]]
    }

    /// Computational `(x1, x2, x3)` from theory `(x', x_n)`.
    pub fn to_grid(xp: [f64; 2], xn: f64) -> [f64; 3] {
        [xn, xp[0], xp[1]]
    }
}

/// `psi = |x' - delta a'|^2 - x_n^2 - t^2` at computational `x`.
pub fn weight_psi(setup: &CarlemanSetup, x: [f64; 3], t: f64) -> f64 {
    dist2([x[1], x[2]], setup.anchor(setup.delta)) - x[0] * x[0] - t * t
}

/// `phi = exp(gamma psi)` together with its logarithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weight {
    pub log: f64,
    /// `None` when the exponent exceeds the log-space threshold.
    pub value: Option<f64>,
}

pub fn weight_phi(setup: &CarlemanSetup, x: [f64; 3], t: f64) -> Weight {
    let log = setup.gamma_w * weight_psi(setup, x, t);
    let value = if log > LOG_SPACE_THRESHOLD { None } else { Some(log.exp()) };
    Weight { log, value }
}

/// `g_l(delta) = (sup |x' - delta a'|^2 - inf |x' - delta a'|^2 + l^2)^(1/2)`.
pub fn g_ell(setup: &CarlemanSetup, delta: f64) -> f64 {
    let p = setup.anchor(delta);
    let r = &setup.cross_section;
    (r.sup_dist2(p) - r.inf_dist2(p) + setup.ell * setup.ell).sqrt()
}

/// Margin of the lower bound on `delta a0` required for the Carleman
/// estimate (positive when satisfied).
pub fn delta_condition_margin(setup: &CarlemanSetup, delta: f64) -> f64 {
    let g = g_ell(setup, delta);
    let (cm, cbig) = (setup.c_m, setup.c_big_m);
    let rhs = ((1.0 + 2.0 * N.sqrt() / cm.sqrt()) * g + (N - 1.0).sqrt() * setup.omega_size() + 2.0) * cbig
        + 2.0
        + g / cm * cbig;
    delta * setup.a0 - rhs
}

/// Margin of `c_m^(1/2) inf |x' - delta a'| > g_l(delta)`.
pub fn enlargement_margin(setup: &CarlemanSetup, delta: f64) -> f64 {
    setup.c_m.sqrt() * setup.cross_section.inf_dist2(setup.anchor(delta)).sqrt() - g_ell(setup, delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Delta0Report {
    pub delta0: f64,
    pub margin_delta: f64,
    pub margin_enlargement: f64,
    /// The previous scan point (absent when the scan starts satisfied) and
    /// whether it violates a condition.
    pub previous: Option<f64>,
    pub previous_fails: bool,
}

/// Smallest `delta = 1.05^k` satisfying both lower-bound conditions.
pub fn find_delta0(setup: &CarlemanSetup) -> Result<Delta0Report> {
    setup.validate()?;
    let holds = |d: f64| delta_condition_margin(setup, d) > 0.0 && enlargement_margin(setup, d) > 0.0;
    let mut delta = 1.0;
    let mut previous: Option<f64> = None;
    while delta <= DELTA_CAP {
        if holds(delta) {
            return Ok(Delta0Report {
                delta0: delta,
                margin_delta: delta_condition_margin(setup, delta),
                margin_enlargement: enlargement_margin(setup, delta),
                previous,
                previous_fails: previous.map_or(true, |p| !holds(p)),
            });
        }
        previous = Some(delta);
        delta *= DELTA_SCAN_FACTOR;
    }
    Err(Error::NotFoundBelowCap { cap: DELTA_CAP })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LtReport {
    pub ok: bool,
    pub g: f64,
    /// Largest `theta` such that both conditions hold on `(g, g + theta)^2`.
    pub vartheta: f64,
    pub margin_c2: f64,
    pub margin_c4: f64,
    pub in_window: bool,
}

fn margin_c2(setup: &CarlemanSetup, delta: f64, l: f64, t: f64) -> f64 {
    let (cm, cbig) = (setup.c_m, setup.c_big_m);
    delta * setup.a0
        - (l + (N - 1.0).sqrt() * setup.omega_size() + 2.0 * (1.0 + N.sqrt() * t / cm.sqrt())) * cbig
        - 2.0
        - t / cm * cbig
}

fn margin_c4(setup: &CarlemanSetup, delta: f64, t: f64) -> f64 {
    setup.c_m.sqrt() * setup.cross_section.inf_dist2(setup.anchor(delta)).sqrt() - t
}

/// Both conditions are affine and decreasing in `L` and `T`, so the window
/// width follows from the margins at `L = T = g`.
fn window_width(setup: &CarlemanSetup, delta: f64, g: f64) -> f64 {
    let (cm, cbig) = (setup.c_m, setup.c_big_m);
    let slope = cbig * (1.0 + 2.0 * N.sqrt() / cm.sqrt() + 1.0 / cm);
    let from_c2 = if slope > 0.0 { margin_c2(setup, delta, g, g) / slope } else { f64::INFINITY };
    from_c2.min(margin_c4(setup, delta, g)).max(0.0)
}

pub fn check_lt(setup: &CarlemanSetup, delta: f64, l: f64, t: f64) -> LtReport {
    let g = g_ell(setup, delta);
    let vartheta = window_width(setup, delta, g);
    let m2 = margin_c2(setup, delta, l, t);
    let m4 = margin_c4(setup, delta, t);
    let inside = |v: f64| v > g && v < g + vartheta;
    let in_window = inside(l) && inside(t);
    LtReport { ok: m2 > 0.0 && m4 > 0.0 && in_window, g, vartheta, margin_c2: m2, margin_c4: m4, in_window }
}

/// A coefficient `c~(x, t)` that can be evaluated anywhere.
pub trait SpaceTimeField: Sync {
    fn value(&self, x: [f64; 3], t: f64) -> f64;
}

impl SpaceTimeField for ModelSpec {
    fn value(&self, x: [f64; 3], t: f64) -> f64 {
        self.eval(x, t)
    }
}

/// First derivatives `(d1, d2, d3, dt)` by centered differences.
fn gradient4(f: &dyn SpaceTimeField, x: [f64; 3], t: f64, h: f64) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (k, o) in out.iter_mut().enumerate().take(3) {
        let mut a = x;
        let mut b = x;
        a[k] += h;
        b[k] -= h;
        *o = (f.value(a, t) - f.value(b, t)) / (2.0 * h);
    }
    out[3] = (f.value(x, t + h) - f.value(x, t - h)) / (2.0 * h);
    out
}

fn shift(x: [f64; 3], t: f64, k: usize, d: f64) -> ([f64; 3], f64) {
    let mut y = x;
    if k < 3 {
        y[k] += d;
        (y, t)
    } else {
        (y, t + d)
    }
}

/// Largest absolute second derivative in `(x, t)`.
fn max_second(f: &dyn SpaceTimeField, x: [f64; 3], t: f64, h: f64) -> f64 {
    let mut m: f64 = 0.0;
    let v0 = f.value(x, t);
    for j in 0..4 {
        for k in j..4 {
            let d = if j == k {
                let (a, ta) = shift(x, t, j, h);
                let (b, tb) = shift(x, t, j, -h);
                (f.value(a, ta) - 2.0 * v0 + f.value(b, tb)) / (h * h)
            } else {
                let eval = |sj: f64, sk: f64| {
                    let (y, ty) = shift(x, t, j, sj * h);
                    let (z, tz) = shift(y, ty, k, sk * h);
                    f.value(z, tz)
                };
                (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0)) / (4.0 * h * h)
            };
            m = m.max(d.abs());
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub x: [f64; 3],
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JScanReport {
    /// `4 min [bracket]`, the lower bound on `J` for `xi_{n+1}^2 = 1`.
    pub min_j_lower_bound: f64,
    pub min_a2_at_gradpsi: f64,
    pub j_witness: Witness,
    pub a2_witness: Witness,
    pub positive: bool,
}

/// The bracket of the reduced lower bound on `J`, with derivatives by
/// centered differences of step `h`.
pub fn j_bracket(setup: &CarlemanSetup, f: &dyn SpaceTimeField, x: [f64; 3], t: f64, h: f64) -> f64 {
    let c = f.value(x, t);
    let g = gradient4(f, x, t, h);
    let (xp, xn) = ([x[1], x[2]], x[0]);
    let a_grad = setup.a_prime[0] * g[1] + setup.a_prime[1] * g[2];
    let x_grad = xp[0] * g[1] + xp[1] * g[2];
    let grad_norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
    let big_t = setup.big_t;
    setup.delta * a_grad
        - (x_grad - xn * g[0] + 2.0 * c + 2.0 * big_t * grad_norm / c.sqrt() + 2.0 + big_t / c * g[3].abs())
}

/// `A_2(x, grad psi) = 4 (c~ (|x' - delta a'|^2 + x_n^2) - t^2)`.
pub fn a2_at_gradpsi(setup: &CarlemanSetup, f: &dyn SpaceTimeField, x: [f64; 3], t: f64) -> f64 {
    let c = f.value(x, t);
    4.0 * (c * (dist2([x[1], x[2]], setup.anchor(setup.delta)) + x[0] * x[0]) - t * t)
}

/// Samples `(x, t)` uniformly in `closure(omega) x [-L, L] x [0, T]` and
/// records the minima of the bound on `J` and of `A_2`.
pub fn scan_j_positivity(setup: &CarlemanSetup, f: &dyn SpaceTimeField, samples: usize, seed: u64) -> Result<JScanReport> {
    setup.validate()?;
    if samples == 0 {
        return Err(Error::InvalidArgument("at least one sample is required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = setup.cross_section;
    let pts: Vec<Witness> = (0..samples)
        .map(|_| {
            let mut u = |lo: f64, hi: f64| if hi > lo { rng.gen_range(lo..=hi) } else { lo };
            let x2 = u(r.lo[0], r.hi[0]);
            let x3 = u(r.lo[1], r.hi[1]);
            let xn = u(-setup.big_l, setup.big_l);
            let t = u(0.0, setup.big_t);
            Witness { x: CarlemanSetup::to_grid([x2, x3], xn), t }
        })
        .collect();
    let h = 1e-4;
    let vals: Vec<(f64, f64)> =
        pts.par_iter().map(|p| (j_bracket(setup, f, p.x, p.t, h), a2_at_gradpsi(setup, f, p.x, p.t))).collect();
    let argmin = |key: fn(&(f64, f64)) -> f64| {
        vals.iter().enumerate().fold(0, |best, (i, v)| if key(v) < key(&vals[best]) { i } else { best })
    };
    let ij = argmin(|v| v.0);
    let ia = argmin(|v| v.1);
    let min_j = 4.0 * vals[ij].0;
    let min_a2 = vals[ia].1;
    Ok(JScanReport {
        min_j_lower_bound: min_j,
        min_a2_at_gradpsi: min_a2,
        j_witness: pts[ij],
        a2_witness: pts[ia],
        positive: min_j > 0.0 && min_a2 > 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelSetReport {
    /// `log d_l = gamma min psi(., 0)` over `closure(omega) x [-l, l]`.
    pub log_d_ell: f64,
    pub log_d_tilde: f64,
    pub epsilon: f64,
    pub zeta: f64,
    pub ok: bool,
    /// Tightest margin (in `psi` units) when no admissible pair exists.
    pub best_margin: f64,
}

/// Lattice resolution used by the level-set search.
const LEVEL_LATTICE: usize = 41;
const EPSILON_GRID: usize = 60;

/// Searches `epsilon` on the geometric grid `(L - l)/2 * 2^-k`, `k = 1..60`
/// (the layer margins shrink as `epsilon` grows, and the admissible
/// `epsilon` scale with `T - g`, which can be tiny), and, for each, the
/// largest `zeta` with `max phi <= d_l exp(-gamma zeta^2)` on the two
/// boundary layers. Extrema are taken over lattices that include the
/// corners, the anchor projection and the interval endpoints.
pub fn verify_level_sets(setup: &CarlemanSetup) -> Result<LevelSetReport> {
    setup.validate()?;
    let (l, big_l, big_t) = (setup.ell, setup.big_l, setup.big_t);
    if !(big_l > l) {
        return Err(Error::InvalidArgument("need L > l".into()));
    }
    let r = setup.cross_section;
    let anchor = setup.anchor(setup.delta);
    let mut xs: Vec<[f64; 2]> = r.lattice(LEVEL_LATTICE).collect();
    xs.extend(r.corners());
    xs.push(r.clamp(anchor));
    let line = |a: f64, b: f64| -> Vec<f64> {
        (0..LEVEL_LATTICE).map(|i| a + (b - a) * i as f64 / (LEVEL_LATTICE - 1) as f64).collect()
    };

    // psi separates into |x' - delta a'|^2 - x_n^2 - t^2, so extrema over
    // product sets are taken factor by factor
    let sup_x = xs.iter().map(|&xp| dist2(xp, anchor)).fold(f64::NEG_INFINITY, f64::max);
    let inf_x = xs.iter().map(|&xp| dist2(xp, anchor)).fold(f64::INFINITY, f64::min);
    let max_sq = |a: f64, b: f64| line(a, b).iter().map(|v| v * v).fold(f64::NEG_INFINITY, f64::max);
    let min_sq = |a: f64, b: f64| line(a, b).iter().map(|v| v * v).fold(f64::INFINITY, f64::min);
    let psi_min0 = inf_x - max_sq(-l, l);

    let eps_max = (big_l - l) / 2.0;
    let mut best = (0.0, 0.0, f64::NEG_INFINITY);
    for k in 1..=EPSILON_GRID {
        let eps = eps_max * 0.5f64.powi(k as i32);
        // |t| in [T - 2 eps, T], x_n in [-L, L]
        let m6 = sup_x - min_sq(-big_l, big_l) - min_sq((big_t - 2.0 * eps).max(0.0), big_t);
        // |x_n| in [L - 2 eps, L], |t| <= T
        let m7 = sup_x - min_sq(big_l - 2.0 * eps, big_l) - min_sq(0.0, big_t);
        let margin = psi_min0 - m6.max(m7);
        if margin > best.2 {
            best = (eps, margin.max(0.0).sqrt(), margin);
        }
    }
    let (epsilon, zeta, margin) = best;
    let ok = margin > 0.0 && zeta > 0.0 && epsilon < eps_max;
    let log_d_ell = setup.gamma_w * psi_min0;
    Ok(LevelSetReport {
        log_d_ell,
        log_d_tilde: log_d_ell - setup.gamma_w * zeta * zeta,
        epsilon,
        zeta,
        ok,
        best_margin: margin,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub name: String,
    pub pass: bool,
    /// Signed margin; negative when the condition fails.
    pub margin: f64,
    /// Sampled constant (minimum or maximum, depending on the condition).
    pub sampled: f64,
    pub witness: Witness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub ellipticity: ConditionResult,
    pub norm_bound: ConditionResult,
    pub monotonicity: ConditionResult,
    pub initial_sign: ConditionResult,
    pub initial_norm: ConditionResult,
    pub odd_time_derivatives: ConditionResult,
    /// Highest derivative order included in the sampled norms.
    pub sampled_orders: usize,
    pub omega_size: f64,
}

impl HypothesisReport {
    pub fn all_pass(&self) -> bool {
        self.conditions().iter().all(|c| c.pass)
    }

    pub fn conditions(&self) -> [&ConditionResult; 6] {
        [
            &self.ellipticity,
            &self.norm_bound,
            &self.monotonicity,
            &self.initial_sign,
            &self.initial_norm,
            &self.odd_time_derivatives,
        ]
    }
}

struct Sample {
    w: Witness,
    c: f64,
    max_abs: f64,
    mono: f64,
}

/// Evaluates the hypotheses on a `resolution^3` space lattice over
/// `closure(omega) x [-axis_extent, axis_extent]` and `resolution` time
/// levels in `[0, T]`. Derivatives up to order 2 use centered differences
/// at half the lattice spacing.
pub fn check_hypotheses(
    model: &ModelSpec,
    theta0: &InitialProfile,
    setup: &CarlemanSetup,
    resolution: usize,
) -> Result<HypothesisReport> {
    setup.validate()?;
    let k = resolution.max(3);
    let r = setup.cross_section;
    let ax = setup.axis_extent;
    let lin = |a: f64, b: f64, i: usize| a + (b - a) * i as f64 / (k - 1) as f64;
    let spacing = ((r.hi[0] - r.lo[0]).max(r.hi[1] - r.lo[1]).max(2.0 * ax) / (k - 1) as f64).max(1e-6);
    let h = 0.5 * spacing;

    let mut points = Vec::with_capacity(k * k * k);
    for i in 0..k {
        for j in 0..k {
            for m in 0..k {
                points.push(CarlemanSetup::to_grid([lin(r.lo[0], r.hi[0], i), lin(r.lo[1], r.hi[1], j)], lin(-ax, ax, m)));
            }
        }
    }
    let times: Vec<f64> = (0..k).map(|i| lin(0.0, setup.big_t, i)).collect();

    let samples: Vec<Sample> = points
        .par_iter()
        .flat_map_iter(|&x| {
            times.iter().map(move |&t| {
                let c = model.value(x, t);
                let g = gradient4(model, x, t, h);
                let first = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let max_abs = c.abs().max(first).max(max_second(model, x, t, h));
                let mono = setup.a_prime[0] * g[1] + setup.a_prime[1] * g[2];
                Sample { w: Witness { x, t }, c, max_abs, mono }
            })
        })
        .collect();

    fn extreme<'a>(s: &'a [Sample], key: impl Fn(&Sample) -> f64, smallest: bool) -> &'a Sample {
        let mut best = &s[0];
        for v in &s[1..] {
            let better = if smallest { key(v) < key(best) } else { key(v) > key(best) };
            if better {
                best = v;
            }
        }
        best
    }

    let lo_c = extreme(&samples, |s| s.c, true);
    let ellipticity = ConditionResult {
        name: "ellipticity".into(),
        pass: lo_c.c >= setup.c_m,
        margin: lo_c.c - setup.c_m,
        sampled: lo_c.c,
        witness: lo_c.w,
    };
    let hi = extreme(&samples, |s| s.max_abs, false);
    let norm_bound = ConditionResult {
        name: "norm_bound".into(),
        pass: hi.max_abs <= setup.c_big_m,
        margin: setup.c_big_m - hi.max_abs,
        sampled: hi.max_abs,
        witness: hi.w,
    };
    let lo_m = extreme(&samples, |s| s.mono, true);
    let monotonicity = ConditionResult {
        name: "monotonicity".into(),
        pass: lo_m.mono >= setup.a0,
        margin: lo_m.mono - setup.a0,
        sampled: lo_m.mono,
        witness: lo_m.w,
    };

    let (initial_sign, initial_norm) = check_initial_state(theta0, setup, &points, h);
    let odd_time_derivatives = check_odd_time_derivatives(model, &points);

    Ok(HypothesisReport {
        ellipticity,
        norm_bound,
        monotonicity,
        initial_sign,
        initial_norm,
        odd_time_derivatives,
        sampled_orders: 2,
        omega_size: setup.omega_size(),
    })
}

struct Stationary<'a>(&'a InitialProfile);

impl SpaceTimeField for Stationary<'_> {
    fn value(&self, x: [f64; 3], _t: f64) -> f64 {
        self.0.eval(x)
    }
}

fn check_initial_state(
    theta0: &InitialProfile,
    setup: &CarlemanSetup,
    points: &[[f64; 3]],
    h: f64,
) -> (ConditionResult, ConditionResult) {
    let f = Stationary(theta0);
    let evals: Vec<(f64, f64, f64)> = points
        .par_iter()
        .map(|&x| {
            let g = gradient4(&f, x, 0.0, h);
            let sign = -(setup.a_prime[0] * g[1] + setup.a_prime[1] * g[2]) * (1.0 + x[0] * x[0]).exp();
            let first = g[..3].iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let sup = f.value(x, 0.0).abs().max(first).max(max_second_space(&f, x, h));
            let sq = f.value(x, 0.0).powi(2) + g[..3].iter().map(|v| v * v).sum::<f64>();
            (sign, sup, sq)
        })
        .collect();
    let mut i_sign = 0;
    let mut i_sup = 0;
    for (i, e) in evals.iter().enumerate() {
        if e.0 < evals[i_sign].0 {
            i_sign = i;
        }
        if e.1 > evals[i_sup].1 {
            i_sup = i;
        }
    }
    let eta = evals[i_sign].0;
    let initial_sign = ConditionResult {
        name: "initial_sign".into(),
        pass: eta >= setup.eta0 && eta > 0.0,
        margin: eta - setup.eta0,
        sampled: eta,
        witness: Witness { x: points[i_sign], t: 0.0 },
    };
    // sup norm up to order 2 plus a lattice estimate of the H^1 norm
    let vol = (2.0 * h).powi(3);
    let h1 = (evals.iter().map(|e| e.2).sum::<f64>() * vol).sqrt();
    let m0 = evals[i_sup].1 + h1;
    let initial_norm = ConditionResult {
        name: "initial_norm".into(),
        pass: m0 <= setup.m0,
        margin: setup.m0 - m0,
        sampled: m0,
        witness: Witness { x: points[i_sup], t: 0.0 },
    };
    (initial_sign, initial_norm)
}

fn max_second_space(f: &dyn SpaceTimeField, x: [f64; 3], h: f64) -> f64 {
    let v0 = f.value(x, 0.0);
    let mut m: f64 = 0.0;
    for j in 0..3 {
        for k in j..3 {
            let at = |sj: f64, sk: f64| {
                let mut y = x;
                y[j] += sj * h;
                y[k] += sk * h;
                f.value(y, 0.0)
            };
            let d = if j == k {
                let mut a = x;
                let mut b = x;
                a[j] += h;
                b[j] -= h;
                (f.value(a, 0.0) - 2.0 * v0 + f.value(b, 0.0)) / (h * h)
            } else {
                (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * h * h)
            };
            m = m.max(d.abs());
        }
    }
    m
}

/// `d_t c0 = d_t^3 c0 = 0` at `t = 0`, from the analytic time derivatives.
fn check_odd_time_derivatives(model: &ModelSpec, points: &[[f64; 3]]) -> ConditionResult {
    let mut worst = 0.0;
    let mut at = points[0];
    if let Some(tp) = model.time_part {
        for &x in points {
            let inside = model.inner.map_or(true, |b| b.contains(x, 0.0));
            if !inside {
                continue;
            }
            let v = tp.time_derivative(x, 0.0, 1).abs().max(tp.time_derivative(x, 0.0, 3).abs());
            if v > worst {
                worst = v;
                at = x;
            }
        }
    }
    ConditionResult {
        name: "odd_time_derivatives".into(),
        pass: worst == 0.0,
        margin: -worst,
        sampled: worst,
        witness: Witness { x: at, t: 0.0 },
    }
}

/// The monotone coefficient `c~ = 2 + 0.5 x2` (increasing along `a'`).
pub fn monotone_fixture_model() -> ModelSpec {
    ModelSpec {
        phantom: crate::model::Phantom { background: 2.0, slope: [0.0, 0.5, 0.0], bumps: Vec::new() },
        time_part: None,
        inner: None,
    }
}

/// `-(a' . x') exp(-x_n^2)`, which satisfies the initial-state sign
/// condition with `eta0 = e`.
pub fn monotone_fixture_theta0(setup: &CarlemanSetup) -> InitialProfile {
    InitialProfile::Ramp { amplitude: 1.0, direction: [0.0, setup.a_prime[0], setup.a_prime[1]], axis: 0 }
}

/// Full chain on a setup: `delta0`, an admissible `(L, T)` at the middle of
/// the window, the `J` scan and the level-set search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub delta0: Delta0Report,
    pub lt: LtReport,
    pub j_scan: JScanReport,
    pub level_sets: LevelSetReport,
    pub setup: CarlemanSetup,
}

pub fn admissible_chain(template: &CarlemanSetup, f: &dyn SpaceTimeField, samples: usize, seed: u64) -> Result<ChainReport> {
    let delta0 = find_delta0(template)?;
    let d = delta0.delta0;
    let g = g_ell(template, d);
    let theta = window_width(template, d, g);
    let lt_value = g + 0.5 * theta;
    let lt = check_lt(template, d, lt_value, lt_value);
    let setup = CarlemanSetup { delta: d, big_l: lt_value, big_t: lt_value, ..*template };
    let j_scan = scan_j_positivity(&setup, f, samples, seed)?;
    let level_sets = verify_level_sets(&setup)?;
    Ok(ChainReport { delta0, lt, j_scan, level_sets, setup })
}
