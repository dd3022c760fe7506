//! Conductivity, source pulse and initial-state descriptions.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{build_mask, Box3, Grid3, RegionMask, ScalarField3};

/// `amplitude * exp(-sum_k (x_k - center_k)^2 / widths_k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gaussian {
    pub amplitude: f64,
    pub center: [f64; 3],
    pub widths: [f64; 3],
}

impl Gaussian {
    pub fn eval(&self, x: [f64; 3]) -> f64 {
        let e: f64 = (0..3).map(|k| (x[k] - self.center[k]).powi(2) / self.widths[k]).sum();
        self.amplitude * (-e).exp()
    }

    pub fn gradient(&self, x: [f64; 3]) -> [f64; 3] {
        let v = self.eval(x);
        [0, 1, 2].map(|k| -2.0 * (x[k] - self.center[k]) / self.widths[k] * v)
    }
}

/// Analytic space-dependent conductivity `background + slope . x + sum bumps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phantom {
    pub background: f64,
    #[serde(default)]
    pub slope: [f64; 3],
    #[serde(default)]
    pub bumps: Vec<Gaussian>,
}

impl Phantom {
    /// Two Gaussians of height 5 at `(0.5,0,0)` and `(-1,0,0)` over a unit
    /// background.
    pub fn standard() -> Self {
        let bump = |x1| Gaussian { amplitude: 5.0, center: [x1, 0.0, 0.0], widths: [0.2; 3] };
        Self { background: 1.0, slope: [0.0; 3], bumps: vec![bump(0.5), bump(-1.0)] }
    }

    pub fn uniform(value: f64) -> Self {
        Self { background: value, slope: [0.0; 3], bumps: Vec::new() }
    }

    pub fn eval(&self, x: [f64; 3]) -> f64 {
        let lin: f64 = (0..3).map(|k| self.slope[k] * x[k]).sum();
        self.background + lin + self.bumps.iter().map(|g| g.eval(x)).sum::<f64>()
    }

    pub fn gradient(&self, x: [f64; 3]) -> [f64; 3] {
        let mut g = self.slope;
        for b in &self.bumps {
            let gb = b.gradient(x);
            for k in 0..3 {
                g[k] += gb[k];
            }
        }
        g
    }
}

/// Known time-dependent part `c0(x,t) = A cos(t) G(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimePart {
    pub profile: Gaussian,
}

impl TimePart {
    pub fn standard() -> Self {
        Self { profile: Gaussian { amplitude: 0.01, center: [0.0; 3], widths: [0.2; 3] } }
    }

    pub fn eval(&self, x: [f64; 3], t: f64) -> f64 {
        t.cos() * self.profile.eval(x)
    }

    /// `d^k/dt^k c0` at `(x, t)`.
    pub fn time_derivative(&self, x: [f64; 3], t: f64, order: u32) -> f64 {
        let d = match order % 4 {
            0 => t.cos(),
            1 => -t.sin(),
            2 => -t.cos(),
            _ => t.sin(),
        };
        d * self.profile.eval(x)
    }
}

/// Total coefficient `c~(x,t) = c0(x,t) + c(x)` with `c` sampled on the
/// grid and `c0` analytic.
#[derive(Debug, Clone)]
pub struct ConductivityModel {
    space: ScalarField3,
    time_part: Option<TimePart>,
    /// `G(x)` at every node, zero where the time part is switched off.
    time_profile: Vec<f64>,
    background: f64,
}

/// Strict positivity floor used when validating a model.
pub const ELLIPTICITY_FLOOR: f64 = 1e-12;

impl ConductivityModel {
    /// Builds a model; `time_support` restricts `c0` to a region (it is zero
    /// elsewhere). Positivity is checked for every node against the worst
    /// case `cos t = -sign(A)`.
    pub fn new(
        space: ScalarField3,
        time_part: Option<TimePart>,
        time_support: Option<&RegionMask>,
        background: f64,
    ) -> Result<Self> {
        let grid = *space.grid();
        let time_profile: Vec<f64> = match time_part {
            Some(tp) => (0..grid.len())
                .map(|i| {
                    if time_support.map_or(true, |m| m.contains(i)) {
                        tp.profile.eval(grid.coords(i))
                    } else {
                        0.0
                    }
                })
                .collect(),
            None => vec![0.0; grid.len()],
        };
        for (i, (&c, &g)) in space.values().iter().zip(&time_profile).enumerate() {
            let worst = c - g.abs();
            if !(worst > ELLIPTICITY_FLOOR) {
                return Err(Error::NotElliptic { node: i, value: worst });
            }
        }
        Ok(Self { space, time_part, time_profile, background })
    }

    pub fn uniform(grid: Grid3, value: f64) -> Result<Self> {
        Self::new(ScalarField3::constant(grid, value), None, None, value)
    }

    pub fn grid(&self) -> &Grid3 {
        self.space.grid()
    }

    pub fn space_part(&self) -> &ScalarField3 {
        &self.space
    }

    pub fn time_part(&self) -> Option<&TimePart> {
        self.time_part.as_ref()
    }

    pub fn background(&self) -> f64 {
        self.background
    }

    /// Same known parts with a different space part.
    pub fn with_space_part(&self, space: ScalarField3) -> Result<Self> {
        if !space.grid().same_geometry(self.grid()) {
            return Err(Error::ShapeMismatch("space part lives on a different grid".into()));
        }
        for (i, (&c, &g)) in space.values().iter().zip(&self.time_profile).enumerate() {
            if !(c - g.abs() > ELLIPTICITY_FLOOR) {
                return Err(Error::NotElliptic { node: i, value: c - g.abs() });
            }
        }
        Ok(Self { space, time_part: self.time_part, time_profile: self.time_profile.clone(), background: self.background })
    }

    /// Fills `out` with `c~(., t)` at every node.
    pub fn fill_ctilde(&self, t: f64, out: &mut [f64]) {
        let c = self.space.values();
        match self.time_part {
            Some(_) => {
                // profile values already carry the amplitude
                let a = t.cos();
                for ((o, &s), &g) in out.iter_mut().zip(c).zip(&self.time_profile) {
                    *o = s + a * g;
                }
            }
            None => out.copy_from_slice(c),
        }
    }

    /// Upper bound of `c~` over all nodes and times.
    pub fn max_ctilde(&self) -> f64 {
        self.space
            .values()
            .iter()
            .zip(&self.time_profile)
            .map(|(&c, &g)| c + g.abs())
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `c0(x,t) + c(x)` at one node.
pub fn evaluate_ctilde(model: &ConductivityModel, node: usize, t: f64) -> f64 {
    let g = model.time_profile[node];
    model.space.get(node) + if model.time_part.is_some() { t.cos() * g } else { 0.0 }
}

/// Analytic model description that can be sampled on any grid. Outside the
/// inner box the space part equals the background and the time part
/// vanishes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub phantom: Phantom,
    pub time_part: Option<TimePart>,
    /// Region carrying the unknown and the known time part; `None` means the
    /// whole box.
    pub inner: Option<Box3>,
}

impl ModelSpec {
    pub fn sample(&self, grid: &Grid3) -> Result<ConductivityModel> {
        let mask = match self.inner {
            Some(b) => Some(build_mask(grid, b)?),
            None => None,
        };
        let bg = self.phantom.background;
        let space = ScalarField3::from_fn(*grid, |x| self.phantom.eval(x));
        let mut values = space.into_values();
        if let Some(m) = &mask {
            for (i, v) in values.iter_mut().enumerate() {
                if !m.contains(i) {
                    *v = bg;
                }
            }
        }
        let space = ScalarField3::new(*grid, values)?;
        ConductivityModel::new(space, self.time_part, mask.as_ref(), bg)
    }

    /// `c~(x,t)` straight from the analytic description.
    pub fn eval(&self, x: [f64; 3], t: f64) -> f64 {
        let inside = self.inner.map_or(true, |b| b.contains(x, 0.0));
        if !inside {
            return self.phantom.background;
        }
        self.phantom.eval(x) + self.time_part.map_or(0.0, |tp| tp.eval(x, t))
    }
}

/// One-period sine pulse `f(t) = sin(omega t)` on `(0, 2 pi / omega)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourcePulse {
    pub omega: f64,
    /// Scales `f`; zero disables the source.
    pub amplitude: f64,
}

impl SourcePulse {
    pub fn new(omega: f64) -> Self {
        Self { omega, amplitude: 1.0 }
    }

    pub fn silent(omega: f64) -> Self {
        Self { omega, amplitude: 0.0 }
    }

    pub fn duration(&self) -> f64 {
        2.0 * PI / self.omega
    }

    /// End of the source phase on the front face.
    pub fn switch_time(&self) -> f64 {
        self.duration()
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t > 0.0 && t < self.duration() {
            self.amplitude * (self.omega * t).sin()
        } else {
            0.0
        }
    }
}

/// Analytic initial displacement or velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialProfile {
    Zero,
    /// `A exp(-sum (x_k - c_k)^2 / w_k)`; with `cube_last` the third term
    /// uses the cube `(x_3 - c_3)^3` instead of the square.
    Gaussian {
        amplitude: f64,
        center: [f64; 3],
        widths: [f64; 3],
        #[serde(default)]
        cube_last: bool,
    },
    /// `-A (d . x) exp(-x_a^2)`: a ramp along `direction` decaying along
    /// `axis`.
    Ramp { amplitude: f64, direction: [f64; 3], axis: usize },
}

impl InitialProfile {
    /// `exp(-(x1^2 + x2^2 + x3^2))`.
    pub fn standard() -> Self {
        InitialProfile::Gaussian { amplitude: 1.0, center: [0.0; 3], widths: [1.0; 3], cube_last: false }
    }

    pub fn eval(&self, x: [f64; 3]) -> f64 {
        match *self {
            InitialProfile::Zero => 0.0,
            InitialProfile::Gaussian { amplitude, center, widths, cube_last } => {
                let d = [0, 1, 2].map(|k| x[k] - center[k]);
                let last = if cube_last { d[2].powi(3) } else { d[2] * d[2] };
                let e = d[0] * d[0] / widths[0] + d[1] * d[1] / widths[1] + last / widths[2];
                amplitude * (-e).exp()
            }
            InitialProfile::Ramp { amplitude, direction, axis } => {
                let proj: f64 = (0..3).map(|k| direction[k] * x[k]).sum();
                -amplitude * proj * (-x[axis] * x[axis]).exp()
            }
        }
    }

    pub fn sample(&self, grid: &Grid3) -> ScalarField3 {
        ScalarField3::from_fn(*grid, |x| self.eval(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    fn standard_model() -> ConductivityModel {
        let grid = build_grid(Box3::standard_domain(), 0.1).unwrap();
        let spec = ModelSpec { phantom: Phantom::standard(), time_part: Some(TimePart::standard()), inner: Some(Box3::standard_inner()) };
        spec.sample(&grid).unwrap()
    }

    // independent evaluation of the phantom and time part
    fn oracle(x: [f64; 3], t: f64) -> f64 {
        let g = |c: f64| (-((x[0] - c).powi(2) / 0.2 + x[1] * x[1] / 0.2 + x[2] * x[2] / 0.2)).exp();
        let c = 1.0 + 5.0 * g(0.5) + 5.0 * g(-1.0);
        c + 0.01 * t.cos() * (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 0.2).exp()
    }

    #[test]
    fn ctilde_values() {
        let m = standard_model();
        let g = *m.grid();
        let origin = g.nearest_index([0.0; 3]).unwrap();
        let v = evaluate_ctilde(&m, origin, 0.0);
        assert!((v - 2.4762).abs() < 1e-3, "{v}");
        assert!((v - oracle([0.0; 3], 0.0)).abs() < 1e-12);
        let p = g.nearest_index([0.5, 0.0, 0.0]).unwrap();
        let v = evaluate_ctilde(&m, p, 0.0);
        assert!((v - 6.0029).abs() < 1e-3, "{v}");
        for &t in &[0.3, 1.1, 2.9] {
            let x = g.coords(p);
            assert!((evaluate_ctilde(&m, p, t) - oracle(x, t)).abs() < 1e-12);
        }
        let bg = ConductivityModel::uniform(g, 1.0).unwrap();
        assert_eq!(evaluate_ctilde(&bg, 17, 0.7), 1.0);
    }

    #[test]
    fn fill_matches_pointwise() {
        let m = standard_model();
        let mut buf = vec![0.0; m.grid().len()];
        m.fill_ctilde(0.8, &mut buf);
        for i in (0..buf.len()).step_by(97) {
            assert_eq!(buf[i], evaluate_ctilde(&m, i, 0.8));
        }
    }

    #[test]
    fn outer_region_is_background() {
        let m = standard_model();
        let g = *m.grid();
        let i = g.nearest_index([-1.7, 0.0, 0.0]).unwrap();
        assert_eq!(evaluate_ctilde(&m, i, 0.0), 1.0);
    }

    #[test]
    fn pulse_shape() {
        let p = SourcePulse::new(40.0);
        assert_eq!(p.eval(0.0), 0.0);
        assert!((p.eval(PI / 80.0) - 1.0).abs() < 1e-12);
        assert_eq!(p.eval(p.duration() + 1e-9), 0.0);
        assert_eq!(p.eval(1.0), 0.0);
    }

    #[test]
    fn rejects_non_elliptic() {
        let grid = build_grid(Box3::new([0.0; 3], [1.0; 3]).unwrap(), 0.5).unwrap();
        let space = ScalarField3::constant(grid, 0.005);
        let tp = TimePart::standard();
        let tp = TimePart { profile: Gaussian { center: [0.5; 3], ..tp.profile } };
        assert!(matches!(ConductivityModel::new(space, Some(tp), None, 1.0), Err(Error::NotElliptic { .. })));
    }

    #[test]
    fn initial_cube_flag() {
        let sq = InitialProfile::standard();
        let cube = InitialProfile::Gaussian { amplitude: 1.0, center: [0.0; 3], widths: [1.0; 3], cube_last: true };
        let x = [0.1, 0.2, -0.5];
        assert!((sq.eval(x) - (-(0.01 + 0.04 + 0.25f64)).exp()).abs() < 1e-15);
        assert!((cube.eval(x) - (-(0.01 + 0.04 - 0.125f64)).exp()).abs() < 1e-15);
    }
}
