//! Run configuration read from TOML. An empty file yields the Test 1 setup.

use serde::{Deserialize, Serialize};

use cylwave_core::carleman::stability::ProbeConfig;
use cylwave_core::model::Gaussian;
use cylwave_core::{
    build_grid, build_mask, BoundaryConditions, Box3, CarlemanSetup, Grid3, InitialProfile, InverseConfig, ModelSpec,
    Phantom, RegionMask, SourcePulse, TimePart,
};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub domain: Box3,
    /// Inversion region.
    pub inner: Box3,
    pub h: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { domain: Box3::standard_domain(), inner: Box3::standard_inner(), h: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSection {
    pub tau: f64,
    pub t_final: f64,
}

impl Default for TimeSection {
    fn default() -> Self {
        Self { tau: 0.003, t_final: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceSection {
    pub omega: f64,
    pub amplitude: f64,
}

impl Default for SourceSection {
    fn default() -> Self {
        let p = SourcePulse::new(40.0);
        Self { omega: p.omega, amplitude: p.amplitude }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimePartSection {
    pub enabled: bool,
    pub profile: Gaussian,
}

impl Default for TimePartSection {
    fn default() -> Self {
        Self { enabled: true, profile: TimePart::standard().profile }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Space and time refinement used to generate synthetic data.
    pub refine: usize,
    /// Relative noise level `sigma`.
    pub noise: f64,
    /// Record read by `invert`; defaults to `<out>/data.raw`.
    pub path: Option<String>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { refine: 2, noise: 0.03, path: None }
    }
}

/// Which coefficient `carleman-check` examines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CarlemanCoefficient {
    MonotoneFixture,
    Phantom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarlemanSection {
    pub coefficient: CarlemanCoefficient,
    pub setup: CarlemanSetup,
    pub samples: usize,
    pub resolution: usize,
}

impl Default for CarlemanSection {
    fn default() -> Self {
        Self {
            coefficient: CarlemanCoefficient::MonotoneFixture,
            setup: CarlemanSetup::monotone_fixture(),
            samples: 10_000,
            resolution: 9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PostprocessSection {
    pub fraction: f64,
    /// Raw field to threshold; defaults to `<out>/c_final.raw`.
    pub input: Option<String>,
}

impl Default for PostprocessSection {
    fn default() -> Self {
        Self { fraction: 0.7, input: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: String,
    pub seed: u64,
    /// Every `snapshot_stride` steps `forward` writes a VTK snapshot; 0 turns
    /// snapshots off.
    pub snapshot_stride: usize,
    pub grid: GridSection,
    pub time: TimeSection,
    pub source: SourceSection,
    pub initial: InitialProfile,
    pub phantom: Phantom,
    pub time_part: TimePartSection,
    pub boundary: BoundaryConditions,
    pub data: DataSection,
    pub inversion: InverseConfig,
    pub carleman: CarlemanSection,
    pub probe: ProbeConfig,
    pub postprocess: PostprocessSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out_dir: "out".into(),
            seed: 1,
            snapshot_stride: 0,
            grid: GridSection::default(),
            time: TimeSection::default(),
            source: SourceSection::default(),
            initial: InitialProfile::standard(),
            phantom: Phantom::standard(),
            time_part: TimePartSection::default(),
            boundary: BoundaryConditions::standard(),
            data: DataSection::default(),
            inversion: InverseConfig::default(),
            carleman: CarlemanSection::default(),
            probe: ProbeConfig::default(),
            postprocess: PostprocessSection::default(),
        }
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let v = |e: cylwave_core::Error| ConfigError::Validation(e.to_string());
        let bad = |m: String| Err(ConfigError::Validation(m));
        Box3::new(self.grid.domain.lo, self.grid.domain.hi).map_err(v)?;
        Box3::new(self.grid.inner.lo, self.grid.inner.hi).map_err(v)?;
        let grid = self.grid().map_err(v)?;
        self.mask(&grid).map_err(v)?;
        if !(self.time.tau > 0.0) || !self.time.tau.is_finite() {
            return bad(format!("tau must be positive, got {}", self.time.tau));
        }
        if !(self.time.t_final > 0.0) {
            return bad(format!("t_final must be positive, got {}", self.time.t_final));
        }
        if !(self.source.omega > 0.0) {
            return bad(format!("source omega must be positive, got {}", self.source.omega));
        }
        if self.data.refine < 2 {
            return bad(format!("data.refine must be at least 2, got {}", self.data.refine));
        }
        if !(self.data.noise >= 0.0) {
            return bad(format!("data.noise must be non-negative, got {}", self.data.noise));
        }
        self.inversion.validate().map_err(v)?;
        if self.inversion.t_inv > self.time.t_final + 1e-12 {
            return bad("inversion.t_inv exceeds time.t_final".into());
        }
        self.carleman.setup.validate().map_err(v)?;
        if !(self.postprocess.fraction > 0.0 && self.postprocess.fraction < 1.0) {
            return bad("postprocess.fraction must lie in (0, 1)".into());
        }
        let model = self.truth().sample(&grid).map_err(v)?;
        let cfl = cylwave_core::cfl_check(&model, grid.h, self.time.tau);
        if !cfl.ok {
            return bad(format!("tau = {} exceeds the CFL bound {}", self.time.tau, cfl.tau_max));
        }
        Ok(())
    }

    pub fn grid(&self) -> cylwave_core::Result<Grid3> {
        build_grid(self.grid.domain, self.grid.h)
    }

    pub fn mask(&self, grid: &Grid3) -> cylwave_core::Result<RegionMask> {
        build_mask(grid, self.grid.inner)
    }

    pub fn pulse(&self) -> SourcePulse {
        SourcePulse { amplitude: self.source.amplitude, ..SourcePulse::new(self.source.omega) }
    }

    pub fn time_part(&self) -> Option<TimePart> {
        self.time_part.enabled.then_some(TimePart { profile: self.time_part.profile })
    }

    /// The true coefficient: phantom inside the inversion region, the known
    /// time part on top.
    pub fn truth(&self) -> ModelSpec {
        ModelSpec { phantom: self.phantom.clone(), time_part: self.time_part(), inner: Some(self.grid.inner) }
    }

    pub fn out_path(&self, name: &str) -> std::path::PathBuf {
        std::path::Path::new(&self.out_dir).join(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_test_one() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.grid.h, 0.1);
        assert_eq!(cfg.time.tau, 0.003);
        assert_eq!(cfg.time.t_final, 3.0);
        assert_eq!(cfg.source.omega, 40.0);
        assert_eq!(cfg.inversion.gamma, 0.01);
        assert_eq!((cfg.inversion.bounds.low, cfg.inversion.bounds.high), (1.0, 10.0));
        assert_eq!(cfg.data.noise, 0.03);
    }

    #[test]
    fn negative_tau_is_a_validation_error() {
        let e = parse_config("[time]\ntau = -1.0\n").unwrap_err();
        assert!(matches!(e, ConfigError::Validation(_)), "{e}");
    }

    #[test]
    fn unknown_key_is_named() {
        let e = parse_config("foo = 1\n").unwrap_err();
        match e {
            ConfigError::Parse(m) => assert!(m.contains("foo"), "{m}"),
            other => panic!("{other}"),
        }
        assert!(matches!(parse_config("[inversion]\nfoo = 2\n"), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn cfl_is_checked_at_parse_time() {
        assert!(matches!(parse_config("[time]\ntau = 0.05\n"), Err(ConfigError::Validation(_))));
    }

    #[test]
    fn overrides_round_trip() {
        let text = "out_dir = \"x\"\nseed = 9\n[time]\nt_final = 1.5\n[inversion]\nt_inv = 1.5\n[data]\nnoise = 0.1\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.data.noise, 0.1);
        let back = parse_config(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
