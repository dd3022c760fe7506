//! Forward, adjoint and inversion solvers for `u_tt = div(c~(x,t) grad u)`
//! on a box, where `c~ = c(x) + c0(x,t)` with `c0` known and `c` sought from
//! boundary measurements.

pub mod adjoint;
pub mod carleman;
pub mod error;
pub mod forward;
pub mod grid;
pub mod inversion;
pub mod io;
pub mod model;
mod stencil;
pub mod synth;

pub use adjoint::{assemble_gradient, solve_adjoint, tikhonov_misfit, GradientField, MisfitResidual, MisfitSpec};
pub use error::{Error, Result};
pub use forward::{cfl_check, solve_forward, BoundaryConditions, BoundaryRecord, CflReport, ForwardProblem, HistoryMode, WaveHistory};
pub use grid::{build_grid, build_mask, Box3, FaceClass, Grid3, RegionMask, ScalarField3};
pub use model::{ConductivityModel, InitialProfile, ModelSpec, Phantom, SourcePulse, TimePart};
pub use inversion::{contrast_error, invert, postprocess, project_admissible, Bounds, InverseConfig, OptTrace, TraceEntry};
pub use synth::{add_noise, generate_data, Acquisition};
pub use carleman::stability::{stability_distance, stability_probe, ProbeConfig, ProbeDistance, ProbeSetup, SweepReport};
pub use carleman::{check_hypotheses, find_delta0, CarlemanSetup, HypothesisReport};
