//! Fixtures shared by the criterion benches.

use cylwave_core::{
    build_grid, build_mask, BoundaryConditions, Box3, ConductivityModel, ForwardProblem, InitialProfile, ModelSpec,
    Phantom, RegionMask, ScalarField3, SourcePulse, TimePart,
};

/// Full-scale grid and model with a horizon of `t_final`.
pub fn standard_setup(t_final: f64) -> (ConductivityModel, ForwardProblem, RegionMask) {
    let g = build_grid(Box3::standard_domain(), 0.1).unwrap();
    let mask = build_mask(&g, Box3::standard_inner()).unwrap();
    let spec = ModelSpec { phantom: Phantom::standard(), time_part: Some(TimePart::standard()), inner: Some(Box3::standard_inner()) };
    let model = spec.sample(&g).unwrap();
    let theta0 = InitialProfile::standard().sample(&g);
    let zero = ScalarField3::constant(g, 0.0);
    let p = ForwardProblem::new(g, 0.003, t_final, SourcePulse::new(40.0), BoundaryConditions::standard(), theta0, zero)
        .unwrap();
    (model, p, mask)
}
