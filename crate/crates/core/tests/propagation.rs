use cylwave_core::{
    build_grid, solve_forward, BoundaryConditions, Box3, ConductivityModel, ForwardProblem, HistoryMode, InitialProfile,
    ScalarField3, SourcePulse,
};

/// Arrival time at the node `(x1, 0, 0)` of a narrow Gaussian released at
/// the origin in a uniform medium. In 3D the outgoing pulse is
/// `(r - ct) f(r - ct) / 2r`: a positive and a negative lobe placed
/// symmetrically about `t = r / c`, so the midpoint of the two extremal times
/// is the arrival.
fn arrival_time(c: f64, x1: f64, t_final: f64) -> f64 {
    let g = build_grid(Box3::standard_domain(), 0.1).unwrap();
    let model = ConductivityModel::uniform(g, c).unwrap();
    let theta0 = InitialProfile::Gaussian { amplitude: 1.0, center: [0.0; 3], widths: [0.04; 3], cube_last: false };
    let p = ForwardProblem::new(
        g,
        0.003,
        t_final,
        SourcePulse::silent(40.0),
        BoundaryConditions::all_neumann(),
        theta0.sample(&g),
        ScalarField3::constant(g, 0.0),
    )
    .unwrap();
    let (hist, _) = solve_forward(&model, &p, HistoryMode::Every(1)).unwrap();
    let node = g.nearest_index([x1, 0.0, 0.0]).unwrap();
    let (mut hi, mut lo) = ((f64::NEG_INFINITY, 0), (f64::INFINITY, 0));
    // stop before the image sources behind the lateral faces (distance
    // about 1.9) can contribute
    let last = ((1.5 / c.sqrt()) / p.tau) as usize;
    for m in 0..=last.min(p.steps) {
        let v = hist.at_step(m).unwrap()[node];
        if v > hi.0 {
            hi = (v, m);
        }
        if v < lo.0 {
            lo = (v, m);
        }
    }
    0.5 * (hi.1 + lo.1) as f64 * p.tau
}

#[test]
fn front_travels_at_root_c() {
    let h = 0.1;
    for (c, t_final) in [(1.0, 1.5), (4.0, 0.9)] {
        for x1 in [1.0, -1.0] {
            let t = arrival_time(c, x1, t_final);
            let dist = c.sqrt() * t;
            assert!((dist - 1.0).abs() <= 2.0 * h, "c = {c}, x1 = {x1}: front at {dist}");
        }
    }
}

#[test]
fn wave_with_speed_two_arrives_at_half_time() {
    let t = arrival_time(4.0, 1.0, 0.9);
    assert!((t - 0.5).abs() <= 0.1 / 2.0 + 1e-12, "{t}");
}
