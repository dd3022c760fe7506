use cylwave_core::inversion::StopReason;
use cylwave_core::model::Gaussian;
use cylwave_core::{
    add_noise, build_grid, build_mask, contrast_error, generate_data, invert, io, postprocess, Acquisition,
    BoundaryConditions, Bounds, Box3, ConductivityModel, ForwardProblem, InitialProfile, InverseConfig, ModelSpec,
    Phantom, ScalarField3, SourcePulse,
};

fn small_truth() -> ModelSpec {
    let bump = Gaussian { amplitude: 2.0, center: [0.1, 0.0, 0.0], widths: [0.02; 3] };
    ModelSpec { phantom: Phantom { background: 1.0, slope: [0.0; 3], bumps: vec![bump] }, time_part: None, inner: Some(Box3::new([-0.3; 3], [0.3; 3]).unwrap()) }
}

#[test]
fn synthetic_data_to_reconstruction() {
    let g = build_grid(Box3::new([-0.5, -0.4, -0.4], [0.5, 0.4, 0.4]).unwrap(), 0.1).unwrap();
    let inner = Box3::new([-0.3; 3], [0.3; 3]).unwrap();
    let mask = build_mask(&g, inner).unwrap();
    let acq = Acquisition {
        tau: 0.01,
        t_final: 1.5,
        pulse: SourcePulse::new(20.0),
        bc: BoundaryConditions::standard(),
        theta0: InitialProfile::Zero,
        theta1: InitialProfile::Zero,
    };
    let truth = small_truth();
    let data = add_noise(&generate_data(&truth, &g, 2, &acq).unwrap(), 0.01, 5).unwrap();
    let true_max = truth.sample(&g).unwrap().space_part().max_on(&mask).0;

    let known = ConductivityModel::uniform(g, 1.0).unwrap();
    let zero = ScalarField3::constant(g, 0.0);
    let problem = ForwardProblem::new(g, acq.tau, acq.t_final, acq.pulse, acq.bc, zero.clone(), zero).unwrap();
    let cfg = InverseConfig { t_inv: 1.5, gamma: 1e-3, max_iters: 8, reference_max: true_max, initial_step: 0.5, ..InverseConfig::default() };
    let (c, trace) = invert(&cfg, &data, &known, &problem, &mask).unwrap();

    assert!(trace.entries.windows(2).all(|w| w[1].j <= w[0].j));
    assert!(trace.entries.last().unwrap().j < trace.entries[0].j);
    assert!(contrast_error(&c, &mask, true_max) < trace.entries[0].contrast_error_pct);
    assert!(matches!(trace.stop, StopReason::MaxIterations | StopReason::GradientTolerance | StopReason::Stagnation));
    assert!(c.values().iter().all(|&v| (1.0..=10.0).contains(&v)));

    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("c.raw");
    io::write_field_raw(&raw, &c).unwrap();
    assert_eq!(io::read_field_raw(&raw).unwrap(), c);
    io::write_trace_csv(&dir.path().join("trace.csv"), &trace).unwrap();

    let post = postprocess(&c, 0.7, Bounds::default()).unwrap();
    assert_eq!(postprocess(&post, 0.7, Bounds::default()).unwrap(), post);
}

#[test]
fn data_record_survives_csv() {
    let g = build_grid(Box3::new([-0.3; 3], [0.3; 3]).unwrap(), 0.1).unwrap();
    let acq = Acquisition {
        tau: 0.01,
        t_final: 0.4,
        pulse: SourcePulse::new(20.0),
        bc: BoundaryConditions::standard(),
        theta0: InitialProfile::Zero,
        theta1: InitialProfile::Zero,
    };
    let rec = generate_data(&ModelSpec { phantom: Phantom::uniform(1.5), time_part: None, inner: None }, &g, 2, &acq).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.csv");
    io::write_record_csv(&p, &rec).unwrap();
    assert_eq!(io::read_record_csv(&p, g, 0.01).unwrap(), rec);
}
