//! Synthetic observations computed on a refined grid, and their noisy
//! versions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::forward::{solve_forward, BoundaryConditions, BoundaryRecord, ForwardProblem, HistoryMode};
use crate::grid::Grid3;
use crate::model::{InitialProfile, ModelSpec, SourcePulse};

/// Everything needed to simulate the measurement, independent of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Acquisition {
    pub tau: f64,
    pub t_final: f64,
    pub pulse: SourcePulse,
    pub bc: BoundaryConditions,
    pub theta0: InitialProfile,
    pub theta1: InitialProfile,
}

/// Solves on the grid refined `refine` times in space and time and keeps the
/// samples that coincide with coarse front nodes and coarse time levels.
pub fn generate_data(truth: &ModelSpec, coarse: &Grid3, refine: usize, acq: &Acquisition) -> Result<BoundaryRecord> {
    if refine < 2 {
        return Err(Error::InvalidArgument(format!("refinement factor must be at least 2, got {refine}")));
    }
    simulate_restricted(truth, coarse, refine, acq)
}

/// `refine = 1` is the plain coarse solve.
pub(crate) fn simulate_restricted(truth: &ModelSpec, coarse: &Grid3, refine: usize, acq: &Acquisition) -> Result<BoundaryRecord> {
    let fine = coarse.refined(refine)?;
    let model = truth.sample(&fine)?;
    let fine_tau = acq.tau / refine as f64;
    let problem = ForwardProblem::new(
        fine,
        fine_tau,
        acq.t_final,
        acq.pulse,
        acq.bc,
        acq.theta0.sample(&fine),
        acq.theta1.sample(&fine),
    )?;
    let (_, fine_rec) = solve_forward(&model, &problem, HistoryMode::None)?;

    let mut out = BoundaryRecord::zeros(*coarse, acq.tau, problem.steps / refine);
    let fine_pos: std::collections::HashMap<usize, usize> =
        fine_rec.nodes.iter().enumerate().map(|(s, &n)| (n, s)).collect();
    let map: Vec<usize> = out
        .nodes
        .iter()
        .map(|&n| {
            let ijk = coarse.ijk(n).map(|v| v * refine);
            fine_pos[&fine.index(ijk)]
        })
        .collect();
    let nc = out.node_count();
    for m in 0..=out.steps {
        let row = fine_rec.at_step(m * refine);
        for (s, &fs) in map.iter().enumerate() {
            out.samples[m * nc + s] = row[fs];
        }
    }
    Ok(out)
}

/// `u (1 + sigma alpha)` with `alpha` uniform on `[-1, 1]`, drawn in sample
/// order from a ChaCha8 stream seeded with `seed`.
pub fn add_noise(record: &BoundaryRecord, sigma: f64, seed: u64) -> Result<BoundaryRecord> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("noise level must be non-negative, got {sigma}")));
    }
    let mut out = record.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in &mut out.samples {
        let alpha: f64 = rng.gen_range(-1.0..=1.0);
        *v *= 1.0 + sigma * alpha;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, Box3};
    use crate::model::{Phantom, TimePart};
    use proptest::prelude::*;

    fn standard_acq() -> Acquisition {
        Acquisition {
            tau: 0.003,
            t_final: 3.0,
            pulse: SourcePulse::new(40.0),
            bc: BoundaryConditions::standard(),
            theta0: InitialProfile::standard(),
            theta1: InitialProfile::Zero,
        }
    }

    #[test]
    fn standard_setup_record_shape() {
        let g = build_grid(Box3::standard_domain(), 0.1).unwrap();
        let spec = ModelSpec { phantom: Phantom::standard(), time_part: Some(TimePart::standard()), inner: Some(Box3::standard_inner()) };
        let rec = generate_data(&spec, &g, 2, &standard_acq()).unwrap();
        assert_eq!(rec.steps + 1, 1001);
        assert_eq!(rec.node_count(), 17 * 17);
        assert!(rec.samples.iter().all(|v| v.is_finite()));
        assert!(rec.samples.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn refine_one_is_rejected() {
        let g = build_grid(Box3::new([0.0; 3], [0.4; 3]).unwrap(), 0.1).unwrap();
        let spec = ModelSpec { phantom: Phantom::uniform(1.0), time_part: None, inner: None };
        assert!(matches!(generate_data(&spec, &g, 1, &standard_acq()), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn quiet_background_gives_zero_record() {
        let g = build_grid(Box3::new([0.0; 3], [0.4; 3]).unwrap(), 0.1).unwrap();
        let spec = ModelSpec { phantom: Phantom::uniform(1.0), time_part: None, inner: None };
        let acq = Acquisition { pulse: SourcePulse::silent(40.0), theta0: InitialProfile::Zero, t_final: 0.3, ..standard_acq() };
        let rec = generate_data(&spec, &g, 2, &acq).unwrap();
        assert!(rec.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn restriction_reads_coincident_fine_samples() {
        // refine 2 vs the same problem solved directly on the fine grid
        let g = build_grid(Box3::new([0.0; 3], [0.4; 3]).unwrap(), 0.1).unwrap();
        let spec = ModelSpec { phantom: Phantom::uniform(1.3), time_part: None, inner: None };
        let acq = Acquisition { t_final: 0.3, tau: 0.01, ..standard_acq() };
        let rec = generate_data(&spec, &g, 2, &acq).unwrap();
        let fine = simulate_restricted(&spec, &g.refined(2).unwrap(), 1, &Acquisition { tau: 0.005, ..acq.clone() }).unwrap();
        let f = g.refined(2).unwrap();
        for m in 0..=rec.steps {
            for (s, &n) in rec.nodes.iter().enumerate() {
                let fi = f.index(g.ijk(n).map(|v| 2 * v));
                let fs = fine.nodes.iter().position(|&x| x == fi).unwrap();
                assert_eq!(rec.at_step(m)[s], fine.at_step(2 * m)[fs]);
            }
        }
    }

    #[test]
    fn refinement_converges_at_second_order() {
        let g = build_grid(Box3::new([-0.6, -0.4, -0.4], [0.6, 0.4, 0.4]).unwrap(), 0.1).unwrap();
        let spec = ModelSpec { phantom: Phantom::uniform(1.0), time_part: None, inner: None };
        let acq = Acquisition {
            tau: 0.02,
            t_final: 0.8,
            pulse: SourcePulse::silent(40.0),
            bc: BoundaryConditions::all_neumann(),
            theta0: InitialProfile::Gaussian { amplitude: 1.0, center: [0.0, 0.0, 0.0], widths: [0.06; 3], cube_last: false },
            theta1: InitialProfile::Zero,
        };
        let r1 = simulate_restricted(&spec, &g, 1, &acq).unwrap();
        let r2 = simulate_restricted(&spec, &g, 2, &acq).unwrap();
        let r4 = simulate_restricted(&spec, &g, 4, &acq).unwrap();
        let rms = |a: &BoundaryRecord, b: &BoundaryRecord| {
            let s: f64 = a.samples.iter().zip(&b.samples).map(|(x, y)| (x - y).powi(2)).sum();
            (s / a.samples.len() as f64).sqrt()
        };
        let (e1, e2) = (rms(&r1, &r2), rms(&r2, &r4));
        assert!(e2 > 0.0);
        let ratio = e1 / e2;
        assert!(ratio > 3.0 && ratio < 5.5, "{e1} {e2} {ratio}");
    }

    fn sample_record() -> BoundaryRecord {
        let g = build_grid(Box3::new([0.0; 3], [1.0; 3]).unwrap(), 0.1).unwrap();
        let mut rec = BoundaryRecord::zeros(g, 0.01, 99);
        for (k, v) in rec.samples.iter_mut().enumerate() {
            *v = if k % 17 == 0 { 0.0 } else { ((k as f64) * 0.37).sin() + 1.5 };
        }
        rec
    }

    #[test]
    fn noise_examples() {
        let rec = sample_record();
        assert_eq!(add_noise(&rec, 0.0, 1).unwrap(), rec);
        assert!(add_noise(&rec, -0.1, 1).is_err());
        let a = add_noise(&rec, 0.03, 42).unwrap();
        let b = add_noise(&rec, 0.03, 42).unwrap();
        let bits = |r: &BoundaryRecord| r.samples.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&add_noise(&rec, 0.03, 43).unwrap()));
        for (u, n) in rec.samples.iter().zip(&a.samples) {
            if *u == 0.0 {
                assert_eq!(*n, 0.0);
            } else {
                assert!(((n - u) / u).abs() <= 0.03 + 1e-15);
            }
        }
    }

    #[test]
    fn noise_mean_deviation() {
        // E|alpha| = 1/2 for alpha uniform on [-1, 1]
        let rec = sample_record();
        assert!(rec.samples.len() >= 10_000);
        let noisy = add_noise(&rec, 0.10, 7).unwrap();
        let devs: Vec<f64> =
            rec.samples.iter().zip(&noisy.samples).filter(|(u, _)| **u != 0.0).map(|(u, n)| ((n - u) / u).abs()).collect();
        let mean = devs.iter().sum::<f64>() / devs.len() as f64;
        assert!((mean - 0.05).abs() <= 0.005, "{mean}");
    }

    proptest! {
        #[test]
        fn noise_is_bounded_and_keeps_zeros(sigma in 0.0f64..0.5, seed in any::<u64>()) {
            let rec = sample_record();
            let noisy = add_noise(&rec, sigma, seed).unwrap();
            for (u, n) in rec.samples.iter().zip(&noisy.samples) {
                prop_assert!((n - u).abs() <= sigma * u.abs() * (1.0 + 1e-12));
            }
        }
    }
}
