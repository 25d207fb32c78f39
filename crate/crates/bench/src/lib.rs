//! Shared setup for the benchmarks: seeded LCPs and calibration inputs
//! prepared up to the stage being measured.

use cvcal_core::calibration::{
    chosen_anchors, estimate_all, marginal_costs, markets, select_all, MarketKey, MarketRecord,
};
use cvcal_core::fixtures::{self, Instance};
use cvcal_core::{
    preprocess_reference, AnchorSet, Array3, CalibrationConfig, Mlcp, ReferenceData, ThetaMatrix,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `count` LCPs of size `d` with positive definite matrices `A Aᵀ + 0.1 I`
/// and right-hand sides in `[-2, 2]`.
pub fn psd_problems(seed: u64, d: usize, count: usize) -> Vec<Mlcp> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let a: Vec<Vec<f64>> = (0..d)
                .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let m: Vec<Vec<f64>> = (0..d)
                .map(|i| {
                    (0..d)
                        .map(|j| {
                            let v: f64 = (0..d).map(|k| a[i][k] * a[j][k]).sum();
                            if i == j {
                                v + 0.1
                            } else {
                                v
                            }
                        })
                        .collect()
                })
                .collect();
            let b = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            Mlcp::from_rows(&m, b).expect("square matrix")
        })
        .collect()
}

/// Everything one calibration iteration needs, computed once.
pub struct Prepared {
    pub instance: Instance,
    pub reference: ReferenceData,
    pub config: CalibrationConfig,
    pub markets: Vec<MarketKey>,
    pub phi: Array3,
    pub records: Vec<MarketRecord>,
    pub theta_lim: ThetaMatrix,
    pub q_est: Array3,
    pub anchors: AnchorSet,
}

/// Perturbed reference data for the ten-node network, prepared up to the
/// update step.
pub fn grid10(seed: u64) -> Prepared {
    let instance = fixtures::grid10(seed);
    let config = CalibrationConfig::default();
    let raw = fixtures::perturbed(&instance, seed, config.solver_tol).expect("forward solve");
    prepare(instance, &raw, config)
}

/// Reference data for the 43-node replica, prepared up to the update step.
pub fn replica43(seed: u64) -> Prepared {
    let instance = fixtures::replica43(seed);
    let config = CalibrationConfig::default();
    let raw = fixtures::perturbed_with(&instance, seed, config.solver_tol, 0.9..1.0)
        .expect("forward solve");
    prepare(instance, &raw, config)
}

fn prepare(
    instance: Instance,
    raw: &cvcal_core::RawReference,
    config: CalibrationConfig,
) -> Prepared {
    let net = &instance.network;
    let reference = preprocess_reference(net, raw, &config).expect("consistent reference");
    let phi = marginal_costs(net, &reference.anchors(net), &reference.q_ref, &config)
        .expect("marginal costs");
    let mkts = markets(net);
    let records = select_all(
        net,
        &mkts,
        &phi,
        &reference.q_ref,
        &reference,
        &reference.lambda_lo,
        &reference.lambda_hi,
    )
    .expect("anchor selection");
    let (theta_lim, q_est) =
        estimate_all(&mkts, &records, &phi, &reference.q_ref, &reference.s_ref).expect("estimates");
    let anchors = chosen_anchors(net, &reference.s_ref, &records);
    Prepared {
        instance,
        reference,
        config,
        markets: mkts,
        phi,
        records,
        theta_lim,
        q_est,
        anchors,
    }
}
