//! Random small instances shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use mars_core::cars::{CarsParams, Msp};
use mars_core::d2r::{DonationEvent, FeatureSchema, MessageFeatures, EMOTION_WIDTH};
use mars_core::graph::{SignedStreamerMatrix, ViewerGraph};
use mars_core::sensor::{SensorConfig, SensorData, SensorModel};
use mars_core::tensor::{Dims, EventTensor};
use ndarray::{Array1, Array2};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A dataset with roughly `density` of the cells donated to, random message
/// features on most donations, a random graph and random relations.
pub fn random_data(seed: u64, dims: Dims, emb_width: usize, density: f64) -> SensorData {
    let mut r = rng(seed);
    let (nv, nc, nt) = dims.shape();
    let mut donations = EventTensor::new(dims);
    let mut responses = EventTensor::new(dims);
    let mut events = Vec::new();
    for v in 0..nv {
        for c in 0..nc {
            for t in 0..nt {
                if r.random::<f64>() >= density {
                    continue;
                }
                let amount = r.random_range(0.5..3.0);
                donations.set((v, c, t), amount).unwrap();
                responses.set((v, c, t), r.random_range(0.0..5.0)).unwrap();
                if r.random::<f64>() < 0.8 {
                    events.push(DonationEvent {
                        viewer: v,
                        channel: c,
                        slot: t,
                        amount,
                        message: MessageFeatures {
                            embedding: (0..emb_width).map(|_| r.random_range(-1.0..1.0)).collect(),
                            sentiment: r.random_range(-1.0..1.0),
                            emotion: (0..EMOTION_WIDTH)
                                .map(|_| r.random_range(0.0..1.0))
                                .collect(),
                        },
                        fanlist_min: r.random_range(0.0..10.0),
                    });
                }
            }
        }
    }
    let mut graph = ViewerGraph::new(nv);
    for u in 0..nv {
        for v in u + 1..nv {
            if r.random::<f64>() < 0.4 {
                graph.add_edge(u, v).unwrap();
            }
        }
    }
    let mut relations = SignedStreamerMatrix::zeros(nc);
    for i in 0..nc {
        for j in i + 1..nc {
            let sign = [-1i8, 0, 1][r.random_range(0..3)];
            relations.set_symmetric(i, j, sign).unwrap();
        }
    }
    SensorData {
        donations,
        responses,
        graph,
        relations,
        events,
        schema: FeatureSchema { emb_width },
    }
}

/// A model with every learnable randomized, including the influence matrix,
/// the decay and the regression weights.
pub fn random_model(seed: u64, data: &SensorData, alpha: usize, window: usize) -> SensorModel {
    let cfg = SensorConfig {
        alpha,
        window,
        seed,
        init_scale: 0.5,
        ..Default::default()
    };
    let mut m = SensorModel::init(data.dims(), &data.graph, data.schema, &cfg).unwrap();
    let mut r = rng(seed ^ 0x5eed);
    m.influence.mapv_inplace(|_| r.random_range(-1.0..1.0));
    m.decay = r.random_range(0.05..0.8);
    m.theta.mapv_inplace(|_| r.random_range(-0.3..0.3));
    m
}

/// A random party over `group` with `k` channels per member drawn from
/// `n_channels`, friendships among members with probability one half.
pub fn random_msp(r: &mut ChaCha8Rng, group: &[usize], n_channels: usize, k: usize) -> Msp {
    let mut edges = Vec::new();
    for (i, &u) in group.iter().enumerate() {
        for &v in &group[i + 1..] {
            if r.random::<bool>() {
                edges.push((u, v));
            }
        }
    }
    let all: Vec<usize> = (0..n_channels).collect();
    let assignments: BTreeMap<usize, Vec<usize>> = group
        .iter()
        .map(|&v| (v, all.choose_multiple(r, k).copied().collect()))
        .collect();
    Msp::new(group.iter().copied(), edges, assignments).unwrap()
}

pub fn random_params(r: &mut ChaCha8Rng, alpha: usize, n_viewers: usize) -> CarsParams {
    CarsParams {
        h: Array1::from_iter((0..2 * alpha + 1).map(|_| r.random_range(-1.0..1.0))),
        b: r.random_range(-1.0..1.0),
        tau_social: Array1::from_iter((0..n_viewers).map(|_| r.random_range(0.0..1.0))),
        tau_relation: Array1::from_iter((0..n_viewers).map(|_| r.random_range(0.0..1.0))),
        lambda4: 0.1,
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

pub fn random_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| r.random_range(-1.0..1.0))
}
