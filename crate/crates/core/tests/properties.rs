mod common;

use std::collections::BTreeMap;

use common::*;
use mars_core::cars::{
    base_influence, cars_loss, msp_satisfaction, rank_msps, recommend_group_msp, BprPair,
    CarsParams, Msp,
};
use mars_core::d2r::{
    build_features, estimate_response, recommend_donation, FeatureVector, MessageFeatures,
};
use mars_core::eval::{hit_ratio_at_k, map_at_k, RankingCase};
use mars_core::graph::ViewerGraph;
use mars_core::sensor::{
    donation_entropy, initial_influence, param_count, star_estimate, train_sensor, Layout,
    SensorConfig,
};
use mars_core::tensor::{
    frob_sq_diff, mode_n_product, tucker_reconstruct, Dims, EventTensor, Mode,
};
use ndarray::{Array1, Array2, Array3};
use proptest::prelude::*;
use rand::Rng;

fn small_tensor() -> impl Strategy<Value = Array3<f64>> {
    (1usize..4, 1usize..4, 1usize..4).prop_flat_map(|(a, b, c)| {
        proptest::collection::vec(-3.0f64..3.0, a * b * c)
            .prop_map(move |v| Array3::from_shape_vec((a, b, c), v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn identity_factors_reproduce_the_core(core in small_tensor()) {
        let (a, b, c) = core.dim();
        let out = tucker_reconstruct(&core, &Array2::eye(a), &Array2::eye(b), &Array2::eye(c)).unwrap();
        prop_assert_eq!(out, core);
    }

    #[test]
    fn mode_product_is_linear(t in small_tensor(), s in -2.0f64..2.0, seed in 0u64..1000) {
        let mut r = rng(seed);
        for (axis, mode) in [Mode::Viewer, Mode::Channel, Mode::Slot].into_iter().enumerate() {
            let n = t.shape()[axis];
            let (a, b) = (random_matrix(&mut r, 2, n), random_matrix(&mut r, 2, n));
            let lhs = mode_n_product(&t, &(&a * s + &b), mode).unwrap();
            let rhs = mode_n_product(&t, &a, mode).unwrap() * s + mode_n_product(&t, &b, mode).unwrap();
            prop_assert!(frob_sq_diff(&lhs, &rhs).unwrap() < 1e-20);
        }
    }

    #[test]
    fn frobenius_zero_iff_equal(a in small_tensor(), i in 0usize..64, bump in 1e-3f64..1.0) {
        prop_assert_eq!(frob_sq_diff(&a, &a).unwrap(), 0.0);
        let mut b = a.clone();
        let k = i % b.len();
        b.as_slice_mut().unwrap()[k] += bump;
        prop_assert!(frob_sq_diff(&a, &b).unwrap() > 0.0);
    }

    #[test]
    fn star_ignores_other_channels_and_slots(
        seed in 0u64..500, v in 0usize..5, c in 0usize..3, t in 0usize..8,
        oc in 0usize..3, ot in 0usize..8, amount in 0.1f64..5.0,
    ) {
        let data = random_data(seed, Dims::new(5, 3, 8), 1, 0.3);
        let m = random_model(seed, &data, 2, 3);
        let l = 3;
        let outside = oc != c || ot >= t || ot + l < t;
        prop_assume!(outside);
        let before = star_estimate(&m, &data.donations, v, c, t, l).unwrap();
        let mut td = data.donations.clone();
        for u in 0..5 {
            td.add((u, oc, ot), amount).unwrap();
        }
        prop_assert_eq!(star_estimate(&m, &td, v, c, t, l).unwrap(), before);
    }

    #[test]
    fn entropy_stays_within_bounds(seed in 0u64..500, density in 0.0f64..1.0, c in 0usize..3, t in 0usize..8, l in 1usize..6) {
        let data = random_data(seed, Dims::new(5, 3, 8), 1, density);
        let h = donation_entropy(&data.donations, c, t, l).unwrap();
        prop_assert!(h >= 0.0);
        prop_assert!(h <= (5.0 * (l as f64 + 1.0)).ln() + 1e-12);
    }

    #[test]
    fn influence_starts_from_friendships(seed in 0u64..500, eps in 0.0f64..0.1) {
        let data = random_data(seed, Dims::new(6, 1, 1), 1, 0.0);
        let w = initial_influence(&data.graph, eps);
        for u in 0..6 {
            for v in 0..6 {
                if u == v { continue; }
                let expect = if data.graph.has_edge(u, v) { 1.0 } else { eps };
                prop_assert_eq!(w[[u, v]], expect);
            }
        }
    }

    #[test]
    fn sharing_factors_saves_parameters(nv in 1usize..500, nc in 1usize..100, nt in 1usize..500, alpha in 2usize..12) {
        let d = Dims::new(nv, nc, nt);
        let rows = (nv + nc + nt) as u64;
        let a = alpha as u64;
        let shared = param_count(d, alpha, Layout::Shared).unwrap();
        prop_assert_eq!(shared, rows * a + 2 * a * a * a);
        prop_assert!(shared < param_count(d, alpha, Layout::Separate).unwrap());
    }

    #[test]
    fn response_estimate_is_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut r = rng(seed);
        let n = 9;
        let theta = Array1::from_iter((0..n).map(|_| r.random_range(-1.0..1.0)));
        let x1 = Array1::from_iter((0..n).map(|_| r.random_range(-1.0..1.0)));
        let x2 = Array1::from_iter((0..n).map(|_| r.random_range(-1.0..1.0)));
        let lhs = estimate_response(&theta, &FeatureVector(&x1 * a + &x2 * b)).unwrap();
        let rhs = a * estimate_response(&theta, &FeatureVector(x1)).unwrap()
            + b * estimate_response(&theta, &FeatureVector(x2)).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn history_features_grow_with_time(seed in 0u64..500, v in 0usize..4, c in 0usize..3) {
        let data = random_data(seed, Dims::new(4, 3, 10), 1, 0.4);
        let m = random_model(seed, &data, 2, 3);
        let msg = MessageFeatures::zeros(data.schema);
        let mut prev_own = 0.0;
        for t in 0..10 {
            let x = build_features(&m, &data.donations, v, c, t, 1.0, &msg, 0.0, 3).unwrap();
            let own = x.0[1 + 1 + 1 + 4];
            prop_assert!(own >= prev_own);
            prev_own = own;
        }
    }

    #[test]
    fn appending_a_worse_channel_keeps_the_order(seed in 0u64..500) {
        let data = random_data(seed, Dims::new(3, 6, 5), 1, 0.3);
        let m = random_model(seed, &data, 2, 3);
        let msgs = vec![MessageFeatures::zeros(data.schema); 6];
        let fans = vec![0.0; 6];
        let all = recommend_donation(&m, &data.donations, 0, &[0, 1, 2, 3, 4, 5], 2.0, &msgs, 5, &fans).unwrap();
        let (worst, worst_score) = *all.last().unwrap();
        prop_assume!(all[all.len() - 2].1 > worst_score);
        let rest: Vec<usize> = (0..6).filter(|&c| c != worst).collect();
        let mut cands = rest.clone();
        cands.push(worst);
        let before = recommend_donation(&m, &data.donations, 0, &rest, 2.0, &msgs[..5], 5, &fans[..5]).unwrap();
        let after = recommend_donation(&m, &data.donations, 0, &cands, 2.0, &msgs, 5, &fans).unwrap();
        prop_assert_eq!(&after[..5], &before[..]);
        prop_assert_eq!(after[5].0, worst);
    }

    #[test]
    fn pair_preferences_are_complementary(seed in 0u64..500) {
        let mut r = rng(seed);
        let data = random_data(seed, Dims::new(5, 5, 2), 1, 0.0);
        let m = random_model(seed, &data, 2, 2);
        let mut params = random_params(&mut r, 2, 5);
        params.lambda4 = 0.0;
        let msps = vec![random_msp(&mut r, &[0, 1, 2], 5, 2), random_msp(&mut r, &[0, 1, 2], 5, 2)];
        let fwd = cars_loss(&params, &m, &msps, &[BprPair { viewer: 1, preferred: 0, other: 1 }]).unwrap();
        let back = cars_loss(&params, &m, &msps, &[BprPair { viewer: 1, preferred: 1, other: 0 }]).unwrap();
        prop_assert!(((-fwd).exp() + (-back).exp() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn satisfaction_ignores_unrelated_members(seed in 0u64..500) {
        let mut r = rng(seed);
        let data = random_data(seed, Dims::new(6, 6, 2), 1, 0.0);
        let m = random_model(seed, &data, 2, 2);
        let params = random_params(&mut r, 2, 6);
        let p = random_msp(&mut r, &[0, 1, 2, 3], 6, 2);
        // reassign member 3 to channels viewer 0 is not watching
        let free: Vec<usize> = (0..6).filter(|c| !p.channels(0).unwrap().contains(c)).collect();
        let mut assignments: BTreeMap<usize, Vec<usize>> = p.assignments().clone();
        assignments.insert(3, free[..2].to_vec());
        let q = Msp::new(p.group().iter().copied(), p.edges(), assignments).unwrap();
        let before = msp_satisfaction(&params, &m, 0, &p).unwrap();
        let after = msp_satisfaction(&params, &m, 0, &q).unwrap();
        let shares_with_friend = p.are_friends(0, 3)
            && p.channels(3).unwrap().iter().any(|c| p.channels(0).unwrap().contains(c));
        if !shares_with_friend {
            prop_assert_eq!(before, after);
        }
        // a non-friend never matters
        let mut edgeless = p.assignments().clone();
        edgeless.insert(3, free[..2].to_vec());
        let p0 = Msp::new(p.group().iter().copied(), p.edges().filter(|&(a, b)| a != 3 && b != 3), p.assignments().clone()).unwrap();
        let q0 = Msp::new(p.group().iter().copied(), p.edges().filter(|&(a, b)| a != 3 && b != 3), edgeless).unwrap();
        prop_assert_eq!(msp_satisfaction(&params, &m, 0, &p0).unwrap(), msp_satisfaction(&params, &m, 0, &q0).unwrap());
    }

    #[test]
    fn without_social_terms_ranking_is_personal(seed in 0u64..500) {
        let mut r = rng(seed);
        let data = random_data(seed, Dims::new(5, 6, 2), 1, 0.0);
        let m = random_model(seed, &data, 2, 2);
        let mut params = random_params(&mut r, 2, 5);
        params.tau_social.fill(0.0);
        params.tau_relation.fill(0.0);
        let cands: Vec<Msp> = (0..5).map(|_| random_msp(&mut r, &[0, 2, 4], 6, 2)).collect();
        let ranked = rank_msps(&params, &m, 2, &cands).unwrap();
        let personal = |p: &Msp| -> f64 {
            p.channels(2).unwrap().iter().map(|&c| {
                let o = base_influence(&params, m.factors.viewer.row(2), m.factors.channel.row(c)).unwrap();
                o * m.factors.viewer.row(2).dot(&m.factors.channel.row(c))
            }).sum()
        };
        let mut expect: Vec<(usize, f64)> = cands.iter().map(personal).enumerate().collect();
        expect.sort_by(|a, b| b.1.total_cmp(&a.1));
        let got: Vec<usize> = ranked.iter().map(|x| x.0).collect();
        let want: Vec<usize> = expect.iter().map(|x| x.0).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn least_misery_is_never_beaten(seed in 0u64..500) {
        let mut r = rng(seed);
        let data = random_data(seed, Dims::new(5, 6, 2), 1, 0.0);
        let m = random_model(seed, &data, 2, 2);
        let params: CarsParams = random_params(&mut r, 2, 5);
        let group = [0, 1, 3, 4];
        let cands: Vec<Msp> = (0..6).map(|_| random_msp(&mut r, &group, 6, 3)).collect();
        let best = recommend_group_msp(&params, &m, &cands).unwrap();
        let worst = |p: &Msp| group.iter().map(|&v| msp_satisfaction(&params, &m, v, p).unwrap()).fold(f64::INFINITY, f64::min);
        let chosen = worst(&cands[best]);
        for p in &cands {
            prop_assert!(chosen >= worst(p));
        }
    }

    #[test]
    fn map_never_exceeds_hit_ratio(ranks in proptest::collection::vec(0usize..10, 1..20), k in 1usize..6) {
        let cases: Vec<RankingCase<usize>> = ranks.iter().map(|&pos| {
            RankingCase { ranked: (0..10).collect(), relevant: vec![pos] }
        }).collect();
        let hr = hit_ratio_at_k(&cases, k).unwrap();
        let map = map_at_k(&cases, k).unwrap();
        prop_assert!(map <= hr);
        // relabeling the irrelevant items changes nothing
        let relabeled: Vec<RankingCase<usize>> = cases.iter().map(|c| RankingCase {
            ranked: c.ranked.iter().map(|&x| if c.relevant.contains(&x) { x } else { x + 100 }).collect(),
            relevant: c.relevant.clone(),
        }).collect();
        prop_assert_eq!(hit_ratio_at_k(&relabeled, k).unwrap(), hr);
        prop_assert_eq!(map_at_k(&relabeled, k).unwrap(), map);
    }
}

#[test]
fn training_is_reproducible_and_thread_independent() {
    let data = random_data(3, Dims::new(6, 4, 8), 2, 0.2);
    let base = SensorConfig {
        alpha: 2,
        window: 3,
        epochs: 5,
        learning_rate: 1e-3,
        seed: 8,
        ..Default::default()
    };
    let (m1, r1) = train_sensor(&data, &base).unwrap();
    let (m2, r2) = train_sensor(&data, &base).unwrap();
    let seq = SensorConfig {
        exec: mars_core::par::Exec::Sequential,
        ..base.clone()
    };
    let (m3, r3) = train_sensor(&data, &seq).unwrap();
    let bits = |r: &mars_core::sensor::TrainReport| {
        r.trace
            .iter()
            .map(|b| b.total.to_bits())
            .collect::<Vec<_>>()
    };
    assert_eq!(bits(&r1), bits(&r2));
    assert_eq!(bits(&r1), bits(&r3));
    assert_eq!(m1, m2);
    assert_eq!(m1, m3);
}

#[test]
fn empty_history_features_are_zero() {
    let td = EventTensor::new(Dims::new(2, 2, 3));
    let g = ViewerGraph::new(2);
    let cfg = SensorConfig {
        alpha: 2,
        ..Default::default()
    };
    let m = mars_core::sensor::SensorModel::init(td.dims(), &g, Default::default(), &cfg).unwrap();
    let msg = MessageFeatures::zeros(m.schema());
    let x = build_features(&m, &td, 1, 1, 2, 3.0, &msg, 0.0, 5).unwrap();
    let base = 1 + m.emb_width + 1 + 4;
    assert_eq!((x.0[base], x.0[base + 1]), (0.0, 0.0));
}
