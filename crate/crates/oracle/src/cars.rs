use mars_core::cars::{BprPair, CarsParams, Msp};
use mars_core::sensor::SensorModel;

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn dot_rows(m: &SensorModel, c1: usize, c2: usize) -> f64 {
    let c = &m.factors.channel;
    (0..c.ncols()).map(|a| c[[c1, a]] * c[[c2, a]]).sum()
}

pub fn naive_base_influence(params: &CarsParams, m: &SensorModel, v: usize, c: usize) -> f64 {
    let a = m.factors.viewer.ncols();
    let mut z = Vec::with_capacity(2 * a + 1);
    for i in 0..a {
        z.push(m.factors.viewer[[v, i]]);
    }
    for i in 0..a {
        z.push(m.factors.channel[[c, i]]);
    }
    z.push(params.b);
    z.iter()
        .zip(params.h.iter())
        .map(|(x, h)| h * logistic(*x))
        .sum()
}

pub fn naive_channel_influence(
    params: &CarsParams,
    m: &SensorModel,
    v: usize,
    c: usize,
    p: &Msp,
) -> f64 {
    let mut social = 0.0;
    for &u in p.group() {
        if u == v || !p.edges().any(|(x, y)| (x, y) == (u, v) || (x, y) == (v, u)) {
            continue;
        }
        if p.channels(u).unwrap().contains(&c) {
            social += m.influence[[u, v]] * naive_base_influence(params, m, u, c);
        }
    }
    let mut relation = 0.0;
    for &other in p.channels(v).unwrap() {
        if other != c {
            relation += dot_rows(m, c, other).abs();
        }
    }
    naive_base_influence(params, m, v, c)
        + params.tau_social[v] * social
        + params.tau_relation[v] * relation
}

pub fn naive_satisfaction(params: &CarsParams, m: &SensorModel, v: usize, p: &Msp) -> f64 {
    let a = m.factors.viewer.ncols();
    let mut weighted = vec![0.0; a];
    for &c in p.channels(v).expect("viewer in party") {
        let w = naive_channel_influence(params, m, v, c, p);
        for (i, x) in weighted.iter_mut().enumerate() {
            *x += w * m.factors.channel[[c, i]];
        }
    }
    (0..a).map(|i| m.factors.viewer[[v, i]] * weighted[i]).sum()
}

pub fn cars_loss_naive(
    params: &CarsParams,
    m: &SensorModel,
    msps: &[Msp],
    pairs: &[BprPair],
) -> f64 {
    let mut loss = 0.0;
    for pair in pairs {
        let d = naive_satisfaction(params, m, pair.viewer, &msps[pair.preferred])
            - naive_satisfaction(params, m, pair.viewer, &msps[pair.other]);
        loss -= logistic(d).ln();
    }
    let mut norm = params.b * params.b;
    for x in params
        .h
        .iter()
        .chain(params.tau_social.iter())
        .chain(params.tau_relation.iter())
    {
        norm += x * x;
    }
    loss + params.lambda4 / 2.0 * norm
}

/// Literal least-misery choice: the first candidate whose minimum member
/// satisfaction is not beaten by any later candidate. `None` when empty.
pub fn exhaustive_group_choice(
    params: &CarsParams,
    m: &SensorModel,
    candidates: &[Msp],
) -> Option<usize> {
    let mins: Vec<f64> = candidates
        .iter()
        .map(|p| {
            p.group()
                .iter()
                .map(|&v| naive_satisfaction(params, m, v, p))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    (0..mins.len()).find(|&i| mins.iter().all(|&other| mins[i] >= other))
}
