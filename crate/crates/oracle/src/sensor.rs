use ndarray::Array3;

use mars_core::d2r::DonationEvent;
use mars_core::sensor::{ReconScope, SensorConfig, SensorData, SensorModel};

use crate::tensor::{dense_of, frob_naive, tucker_naive};

/// Unweighted value of each objective term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NaiveTerms {
    pub donation_recon: f64,
    pub response_recon: f64,
    pub d2r: f64,
    pub ser: f64,
    pub star: f64,
    pub riot: f64,
}

fn window_lo(t: usize, l: usize) -> usize {
    t.saturating_sub(l)
}

pub fn ser_naive(m: &SensorModel, data: &SensorData) -> f64 {
    let c = &m.factors.channel;
    let n = c.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mut g = 0.0;
            for a in 0..c.ncols() {
                g += c[[i, a]] * c[[j, a]];
            }
            let w = data.relations.get(i, j) as f64;
            acc += (w - g) * (w - g);
        }
    }
    acc
}

pub fn star_estimate_naive(
    m: &SensorModel,
    td: &Array3<f64>,
    v: usize,
    c: usize,
    t: usize,
    l: usize,
) -> f64 {
    let mut acc = 0.0;
    for u in 0..td.dim().0 {
        if u == v {
            continue;
        }
        for delta in 1..=l {
            if delta > t {
                break;
            }
            acc += (-m.decay * delta as f64).exp() * m.influence[[u, v]] * td[[u, c, t - delta]];
        }
    }
    acc
}

pub fn star_naive(m: &SensorModel, td: &Array3<f64>, td_hat: &Array3<f64>, l: usize) -> f64 {
    let (nv, nc, nt) = td.dim();
    let mut acc = 0.0;
    for v in 0..nv {
        for c in 0..nc {
            for t in 0..nt {
                let e = td_hat[[v, c, t]] - star_estimate_naive(m, td, v, c, t, l);
                acc += e * e;
            }
        }
    }
    acc
}

pub fn entropy_naive(td: &Array3<f64>, c: usize, t: usize, l: usize) -> f64 {
    let nv = td.dim().0;
    let mut z = 0.0;
    for v in 0..nv {
        for s in window_lo(t, l)..=t {
            z += td[[v, c, s]];
        }
    }
    if z <= 0.0 {
        return 0.0;
    }
    let mut h = 0.0;
    for v in 0..nv {
        for s in window_lo(t, l)..=t {
            let p = td[[v, c, s]] / z;
            if p > 0.0 {
                h -= p * p.ln();
            }
        }
    }
    h
}

pub fn trend_naive(td: &Array3<f64>, c: usize, t: usize, l: usize) -> f64 {
    let nv = td.dim().0;
    let mut now = 0.0;
    let mut win = 0.0;
    for v in 0..nv {
        now += td[[v, c, t]];
        for s in window_lo(t, l)..=t {
            win += td[[v, c, s]];
        }
    }
    now - win / (l + 1) as f64
}

pub fn riot_naive(td: &Array3<f64>, tr_hat: &Array3<f64>, l: usize) -> f64 {
    let (nv, nc, nt) = td.dim();
    let mut acc = 0.0;
    for c in 0..nc {
        for t in 0..nt {
            let phi = trend_naive(td, c, t, l);
            let s = entropy_naive(td, c, t, l);
            let mut block = 0.0;
            for v in 0..nv {
                for tp in window_lo(t, l)..=t {
                    block += tr_hat[[v, c, tp]];
                }
            }
            acc += phi * s * block;
        }
    }
    acc
}

/// Feature vector of the observed donation at `(v, c, t)`, spelled out group
/// by group. The last event recorded for the cell supplies the message and
/// fan-list features; a cell without one gets zeros.
pub fn d2r_features_naive(
    m: &SensorModel,
    td: &Array3<f64>,
    events: &[DonationEvent],
    (v, c, t): (usize, usize, usize),
    l: usize,
) -> Vec<f64> {
    let event = events
        .iter()
        .rev()
        .find(|e| (e.viewer, e.channel, e.slot) == (v, c, t));
    let mut x = vec![td[[v, c, t]]];
    match event {
        Some(e) => {
            x.extend(e.message.embedding.iter());
            x.push(e.message.sentiment);
            x.extend(e.message.emotion.iter());
        }
        None => x.extend(std::iter::repeat_n(
            0.0,
            m.emb_width + 1 + mars_core::d2r::EMOTION_WIDTH,
        )),
    }
    let mut own = 0.0;
    for s in 0..t {
        own += td[[v, c, s]];
    }
    x.push(own);
    let mut others = 0.0;
    for u in 0..td.dim().0 {
        for s in window_lo(t, l)..=t {
            if (u, s) != (v, t) {
                others += td[[u, c, s]];
            }
        }
    }
    x.push(others);
    x.push(event.map_or(0.0, |e| e.fanlist_min));
    for a in 0..m.factors.viewer.ncols() {
        x.push(m.factors.viewer[[v, a]] * m.factors.channel[[c, a]]);
    }
    x
}

pub fn d2r_naive(
    m: &SensorModel,
    td: &Array3<f64>,
    tr_hat: &Array3<f64>,
    events: &[DonationEvent],
    l: usize,
) -> f64 {
    let mut acc = 0.0;
    for ((v, c, t), &x) in td.indexed_iter() {
        if x == 0.0 {
            continue;
        }
        let feats = d2r_features_naive(m, td, events, (v, c, t), l);
        assert_eq!(feats.len(), m.theta.len(), "feature width");
        let pred: f64 = feats.iter().zip(m.theta.iter()).map(|(a, b)| a * b).sum();
        let e = tr_hat[[v, c, t]] - pred;
        acc += e * e;
    }
    acc
}

/// Every term, each computed from scratch. Only the all-cells reconstruction
/// scope is transcribed.
pub fn naive_terms(m: &SensorModel, data: &SensorData, cfg: &SensorConfig) -> NaiveTerms {
    assert_eq!(
        cfg.recon,
        ReconScope::All,
        "oracle covers the all-cells scope only"
    );
    let f = &m.factors;
    let td = dense_of(&data.donations);
    let tr = dense_of(&data.responses);
    let td_hat = tucker_naive(&f.core_donation, &f.viewer, &f.channel, &f.slot);
    let tr_hat = tucker_naive(&f.core_response, &f.viewer, &f.channel, &f.slot);
    let l = cfg.window;
    NaiveTerms {
        donation_recon: frob_naive(&td_hat, &td),
        response_recon: frob_naive(&tr_hat, &tr),
        d2r: d2r_naive(m, &td, &tr_hat, &data.events, l),
        ser: ser_naive(m, data),
        star: star_naive(m, &td, &td_hat, l),
        riot: riot_naive(&td, &tr_hat, l),
    }
}

pub fn naive_total_loss(m: &SensorModel, data: &SensorData, cfg: &SensorConfig) -> f64 {
    let t = naive_terms(m, data, cfg);
    let w = cfg.weights;
    w.donation_recon * t.donation_recon
        + w.response_recon * t.response_recon
        + w.d2r * t.d2r
        + cfg.lambda_ser * t.ser
        + cfg.lambda_star * t.star
        + cfg.lambda_riot * t.riot
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_and_trend_by_hand() {
        let mut td = Array3::zeros((3, 1, 6));
        td[[0, 0, 5]] = 1.0;
        td[[1, 0, 4]] = 1.0;
        td[[2, 0, 3]] = 2.0;
        let h = entropy_naive(&td, 0, 5, 5);
        assert!((h - 1.0397207708399179).abs() < 1e-12);
        let mut spike = Array3::zeros((1, 1, 6));
        spike[[0, 0, 5]] = 6.0;
        assert_eq!(trend_naive(&spike, 0, 5, 5), 5.0);
        assert_eq!(entropy_naive(&spike, 0, 5, 5), 0.0);
    }
}
