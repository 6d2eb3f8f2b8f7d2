//! The individual terms of the SENSOR objective, each computed directly from
//! its definition. The training engine in `grad` computes the same values
//! fused with the gradient; these functions are the reference path.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::d2r::D2rSample;
use crate::error::{dim_err, MarsError, Result};
use crate::graph::SignedStreamerMatrix;
use crate::sensor::config::{ReconScope, SensorConfig};
use crate::sensor::model::{SensorData, SensorModel};
use crate::tensor::{frob_sq_diff_sparse, row_major, Dense3, Dims, EventTensor};

/// Value of every term of the objective at one model point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub donation_recon: f64,
    pub response_recon: f64,
    pub d2r: f64,
    pub ser: f64,
    pub star: f64,
    pub riot: f64,
    /// Weighted sum of the terms above under the config that produced them.
    pub total: f64,
}

impl LossBreakdown {
    pub fn combine(mut self, cfg: &SensorConfig) -> Self {
        let w = cfg.weights;
        self.total = w.donation_recon * self.donation_recon
            + w.response_recon * self.response_recon
            + w.d2r * self.d2r
            + cfg.lambda_ser * self.ser
            + cfg.lambda_star * self.star
            + cfg.lambda_riot * self.riot;
        self
    }
}

fn check_dims(m: &SensorModel, td: &EventTensor) -> Result<Dims> {
    let dims = td.dims();
    if m.dims() != dims {
        return dim_err(format!(
            "model is {:?}, tensor is {:?}",
            m.dims().shape(),
            dims.shape()
        ));
    }
    Ok(dims)
}

/// Squared reconstruction error of both tensors over every cell.
pub fn loss_reconstruction(m: &SensorModel, td: &EventTensor, tr: &EventTensor) -> Result<f64> {
    let (d, r) = reconstruction_terms(m, td, tr, ReconScope::All)?;
    Ok(d + r)
}

/// Donation and response reconstruction errors under a cell scope.
pub fn reconstruction_terms(
    m: &SensorModel,
    td: &EventTensor,
    tr: &EventTensor,
    scope: ReconScope,
) -> Result<(f64, f64)> {
    check_dims(m, td)?;
    check_dims(m, tr)?;
    let td_hat = m.factors.reconstruct_donation()?;
    let tr_hat = m.factors.reconstruct_response()?;
    if scope == ReconScope::All {
        return Ok((
            frob_sq_diff_sparse(&td_hat, td)?,
            frob_sq_diff_sparse(&tr_hat, tr)?,
        ));
    }
    let (td_d, tr_d) = (td.to_dense(), tr.to_dense());
    let mut d = 0.0;
    let mut r = 0.0;
    for ((v, c, t), &x) in td_d.indexed_iter() {
        let y = tr_d[[v, c, t]];
        if scope.includes(v, c, t, x != 0.0 || y != 0.0) {
            d += (td_hat[[v, c, t]] - x).powi(2);
            r += (tr_hat[[v, c, t]] - y).powi(2);
        }
    }
    Ok((d, r))
}

/// Squared error between the signed relations and the Gram matrix of the
/// channel embeddings, diagonal included.
pub fn loss_ser(channel: &Array2<f64>, relations: &SignedStreamerMatrix) -> Result<f64> {
    if relations.n_channels() != channel.nrows() {
        return dim_err(format!(
            "relation matrix covers {} channels, factor has {}",
            relations.n_channels(),
            channel.nrows()
        ));
    }
    let gram = channel.dot(&channel.t());
    Ok((relations.as_matrix() - &gram).iter().map(|x| x * x).sum())
}

/// Decayed donation history `sum_{k=1..L} e^{-d k} td(u, c, t - k)` and its
/// derivative companion `sum_k k e^{-d k} td(u, c, t - k)`.
pub(crate) fn decayed_history(td: &EventTensor, decay: f64, window: usize) -> (Dense3, Dense3) {
    let dims = td.dims();
    let mut hist = Dense3::zeros(dims.shape());
    let mut weighted = Dense3::zeros(dims.shape());
    let kernel: Vec<f64> = (1..=window).map(|k| (-decay * k as f64).exp()).collect();
    for ((u, c, s), x) in td.iter() {
        for (i, &w) in kernel.iter().enumerate() {
            let t = s + i + 1;
            if t >= dims.n_slots {
                break;
            }
            hist[[u, c, t]] += w * x;
            weighted[[u, c, t]] += (i + 1) as f64 * w * x;
        }
    }
    (hist, weighted)
}

/// Influence-weighted, decayed sum of other viewers' recent donations to `c`
/// before slot `t`.
pub fn star_estimate(
    m: &SensorModel,
    td: &EventTensor,
    v: usize,
    c: usize,
    t: usize,
    window: usize,
) -> Result<f64> {
    let dims = td.dims();
    dims.check((v, c, t))?;
    if m.influence.nrows() != dims.n_viewers {
        return dim_err("influence matrix does not match the viewer count");
    }
    let mut acc = 0.0;
    for u in (0..dims.n_viewers).filter(|&u| u != v) {
        for k in 1..=window.min(t) {
            let x = td.get((u, c, t - k));
            if x != 0.0 {
                acc += (-m.decay * k as f64).exp() * m.influence[[u, v]] * x;
            }
        }
    }
    Ok(acc)
}

/// Dense tensor of [`star_estimate`] over every cell.
pub(crate) fn star_estimates(influence: &Array2<f64>, hist: &Dense3) -> Dense3 {
    let (n, nc, nt) = hist.dim();
    let flat = hist
        .view()
        .into_shape_with_order((n, nc * nt))
        .expect("standard layout");
    let mut off_diag = influence.clone();
    for i in 0..n {
        off_diag[[i, i]] = 0.0;
    }
    row_major(off_diag.t().dot(&flat))
        .into_shape_with_order((n, nc, nt))
        .expect("contiguous")
}

pub fn loss_star(m: &SensorModel, td: &EventTensor, window: usize) -> Result<f64> {
    check_dims(m, td)?;
    let td_hat = m.factors.reconstruct_donation()?;
    let (hist, _) = decayed_history(td, m.decay, window);
    let est = star_estimates(&m.influence, &hist);
    Ok((&td_hat - &est).iter().map(|x| x * x).sum())
}

/// Donation amounts of one channel, grouped by slot.
struct ChannelActivity {
    by_slot: Vec<Vec<Vec<f64>>>,
}

impl ChannelActivity {
    fn new(td: &EventTensor) -> Self {
        let dims = td.dims();
        let mut by_slot = vec![vec![Vec::new(); dims.n_slots]; dims.n_channels];
        for ((_, c, t), x) in td.iter() {
            by_slot[c][t].push(x);
        }
        ChannelActivity { by_slot }
    }

    fn window(&self, c: usize, t: usize, window: usize) -> impl Iterator<Item = f64> + '_ {
        let slots = &self.by_slot[c];
        let hi = (t + 1).min(slots.len());
        let lo = t.saturating_sub(window).min(hi);
        slots[lo..hi].iter().flatten().copied()
    }

    fn entropy(&self, c: usize, t: usize, window: usize) -> f64 {
        let z: f64 = self.window(c, t, window).sum();
        if z <= 0.0 {
            return 0.0;
        }
        -self
            .window(c, t, window)
            .filter(|&x| x > 0.0)
            .map(|x| {
                let p = x / z;
                p * p.ln()
            })
            .sum::<f64>()
    }

    fn trend(&self, c: usize, t: usize, window: usize) -> f64 {
        let now: f64 = self.by_slot[c].get(t).map_or(0.0, |s| s.iter().sum());
        let total: f64 = self.window(c, t, window).sum();
        now - total / (window + 1) as f64
    }
}

fn check_channel_slot(td: &EventTensor, c: usize, t: usize) -> Result<()> {
    let dims = td.dims();
    if c >= dims.n_channels || t >= dims.n_slots {
        return Err(MarsError::IndexOutOfRange(format!(
            "channel {c} / slot {t}"
        )));
    }
    Ok(())
}

/// Entropy of the joint (viewer, slot) donation distribution of channel `c`
/// over slots `[max(0, t-L), t]`; zero when nothing was donated.
pub fn donation_entropy(td: &EventTensor, c: usize, t: usize, window: usize) -> Result<f64> {
    check_channel_slot(td, c, t)?;
    Ok(ChannelActivity::new(td).entropy(c, t, window))
}

/// Channel total at `t` minus the mean per-slot total over `[max(0, t-L), t]`
/// (the mean always divides by `L + 1`).
pub fn burst_trend(td: &EventTensor, c: usize, t: usize, window: usize) -> Result<f64> {
    check_channel_slot(td, c, t)?;
    Ok(ChannelActivity::new(td).trend(c, t, window))
}

/// Burst weight `trend * entropy` for every (channel, slot).
pub fn burst_weights(td: &EventTensor, window: usize) -> Array2<f64> {
    let dims = td.dims();
    let act = ChannelActivity::new(td);
    Array2::from_shape_fn((dims.n_channels, dims.n_slots), |(c, t)| {
        act.trend(c, t, window) * act.entropy(c, t, window)
    })
}

/// Coefficient of each response cell `(., c, t')` in the suppression term:
/// the burst weights of every slot `t` whose window contains `t'`.
pub(crate) fn riot_coefficients(td: &EventTensor, window: usize) -> Array2<f64> {
    let kappa = burst_weights(td, window);
    let (nc, nt) = kappa.dim();
    Array2::from_shape_fn((nc, nt), |(c, tp)| {
        (tp..(tp + window + 1).min(nt)).map(|t| kappa[[c, t]]).sum()
    })
}

/// Burst response suppression term. The burst weights are constants with
/// respect to the model.
pub fn loss_riot(m: &SensorModel, td: &EventTensor, window: usize) -> Result<f64> {
    check_dims(m, td)?;
    let tr_hat = m.factors.reconstruct_response()?;
    let kappa = burst_weights(td, window);
    let (nc, nt) = kappa.dim();
    let mut acc = 0.0;
    for c in 0..nc {
        for t in 0..nt {
            if kappa[[c, t]] == 0.0 {
                continue;
            }
            let lo = t.saturating_sub(window);
            let block: f64 = tr_hat.slice(ndarray::s![.., c, lo..=t]).sum();
            acc += kappa[[c, t]] * block;
        }
    }
    Ok(acc)
}

/// Squared error between the reconstructed response of each observed
/// donation and its regression estimate.
pub fn loss_d2r(m: &SensorModel, samples: &[D2rSample]) -> Result<f64> {
    let tr_hat = m.factors.reconstruct_response()?;
    let schema = m.schema();
    let s_width = schema.static_width();
    if m.theta.len() != schema.width(m.alpha()) {
        return dim_err("theta width does not match the feature schema");
    }
    let theta_static = m.theta.slice(ndarray::s![..s_width]);
    let theta_inter = m.theta.slice(ndarray::s![s_width..]);
    let mut acc = 0.0;
    for s in samples {
        if s.static_x.len() != s_width {
            return dim_err("sample feature width does not match the schema");
        }
        let inter: Array1<f64> =
            &m.factors.viewer.row(s.viewer) * &m.factors.channel.row(s.channel);
        let pred = theta_static.dot(&Array1::from(s.static_x.clone())) + theta_inter.dot(&inter);
        let e = tr_hat[[s.viewer, s.channel, s.slot]] - pred;
        acc += e * e;
    }
    Ok(acc)
}

/// Every term of the objective and their weighted total.
pub fn total_loss(m: &SensorModel, data: &SensorData, cfg: &SensorConfig) -> Result<LossBreakdown> {
    data.validate()?;
    let samples = data.samples(cfg.window)?;
    total_loss_with_samples(m, data, &samples, cfg)
}

pub(crate) fn total_loss_with_samples(
    m: &SensorModel,
    data: &SensorData,
    samples: &[D2rSample],
    cfg: &SensorConfig,
) -> Result<LossBreakdown> {
    let (donation_recon, response_recon) =
        reconstruction_terms(m, &data.donations, &data.responses, cfg.recon)?;
    Ok(LossBreakdown {
        donation_recon,
        response_recon,
        d2r: loss_d2r(m, samples)?,
        ser: loss_ser(&m.factors.channel, &data.relations)?,
        star: loss_star(m, &data.donations, cfg.window)?,
        riot: loss_riot(m, &data.donations, cfg.window)?,
        total: 0.0,
    }
    .combine(cfg))
}
