//! Fused evaluation of the SENSOR objective and its analytic gradient.
//!
//! Work is split by viewer: every term except the streamer relation term
//! decomposes over the viewer slices `(v, :, :)` of the reconstructions.
//! Viewers are processed in fixed-size chunks; chunk results are folded in
//! chunk order, so the result does not depend on the execution strategy.

use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, Axis, Zip};

use crate::d2r::D2rSample;
use crate::error::{dim_err, MarsError, Result};
use crate::par::map_range;
use crate::sensor::config::{ReconScope, SensorConfig};
use crate::sensor::loss::{decayed_history, riot_coefficients, LossBreakdown};
use crate::sensor::model::{SensorData, SensorGrad, SensorModel};
use crate::tensor::{row_major, Dense3, Dims, EventTensor};

const CHUNK: usize = 8;

/// Model-independent inputs of the objective, computed once per training run.
#[derive(Debug, Clone)]
pub struct Prepared {
    dims: Dims,
    donations: EventTensor,
    td: Dense3,
    tr: Dense3,
    /// 1.0 where a cell enters the reconstruction terms; `None` means all.
    mask: Option<Dense3>,
    /// Suppression coefficient of each response cell, `n_channels x n_slots`.
    riot: Array2<f64>,
    relations: Array2<f64>,
    samples_by_viewer: Vec<Vec<D2rSample>>,
    window: usize,
}

impl Prepared {
    pub fn new(data: &SensorData, cfg: &SensorConfig) -> Result<Self> {
        data.validate()?;
        let samples = data.samples(cfg.window)?;
        Prepared::with_samples(data, samples, cfg)
    }

    pub(crate) fn with_samples(
        data: &SensorData,
        samples: Vec<D2rSample>,
        cfg: &SensorConfig,
    ) -> Result<Self> {
        let dims = data.dims();
        let td = data.donations.to_dense();
        let tr = data.responses.to_dense();
        let mask = match cfg.recon {
            ReconScope::All => None,
            scope => {
                let mut mask = Dense3::zeros(dims.shape());
                Zip::indexed(&mut mask)
                    .and(&td)
                    .and(&tr)
                    .for_each(|(v, c, t), m, &x, &y| {
                        if scope.includes(v, c, t, x != 0.0 || y != 0.0) {
                            *m = 1.0;
                        }
                    });
                Some(mask)
            }
        };
        let mut samples_by_viewer = vec![Vec::new(); dims.n_viewers];
        for s in samples {
            samples_by_viewer[s.viewer].push(s);
        }
        Ok(Prepared {
            dims,
            donations: data.donations.clone(),
            td,
            tr,
            mask,
            riot: riot_coefficients(&data.donations, cfg.window),
            relations: data.relations.as_matrix().clone(),
            samples_by_viewer,
            window: cfg.window,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }
}

/// Partial sums of one chunk of viewers.
struct ChunkOut {
    loss: LossBreakdown,
    /// Gradient rows of the chunk's viewers, in order.
    viewer_rows: Vec<Array1<f64>>,
    /// Influence gradient columns `(., v)` of the chunk's viewers.
    influence_cols: Vec<Array1<f64>>,
    channel: Array2<f64>,
    slot: Array2<f64>,
    core_donation: Array3<f64>,
    core_response: Array3<f64>,
    decay: f64,
    theta: Array1<f64>,
}

/// Per-epoch quantities shared by every viewer.
struct Shared<'a> {
    m: &'a SensorModel,
    prep: &'a Prepared,
    cfg: &'a SensorConfig,
    hist: Array2<f64>,
    hist_weighted: Array2<f64>,
    core_d: ArrayView2<'a, f64>,
    core_r: ArrayView2<'a, f64>,
}

/// Total objective and its gradient with respect to every learnable.
/// A non-finite objective is an error.
pub fn loss_and_grad(
    m: &SensorModel,
    prep: &Prepared,
    cfg: &SensorConfig,
) -> Result<(LossBreakdown, SensorGrad)> {
    let (loss, grad) = evaluate(m, prep, cfg)?;
    if !loss.total.is_finite() {
        return Err(MarsError::InvalidInput(format!(
            "objective is not finite ({})",
            loss.total
        )));
    }
    Ok((loss, grad))
}

/// Like [`loss_and_grad`] but leaves the finiteness check to the caller.
pub(crate) fn evaluate(
    m: &SensorModel,
    prep: &Prepared,
    cfg: &SensorConfig,
) -> Result<(LossBreakdown, SensorGrad)> {
    if m.dims() != prep.dims {
        return dim_err(format!(
            "model is {:?}, data is {:?}",
            m.dims().shape(),
            prep.dims.shape()
        ));
    }
    let a = m.alpha();
    if m.theta.len() != m.schema().width(a) {
        return dim_err("theta width does not match the feature schema");
    }
    let (nv, nc, nt) = prep.dims.shape();
    let (hist, weighted) = decayed_history(&prep.donations, m.decay, prep.window);
    let shared = Shared {
        m,
        prep,
        cfg,
        hist: hist
            .into_shape_with_order((nv, nc * nt))
            .expect("contiguous"),
        hist_weighted: weighted
            .into_shape_with_order((nv, nc * nt))
            .expect("contiguous"),
        core_d: m
            .factors
            .core_donation
            .view()
            .into_shape_with_order((a, a * a))
            .expect("contiguous"),
        core_r: m
            .factors
            .core_response
            .view()
            .into_shape_with_order((a, a * a))
            .expect("contiguous"),
    };

    let n_chunks = nv.div_ceil(CHUNK);
    let chunks = map_range(cfg.exec, n_chunks, |k| {
        let lo = k * CHUNK;
        let hi = (lo + CHUNK).min(nv);
        chunk(&shared, lo..hi)
    });

    let mut grad = SensorGrad::zeros_like(m);
    let mut loss = LossBreakdown::default();
    let mut v = 0;
    for ch in chunks {
        loss.donation_recon += ch.loss.donation_recon;
        loss.response_recon += ch.loss.response_recon;
        loss.d2r += ch.loss.d2r;
        loss.star += ch.loss.star;
        loss.riot += ch.loss.riot;
        for (row, col) in ch.viewer_rows.iter().zip(&ch.influence_cols) {
            grad.viewer.row_mut(v).assign(row);
            grad.influence.column_mut(v).assign(col);
            v += 1;
        }
        grad.channel += &ch.channel;
        grad.slot += &ch.slot;
        grad.core_donation += &ch.core_donation;
        grad.core_response += &ch.core_response;
        grad.decay += ch.decay;
        grad.theta += &ch.theta;
    }

    // streamer relations: R = W - C C^T, d||R||^2/dC = -2 (R + R^T) C
    let c = &m.factors.channel;
    let resid = &prep.relations - &c.dot(&c.t());
    loss.ser = resid.iter().map(|x| x * x).sum();
    if cfg.lambda_ser != 0.0 {
        let sym = &resid + &resid.t();
        grad.channel.scaled_add(-2.0 * cfg.lambda_ser, &sym.dot(c));
    }

    Ok((loss.combine(cfg), grad))
}

fn chunk(sh: &Shared<'_>, rows: std::ops::Range<usize>) -> ChunkOut {
    let m = sh.m;
    let a = m.alpha();
    let (nv, nc, nt) = sh.prep.dims.shape();
    let mut out = ChunkOut {
        loss: LossBreakdown::default(),
        viewer_rows: Vec::with_capacity(rows.len()),
        influence_cols: Vec::with_capacity(rows.len()),
        channel: Array2::zeros((nc, a)),
        slot: Array2::zeros((nt, a)),
        core_donation: Array3::zeros((a, a, a)),
        core_response: Array3::zeros((a, a, a)),
        decay: 0.0,
        theta: Array1::zeros(m.theta.len()),
    };
    for v in rows {
        let (row, col) = viewer(sh, v, &mut out);
        debug_assert_eq!(col.len(), nv);
        out.viewer_rows.push(row);
        out.influence_cols.push(col);
    }
    out
}

/// Accumulates viewer `v`'s contribution; returns its viewer-factor gradient
/// row and its influence gradient column.
fn viewer(sh: &Shared<'_>, v: usize, out: &mut ChunkOut) -> (Array1<f64>, Array1<f64>) {
    let m = sh.m;
    let cfg = sh.cfg;
    let prep = sh.prep;
    let f = &m.factors;
    let a = m.alpha();
    let (nv, nc, nt) = prep.dims.shape();
    let vrow = f.viewer.row(v);

    // K_X(b, e) = sum_a V(v, a) O_X(a, b, e); slice of X-hat is C K_X T^T
    let k_d = vrow
        .dot(&sh.core_d)
        .into_shape_with_order((a, a))
        .expect("contiguous");
    let k_r = vrow
        .dot(&sh.core_r)
        .into_shape_with_order((a, a))
        .expect("contiguous");
    let ck_d = f.channel.dot(&k_d);
    let ck_r = f.channel.dot(&k_r);
    let td_hat = ck_d.dot(&f.slot.t());
    let tr_hat = ck_r.dot(&f.slot.t());

    let td = prep.td.index_axis(Axis(0), v);
    let tr = prep.tr.index_axis(Axis(0), v);
    let w = cfg.weights;

    // reconstruction
    let mut g_d = &td_hat - &td;
    let mut g_r = &tr_hat - &tr;
    if let Some(mask) = &prep.mask {
        let mv = mask.index_axis(Axis(0), v);
        g_d *= &mv;
        g_r *= &mv;
    }
    out.loss.donation_recon += g_d.iter().map(|x| x * x).sum::<f64>();
    out.loss.response_recon += g_r.iter().map(|x| x * x).sum::<f64>();
    g_d *= 2.0 * w.donation_recon;
    g_r *= 2.0 * w.response_recon;

    // socio-temporal autoregression
    let mut wcol = m.influence.column(v).to_owned();
    wcol[v] = 0.0;
    let est = sh
        .hist
        .t()
        .dot(&wcol)
        .into_shape_with_order((nc, nt))
        .expect("contiguous");
    let diff = &td_hat - &est;
    out.loss.star += diff.iter().map(|x| x * x).sum::<f64>();
    let mut influence_col = Array1::zeros(nv);
    if cfg.lambda_star != 0.0 {
        let l2 = cfg.lambda_star;
        g_d.scaled_add(2.0 * l2, &diff);
        let dflat = diff
            .view()
            .into_shape_with_order(nc * nt)
            .expect("contiguous");
        influence_col = sh.hist.dot(&dflat) * (-2.0 * l2);
        influence_col[v] = 0.0;
        let dweighted = sh.hist_weighted.t().dot(&wcol);
        out.decay += 2.0 * l2 * dflat.dot(&dweighted);
    }

    // burst suppression (linear in the response reconstruction)
    out.loss.riot += (&prep.riot * &tr_hat).sum();
    if cfg.lambda_riot != 0.0 {
        g_r.scaled_add(cfg.lambda_riot, &prep.riot);
    }

    // donation-to-response regression
    let mut viewer_grad = Array1::zeros(a);
    let s_width = m.schema().static_width();
    let theta_static = m.theta.slice(s![..s_width]);
    let theta_inter = m.theta.slice(s![s_width..]);
    for smp in &prep.samples_by_viewer[v] {
        let crow = f.channel.row(smp.channel);
        let inter = &vrow * &crow;
        let xs = ArrayView1::from(&smp.static_x[..]);
        let pred = xs.dot(&theta_static) + inter.dot(&theta_inter);
        let e = tr_hat[[smp.channel, smp.slot]] - pred;
        out.loss.d2r += e * e;
        let ge = 2.0 * w.d2r * e;
        if ge == 0.0 {
            continue;
        }
        g_r[[smp.channel, smp.slot]] += ge;
        out.theta.slice_mut(s![..s_width]).scaled_add(-ge, &xs);
        out.theta.slice_mut(s![s_width..]).scaled_add(-ge, &inter);
        viewer_grad.scaled_add(-ge, &(&theta_inter * &crow));
        out.channel
            .row_mut(smp.channel)
            .scaled_add(-ge, &(&theta_inter * &vrow));
    }

    // back through the two Tucker reconstructions
    for (g, k, ck, core, gcore) in [
        (&g_d, &k_d, &ck_d, &sh.core_d, &mut out.core_donation),
        (&g_r, &k_r, &ck_r, &sh.core_r, &mut out.core_response),
    ] {
        let gt = g.dot(&f.slot); // nc x a
        let mmat = row_major(f.channel.t().dot(&gt)); // a x a, M(b, e)
        let mflat = mmat
            .view()
            .into_shape_with_order(a * a)
            .expect("contiguous");
        viewer_grad += &core.dot(&mflat);
        let mut gc = gcore
            .view_mut()
            .into_shape_with_order((a, a * a))
            .expect("contiguous");
        for (i, &x) in vrow.iter().enumerate() {
            gc.row_mut(i).scaled_add(x, &mflat);
        }
        let q = f.slot.dot(&k.t()); // nt x a
        out.channel += &g.dot(&q);
        out.slot += &g.t().dot(ck);
    }

    (viewer_grad, influence_col)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::d2r::FeatureSchema;
    use crate::graph::{SignedStreamerMatrix, ViewerGraph};
    use crate::par::Exec;
    use crate::sensor::loss::total_loss;

    fn empty_data(dims: Dims) -> SensorData {
        SensorData {
            donations: EventTensor::new(dims),
            responses: EventTensor::new(dims),
            graph: ViewerGraph::new(dims.n_viewers),
            relations: SignedStreamerMatrix::zeros(dims.n_channels),
            events: vec![],
            schema: FeatureSchema { emb_width: 2 },
        }
    }

    #[test]
    fn zero_model_on_empty_data_is_stationary() {
        let dims = Dims::new(3, 2, 4);
        let data = empty_data(dims);
        let cfg = SensorConfig {
            alpha: 2,
            init_scale: 0.0,
            ..Default::default()
        };
        let m = SensorModel::init(dims, &data.graph, data.schema, &cfg).unwrap();
        let prep = Prepared::new(&data, &cfg).unwrap();
        let (loss, g) = loss_and_grad(&m, &prep, &cfg).unwrap();
        assert_eq!(loss.total, 0.0);
        assert!(g.to_flat().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn fused_loss_matches_component_functions() {
        let dims = Dims::new(5, 3, 6);
        let mut data = empty_data(dims);
        for (i, cell) in [(0, 1, 2), (1, 1, 3), (4, 0, 5), (2, 2, 0), (3, 1, 1)]
            .into_iter()
            .enumerate()
        {
            data.donations.set(cell, 1.0 + i as f64).unwrap();
            data.responses.set(cell, 0.5 * i as f64 + 0.25).unwrap();
        }
        data.relations.set_symmetric(0, 2, -1).unwrap();
        data.graph.add_edge(0, 3).unwrap();
        let cfg = SensorConfig {
            alpha: 2,
            window: 2,
            seed: 4,
            init_scale: 0.5,
            ..Default::default()
        };
        let mut m = SensorModel::init(dims, &data.graph, data.schema, &cfg).unwrap();
        m.theta
            .iter_mut()
            .enumerate()
            .for_each(|(i, x)| *x = 0.01 * i as f64);
        let prep = Prepared::new(&data, &cfg).unwrap();
        let (fused, _) = loss_and_grad(&m, &prep, &cfg).unwrap();
        let direct = total_loss(&m, &data, &cfg).unwrap();
        let rel = (fused.total - direct.total).abs() / direct.total.abs();
        assert!(rel < 1e-12, "fused {fused:?} direct {direct:?}");
    }

    #[test]
    fn exec_modes_are_bit_identical() {
        let dims = Dims::new(19, 3, 5);
        let mut data = empty_data(dims);
        data.donations.set((3, 1, 2), 2.0).unwrap();
        data.donations.set((11, 1, 3), 1.0).unwrap();
        data.responses.set((3, 1, 2), 1.0).unwrap();
        let base = SensorConfig {
            alpha: 3,
            window: 2,
            seed: 2,
            ..Default::default()
        };
        let m = SensorModel::init(dims, &data.graph, data.schema, &base).unwrap();
        let seq = SensorConfig {
            exec: Exec::Sequential,
            ..base.clone()
        };
        let par = SensorConfig {
            exec: Exec::Parallel,
            ..base
        };
        let (l1, g1) = loss_and_grad(&m, &Prepared::new(&data, &seq).unwrap(), &seq).unwrap();
        let (l2, g2) = loss_and_grad(&m, &Prepared::new(&data, &par).unwrap(), &par).unwrap();
        assert_eq!(l1.total.to_bits(), l2.total.to_bits());
        assert_eq!(g1, g2);
    }

    #[test]
    fn ser_gradient_is_linear_in_lambda() {
        let dims = Dims::new(2, 3, 2);
        let mut data = empty_data(dims);
        data.relations.set_symmetric(0, 1, 1).unwrap();
        let one = SensorConfig {
            alpha: 2,
            seed: 8,
            lambda_ser: 0.5,
            lambda_star: 0.0,
            lambda_riot: 0.0,
            ..Default::default()
        };
        let two = SensorConfig {
            lambda_ser: 1.0,
            ..one.clone()
        };
        let zero = SensorConfig {
            lambda_ser: 0.0,
            ..one.clone()
        };
        let m = SensorModel::init(dims, &data.graph, data.schema, &one).unwrap();
        let g = |cfg: &SensorConfig| {
            loss_and_grad(&m, &Prepared::new(&data, cfg).unwrap(), cfg)
                .unwrap()
                .1
                .channel
        };
        let base = g(&zero);
        let d1 = &g(&one) - &base;
        let d2 = &g(&two) - &base;
        for (x, y) in d1.iter().zip(d2.iter()) {
            assert!((2.0 * x - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
    }
}
