//! Donation-to-response estimation: the eight-group feature vector, the
//! linear response estimate and the donation target ranking.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, MarsError, Result};
use crate::sensor::SensorModel;
use crate::tensor::{Cell, EventTensor};

/// Width of the streamer speech emotion vector (feature group 4).
pub const EMOTION_WIDTH: usize = 4;

/// Widths of the externally supplied message features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub emb_width: usize,
}

impl Default for FeatureSchema {
    fn default() -> Self {
        FeatureSchema { emb_width: 16 }
    }
}

impl FeatureSchema {
    /// Width of groups 1-7, which do not depend on the latent factors.
    pub fn static_width(&self) -> usize {
        1 + self.emb_width + 1 + EMOTION_WIDTH + 1 + 1 + 1
    }

    /// Full feature width for latent dimension `alpha`.
    pub fn width(&self, alpha: usize) -> usize {
        self.static_width() + alpha
    }
}

/// Precomputed message and speech features for one donation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageFeatures {
    pub embedding: Vec<f64>,
    pub sentiment: f64,
    pub emotion: Vec<f64>,
}

impl MessageFeatures {
    /// All-zero features, used when no NLP provider is available.
    pub fn zeros(schema: FeatureSchema) -> Self {
        MessageFeatures {
            embedding: vec![0.0; schema.emb_width],
            sentiment: 0.0,
            emotion: vec![0.0; EMOTION_WIDTH],
        }
    }

    pub fn validate(&self, schema: FeatureSchema) -> Result<()> {
        if self.embedding.len() != schema.emb_width {
            return dim_err(format!(
                "message embedding has width {}, schema expects {}",
                self.embedding.len(),
                schema.emb_width
            ));
        }
        if self.emotion.len() != EMOTION_WIDTH {
            return dim_err(format!("emotion vector must have width {EMOTION_WIDTH}"));
        }
        let finite = self
            .embedding
            .iter()
            .chain(&self.emotion)
            .all(|x| x.is_finite());
        if !finite || !(-1.0..=1.0).contains(&self.sentiment) {
            return Err(MarsError::InvalidInput(
                "message features must be finite with sentiment in [-1, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// One observed donation together with its message features.
#[derive(Debug, Clone, PartialEq)]
pub struct DonationEvent {
    pub viewer: usize,
    pub channel: usize,
    pub slot: usize,
    pub amount: f64,
    pub message: MessageFeatures,
    /// Minimum amount currently shown on the channel's top fan list.
    pub fanlist_min: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Array1<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn view(&self) -> ArrayView1<'_, f64> {
        self.0.view()
    }
}

/// Prefix sums over a donation tensor for the two history feature groups.
#[derive(Debug, Clone)]
pub struct DonationHistory {
    n_slots: usize,
    /// Per (viewer, channel): slots and inclusive running totals.
    pair_running: BTreeMap<(usize, usize), Vec<(usize, f64)>>,
    /// `n_channels x (n_slots + 1)` prefix sums of per-slot channel totals.
    channel_prefix: Array2<f64>,
    td_cells: BTreeMap<Cell, f64>,
}

impl DonationHistory {
    pub fn new(td: &EventTensor) -> Self {
        let dims = td.dims();
        let mut pair_running: BTreeMap<(usize, usize), Vec<(usize, f64)>> = BTreeMap::new();
        let mut per_slot = Array2::<f64>::zeros((dims.n_channels, dims.n_slots));
        let mut td_cells = BTreeMap::new();
        // BTreeMap order is (v, c, t) so slots arrive sorted per pair.
        for ((v, c, t), x) in td.iter() {
            let run = pair_running.entry((v, c)).or_default();
            let prev = run.last().map_or(0.0, |&(_, s)| s);
            run.push((t, prev + x));
            per_slot[[c, t]] += x;
            td_cells.insert((v, c, t), x);
        }
        let mut channel_prefix = Array2::zeros((dims.n_channels, dims.n_slots + 1));
        for c in 0..dims.n_channels {
            for t in 0..dims.n_slots {
                channel_prefix[[c, t + 1]] = channel_prefix[[c, t]] + per_slot[[c, t]];
            }
        }
        DonationHistory {
            n_slots: dims.n_slots,
            pair_running,
            channel_prefix,
            td_cells,
        }
    }

    /// Total donated by `v` to `c` in slots strictly before `t`.
    pub fn viewer_channel_before(&self, v: usize, c: usize, t: usize) -> f64 {
        match self.pair_running.get(&(v, c)) {
            None => 0.0,
            Some(run) => {
                let idx = run.partition_point(|&(s, _)| s < t);
                if idx == 0 {
                    0.0
                } else {
                    run[idx - 1].1
                }
            }
        }
    }

    /// Total donated to `c` by all viewers over slots `[max(0, t-L), t]`.
    pub fn channel_window(&self, c: usize, t: usize, window: usize) -> f64 {
        let lo = t.saturating_sub(window).min(self.n_slots);
        let hi = (t + 1).min(self.n_slots);
        if hi <= lo {
            return 0.0;
        }
        self.channel_prefix[[c, hi]] - self.channel_prefix[[c, lo]]
    }

    pub fn cell(&self, cell: Cell) -> f64 {
        self.td_cells.get(&cell).copied().unwrap_or(0.0)
    }
}

/// Groups 1-7 of the feature vector. The scored donation itself is excluded
/// from the history groups 5 and 6.
#[allow(clippy::too_many_arguments)]
pub(crate) fn static_features(
    history: &DonationHistory,
    schema: FeatureSchema,
    (v, c, t): Cell,
    amount: f64,
    msg: &MessageFeatures,
    fanlist_min: f64,
    window: usize,
) -> Vec<f64> {
    let mut x = Vec::with_capacity(schema.static_width());
    x.push(amount);
    x.extend_from_slice(&msg.embedding);
    x.push(msg.sentiment);
    x.extend_from_slice(&msg.emotion);
    x.push(history.viewer_channel_before(v, c, t));
    x.push(history.channel_window(c, t, window) - history.cell((v, c, t)));
    x.push(fanlist_min);
    x
}

fn check_model_inputs(m: &SensorModel, td: &EventTensor, v: usize, c: usize) -> Result<()> {
    let dims = m.factors.dims();
    if v >= dims.n_viewers || c >= dims.n_channels {
        return Err(MarsError::IndexOutOfRange(format!(
            "viewer {v} / channel {c} outside model with {} viewers and {} channels",
            dims.n_viewers, dims.n_channels
        )));
    }
    let td_dims = td.dims();
    if td_dims.n_viewers != dims.n_viewers || td_dims.n_channels != dims.n_channels {
        return dim_err("donation history does not match the model's viewer/channel dimensions");
    }
    Ok(())
}

fn check_amount(amount: f64) -> Result<()> {
    if !(amount.is_finite() && amount > 0.0) {
        return Err(MarsError::InvalidInput(format!(
            "donation amount must be positive, got {amount}"
        )));
    }
    Ok(())
}

fn assemble(m: &SensorModel, v: usize, c: usize, mut x: Vec<f64>) -> FeatureVector {
    let vrow = m.factors.viewer.row(v);
    let crow = m.factors.channel.row(c);
    x.extend(vrow.iter().zip(crow.iter()).map(|(a, b)| a * b));
    FeatureVector(Array1::from(x))
}

/// Builds the feature vector of a prospective donation of `amount` from `v`
/// to `c` at slot `t`. `t` may lie past the end of `td` (a future slot).
#[allow(clippy::too_many_arguments)]
pub fn build_features(
    m: &SensorModel,
    td: &EventTensor,
    v: usize,
    c: usize,
    t: usize,
    amount: f64,
    msg: &MessageFeatures,
    fanlist_min: f64,
    window: usize,
) -> Result<FeatureVector> {
    check_amount(amount)?;
    check_model_inputs(m, td, v, c)?;
    msg.validate(m.schema())?;
    let history = DonationHistory::new(td);
    let x = static_features(
        &history,
        m.schema(),
        (v, c, t),
        amount,
        msg,
        fanlist_min,
        window,
    );
    Ok(assemble(m, v, c, x))
}

/// `theta . x`
pub fn estimate_response(theta: &Array1<f64>, x: &FeatureVector) -> Result<f64> {
    if theta.len() != x.len() {
        return dim_err(format!(
            "theta has width {}, features have {}",
            theta.len(),
            x.len()
        ));
    }
    Ok(theta.dot(&x.0))
}

/// A training sample for the regression term: one observed donation cell and
/// its factor-independent feature groups.
#[derive(Debug, Clone, PartialEq)]
pub struct D2rSample {
    pub viewer: usize,
    pub channel: usize,
    pub slot: usize,
    pub static_x: Vec<f64>,
}

/// One sample per nonzero donation cell. Cells without a matching event get
/// zero message features and a zero fan-list minimum.
pub fn training_samples(
    td: &EventTensor,
    events: &[DonationEvent],
    schema: FeatureSchema,
    window: usize,
) -> Result<Vec<D2rSample>> {
    let dims = td.dims();
    let mut by_cell: BTreeMap<Cell, &DonationEvent> = BTreeMap::new();
    for e in events {
        dims.check((e.viewer, e.channel, e.slot))?;
        e.message.validate(schema)?;
        by_cell.insert((e.viewer, e.channel, e.slot), e);
    }
    let history = DonationHistory::new(td);
    let zeros = MessageFeatures::zeros(schema);
    Ok(td
        .iter()
        .map(|(cell, amount)| {
            let (msg, fan) = by_cell
                .get(&cell)
                .map_or((&zeros, 0.0), |e| (&e.message, e.fanlist_min));
            D2rSample {
                viewer: cell.0,
                channel: cell.1,
                slot: cell.2,
                static_x: static_features(&history, schema, cell, amount, msg, fan, window),
            }
        })
        .collect())
}

/// Ranks candidate channels for a donation by estimated response, highest
/// first. Ties keep ascending channel order.
#[allow(clippy::too_many_arguments)]
pub fn recommend_donation(
    m: &SensorModel,
    td: &EventTensor,
    v: usize,
    candidates: &[usize],
    amount: f64,
    messages: &[MessageFeatures],
    t: usize,
    fanlist_mins: &[f64],
) -> Result<Vec<(usize, f64)>> {
    if candidates.is_empty() {
        return Err(MarsError::InvalidInput("no candidate channels".into()));
    }
    if messages.len() != candidates.len() || fanlist_mins.len() != candidates.len() {
        return dim_err("need one message and one fan-list minimum per candidate");
    }
    check_amount(amount)?;
    let history = DonationHistory::new(td);
    let mut scored = Vec::with_capacity(candidates.len());
    for ((&c, msg), &fan) in candidates.iter().zip(messages).zip(fanlist_mins) {
        check_model_inputs(m, td, v, c)?;
        msg.validate(m.schema())?;
        let x = static_features(&history, m.schema(), (v, c, t), amount, msg, fan, m.window);
        let x = assemble(m, v, c, x);
        scored.push((c, estimate_response(&m.theta, &x)?));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Dims, FactorSet};

    fn model(dims: Dims, alpha: usize, emb: usize) -> SensorModel {
        let schema = FeatureSchema { emb_width: emb };
        SensorModel {
            factors: FactorSet::zeros(dims, alpha),
            influence: Array2::zeros((dims.n_viewers, dims.n_viewers)),
            decay: 0.1,
            theta: Array1::zeros(schema.width(alpha)),
            epsilon: 0.02,
            window: 2,
            emb_width: emb,
        }
    }

    #[test]
    fn empty_history_gives_zero_history_groups() {
        let dims = Dims::new(2, 2, 4);
        let m = model(dims, 2, 3);
        let td = EventTensor::new(dims);
        let msg = MessageFeatures::zeros(m.schema());
        let x = build_features(&m, &td, 0, 1, 2, 5.0, &msg, 1.5, 2).unwrap();
        assert_eq!(x.len(), m.schema().width(2));
        assert_eq!(x.0[0], 5.0);
        let s = m.schema().static_width();
        assert_eq!(x.0[s - 3], 0.0);
        assert_eq!(x.0[s - 2], 0.0);
        assert_eq!(x.0[s - 1], 1.5);
    }

    #[test]
    fn interaction_group_is_elementwise_product() {
        let dims = Dims::new(2, 2, 4);
        let mut m = model(dims, 3, 1);
        m.factors.viewer.fill(1.0);
        m.factors.channel.fill(1.0);
        let td = EventTensor::new(dims);
        let x = build_features(
            &m,
            &td,
            1,
            0,
            0,
            1.0,
            &MessageFeatures::zeros(m.schema()),
            0.0,
            2,
        )
        .unwrap();
        let s = m.schema().static_width();
        assert!(x.0.iter().skip(s).all(|&g| g == 1.0));
    }

    #[test]
    fn window_group_counts_recent_slots_only() {
        // donations of 2 at t-1 and 3 at t-L-1, L = 2, t = 5
        let dims = Dims::new(3, 2, 8);
        let m = model(dims, 2, 1);
        let mut td = EventTensor::new(dims);
        td.set((1, 0, 4), 2.0).unwrap();
        td.set((2, 0, 2), 3.0).unwrap();
        let x = build_features(
            &m,
            &td,
            0,
            0,
            5,
            1.0,
            &MessageFeatures::zeros(m.schema()),
            0.0,
            2,
        )
        .unwrap();
        let s = m.schema().static_width();
        assert_eq!(x.0[s - 2], 2.0);
    }

    #[test]
    fn scored_cell_is_excluded_from_history() {
        let dims = Dims::new(2, 1, 4);
        let m = model(dims, 1, 1);
        let mut td = EventTensor::new(dims);
        td.set((0, 0, 1), 4.0).unwrap();
        td.set((0, 0, 2), 7.0).unwrap();
        td.set((1, 0, 2), 1.0).unwrap();
        let x = build_features(
            &m,
            &td,
            0,
            0,
            2,
            7.0,
            &MessageFeatures::zeros(m.schema()),
            0.0,
            2,
        )
        .unwrap();
        let s = m.schema().static_width();
        assert_eq!(x.0[s - 3], 4.0);
        assert_eq!(x.0[s - 2], 5.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let dims = Dims::new(2, 2, 4);
        let m = model(dims, 2, 1);
        let td = EventTensor::new(dims);
        let msg = MessageFeatures::zeros(m.schema());
        assert!(build_features(&m, &td, 0, 0, 0, 0.0, &msg, 0.0, 2).is_err());
        assert!(build_features(&m, &td, 2, 0, 0, 1.0, &msg, 0.0, 2).is_err());
        let wide = MessageFeatures::zeros(FeatureSchema { emb_width: 5 });
        assert!(build_features(&m, &td, 0, 0, 0, 1.0, &wide, 0.0, 2).is_err());
        let x = build_features(&m, &td, 0, 0, 0, 1.0, &msg, 0.0, 2).unwrap();
        assert!(estimate_response(&Array1::zeros(3), &x).is_err());
        assert!(recommend_donation(&m, &td, 0, &[], 1.0, &[], 0, &[]).is_err());
    }

    #[test]
    fn estimate_with_amount_indicator() {
        let dims = Dims::new(1, 1, 1);
        let mut m = model(dims, 2, 1);
        m.theta[0] = 1.0;
        let td = EventTensor::new(dims);
        let x = build_features(
            &m,
            &td,
            0,
            0,
            0,
            7.0,
            &MessageFeatures::zeros(m.schema()),
            0.0,
            2,
        )
        .unwrap();
        assert_eq!(estimate_response(&m.theta, &x).unwrap(), 7.0);
        assert_eq!(estimate_response(&Array1::zeros(x.len()), &x).unwrap(), 0.0);
    }

    #[test]
    fn ties_fall_back_to_channel_order() {
        let dims = Dims::new(1, 4, 3);
        let mut m = model(dims, 2, 1);
        m.theta[0] = 1.0;
        let td = EventTensor::new(dims);
        let msgs = vec![MessageFeatures::zeros(m.schema()); 3];
        let ranked = recommend_donation(&m, &td, 0, &[3, 1, 2], 2.0, &msgs, 1, &[0.0; 3]).unwrap();
        assert_eq!(
            ranked.iter().map(|r| r.0).collect::<Vec<_>>(),
            vec![1, 2, 3]
        );
        let single = recommend_donation(&m, &td, 0, &[2], 2.0, &msgs[..1], 1, &[0.0]).unwrap();
        assert_eq!(single[0].0, 2);
    }

    #[test]
    fn recent_window_weight_prefers_busier_channel() {
        let dims = Dims::new(3, 2, 6);
        let mut m = model(dims, 2, 1);
        let s = m.schema().static_width();
        m.theta[s - 2] = 1.0;
        let mut td = EventTensor::new(dims);
        td.set((1, 0, 3), 1.0).unwrap();
        td.set((1, 1, 3), 2.0).unwrap();
        td.set((2, 1, 4), 2.0).unwrap();
        let msgs = vec![MessageFeatures::zeros(m.schema()); 2];
        let ranked = recommend_donation(&m, &td, 0, &[0, 1], 1.0, &msgs, 5, &[0.0, 0.0]).unwrap();
        assert_eq!(ranked[0], (1, 4.0));
        assert_eq!(ranked[1], (0, 1.0));
    }
}
