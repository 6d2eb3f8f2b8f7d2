//! Channel-influence-aware ranking of multi-stream parties (CARS).
//!
//! A party assigns each member of a viewer group a set of `k` channels. A
//! viewer's satisfaction with a party blends, per assigned channel, a personal
//! term from the frozen SENSOR embeddings, the pull of friends watching the
//! same channel, and the channel's relation to the viewer's other channels.
//! Parameters are fitted with Bayesian personalized ranking on donation
//! totals; a group is served the party with the best worst-off member.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array1, ArrayView1};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, MarsError, Result};
use crate::par::{map_slice, Exec};
use crate::sensor::SensorModel;
use crate::tensor::EventTensor;

/// A multi-stream party over one viewer group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawMsp", into = "RawMsp")]
pub struct Msp {
    group: Vec<usize>,
    edges: BTreeSet<(usize, usize)>,
    assignments: BTreeMap<usize, Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct RawMsp {
    group: Vec<usize>,
    #[serde(default)]
    edges: Vec<(usize, usize)>,
    assignments: BTreeMap<usize, Vec<usize>>,
}

impl TryFrom<RawMsp> for Msp {
    type Error = MarsError;
    fn try_from(r: RawMsp) -> Result<Msp> {
        Msp::new(r.group, r.edges, r.assignments)
    }
}

impl From<Msp> for RawMsp {
    fn from(m: Msp) -> RawMsp {
        RawMsp {
            group: m.group,
            edges: m.edges.into_iter().collect(),
            assignments: m.assignments,
        }
    }
}

impl Msp {
    /// Every member must be assigned the same number `k >= 1` of distinct
    /// channels; edges must join members.
    pub fn new(
        group: impl IntoIterator<Item = usize>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        assignments: BTreeMap<usize, Vec<usize>>,
    ) -> Result<Msp> {
        let members: BTreeSet<usize> = group.into_iter().collect();
        if members.is_empty() {
            return Err(MarsError::InvalidInput("party group is empty".into()));
        }
        let mut edge_set = BTreeSet::new();
        for (u, v) in edges {
            if u == v || !members.contains(&u) || !members.contains(&v) {
                return Err(MarsError::InvalidInput(format!(
                    "edge ({u}, {v}) is not between two distinct members"
                )));
            }
            edge_set.insert((u.min(v), u.max(v)));
        }
        let mut k = None;
        for (v, chans) in &assignments {
            if !members.contains(v) {
                return Err(MarsError::InvalidInput(format!(
                    "viewer {v} is assigned but not in the group"
                )));
            }
            let distinct: BTreeSet<_> = chans.iter().collect();
            if chans.is_empty() || distinct.len() != chans.len() {
                return Err(MarsError::InvalidInput(format!(
                    "viewer {v} needs distinct, nonempty channels"
                )));
            }
            if *k.get_or_insert(chans.len()) != chans.len() {
                return Err(MarsError::InvalidInput(
                    "all members must be assigned the same number of channels".into(),
                ));
            }
        }
        if let Some(v) = members.iter().find(|v| !assignments.contains_key(v)) {
            return Err(MarsError::InvalidInput(format!(
                "group member {v} has no channels"
            )));
        }
        Ok(Msp {
            group: members.into_iter().collect(),
            edges: edge_set,
            assignments,
        })
    }

    /// Group members in ascending order.
    pub fn group(&self) -> &[usize] {
        &self.group
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn k(&self) -> usize {
        self.assignments.values().next().map_or(0, Vec::len)
    }

    pub fn contains(&self, v: usize) -> bool {
        self.group.binary_search(&v).is_ok()
    }

    pub fn channels(&self, v: usize) -> Option<&[usize]> {
        self.assignments.get(&v).map(Vec::as_slice)
    }

    pub fn assignments(&self) -> &BTreeMap<usize, Vec<usize>> {
        &self.assignments
    }

    pub fn are_friends(&self, u: usize, v: usize) -> bool {
        self.edges.contains(&(u.min(v), u.max(v)))
    }

    /// Friends of `v` in the party who are also assigned `c`.
    fn co_watchers(&self, v: usize, c: usize) -> impl Iterator<Item = usize> + '_ {
        self.group
            .iter()
            .copied()
            .filter(move |&u| u != v && self.are_friends(u, v) && self.assignments[&u].contains(&c))
    }

    fn check_against(&self, m: &SensorModel) -> Result<()> {
        let dims = m.dims();
        if let Some(&v) = self.group.last() {
            if v >= dims.n_viewers {
                return Err(MarsError::IndexOutOfRange(format!(
                    "viewer {v} outside the model"
                )));
            }
        }
        if let Some(c) = self
            .assignments
            .values()
            .flatten()
            .find(|&&c| c >= dims.n_channels)
        {
            return Err(MarsError::IndexOutOfRange(format!(
                "channel {c} outside the model"
            )));
        }
        Ok(())
    }
}

/// Learnable ranking parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarsParams {
    /// Weights over the squashed `[viewer; channel; bias]` vector, width `2 alpha + 1`.
    pub h: Array1<f64>,
    pub b: f64,
    /// Per-viewer weight of the social aspect.
    pub tau_social: Array1<f64>,
    /// Per-viewer weight of the streamer-relation aspect.
    pub tau_relation: Array1<f64>,
    /// L2 penalty on all of the above.
    pub lambda4: f64,
}

impl CarsParams {
    pub fn init(alpha: usize, n_viewers: usize, cfg: &CarsConfig) -> CarsParams {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let s = cfg.init_scale;
        let mut draw = || {
            if s > 0.0 {
                rng.random_range(-s..=s)
            } else {
                0.0
            }
        };
        let h = Array1::from_iter((0..2 * alpha + 1).map(|_| draw()));
        let b = draw();
        CarsParams {
            h,
            b,
            tau_social: Array1::from_elem(n_viewers, cfg.init_tau),
            tau_relation: Array1::from_elem(n_viewers, cfg.init_tau),
            lambda4: cfg.lambda4,
        }
    }

    pub fn alpha(&self) -> usize {
        self.h.len().saturating_sub(1) / 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.h.len() % 2 != 1 {
            return dim_err("h must have odd width 2 alpha + 1");
        }
        if self.tau_social.len() != self.tau_relation.len() {
            return dim_err("tau vectors differ in length");
        }
        let all = self
            .h
            .iter()
            .chain(self.tau_social.iter())
            .chain(self.tau_relation.iter());
        if !self.b.is_finite()
            || !self.lambda4.is_finite()
            || all.into_iter().any(|x| !x.is_finite())
        {
            return Err(MarsError::InvalidInput(
                "ranking parameters must be finite".into(),
            ));
        }
        Ok(())
    }

    fn check_against(&self, m: &SensorModel) -> Result<()> {
        if self.alpha() != m.alpha() {
            return dim_err(format!(
                "ranking parameters use alpha {}, model has {}",
                self.alpha(),
                m.alpha()
            ));
        }
        if self.tau_social.len() != m.dims().n_viewers {
            return dim_err("ranking parameters cover a different number of viewers");
        }
        Ok(())
    }

    /// `||Theta||^2`
    pub fn norm_sq(&self) -> f64 {
        self.h.dot(&self.h)
            + self.b * self.b
            + self.tau_social.dot(&self.tau_social)
            + self.tau_relation.dot(&self.tau_relation)
    }

    /// `h`, `b`, social taus, relation taus.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.h.to_vec();
        out.push(self.b);
        out.extend(self.tau_social.iter());
        out.extend(self.tau_relation.iter());
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let (nh, nv) = (self.h.len(), self.tau_social.len());
        assert_eq!(flat.len(), nh + 1 + 2 * nv, "flat parameter length");
        self.h.assign(&ArrayView1::from(&flat[..nh]));
        self.b = flat[nh];
        self.tau_social
            .assign(&ArrayView1::from(&flat[nh + 1..nh + 1 + nv]));
        self.tau_relation
            .assign(&ArrayView1::from(&flat[nh + 1 + nv..]));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CarsConfig {
    pub lambda4: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub init_scale: f64,
    pub init_tau: f64,
    /// Pairs drawn per epoch; `None` uses every pair.
    pub pairs_per_epoch: Option<usize>,
    pub exec: Exec,
}

impl Default for CarsConfig {
    fn default() -> Self {
        CarsConfig {
            lambda4: 0.1,
            learning_rate: 0.05,
            epochs: 100,
            seed: 0,
            init_scale: 0.1,
            init_tau: 0.5,
            pairs_per_epoch: None,
            exec: Exec::default(),
        }
    }
}

impl CarsConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(MarsError::InvalidConfig(m.to_string()));
        if !(self.lambda4.is_finite() && self.lambda4 >= 0.0) {
            return bad("lambda4 must be finite and nonnegative");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.pairs_per_epoch == Some(0) {
            return bad("pairs_per_epoch must be at least 1");
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-ln sigmoid(x)`, stable for large `|x|`.
fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

/// `h . sigmoid([v; c; b])`
pub fn base_influence(
    params: &CarsParams,
    v_emb: ArrayView1<f64>,
    c_emb: ArrayView1<f64>,
) -> Result<f64> {
    let a = v_emb.len();
    if c_emb.len() != a || params.h.len() != 2 * a + 1 {
        return dim_err(format!(
            "embeddings of width {} and {} do not fit h of width {}",
            a,
            c_emb.len(),
            params.h.len()
        ));
    }
    let h = &params.h;
    let mut o = h[2 * a] * sigmoid(params.b);
    for i in 0..a {
        o += h[i] * sigmoid(v_emb[i]) + h[a + i] * sigmoid(c_emb[i]);
    }
    Ok(o)
}

fn check_assigned(p: &Msp, v: usize, c: usize) -> Result<&[usize]> {
    let chans = p
        .channels(v)
        .ok_or_else(|| MarsError::InvalidInput(format!("viewer {v} is not in the party")))?;
    if !chans.contains(&c) {
        return Err(MarsError::InvalidInput(format!(
            "channel {c} is not assigned to viewer {v}"
        )));
    }
    Ok(chans)
}

fn base(params: &CarsParams, m: &SensorModel, v: usize, c: usize) -> f64 {
    base_influence(params, m.factors.viewer.row(v), m.factors.channel.row(c))
        .expect("widths checked")
}

/// Influence-weighted base influence of co-watching friends.
fn social_term(params: &CarsParams, m: &SensorModel, v: usize, c: usize, p: &Msp) -> f64 {
    p.co_watchers(v, c)
        .map(|u| m.influence[[u, v]] * base(params, m, u, c))
        .sum()
}

/// Summed absolute relation between `c` and the viewer's other channels.
fn relation_term(m: &SensorModel, c: usize, chans: &[usize]) -> f64 {
    let cf = &m.factors.channel;
    chans
        .iter()
        .filter(|&&x| x != c)
        .map(|&x| cf.row(c).dot(&cf.row(x)).abs())
        .sum()
}

/// Weight of channel `c` for viewer `v` within party `p`.
pub fn channel_influence(
    params: &CarsParams,
    m: &SensorModel,
    v: usize,
    c: usize,
    p: &Msp,
) -> Result<f64> {
    params.check_against(m)?;
    p.check_against(m)?;
    let chans = check_assigned(p, v, c)?;
    Ok(base(params, m, v, c)
        + params.tau_social[v] * social_term(params, m, v, c, p)
        + params.tau_relation[v] * relation_term(m, c, chans))
}

/// `v . sum_c a(v, c, p) c` over the viewer's assigned channels.
pub fn msp_satisfaction(params: &CarsParams, m: &SensorModel, v: usize, p: &Msp) -> Result<f64> {
    params.check_against(m)?;
    p.check_against(m)?;
    let chans = p
        .channels(v)
        .ok_or_else(|| MarsError::InvalidInput(format!("viewer {v} is not in the party")))?;
    let vrow = m.factors.viewer.row(v);
    let mut r = 0.0;
    for &c in chans {
        let a = channel_influence(params, m, v, c, p)?;
        r += a * vrow.dot(&m.factors.channel.row(c));
    }
    Ok(r)
}

/// Gradient of one viewer's satisfaction with respect to the parameters it
/// touches.
#[derive(Debug, Clone, PartialEq)]
struct SatGrad {
    h: Array1<f64>,
    b: f64,
    tau_social: f64,
    tau_relation: f64,
}

fn squash(params: &CarsParams, v_emb: ArrayView1<f64>, c_emb: ArrayView1<f64>) -> Array1<f64> {
    let a = v_emb.len();
    let mut z = Array1::zeros(2 * a + 1);
    for i in 0..a {
        z[i] = sigmoid(v_emb[i]);
        z[a + i] = sigmoid(c_emb[i]);
    }
    z[2 * a] = sigmoid(params.b);
    z
}

/// Satisfaction and its gradient; assumes inputs were validated.
fn satisfaction_grad(params: &CarsParams, m: &SensorModel, v: usize, p: &Msp) -> (f64, SatGrad) {
    let f = &m.factors;
    let a = m.alpha();
    let sb = sigmoid(params.b);
    let dsb = sb * (1.0 - sb);
    let h_bias = params.h[2 * a];
    let (ts, tr) = (params.tau_social[v], params.tau_relation[v]);
    let chans = &p.assignments[&v];
    let vrow = f.viewer.row(v);
    let mut g = SatGrad {
        h: Array1::zeros(2 * a + 1),
        b: 0.0,
        tau_social: 0.0,
        tau_relation: 0.0,
    };
    let mut r = 0.0;
    for &c in chans {
        let s = vrow.dot(&f.channel.row(c));
        let z = squash(params, vrow, f.channel.row(c));
        let o = params.h.dot(&z);
        let mut social = 0.0;
        let mut pull = 0.0;
        let mut dh = z;
        let mut dh_social = Array1::zeros(2 * a + 1);
        for u in p.co_watchers(v, c) {
            let w = m.influence[[u, v]];
            let zu = squash(params, f.viewer.row(u), f.channel.row(c));
            social += w * params.h.dot(&zu);
            dh_social.scaled_add(w, &zu);
            pull += w;
        }
        dh.scaled_add(ts, &dh_social);
        let rel = relation_term(m, c, chans);
        r += (o + ts * social + tr * rel) * s;
        g.h.scaled_add(s, &dh);
        g.b += s * h_bias * dsb * (1.0 + ts * pull);
        g.tau_social += s * social;
        g.tau_relation += s * rel;
    }
    (r, g)
}

/// A preference triple: `viewer` donated strictly more to the channels of
/// party `preferred` than to those of party `other` (indices into the party
/// list the pairs were built from).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BprPair {
    pub viewer: usize,
    pub preferred: usize,
    pub other: usize,
}

/// All strict preference triples between parties sharing a viewer.
pub fn build_bpr_pairs(td: &EventTensor, msps: &[Msp]) -> Result<Vec<BprPair>> {
    let dims = td.dims();
    let mut totals_by_pair = BTreeMap::<(usize, usize), f64>::new();
    for ((v, c, _), x) in td.iter() {
        *totals_by_pair.entry((v, c)).or_default() += x;
    }
    let mut totals: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    for (i, p) in msps.iter().enumerate() {
        for (&v, chans) in p.assignments() {
            if v >= dims.n_viewers {
                return Err(MarsError::IndexOutOfRange(format!(
                    "viewer {v} in party {i}"
                )));
            }
            if let Some(&c) = chans.iter().find(|&&c| c >= dims.n_channels) {
                return Err(MarsError::IndexOutOfRange(format!(
                    "channel {c} in party {i}"
                )));
            }
            let t: f64 = chans
                .iter()
                .map(|&c| totals_by_pair.get(&(v, c)).copied().unwrap_or(0.0))
                .sum();
            totals.entry(v).or_default().push((i, t));
        }
    }
    let mut pairs = Vec::new();
    for (&v, list) in &totals {
        for &(p, tp) in list {
            for &(q, tq) in list {
                if tp > tq {
                    pairs.push(BprPair {
                        viewer: v,
                        preferred: p,
                        other: q,
                    });
                }
            }
        }
    }
    Ok(pairs)
}

fn check_pairs(
    params: &CarsParams,
    m: &SensorModel,
    msps: &[Msp],
    pairs: &[BprPair],
) -> Result<()> {
    params.check_against(m)?;
    for p in msps {
        p.check_against(m)?;
    }
    for pair in pairs {
        for idx in [pair.preferred, pair.other] {
            let p = msps
                .get(idx)
                .ok_or_else(|| MarsError::IndexOutOfRange(format!("party {idx}")))?;
            if !p.contains(pair.viewer) {
                return Err(MarsError::InvalidInput(format!(
                    "viewer {} is not in party {idx}",
                    pair.viewer
                )));
            }
        }
    }
    Ok(())
}

/// `sum -ln sigmoid(r_p - r_q) + lambda4 / 2 ||Theta||^2`
pub fn cars_loss(
    params: &CarsParams,
    m: &SensorModel,
    msps: &[Msp],
    pairs: &[BprPair],
) -> Result<f64> {
    check_pairs(params, m, msps, pairs)?;
    let mut loss = 0.0;
    for pair in pairs {
        let rp = msp_satisfaction(params, m, pair.viewer, &msps[pair.preferred])?;
        let rq = msp_satisfaction(params, m, pair.viewer, &msps[pair.other])?;
        loss += neg_log_sigmoid(rp - rq);
    }
    Ok(loss + 0.5 * params.lambda4 * params.norm_sq())
}

/// Adds the data gradient of one pair, scaled by `scale`, into `grad`;
/// returns the pair's loss.
fn pair_grad(
    params: &CarsParams,
    m: &SensorModel,
    msps: &[Msp],
    pair: &BprPair,
    scale: f64,
    grad: &mut CarsParams,
) -> f64 {
    let v = pair.viewer;
    let (rp, gp) = satisfaction_grad(params, m, v, &msps[pair.preferred]);
    let (rq, gq) = satisfaction_grad(params, m, v, &msps[pair.other]);
    let d = rp - rq;
    // d/dd of -ln sigmoid(d)
    let w = -sigmoid(-d) * scale;
    grad.h.scaled_add(w, &(&gp.h - &gq.h));
    grad.b += w * (gp.b - gq.b);
    grad.tau_social[v] += w * (gp.tau_social - gq.tau_social);
    grad.tau_relation[v] += w * (gp.tau_relation - gq.tau_relation);
    neg_log_sigmoid(d)
}

fn zeros_like(params: &CarsParams) -> CarsParams {
    CarsParams {
        h: Array1::zeros(params.h.len()),
        b: 0.0,
        tau_social: Array1::zeros(params.tau_social.len()),
        tau_relation: Array1::zeros(params.tau_relation.len()),
        lambda4: params.lambda4,
    }
}

/// Loss and full gradient (returned in a parameter-shaped value).
pub fn cars_loss_grad(
    params: &CarsParams,
    m: &SensorModel,
    msps: &[Msp],
    pairs: &[BprPair],
) -> Result<(f64, CarsParams)> {
    check_pairs(params, m, msps, pairs)?;
    let mut grad = zeros_like(params);
    let mut loss = 0.0;
    for pair in pairs {
        loss += pair_grad(params, m, msps, pair, 1.0, &mut grad);
    }
    add_penalty(&mut grad, params, params.lambda4);
    Ok((loss + 0.5 * params.lambda4 * params.norm_sq(), grad))
}

fn add_penalty(grad: &mut CarsParams, params: &CarsParams, weight: f64) {
    grad.h.scaled_add(weight, &params.h);
    grad.b += weight * params.b;
    grad.tau_social.scaled_add(weight, &params.tau_social);
    grad.tau_relation.scaled_add(weight, &params.tau_relation);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarsReport {
    /// Loss over all pairs at the start of every epoch.
    pub trace: Vec<f64>,
    pub final_loss: f64,
}

/// Fits the ranking parameters with the SENSOR model frozen. Each epoch
/// visits the pairs (or a sample of them) in a seeded random order and takes
/// one step per pair; the penalty is spread evenly over the steps.
pub fn train_cars(
    m: &SensorModel,
    msps: &[Msp],
    pairs: &[BprPair],
    cfg: &CarsConfig,
) -> Result<(CarsParams, CarsReport)> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(MarsError::InvalidInput(
            "no preference pairs: every viewer donated equally to all of their parties".into(),
        ));
    }
    let mut params = CarsParams::init(m.alpha(), m.dims().n_viewers, cfg);
    check_pairs(&params, m, msps, pairs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let per_epoch = cfg.pairs_per_epoch.unwrap_or(pairs.len()).min(pairs.len());
    let reg = cfg.lambda4 / per_epoch as f64;
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let loss = epoch_loss(&params, m, msps, pairs, cfg.exec);
        trace.push(loss);
        if !loss.is_finite() {
            return Err(MarsError::Diverged { epoch, loss, trace });
        }
        order.shuffle(&mut rng);
        for &i in &order[..per_epoch] {
            let mut grad = zeros_like(&params);
            pair_grad(&params, m, msps, &pairs[i], 1.0, &mut grad);
            add_penalty(&mut grad, &params, reg);
            params.h.scaled_add(-cfg.learning_rate, &grad.h);
            params.b -= cfg.learning_rate * grad.b;
            params
                .tau_social
                .scaled_add(-cfg.learning_rate, &grad.tau_social);
            params
                .tau_relation
                .scaled_add(-cfg.learning_rate, &grad.tau_relation);
        }
    }
    let final_loss = epoch_loss(&params, m, msps, pairs, cfg.exec);
    if !final_loss.is_finite() {
        return Err(MarsError::Diverged {
            epoch: cfg.epochs,
            loss: final_loss,
            trace,
        });
    }
    Ok((params, CarsReport { trace, final_loss }))
}

/// `cars_loss` on validated inputs, with per-pair terms evaluated under `exec`
/// and summed in pair order.
fn epoch_loss(
    params: &CarsParams,
    m: &SensorModel,
    msps: &[Msp],
    pairs: &[BprPair],
    exec: Exec,
) -> f64 {
    let terms = map_slice(exec, pairs, |pair| {
        let rp = satisfaction_grad(params, m, pair.viewer, &msps[pair.preferred]).0;
        let rq = satisfaction_grad(params, m, pair.viewer, &msps[pair.other]).0;
        neg_log_sigmoid(rp - rq)
    });
    terms.iter().sum::<f64>() + 0.5 * params.lambda4 * params.norm_sq()
}

/// Candidate indices with the viewer's satisfaction, best first. Ties keep
/// input order.
pub fn rank_msps(
    params: &CarsParams,
    m: &SensorModel,
    v: usize,
    candidates: &[Msp],
) -> Result<Vec<(usize, f64)>> {
    let mut scored = Vec::with_capacity(candidates.len());
    for (i, p) in candidates.iter().enumerate() {
        if !p.contains(v) {
            return Err(MarsError::InvalidInput(format!(
                "viewer {v} is not in candidate {i}"
            )));
        }
        scored.push((i, msp_satisfaction(params, m, v, p)?));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(scored)
}

/// Index of the candidate whose least satisfied member is best off. Ties go
/// to the earliest candidate.
pub fn recommend_group_msp(
    params: &CarsParams,
    m: &SensorModel,
    candidates: &[Msp],
) -> Result<usize> {
    let first = candidates
        .first()
        .ok_or_else(|| MarsError::InvalidInput("no candidate parties".into()))?;
    if let Some(i) = candidates.iter().position(|p| p.group() != first.group()) {
        return Err(MarsError::InvalidInput(format!(
            "candidate {i} is for a different group"
        )));
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (i, p) in candidates.iter().enumerate() {
        let mut worst = f64::INFINITY;
        for &v in p.group() {
            worst = worst.min(msp_satisfaction(params, m, v, p)?);
        }
        if i == 0 || worst > best.1 {
            best = (i, worst);
        }
    }
    Ok(best.0)
}
