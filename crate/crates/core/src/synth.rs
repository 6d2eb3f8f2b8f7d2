//! Synthetic data with planted ground truth.
//!
//! Donations follow a self-exciting process: a viewer donates to a channel in
//! a slot with probability `1 - exp(-rate)`, where the rate combines a
//! preference-driven base rate (boosted in burst slots) with the decayed,
//! influence-weighted donations of other viewers to the same channel over the
//! preceding window. Responses grow with the amount and shrink with the number
//! of other donations the channel received in the same window.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use ndarray::{Array1, Array2};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::cars::Msp;
use crate::d2r::{DonationEvent, FeatureSchema, MessageFeatures, EMOTION_WIDTH};
use crate::error::{MarsError, Result};
use crate::graph::{SignedStreamerMatrix, ViewerGraph};
use crate::sensor::SensorData;
use crate::tensor::{Dims, EventTensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_viewers: usize,
    pub n_channels: usize,
    pub n_slots: usize,
    /// Channels per viewer in generated parties.
    pub k: usize,
    /// Probability of a planted influence link between two viewers.
    pub edge_prob: f64,
    /// Probability that a planted link shows up as an observed friendship.
    pub friend_visibility: f64,
    /// Probability of an observed friendship without a planted link.
    pub spurious_friend_prob: f64,
    /// Probability that two streamers are related at all.
    pub relation_prob: f64,
    /// Probability that a relation is negative.
    pub neg_relation_prob: f64,
    pub planted_decay: f64,
    /// Mean planted influence along a link; each link draws uniformly from
    /// `[0.5, 1.5]` times this.
    pub planted_influence: f64,
    /// Slots of history that excite new donations.
    pub excitation_window: usize,
    pub base_donation_rate: f64,
    /// Rank of the planted viewer/channel preference structure.
    pub latent_rank: usize,
    pub preference_strength: f64,
    /// Log-scale spread of channel popularity.
    pub popularity_spread: f64,
    pub burst_rate: f64,
    pub burst_magnitude: f64,
    /// Log-normal amount parameters.
    pub amount_mu: f64,
    pub amount_sigma: f64,
    pub response_base: f64,
    pub suppression_strength: f64,
    /// Window over which competing donations suppress a response.
    pub suppression_window: usize,
    pub emb_width: usize,
    /// Parties used to train the ranker.
    pub n_groups: usize,
    pub group_size: usize,
    pub parties_per_group: usize,
    /// Held-out ranking cases.
    pub n_eval_cases: usize,
    pub eval_candidates: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_viewers: 100,
            n_channels: 10,
            n_slots: 200,
            k: 2,
            edge_prob: 0.1,
            friend_visibility: 0.8,
            spurious_friend_prob: 0.02,
            relation_prob: 0.3,
            neg_relation_prob: 0.3,
            planted_decay: 0.5,
            planted_influence: 0.006,
            excitation_window: 5,
            base_donation_rate: 0.0006,
            latent_rank: 3,
            preference_strength: 1.5,
            popularity_spread: 0.5,
            burst_rate: 0.05,
            burst_magnitude: 4.0,
            amount_mu: 1.0,
            amount_sigma: 0.6,
            response_base: 1.5,
            suppression_strength: 0.3,
            suppression_window: 5,
            emb_width: 16,
            n_groups: 60,
            group_size: 4,
            parties_per_group: 8,
            n_eval_cases: 100,
            eval_candidates: 20,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MarsError::InvalidConfig(m));
        for (name, n) in [
            ("n_viewers", self.n_viewers),
            ("n_channels", self.n_channels),
            ("n_slots", self.n_slots),
            ("k", self.k),
            ("excitation_window", self.excitation_window),
            ("suppression_window", self.suppression_window),
            ("latent_rank", self.latent_rank),
            ("group_size", self.group_size),
            ("eval_candidates", self.eval_candidates),
        ] {
            if n == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        for (name, p) in [
            ("edge_prob", self.edge_prob),
            ("friend_visibility", self.friend_visibility),
            ("spurious_friend_prob", self.spurious_friend_prob),
            ("relation_prob", self.relation_prob),
            ("neg_relation_prob", self.neg_relation_prob),
            ("burst_rate", self.burst_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1]"));
            }
        }
        for (name, x) in [
            ("planted_decay", self.planted_decay),
            ("planted_influence", self.planted_influence),
            ("base_donation_rate", self.base_donation_rate),
            ("preference_strength", self.preference_strength),
            ("popularity_spread", self.popularity_spread),
            ("amount_sigma", self.amount_sigma),
            ("response_base", self.response_base),
            ("suppression_strength", self.suppression_strength),
        ] {
            if !(x.is_finite() && x >= 0.0) {
                return bad(format!("{name} must be finite and nonnegative"));
            }
        }
        if !(self.burst_magnitude.is_finite() && self.burst_magnitude >= 1.0) {
            return bad("burst_magnitude must be at least 1".into());
        }
        if !self.amount_mu.is_finite() {
            return bad("amount_mu must be finite".into());
        }
        if self.k > self.n_channels {
            return bad("k cannot exceed n_channels".into());
        }
        if self.group_size > self.n_viewers {
            return bad("group_size cannot exceed n_viewers".into());
        }
        Ok(())
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.n_viewers, self.n_channels, self.n_slots)
    }
}

/// Ground truth behind a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Planted {
    /// `influence[[u, v]]`: pull of `u` on `v`; zero off the planted links.
    pub influence: Array2<f64>,
    pub decay: f64,
    /// Base donation rate of every (viewer, channel) outside bursts.
    pub base_rate: Array2<f64>,
    /// Burst indicator per (channel, slot).
    pub bursts: Array2<bool>,
}

/// A held-out ranking case: candidate parties for a group containing
/// `viewer`; `relevant` indexes the candidate the viewer prefers most under
/// the planted base rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCase {
    pub viewer: usize,
    pub candidates: Vec<Msp>,
    pub relevant: usize,
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub config: SynthConfig,
    pub graph: ViewerGraph,
    pub relations: SignedStreamerMatrix,
    pub donations: EventTensor,
    pub responses: EventTensor,
    pub events: Vec<DonationEvent>,
    pub planted: Planted,
    pub msps: Vec<Msp>,
    pub eval_cases: Vec<EvalCase>,
}

impl SynthData {
    pub fn schema(&self) -> FeatureSchema {
        FeatureSchema {
            emb_width: self.config.emb_width,
        }
    }

    pub fn sensor_data(&self) -> SensorData {
        SensorData {
            donations: self.donations.clone(),
            responses: self.responses.clone(),
            graph: self.graph.clone(),
            relations: self.relations.clone(),
            events: self.events.clone(),
            schema: self.schema(),
        }
    }
}

/// Response to a donation of `amount` when the channel received `competing`
/// other donations in the surrounding window, clamped to `[0, 5]`.
pub fn planted_response(cfg: &SynthConfig, amount: f64, competing: usize) -> f64 {
    let r =
        cfg.response_base * amount.ln_1p() / (1.0 + cfg.suppression_strength * competing as f64);
    r.clamp(0.0, 5.0)
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (nv, nc, nt) = (cfg.n_viewers, cfg.n_channels, cfg.n_slots);

    // planted influence links and the observed friendship graph
    let mut influence = Array2::zeros((nv, nv));
    let mut graph = ViewerGraph::new(nv);
    for u in 0..nv {
        for v in u + 1..nv {
            let linked = rng.random_bool(cfg.edge_prob);
            if linked {
                influence[[u, v]] = cfg.planted_influence * rng.random_range(0.5..1.5);
                influence[[v, u]] = cfg.planted_influence * rng.random_range(0.5..1.5);
            }
            let p = if linked {
                cfg.friend_visibility
            } else {
                cfg.spurious_friend_prob
            };
            if rng.random_bool(p) {
                graph.add_edge(u, v)?;
            }
        }
    }

    let mut relations = SignedStreamerMatrix::zeros(nc);
    for i in 0..nc {
        for j in i + 1..nc {
            if rng.random_bool(cfg.relation_prob) {
                let sign = if rng.random_bool(cfg.neg_relation_prob) {
                    -1
                } else {
                    1
                };
                relations.set_symmetric(i, j, sign)?;
            }
        }
    }

    // preferences
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let r = cfg.latent_rank;
    let vl = Array2::from_shape_simple_fn((nv, r), || std_normal.sample(&mut rng));
    let cl = Array2::from_shape_simple_fn((nc, r), || std_normal.sample(&mut rng));
    let popularity = LogNormal::new(0.0, cfg.popularity_spread).expect("finite spread");
    let pop: Vec<f64> = (0..nc).map(|_| popularity.sample(&mut rng)).collect();
    let affinity = vl.dot(&cl.t()) * (cfg.preference_strength / (r as f64).sqrt());
    let base_rate = Array2::from_shape_fn((nv, nc), |(v, c)| {
        cfg.base_donation_rate * pop[c] * affinity[[v, c]].exp()
    });
    let bursts = Array2::from_shape_simple_fn((nc, nt), || rng.random_bool(cfg.burst_rate));

    // donations
    let amounts =
        LogNormal::new(cfg.amount_mu, cfg.amount_sigma).expect("finite amount parameters");
    let kernel: Vec<f64> = (1..=cfg.excitation_window)
        .map(|k| (-cfg.planted_decay * k as f64).exp())
        .collect();
    let mut donations = EventTensor::new(cfg.dims());
    // per channel: per slot, donations as (viewer, amount)
    let mut slots: Vec<Vec<Vec<(usize, f64)>>> = vec![vec![Vec::new(); nt]; nc];
    let mut hist = Array1::<f64>::zeros(nv);
    for t in 0..nt {
        for c in 0..nc {
            hist.fill(0.0);
            for (i, w) in kernel.iter().enumerate() {
                if t > i {
                    for &(u, x) in &slots[c][t - i - 1] {
                        hist[u] += w * x;
                    }
                }
            }
            let excitation = influence.t().dot(&hist);
            let boost = if bursts[[c, t]] {
                cfg.burst_magnitude
            } else {
                1.0
            };
            for v in 0..nv {
                let rate = base_rate[[v, c]] * boost + excitation[v];
                if rng.random::<f64>() < 1.0 - (-rate).exp() {
                    let x = ((amounts.sample(&mut rng) * 100.0).round() / 100.0).max(0.01);
                    slots[c][t].push((v, x));
                    donations.set((v, c, t), x)?;
                }
            }
        }
    }

    // responses, messages and fan-list minima
    let mut responses = EventTensor::new(cfg.dims());
    let mut events = Vec::with_capacity(donations.nnz());
    let mut cumulative: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); nc];
    let mut fan_before = Array2::<f64>::zeros((nc, nt));
    for c in 0..nc {
        for t in 0..nt {
            fan_before[[c, t]] = cumulative[c].values().copied().fold(0.0, f64::max);
            for &(v, x) in &slots[c][t] {
                *cumulative[c].entry(v).or_default() += x;
            }
        }
    }
    let emb_noise = Normal::new(0.0, 0.3).expect("finite");
    for ((v, c, t), x) in donations.iter() {
        let lo = t.saturating_sub(cfg.suppression_window);
        let competing = slots[c][lo..=t].iter().map(Vec::len).sum::<usize>() - 1;
        let y = planted_response(cfg, x, competing);
        responses.set((v, c, t), y)?;
        let mut emotion: Vec<f64> = (0..EMOTION_WIDTH).map(|_| rng.random::<f64>()).collect();
        let z: f64 = emotion.iter().sum();
        emotion.iter_mut().for_each(|e| *e /= z);
        events.push(DonationEvent {
            viewer: v,
            channel: c,
            slot: t,
            amount: x,
            message: MessageFeatures {
                embedding: (0..cfg.emb_width)
                    .map(|_| emb_noise.sample(&mut rng))
                    .collect(),
                sentiment: rng.random_range(-1.0..=1.0),
                emotion,
            },
            fanlist_min: fan_before[[c, t]],
        });
    }

    let mut msps = Vec::with_capacity(cfg.n_groups * cfg.parties_per_group);
    for _ in 0..cfg.n_groups {
        let group = sample_group(&graph, cfg.group_size, &mut rng);
        for _ in 0..cfg.parties_per_group {
            msps.push(random_party(&graph, &group, cfg, &mut rng)?);
        }
    }

    let mut eval_cases = Vec::with_capacity(cfg.n_eval_cases);
    for _ in 0..cfg.n_eval_cases {
        let group = sample_group(&graph, cfg.group_size, &mut rng);
        let viewer = *group.choose(&mut rng).expect("nonempty group");
        let candidates = (0..cfg.eval_candidates)
            .map(|_| random_party(&graph, &group, cfg, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let score = |p: &Msp| {
            p.channels(viewer)
                .unwrap()
                .iter()
                .map(|&c| base_rate[[viewer, c]])
                .sum::<f64>()
        };
        let mut relevant = 0;
        for (i, p) in candidates.iter().enumerate() {
            if score(p) > score(&candidates[relevant]) {
                relevant = i;
            }
        }
        eval_cases.push(EvalCase {
            viewer,
            candidates,
            relevant,
        });
    }

    Ok(SynthData {
        config: cfg.clone(),
        graph,
        relations,
        donations,
        responses,
        events,
        planted: Planted {
            influence,
            decay: cfg.planted_decay,
            base_rate,
            bursts,
        },
        msps,
        eval_cases,
    })
}

/// A connected neighbourhood of a random viewer found by breadth-first
/// search over friendships, topped up with random viewers if the component
/// is too small.
fn sample_group(graph: &ViewerGraph, size: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = graph.n_viewers();
    let start = rng.random_range(0..n);
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    let mut group = Vec::with_capacity(size);
    while let Some(u) = queue.pop_front() {
        group.push(u);
        if group.len() == size {
            break;
        }
        let mut next: Vec<usize> = graph.neighbors(u).filter(|w| !seen.contains(w)).collect();
        next.shuffle(rng);
        for w in next {
            seen.insert(w);
            queue.push_back(w);
        }
    }
    while group.len() < size {
        let u = rng.random_range(0..n);
        if seen.insert(u) {
            group.push(u);
        }
    }
    group.sort_unstable();
    group
}

fn random_party(
    graph: &ViewerGraph,
    group: &[usize],
    cfg: &SynthConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Msp> {
    let channels: Vec<usize> = (0..cfg.n_channels).collect();
    let assignments = group
        .iter()
        .map(|&v| {
            let mut chans: Vec<usize> = channels.choose_multiple(rng, cfg.k).copied().collect();
            chans.sort_unstable();
            (v, chans)
        })
        .collect();
    let edges: Vec<(usize, usize)> = graph
        .edges()
        .filter(|(u, v)| group.binary_search(u).is_ok() && group.binary_search(v).is_ok())
        .collect();
    Msp::new(group.iter().copied(), edges, assignments)
}

/// Fraction of donations preceded, within `window` earlier slots, by another
/// viewer's donation to the same channel.
pub fn follow_fraction(td: &EventTensor, window: usize) -> f64 {
    let mut by_channel_slot: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for ((v, c, t), _) in td.iter() {
        by_channel_slot.entry((c, t)).or_default().push(v);
    }
    let mut follows = 0usize;
    let mut total = 0usize;
    for ((v, c, t), _) in td.iter() {
        total += 1;
        let preceded = (1..=window.min(t)).any(|k| {
            by_channel_slot
                .get(&(c, t - k))
                .is_some_and(|vs| vs.iter().any(|&u| u != v))
        });
        if preceded {
            follows += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        follows as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            n_viewers: 20,
            n_channels: 4,
            n_slots: 30,
            n_groups: 3,
            n_eval_cases: 3,
            eval_candidates: 4,
            base_donation_rate: 0.05,
            ..Default::default()
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(generate(&SynthConfig {
            n_viewers: 0,
            ..small()
        })
        .is_err());
        assert!(generate(&SynthConfig {
            edge_prob: 1.5,
            ..small()
        })
        .is_err());
        assert!(generate(&SynthConfig { k: 9, ..small() }).is_err());
    }

    #[test]
    fn is_deterministic() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.donations, b.donations);
        assert_eq!(a.responses, b.responses);
        assert_eq!(a.events, b.events);
        assert_eq!(a.msps, b.msps);
        assert_eq!(a.planted, b.planted);
        let c = generate(&SynthConfig { seed: 7, ..small() }).unwrap();
        assert_ne!(a.donations, c.donations);
    }

    #[test]
    fn outputs_are_consistent() {
        let d = generate(&small()).unwrap();
        assert!(d.donations.nnz() > 0);
        assert_eq!(d.donations.nnz(), d.responses.nnz());
        assert_eq!(d.events.len(), d.donations.nnz());
        for e in &d.events {
            assert_eq!(d.donations.get((e.viewer, e.channel, e.slot)), e.amount);
            assert!(e.message.validate(d.schema()).is_ok());
        }
        assert!(d.responses.iter().all(|(_, y)| (0.0..=5.0).contains(&y)));
        assert!(d.msps.iter().all(|p| p.k() == 2 && p.group().len() == 4));
        for case in &d.eval_cases {
            assert!(case.candidates.iter().all(|p| p.contains(case.viewer)));
        }
        assert!(d.sensor_data().validate().is_ok());
    }

    #[test]
    fn unsuppressed_response_depends_only_on_amount() {
        let cfg = SynthConfig {
            suppression_strength: 0.0,
            ..small()
        };
        let d = generate(&cfg).unwrap();
        for e in &d.events {
            let y = d.responses.get((e.viewer, e.channel, e.slot));
            assert_eq!(y, (cfg.response_base * e.amount.ln_1p()).clamp(0.0, 5.0));
        }
    }

    #[test]
    fn follow_fraction_by_hand() {
        let mut td = EventTensor::new(Dims::new(3, 2, 5));
        td.set((0, 0, 0), 1.0).unwrap();
        td.set((1, 0, 1), 1.0).unwrap(); // follows viewer 0
        td.set((0, 0, 2), 1.0).unwrap(); // follows viewer 1
        td.set((2, 1, 2), 1.0).unwrap(); // other channel, alone
        td.set((2, 0, 4), 1.0).unwrap(); // gap of two slots
        assert_eq!(follow_fraction(&td, 1), 0.4);
        assert_eq!(follow_fraction(&td, 2), 0.6);
    }
}
