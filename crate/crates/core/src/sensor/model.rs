use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::d2r::{training_samples, D2rSample, DonationEvent, FeatureSchema};
use crate::error::{dim_err, MarsError, Result};
use crate::graph::{SignedStreamerMatrix, ViewerGraph};
use crate::sensor::config::SensorConfig;
use crate::tensor::{Dims, EventTensor, FactorSet};

/// Trained (or initialized) SENSOR parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorModel {
    pub factors: FactorSet,
    /// Directed social influence, `influence[[u, v]]` is the pull of `u` on
    /// `v`. The diagonal is never read.
    pub influence: Array2<f64>,
    /// Exponential decay of influence per slot, kept nonnegative.
    pub decay: f64,
    /// Regression weights over the feature vector.
    pub theta: Array1<f64>,
    pub epsilon: f64,
    /// Window length the model was trained with; reused for features at
    /// inference time.
    pub window: usize,
    pub emb_width: usize,
}

impl SensorModel {
    /// Seeded initialization: factors uniform in `[-init_scale, init_scale]`,
    /// influence 1 on friendships and `epsilon` elsewhere, `theta` zero.
    pub fn init(
        dims: Dims,
        graph: &ViewerGraph,
        schema: FeatureSchema,
        cfg: &SensorConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if graph.n_viewers() != dims.n_viewers {
            return dim_err("viewer graph size differs from tensor viewer count");
        }
        let a = cfg.alpha;
        let s = cfg.init_scale;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut uniform = |shape: usize| -> Vec<f64> {
            (0..shape)
                .map(|_| {
                    if s > 0.0 {
                        rng.random_range(-s..=s)
                    } else {
                        0.0
                    }
                })
                .collect()
        };
        let factors = FactorSet {
            viewer: Array2::from_shape_vec((dims.n_viewers, a), uniform(dims.n_viewers * a))
                .unwrap(),
            channel: Array2::from_shape_vec((dims.n_channels, a), uniform(dims.n_channels * a))
                .unwrap(),
            slot: Array2::from_shape_vec((dims.n_slots, a), uniform(dims.n_slots * a)).unwrap(),
            core_donation: Array3::from_shape_vec((a, a, a), uniform(a * a * a)).unwrap(),
            core_response: Array3::from_shape_vec((a, a, a), uniform(a * a * a)).unwrap(),
        };
        Ok(SensorModel {
            factors,
            influence: initial_influence(graph, cfg.epsilon),
            decay: cfg.init_decay,
            theta: Array1::zeros(schema.width(a)),
            epsilon: cfg.epsilon,
            window: cfg.window,
            emb_width: schema.emb_width,
        })
    }

    pub fn schema(&self) -> FeatureSchema {
        FeatureSchema {
            emb_width: self.emb_width,
        }
    }

    pub fn alpha(&self) -> usize {
        self.factors.alpha()
    }

    pub fn dims(&self) -> Dims {
        self.factors.dims()
    }

    pub fn validate(&self) -> Result<()> {
        self.factors.validate()?;
        let n = self.factors.viewer.nrows();
        if self.influence.dim() != (n, n) {
            return dim_err("influence matrix must be n_viewers x n_viewers");
        }
        if self.theta.len() != self.schema().width(self.alpha()) {
            return dim_err("theta width does not match the feature schema");
        }
        if !(self.decay.is_finite() && self.decay >= 0.0) {
            return Err(MarsError::InvalidInput(
                "decay must be finite and nonnegative".into(),
            ));
        }
        if self
            .influence
            .iter()
            .chain(self.theta.iter())
            .any(|x| !x.is_finite())
        {
            return Err(MarsError::InvalidInput(
                "influence and theta must be finite".into(),
            ));
        }
        if self.window == 0 {
            return Err(MarsError::InvalidInput("window must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of learnable scalars, in [`SensorModel::to_flat`] order.
    pub fn n_params(&self) -> usize {
        let f = &self.factors;
        f.viewer.len()
            + f.channel.len()
            + f.slot.len()
            + f.core_donation.len()
            + f.core_response.len()
            + self.influence.len()
            + 1
            + self.theta.len()
    }

    /// Learnables flattened row-major in the order viewer, channel, slot,
    /// donation core, response core, influence, decay, theta.
    pub fn to_flat(&self) -> Vec<f64> {
        let f = &self.factors;
        let mut out = Vec::with_capacity(self.n_params());
        out.extend(f.viewer.iter());
        out.extend(f.channel.iter());
        out.extend(f.slot.iter());
        out.extend(f.core_donation.iter());
        out.extend(f.core_response.iter());
        out.extend(self.influence.iter());
        out.push(self.decay);
        out.extend(self.theta.iter());
        out
    }

    /// Inverse of [`SensorModel::to_flat`].
    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params(), "flat parameter length");
        let mut it = flat.iter().copied();
        let f = &mut self.factors;
        for x in f
            .viewer
            .iter_mut()
            .chain(f.channel.iter_mut())
            .chain(f.slot.iter_mut())
            .chain(f.core_donation.iter_mut())
            .chain(f.core_response.iter_mut())
            .chain(self.influence.iter_mut())
        {
            *x = it.next().unwrap();
        }
        self.decay = it.next().unwrap();
        for x in self.theta.iter_mut() {
            *x = it.next().unwrap();
        }
    }
}

/// Influence matrix before training: 1 on friendships, `epsilon` on other
/// off-diagonal pairs, 0 on the (unused) diagonal.
pub fn initial_influence(graph: &ViewerGraph, epsilon: f64) -> Array2<f64> {
    let n = graph.n_viewers();
    let mut w = Array2::from_elem((n, n), epsilon);
    for i in 0..n {
        w[[i, i]] = 0.0;
    }
    for (u, v) in graph.edges() {
        w[[u, v]] = 1.0;
        w[[v, u]] = 1.0;
    }
    w
}

/// Gradient of the SENSOR objective, shaped like the model's learnables.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorGrad {
    pub viewer: Array2<f64>,
    pub channel: Array2<f64>,
    pub slot: Array2<f64>,
    pub core_donation: Array3<f64>,
    pub core_response: Array3<f64>,
    pub influence: Array2<f64>,
    pub decay: f64,
    pub theta: Array1<f64>,
}

impl SensorGrad {
    pub fn zeros_like(m: &SensorModel) -> Self {
        let f = &m.factors;
        SensorGrad {
            viewer: Array2::zeros(f.viewer.dim()),
            channel: Array2::zeros(f.channel.dim()),
            slot: Array2::zeros(f.slot.dim()),
            core_donation: Array3::zeros(f.core_donation.dim()),
            core_response: Array3::zeros(f.core_response.dim()),
            influence: Array2::zeros(m.influence.dim()),
            decay: 0.0,
            theta: Array1::zeros(m.theta.len()),
        }
    }

    /// Same layout as [`SensorModel::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend(self.viewer.iter());
        out.extend(self.channel.iter());
        out.extend(self.slot.iter());
        out.extend(self.core_donation.iter());
        out.extend(self.core_response.iter());
        out.extend(self.influence.iter());
        out.push(self.decay);
        out.extend(self.theta.iter());
        out
    }
}

/// Everything the SENSOR objective reads besides the model.
#[derive(Debug, Clone)]
pub struct SensorData {
    pub donations: EventTensor,
    pub responses: EventTensor,
    pub graph: ViewerGraph,
    pub relations: SignedStreamerMatrix,
    pub events: Vec<DonationEvent>,
    pub schema: FeatureSchema,
}

impl SensorData {
    pub fn dims(&self) -> Dims {
        self.donations.dims()
    }

    pub fn validate(&self) -> Result<()> {
        let dims = self.donations.dims();
        if self.responses.dims() != dims {
            return dim_err(format!(
                "donation tensor {:?} and response tensor {:?} differ",
                dims.shape(),
                self.responses.dims().shape()
            ));
        }
        if self.graph.n_viewers() != dims.n_viewers {
            return dim_err("viewer graph size differs from tensor viewer count");
        }
        if self.relations.n_channels() != dims.n_channels {
            return dim_err("streamer relation matrix size differs from tensor channel count");
        }
        Ok(())
    }

    /// Restricts the data to slots `< n_slots` (events included).
    pub fn truncate_slots(&self, n_slots: usize) -> SensorData {
        SensorData {
            donations: self.donations.truncate_slots(n_slots),
            responses: self.responses.truncate_slots(n_slots),
            graph: self.graph.clone(),
            relations: self.relations.clone(),
            events: self
                .events
                .iter()
                .filter(|e| e.slot < n_slots)
                .cloned()
                .collect(),
            schema: self.schema,
        }
    }

    pub fn samples(&self, window: usize) -> Result<Vec<D2rSample>> {
        training_samples(&self.donations, &self.events, self.schema, window)
    }
}
