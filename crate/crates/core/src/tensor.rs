//! Three-way tensors: sparse event storage, dense reconstructions, mode-n
//! products and Tucker reconstruction.

use std::collections::BTreeMap;

use ndarray::{Array2, Array3, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, MarsError, Result};

/// Dense `viewer x channel x slot` tensor (standard row-major layout).
pub type Dense3 = Array3<f64>;

/// Index of a tensor cell: `(viewer, channel, slot)`.
pub type Cell = (usize, usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Viewer,
    Channel,
    Slot,
}

impl Mode {
    pub fn axis(self) -> usize {
        match self {
            Mode::Viewer => 0,
            Mode::Channel => 1,
            Mode::Slot => 2,
        }
    }

    /// Parses the 1-based mode numbering used in the usual tensor notation.
    pub fn from_number(n: usize) -> Result<Mode> {
        match n {
            1 => Ok(Mode::Viewer),
            2 => Ok(Mode::Channel),
            3 => Ok(Mode::Slot),
            _ => Err(MarsError::InvalidInput(format!(
                "mode must be 1, 2 or 3, got {n}"
            ))),
        }
    }
}

/// Dimensions of an event tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n_viewers: usize,
    pub n_channels: usize,
    pub n_slots: usize,
}

impl Dims {
    pub fn new(n_viewers: usize, n_channels: usize, n_slots: usize) -> Self {
        Dims {
            n_viewers,
            n_channels,
            n_slots,
        }
    }

    pub fn cells(&self) -> usize {
        self.n_viewers * self.n_channels * self.n_slots
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.n_viewers, self.n_channels, self.n_slots)
    }

    pub fn check(&self, (v, c, t): Cell) -> Result<()> {
        if v >= self.n_viewers || c >= self.n_channels || t >= self.n_slots {
            return Err(MarsError::IndexOutOfRange(format!(
                "cell ({v}, {c}, {t}) outside {}x{}x{}",
                self.n_viewers, self.n_channels, self.n_slots
            )));
        }
        Ok(())
    }
}

/// Sparse nonnegative `viewer x channel x slot` tensor. Absent cells are zero.
///
/// Used for both the donation tensor (amounts) and the response tensor
/// (response quality). Entries are kept ordered so that every iteration over
/// the tensor is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTensor {
    dims: Dims,
    entries: BTreeMap<Cell, f64>,
}

impl EventTensor {
    pub fn new(dims: Dims) -> Self {
        EventTensor {
            dims,
            entries: BTreeMap::new(),
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Sets a cell. Storing zero removes the entry.
    pub fn set(&mut self, cell: Cell, value: f64) -> Result<()> {
        self.dims.check(cell)?;
        if !value.is_finite() || value < 0.0 {
            return Err(MarsError::InvalidInput(format!(
                "tensor values must be finite and nonnegative, got {value} at {cell:?}"
            )));
        }
        if value == 0.0 {
            self.entries.remove(&cell);
        } else {
            self.entries.insert(cell, value);
        }
        Ok(())
    }

    /// Adds to a cell.
    pub fn add(&mut self, cell: Cell, value: f64) -> Result<()> {
        let current = self.get(cell);
        self.set(cell, current + value)
    }

    pub fn get(&self, cell: Cell) -> f64 {
        self.entries.get(&cell).copied().unwrap_or(0.0)
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Nonzero entries in `(viewer, channel, slot)` order.
    pub fn iter(&self) -> impl Iterator<Item = (Cell, f64)> + '_ {
        self.entries.iter().map(|(&k, &v)| (k, v))
    }

    pub fn to_dense(&self) -> Dense3 {
        let mut out = Dense3::zeros(self.dims.shape());
        for ((v, c, t), x) in self.iter() {
            out[[v, c, t]] = x;
        }
        out
    }

    /// Keeps only slots `< n_slots`, shrinking the slot dimension.
    pub fn truncate_slots(&self, n_slots: usize) -> EventTensor {
        let dims = Dims {
            n_slots: n_slots.min(self.dims.n_slots),
            ..self.dims
        };
        let entries = self
            .entries
            .iter()
            .filter(|((_, _, t), _)| *t < dims.n_slots)
            .map(|(&k, &v)| (k, v))
            .collect();
        EventTensor { dims, entries }
    }

    /// Per-channel, per-slot totals over all viewers (`n_channels x n_slots`).
    pub fn channel_slot_totals(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.dims.n_channels, self.dims.n_slots));
        for ((_, c, t), x) in self.iter() {
            out[[c, t]] += x;
        }
        out
    }

    /// Per-slot totals over all viewers and channels.
    pub fn slot_totals(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dims.n_slots];
        for ((_, _, t), x) in self.iter() {
            out[t] += x;
        }
        out
    }
}

/// Latent factors shared by the donation and response reconstructions.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSet {
    /// `n_viewers x alpha`
    pub viewer: Array2<f64>,
    /// `n_channels x alpha`
    pub channel: Array2<f64>,
    /// `n_slots x alpha`
    pub slot: Array2<f64>,
    /// `alpha x alpha x alpha`
    pub core_donation: Array3<f64>,
    /// `alpha x alpha x alpha`
    pub core_response: Array3<f64>,
}

impl FactorSet {
    pub fn zeros(dims: Dims, alpha: usize) -> Self {
        FactorSet {
            viewer: Array2::zeros((dims.n_viewers, alpha)),
            channel: Array2::zeros((dims.n_channels, alpha)),
            slot: Array2::zeros((dims.n_slots, alpha)),
            core_donation: Array3::zeros((alpha, alpha, alpha)),
            core_response: Array3::zeros((alpha, alpha, alpha)),
        }
    }

    pub fn alpha(&self) -> usize {
        self.viewer.ncols()
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.viewer.nrows(), self.channel.nrows(), self.slot.nrows())
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.alpha();
        if a == 0 {
            return Err(MarsError::InvalidInput(
                "latent dimension must be at least 1".into(),
            ));
        }
        if self.channel.ncols() != a || self.slot.ncols() != a {
            return dim_err("factor matrices must share the latent dimension");
        }
        for core in [&self.core_donation, &self.core_response] {
            if core.dim() != (a, a, a) {
                return dim_err(format!(
                    "core tensor must be {a}x{a}x{a}, got {:?}",
                    core.dim()
                ));
            }
        }
        let finite = self.viewer.iter().all(|x| x.is_finite())
            && self.channel.iter().all(|x| x.is_finite())
            && self.slot.iter().all(|x| x.is_finite())
            && self.core_donation.iter().all(|x| x.is_finite())
            && self.core_response.iter().all(|x| x.is_finite());
        if !finite {
            return Err(MarsError::InvalidInput(
                "factor entries must be finite".into(),
            ));
        }
        Ok(())
    }

    pub fn reconstruct_donation(&self) -> Result<Dense3> {
        tucker_reconstruct(&self.core_donation, &self.viewer, &self.channel, &self.slot)
    }

    pub fn reconstruct_response(&self) -> Result<Dense3> {
        tucker_reconstruct(&self.core_response, &self.viewer, &self.channel, &self.slot)
    }
}

/// Mode-n product `t x_mode m`: contracts `t` along `mode` with the columns of
/// `m`, so the output size along `mode` is `m.nrows()`.
pub fn mode_n_product(t: &Dense3, m: &Array2<f64>, mode: Mode) -> Result<Dense3> {
    let (i1, i2, i3) = t.dim();
    let axis = mode.axis();
    if m.ncols() != t.len_of(Axis(axis)) {
        return dim_err(format!(
            "mode-{} product needs a matrix with {} columns, got {}",
            axis + 1,
            t.len_of(Axis(axis)),
            m.ncols()
        ));
    }
    let j = m.nrows();
    let t = t.as_standard_layout();
    let out = match mode {
        Mode::Viewer => {
            let flat = t
                .view()
                .into_shape_with_order((i1, i2 * i3))
                .expect("standard layout");
            row_major(m.dot(&flat))
                .into_shape_with_order((j, i2, i3))
                .expect("contiguous")
        }
        Mode::Slot => {
            let flat = t
                .view()
                .into_shape_with_order((i1 * i2, i3))
                .expect("standard layout");
            row_major(flat.dot(&m.t()))
                .into_shape_with_order((i1, i2, j))
                .expect("contiguous")
        }
        Mode::Channel => {
            let mut out = Dense3::zeros((i1, j, i3));
            for (src, mut dst) in t.outer_iter().zip(out.outer_iter_mut()) {
                dst.assign(&m.dot(&src));
            }
            out
        }
    };
    Ok(out)
}

/// Matrix products may come back column-major for degenerate shapes; the
/// reshapes below need row-major storage.
pub(crate) fn row_major(a: Array2<f64>) -> Array2<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

/// Tucker reconstruction `core x1 viewer x2 channel x3 slot`.
pub fn tucker_reconstruct(
    core: &Dense3,
    viewer: &Array2<f64>,
    channel: &Array2<f64>,
    slot: &Array2<f64>,
) -> Result<Dense3> {
    let x = mode_n_product(core, slot, Mode::Slot)?;
    let x = mode_n_product(&x, channel, Mode::Channel)?;
    mode_n_product(&x, viewer, Mode::Viewer)
}

/// Squared Frobenius norm of `a - b`.
pub fn frob_sq_diff(a: &Dense3, b: &Dense3) -> Result<f64> {
    if a.dim() != b.dim() {
        return dim_err(format!("shapes {:?} and {:?} differ", a.dim(), b.dim()));
    }
    let mut acc = 0.0;
    Zip::from(a).and(b).for_each(|&x, &y| {
        let d = x - y;
        acc += d * d;
    });
    Ok(acc)
}

/// Squared Frobenius norm of `dense - sparse` without densifying `sparse`.
pub fn frob_sq_diff_sparse(dense: &Dense3, sparse: &EventTensor) -> Result<f64> {
    if dense.dim() != sparse.dims().shape() {
        return dim_err(format!(
            "shapes {:?} and {:?} differ",
            dense.dim(),
            sparse.dims().shape()
        ));
    }
    let mut acc = dense.iter().map(|x| x * x).sum::<f64>();
    for ((v, c, t), x) in sparse.iter() {
        let y = dense[[v, c, t]];
        acc += (y - x) * (y - x) - y * y;
    }
    Ok(acc.max(0.0))
}
