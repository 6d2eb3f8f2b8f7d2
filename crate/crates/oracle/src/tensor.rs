use ndarray::{Array2, Array3};

use mars_core::tensor::EventTensor;

/// `t x_axis m` with explicit index loops. `m` is `J x I_axis`.
pub fn mode_product_naive(t: &Array3<f64>, m: &Array2<f64>, axis: usize) -> Array3<f64> {
    let (i1, i2, i3) = t.dim();
    let j = m.nrows();
    let shape = match axis {
        0 => (j, i2, i3),
        1 => (i1, j, i3),
        2 => (i1, i2, j),
        _ => panic!("axis {axis} out of range"),
    };
    let mut out = Array3::zeros(shape);
    for ((a, b, c), o) in out.indexed_iter_mut() {
        let mut acc = 0.0;
        match axis {
            0 => (0..i1).for_each(|k| acc += m[[a, k]] * t[[k, b, c]]),
            1 => (0..i2).for_each(|k| acc += m[[b, k]] * t[[a, k, c]]),
            _ => (0..i3).for_each(|k| acc += m[[c, k]] * t[[a, b, k]]),
        }
        *o = acc;
    }
    out
}

/// `X(v,c,t) = sum_{a,b,e} O(a,b,e) V(v,a) C(c,b) T(t,e)`, six nested loops.
pub fn tucker_naive(
    core: &Array3<f64>,
    v: &Array2<f64>,
    c: &Array2<f64>,
    t: &Array2<f64>,
) -> Array3<f64> {
    let (ra, rb, re) = core.dim();
    let mut out = Array3::zeros((v.nrows(), c.nrows(), t.nrows()));
    for i in 0..v.nrows() {
        for j in 0..c.nrows() {
            for k in 0..t.nrows() {
                let mut acc = 0.0;
                for a in 0..ra {
                    for b in 0..rb {
                        for e in 0..re {
                            acc += core[[a, b, e]] * v[[i, a]] * c[[j, b]] * t[[k, e]];
                        }
                    }
                }
                out[[i, j, k]] = acc;
            }
        }
    }
    out
}

pub fn frob_naive(a: &Array3<f64>, b: &Array3<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn dense_of(t: &EventTensor) -> Array3<f64> {
    let (nv, nc, nt) = t.dims().shape();
    Array3::from_shape_fn((nv, nc, nt), |(v, c, s)| t.get((v, c, s)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn mode_product_by_hand() {
        let t = Array3::from_shape_fn((2, 1, 1), |(i, _, _)| (i + 1) as f64);
        let m = array![[1.0, 1.0], [2.0, -1.0]];
        let out = mode_product_naive(&t, &m, 0);
        assert_eq!(out[[0, 0, 0]], 3.0);
        assert_eq!(out[[1, 0, 0]], 0.0);
    }

    #[test]
    fn tucker_rank_one() {
        let core = Array3::from_elem((1, 1, 1), 2.0);
        let v = array![[1.0], [3.0]];
        let c = array![[2.0]];
        let t = array![[1.0], [-1.0]];
        let x = tucker_naive(&core, &v, &c, &t);
        assert_eq!(x[[1, 0, 1]], -12.0);
        assert_eq!(frob_naive(&x, &x), 0.0);
    }
}
