//! Dense 2-D network primitives with hand-written backward passes.
//!
//! Everything is generic over the float type: training runs in `f32`,
//! gradient checking runs the identical code in `f64`. Activations are
//! `[channels, height, width]` in standard layout; convolutions go through
//! im2col plus a single GEMM so the matrix multiply dominates.

use ndarray::{Array2, Array3, ArrayView2, Axis, NdFloat};

/// Offsets `(dy, dx)` for an odd `k x k` kernel, row-major.
fn kernel_offsets(k: usize) -> Vec<(isize, isize)> {
    let r = (k / 2) as isize;
    let mut offs = Vec::with_capacity(k * k);
    for dy in -r..=r {
        for dx in -r..=r {
            offs.push((dy, dx));
        }
    }
    offs
}

/// Unfolds `x` into `[c * k^2, h * w]` patch columns with zero padding `k/2`.
pub fn im2col<T: NdFloat>(x: &Array3<T>, k: usize) -> Array2<T> {
    let (c, h, w) = x.dim();
    let kk = k * k;
    let mut cols = Array2::zeros((c * kk, h * w));
    let offs = kernel_offsets(k);
    for ci in 0..c {
        let plane = x.index_axis(Axis(0), ci);
        let plane_slice = plane.to_slice().expect("activations are standard layout");
        for (ki, &(dy, dx)) in offs.iter().enumerate() {
            let mut row = cols.row_mut(ci * kk + ki);
            let row_slice = row.as_slice_mut().expect("row of standard-layout matrix");
            let (j0, j1) = x_range(w, dx);
            for i in 0..h {
                let si = i as isize + dy;
                if si < 0 || si >= h as isize {
                    continue;
                }
                let src = &plane_slice[si as usize * w..(si as usize + 1) * w];
                let dst = &mut row_slice[i * w + j0..i * w + j1];
                dst.copy_from_slice(&src[(j0 as isize + dx) as usize..(j1 as isize + dx) as usize]);
            }
        }
    }
    cols
}

/// Valid destination column range for a horizontal kernel offset.
fn x_range(w: usize, dx: isize) -> (usize, usize) {
    let j0 = (-dx).max(0) as usize;
    let j1 = (w as isize - dx.max(0)) as usize;
    (j0, j1)
}

/// Folds patch-column gradients back onto the input: the adjoint of
/// [`im2col`].
pub fn col2im<T: NdFloat>(cols_grad: &Array2<T>, c: usize, h: usize, w: usize, k: usize) -> Array3<T> {
    let kk = k * k;
    debug_assert_eq!(cols_grad.dim(), (c * kk, h * w));
    let mut dx_arr = Array3::zeros((c, h, w));
    let offs = kernel_offsets(k);
    for ci in 0..c {
        let mut plane = dx_arr.index_axis_mut(Axis(0), ci);
        let plane_slice = plane.as_slice_mut().expect("standard layout");
        for (ki, &(dy, dx)) in offs.iter().enumerate() {
            let row = cols_grad.row(ci * kk + ki);
            let row_slice = row.to_slice().expect("standard layout");
            let (j0, j1) = x_range(w, dx);
            for i in 0..h {
                let si = i as isize + dy;
                if si < 0 || si >= h as isize {
                    continue;
                }
                let dst =
                    &mut plane_slice[si as usize * w + (j0 as isize + dx) as usize
                        ..si as usize * w + (j1 as isize + dx) as usize];
                let src = &row_slice[i * w + j0..i * w + j1];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = *d + *s;
                }
            }
        }
    }
    dx_arr
}

/// Same-padding `k x k` convolution: `weights [c_out, c_in * k^2]`,
/// `bias [c_out]`.
pub fn conv_forward<T: NdFloat>(
    x: &Array3<T>,
    weights: ArrayView2<T>,
    bias: &[T],
    k: usize,
) -> Array3<T> {
    let (_, h, w) = x.dim();
    let c_out = weights.nrows();
    let mut out2 = if k == 1 {
        let x2 = flatten(x);
        weights.dot(&x2)
    } else {
        let cols = im2col(x, k);
        weights.dot(&cols)
    };
    for (mut row, &b) in out2.rows_mut().into_iter().zip(bias) {
        row.mapv_inplace(|v| v + b);
    }
    out2.into_shape_with_order((c_out, h, w)).expect("reshape")
}

/// Gradients of [`conv_forward`]: returns `(d_weights, d_bias, d_input)`.
/// Recomputes im2col of the saved input instead of caching it.
pub fn conv_backward<T: NdFloat>(
    x: &Array3<T>,
    weights: ArrayView2<T>,
    d_out: &Array3<T>,
    k: usize,
) -> (Array2<T>, Vec<T>, Array3<T>) {
    let (c_in, h, w) = x.dim();
    let d_out2 = flatten(d_out);
    let d_bias: Vec<T> = d_out2.rows().into_iter().map(|r| r.sum()).collect();
    if k == 1 {
        let x2 = flatten(x);
        let d_w = d_out2.dot(&x2.t());
        let d_x2 = weights.t().dot(&d_out2);
        let d_x = d_x2.into_shape_with_order((c_in, h, w)).expect("reshape");
        (d_w, d_bias, d_x)
    } else {
        let cols = im2col(x, k);
        let d_w = d_out2.dot(&cols.t());
        let d_cols = weights.t().dot(&d_out2);
        let d_x = col2im(&d_cols, c_in, h, w, k);
        (d_w, d_bias, d_x)
    }
}

fn flatten<T: NdFloat>(x: &Array3<T>) -> ArrayView2<'_, T> {
    let (c, h, w) = x.dim();
    x.view()
        .into_shape_with_order((c, h * w))
        .expect("standard layout flatten")
}

/// 2x2 max pooling with stride 2; the returned memo holds the winning
/// in-block offset (`dy * 2 + dx`) for the backward pass. Ties take the
/// first cell in scan order.
pub fn maxpool_forward<T: NdFloat>(x: &Array3<T>) -> (Array3<T>, Array3<u8>) {
    let (c, h, w) = x.dim();
    debug_assert!(h % 2 == 0 && w % 2 == 0);
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Array3::zeros((c, oh, ow));
    let mut memo = Array3::zeros((c, oh, ow));
    for ci in 0..c {
        for i in 0..oh {
            for j in 0..ow {
                let mut best = x[[ci, 2 * i, 2 * j]];
                let mut best_off = 0u8;
                for (off, (dy, dx)) in [(0, 0), (0, 1), (1, 0), (1, 1)].iter().enumerate() {
                    let v = x[[ci, 2 * i + dy, 2 * j + dx]];
                    if v > best {
                        best = v;
                        best_off = off as u8;
                    }
                }
                out[[ci, i, j]] = best;
                memo[[ci, i, j]] = best_off;
            }
        }
    }
    (out, memo)
}

pub fn maxpool_backward<T: NdFloat>(d_out: &Array3<T>, memo: &Array3<u8>, h: usize, w: usize) -> Array3<T> {
    let (c, oh, ow) = d_out.dim();
    let mut dx = Array3::zeros((c, h, w));
    for ci in 0..c {
        for i in 0..oh {
            for j in 0..ow {
                let off = memo[[ci, i, j]] as usize;
                let (dy, dxo) = (off / 2, off % 2);
                dx[[ci, 2 * i + dy, 2 * j + dxo]] = dx[[ci, 2 * i + dy, 2 * j + dxo]] + d_out[[ci, i, j]];
            }
        }
    }
    dx
}

/// Nearest-neighbor 2x upsampling.
pub fn upsample_forward<T: NdFloat>(x: &Array3<T>) -> Array3<T> {
    let (c, h, w) = x.dim();
    Array3::from_shape_fn((c, 2 * h, 2 * w), |(ci, i, j)| x[[ci, i / 2, j / 2]])
}

/// Adjoint of nearest-neighbor upsampling: sums each 2x2 block.
pub fn upsample_backward<T: NdFloat>(d_out: &Array3<T>) -> Array3<T> {
    let (c, h2, w2) = d_out.dim();
    let (h, w) = (h2 / 2, w2 / 2);
    let mut dx = Array3::zeros((c, h, w));
    for ci in 0..c {
        for i in 0..h2 {
            for j in 0..w2 {
                dx[[ci, i / 2, j / 2]] = dx[[ci, i / 2, j / 2]] + d_out[[ci, i, j]];
            }
        }
    }
    dx
}

pub fn relu_forward<T: NdFloat>(x: &mut Array3<T>) {
    x.mapv_inplace(|v| if v > T::zero() { v } else { T::zero() });
}

/// Masks `d` by the post-activation output (`out > 0`), in place.
pub fn relu_backward<T: NdFloat>(d: &mut Array3<T>, out: &Array3<T>) {
    d.zip_mut_with(out, |g, &o| {
        if o <= T::zero() {
            *g = T::zero();
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn im2col_center_tap_is_identity() {
        let x = Array3::from_shape_fn((1, 3, 4), |(_, i, j)| (i * 4 + j) as f64);
        let cols = im2col(&x, 3);
        // row 4 is (dy, dx) = (0, 0)
        let center = cols.row(4);
        let flat: Vec<f64> = x.iter().copied().collect();
        assert_eq!(center.to_vec(), flat);
    }

    #[test]
    fn im2col_pads_with_zeros_at_borders() {
        let x = Array3::from_elem((1, 2, 2), 1.0f64);
        let cols = im2col(&x, 3);
        // row 0 is (dy, dx) = (-1, -1): only pixel (1,1) sees value x[0,0]
        assert_eq!(cols.row(0).to_vec(), vec![0.0, 0.0, 0.0, 1.0]);
        // row 8 is (1, 1): only pixel (0,0) sees x[1,1]
        assert_eq!(cols.row(8).to_vec(), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), g> == <x, col2im(g)> for random x, g
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let x = Array3::from_shape_fn((2, 4, 6), |_| rng.random_range(-1.0f64..1.0));
        let g = Array2::from_shape_fn((2 * 9, 24), |_| rng.random_range(-1.0f64..1.0));
        let lhs: f64 = im2col(&x, 3)
            .iter()
            .zip(g.iter())
            .map(|(a, b)| a * b)
            .sum();
        let rhs: f64 = x
            .iter()
            .zip(col2im(&g, 2, 4, 6, 3).iter())
            .map(|(a, b)| a * b)
            .sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn conv_identity_kernel_reproduces_input() {
        let x = Array3::from_shape_fn((1, 4, 4), |(_, i, j)| (i * 4 + j) as f64 * 0.5);
        // 3x3 kernel with 1 at the center
        let mut w = Array2::zeros((1, 9));
        w[[0, 4]] = 1.0;
        let out = conv_forward(&x, w.view(), &[0.0], 3);
        assert_eq!(out, x);
    }

    #[test]
    fn maxpool_picks_maxima_and_routes_gradient() {
        let x = array![[
            [1.0f64, 2.0, 0.0, 0.0],
            [3.0, 0.0, 0.0, 5.0],
            [0.0, 0.0, 7.0, 7.0],
            [0.0, 6.0, 7.0, 7.0]
        ]];
        let (out, memo) = maxpool_forward(&x);
        assert_eq!(out, array![[[3.0, 5.0], [6.0, 7.0]]]);
        let d_out = array![[[1.0f64, 1.0], [1.0, 1.0]]];
        let dx = maxpool_backward(&d_out, &memo, 4, 4);
        assert_eq!(dx[[0, 1, 0]], 1.0);
        assert_eq!(dx[[0, 1, 3]], 1.0);
        assert_eq!(dx[[0, 3, 1]], 1.0);
        // tie in the bottom-right block goes to the first scan position
        assert_eq!(dx[[0, 2, 2]], 1.0);
        assert_eq!(dx[[0, 2, 3]], 0.0);
    }

    #[test]
    fn upsample_roundtrip_shapes_and_adjoint() {
        let x = array![[[1.0f64, 2.0], [3.0, 4.0]]];
        let up = upsample_forward(&x);
        assert_eq!(up.dim(), (1, 4, 4));
        assert_eq!(up[[0, 0, 1]], 1.0);
        assert_eq!(up[[0, 3, 3]], 4.0);
        let back = upsample_backward(&up);
        assert_eq!(back, array![[[4.0, 8.0], [12.0, 16.0]]]);
    }
}
