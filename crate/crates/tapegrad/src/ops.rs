//! Numeric kernels shared by the forward and backward passes.
//!
//! Every kernel is a pure function over flat buffers. Guards keep outputs
//! finite on finite inputs: `exp` clamps its argument to the representable
//! range and `log` floors its argument at `LOG_EPS`.

/// Floor applied inside `log`; keeps gradients and values finite near zero.
pub const LOG_EPS: f64 = 1e-12;

/// `exp` argument clamp; `exp(709.0)` is the largest finite f64 exponential.
pub const EXP_CLAMP: f64 = 709.0;

#[inline]
pub fn exp_guarded(x: f64) -> f64 {
    x.clamp(-EXP_CLAMP, EXP_CLAMP).exp()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    // Split by sign so the exponential argument is always non-positive.
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

// ── matmul ──────────────────────────────────────────────────────────────

/// `out[m,n] = a[m,k] * b[k,n]`, accumulating in ikj order for locality.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    out.fill(0.0);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out[m,k] += g[m,n] * b[k,n]^T`; the matmul gradient w.r.t. its left input.
pub fn matmul_acc_nt(g: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), m * k);
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        let orow = &mut out[i * k..(i + 1) * k];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let mut acc = 0.0;
            for (gv, bv) in grow.iter().zip(brow) {
                acc += gv * bv;
            }
            orow[p] += acc;
        }
    }
}

/// `out[k,n] += a[m,k]^T * g[m,n]`; the matmul gradient w.r.t. its right input.
pub fn matmul_acc_tn(a: &[f64], g: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), k * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let grow = &g[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
}

// ── conv1d ──────────────────────────────────────────────────────────────

/// Output length of a 1-D cross-correlation.
pub fn conv1d_out_len(time: usize, width: usize, stride: usize, padding: usize) -> usize {
    (time + 2 * padding - width) / stride + 1
}

/// 1-D cross-correlation (no kernel flip).
///
/// `input` is `[c_in, time]`, `kernel` is `[c_out, c_in, width]`, `out` is
/// `[c_out, out_len]`. Out-of-range taps read as zero padding.
pub fn conv1d(
    input: &[f64],
    kernel: &[f64],
    c_in: usize,
    time: usize,
    c_out: usize,
    width: usize,
    stride: usize,
    padding: usize,
    out: &mut [f64],
) {
    let out_len = conv1d_out_len(time, width, stride, padding);
    debug_assert_eq!(out.len(), c_out * out_len);
    out.fill(0.0);
    for oc in 0..c_out {
        for ic in 0..c_in {
            let krow = &kernel[(oc * c_in + ic) * width..(oc * c_in + ic + 1) * width];
            let irow = &input[ic * time..(ic + 1) * time];
            let orow = &mut out[oc * out_len..(oc + 1) * out_len];
            for (t, o) in orow.iter_mut().enumerate() {
                let base = (t * stride) as isize - padding as isize;
                let mut acc = 0.0;
                for (w, &kv) in krow.iter().enumerate() {
                    let j = base + w as isize;
                    if j >= 0 && (j as usize) < time {
                        acc += kv * irow[j as usize];
                    }
                }
                *o += acc;
            }
        }
    }
}

/// Accumulates conv1d gradients for both the input and the kernel.
pub fn conv1d_backward(
    input: &[f64],
    kernel: &[f64],
    g: &[f64],
    c_in: usize,
    time: usize,
    c_out: usize,
    width: usize,
    stride: usize,
    padding: usize,
    d_input: Option<&mut [f64]>,
    d_kernel: Option<&mut [f64]>,
) {
    let out_len = conv1d_out_len(time, width, stride, padding);
    debug_assert_eq!(g.len(), c_out * out_len);
    if let Some(di) = d_input {
        for oc in 0..c_out {
            let grow = &g[oc * out_len..(oc + 1) * out_len];
            for ic in 0..c_in {
                let krow = &kernel[(oc * c_in + ic) * width..(oc * c_in + ic + 1) * width];
                let drow = &mut di[ic * time..(ic + 1) * time];
                for (t, &gv) in grow.iter().enumerate() {
                    if gv == 0.0 {
                        continue;
                    }
                    let base = (t * stride) as isize - padding as isize;
                    for (w, &kv) in krow.iter().enumerate() {
                        let j = base + w as isize;
                        if j >= 0 && (j as usize) < time {
                            drow[j as usize] += gv * kv;
                        }
                    }
                }
            }
        }
    }
    if let Some(dk) = d_kernel {
        for oc in 0..c_out {
            let grow = &g[oc * out_len..(oc + 1) * out_len];
            for ic in 0..c_in {
                let irow = &input[ic * time..(ic + 1) * time];
                let drow = &mut dk[(oc * c_in + ic) * width..(oc * c_in + ic + 1) * width];
                for (t, &gv) in grow.iter().enumerate() {
                    if gv == 0.0 {
                        continue;
                    }
                    let base = (t * stride) as isize - padding as isize;
                    for (w, d) in drow.iter_mut().enumerate() {
                        let j = base + w as isize;
                        if j >= 0 && (j as usize) < time {
                            *d += gv * irow[j as usize];
                        }
                    }
                }
            }
        }
    }
}

// ── softmax lanes ───────────────────────────────────────────────────────

/// Iterates a tensor as `(outer, lane, inner)` blocks along `axis` and applies
/// `f` to each lane described by `(start, stride)`.
pub fn for_each_lane(shape: &[usize], axis: usize, mut f: impl FnMut(usize, usize)) {
    let lane = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    for o in 0..outer {
        for i in 0..inner {
            f(o * lane * inner + i, inner);
        }
    }
    let _ = lane;
}

/// Max-subtracted softmax along `axis`.
pub fn softmax(x: &[f64], shape: &[usize], axis: usize, out: &mut [f64]) {
    let lane = shape[axis];
    for_each_lane(shape, axis, |start, stride| {
        let mut m = f64::NEG_INFINITY;
        for l in 0..lane {
            m = m.max(x[start + l * stride]);
        }
        let mut s = 0.0;
        for l in 0..lane {
            let e = (x[start + l * stride] - m).exp();
            out[start + l * stride] = e;
            s += e;
        }
        for l in 0..lane {
            out[start + l * stride] /= s;
        }
    });
}

/// Softmax backward: `dx = y * (g - sum(g * y))` per lane, accumulated.
pub fn softmax_backward(y: &[f64], g: &[f64], shape: &[usize], axis: usize, dx: &mut [f64]) {
    let lane = shape[axis];
    for_each_lane(shape, axis, |start, stride| {
        let mut dot = 0.0;
        for l in 0..lane {
            let i = start + l * stride;
            dot += g[i] * y[i];
        }
        for l in 0..lane {
            let i = start + l * stride;
            dx[i] += y[i] * (g[i] - dot);
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_hand_example() {
        // [[1,2],[3,4]] x [[5,6],[7,8]] = [[19,22],[43,50]]
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut out = [0.0; 4];
        matmul(&a, &b, 2, 2, 2, &mut out);
        assert_eq!(out, [19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn conv_sliding_sums() {
        // kernel [1,1] over [1,2,3,4], stride 1, no padding -> [3,5,7]
        let input = [1.0, 2.0, 3.0, 4.0];
        let kernel = [1.0, 1.0];
        let mut out = [0.0; 3];
        conv1d(&input, &kernel, 1, 4, 1, 2, 1, 0, &mut out);
        assert_eq!(out, [3.0, 5.0, 7.0]);
    }

    #[test]
    fn conv_padding_and_stride() {
        // identity width-1 kernel with stride 2 picks every other sample
        let input = [1.0, 2.0, 3.0, 4.0, 5.0];
        let kernel = [1.0];
        let mut out = [0.0; 3];
        conv1d(&input, &kernel, 1, 5, 1, 1, 2, 0, &mut out);
        assert_eq!(out, [1.0, 3.0, 5.0]);
    }

    #[test]
    fn sigmoid_is_symmetric() {
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
        assert!((sigmoid(3.0) + sigmoid(-3.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_lane_over_axis1() {
        let x = [0.0, 3.0f64.ln(), 0.0, 0.0];
        let mut out = [0.0; 4];
        softmax(&x, &[2, 2], 1, &mut out);
        assert!((out[0] - 0.25).abs() < 1e-12);
        assert!((out[1] - 0.75).abs() < 1e-12);
        assert!((out[2] - 0.5).abs() < 1e-12);
    }
}
