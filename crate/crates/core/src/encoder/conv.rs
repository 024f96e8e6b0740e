//! Bias-free 3x3 convolution with zero "same" padding and dilation, plus its
//! reverse-mode gradients, on (batch, channel, time, freq) tensors.

use crate::tensor::{Scalar, Tensor};

/// One fused row update: `dst[j] += w0·src[j-df] + w1·src[j] + w2·src[j+df]`,
/// with out-of-range source cells reading as zero.
fn fused_row<T: Scalar>(dst: &mut [T], src: &[T], w0: T, w1: T, w2: T, df: usize) {
    let f = dst.len();
    debug_assert_eq!(src.len(), f);
    if 2 * df <= f {
        for j in 0..df {
            dst[j] += w1 * src[j] + w2 * src[j + df];
        }
        let (a, b) = (df, f - df);
        for (((d, m), s), p) in dst[a..b]
            .iter_mut()
            .zip(&src[a - df..])
            .zip(&src[a..])
            .zip(&src[a + df..])
        {
            *d += w0 * *m + w1 * *s + w2 * *p;
        }
        for j in b..f {
            dst[j] += w0 * src[j - df] + w1 * src[j];
        }
    } else {
        for j in 0..f {
            let mut acc = w1 * src[j];
            if j >= df {
                acc += w0 * src[j - df];
            }
            if j + df < f {
                acc += w2 * src[j + df];
            }
            dst[j] += acc;
        }
    }
}

/// Fused row dot products for the kernel gradient:
/// `(Σ dy[j]·x[j-df], Σ dy[j]·x[j], Σ dy[j]·x[j+df])` with zero padding.
fn fused_dot<T: Scalar>(dy: &[T], x: &[T], df: usize) -> (T, T, T) {
    let f = dy.len();
    debug_assert_eq!(x.len(), f);
    let (mut a0, mut a1, mut a2) = (T::ZERO, T::ZERO, T::ZERO);
    if 2 * df <= f {
        for j in 0..df {
            a1 += dy[j] * x[j];
            a2 += dy[j] * x[j + df];
        }
        let (a, b) = (df, f - df);
        for (((d, m), s), p) in dy[a..b]
            .iter()
            .zip(&x[a - df..])
            .zip(&x[a..])
            .zip(&x[a + df..])
        {
            a0 += *d * *m;
            a1 += *d * *s;
            a2 += *d * *p;
        }
        for j in b..f {
            a0 += dy[j] * x[j - df];
            a1 += dy[j] * x[j];
        }
    } else {
        for j in 0..f {
            a1 += dy[j] * x[j];
            if j >= df {
                a0 += dy[j] * x[j - df];
            }
            if j + df < f {
                a2 += dy[j] * x[j + df];
            }
        }
    }
    (a0, a1, a2)
}

/// Forward convolution. `x`: (B, Cin, L, F); `w`: (Cout, Cin, 3, 3).
pub fn conv2d<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, dilation: (usize, usize)) -> Tensor<T> {
    let &[b, cin, l, f] = x.shape() else {
        panic!("conv2d input must be 4-D, got {:?}", x.shape());
    };
    let &[cout, wcin, 3, 3] = w.shape() else {
        panic!("conv2d kernel must be (Cout, Cin, 3, 3), got {:?}", w.shape());
    };
    assert_eq!(cin, wcin);
    let (dt, df) = (dilation.0 as isize, dilation.1 as isize);

    let mut out = Tensor::zeros(&[b, cout, l, f]);
    let xs = x.data();
    let ws = w.data();
    let os = out.data_mut();
    for bi in 0..b {
        for co in 0..cout {
            let o_base = (bi * cout + co) * l * f;
            for ci in 0..cin {
                let x_base = (bi * cin + ci) * l * f;
                let w_base = (co * cin + ci) * 9;
                for kt in 0..3isize {
                    let w0 = ws[w_base + kt as usize * 3];
                    let w1 = ws[w_base + kt as usize * 3 + 1];
                    let w2 = ws[w_base + kt as usize * 3 + 2];
                    if w0 == T::ZERO && w1 == T::ZERO && w2 == T::ZERO {
                        continue;
                    }
                    let ot = (kt - 1) * dt; // time offset into x
                    let tmin = (-ot).max(0);
                    let tmax = (l as isize - ot).min(l as isize);
                    for t in tmin..tmax {
                        let orow = o_base + (t as usize) * f;
                        let xrow = x_base + ((t + ot) as usize) * f;
                        fused_row(
                            &mut os[orow..orow + f],
                            &xs[xrow..xrow + f],
                            w0,
                            w1,
                            w2,
                            df as usize,
                        );
                    }
                }
            }
        }
    }
    out
}

/// Gradients of [`conv2d`] w.r.t. its input and kernel.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dilation: (usize, usize),
    dy: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>) {
    let &[b, cin, l, f] = x.shape() else {
        panic!("bad input shape");
    };
    let cout = w.shape()[0];
    assert_eq!(dy.shape(), &[b, cout, l, f]);
    let (dt, df) = (dilation.0 as isize, dilation.1 as isize);

    let mut dx = Tensor::zeros(&[b, cin, l, f]);
    let mut dw = Tensor::zeros(w.shape());
    let xs = x.data();
    let ws = w.data();
    let dys = dy.data();
    {
        let dxs = dx.data_mut();
        for bi in 0..b {
            for co in 0..cout {
                let y_base = (bi * cout + co) * l * f;
                for ci in 0..cin {
                    let x_base = (bi * cin + ci) * l * f;
                    let w_base = (co * cin + ci) * 9;
                    for kt in 0..3isize {
                        let w0 = ws[w_base + kt as usize * 3];
                        let w1 = ws[w_base + kt as usize * 3 + 1];
                        let w2 = ws[w_base + kt as usize * 3 + 2];
                        if w0 == T::ZERO && w1 == T::ZERO && w2 == T::ZERO {
                            continue;
                        }
                        let ot = (kt - 1) * dt;
                        let tmin = (-ot).max(0);
                        let tmax = (l as isize - ot).min(l as isize);
                        for t in tmin..tmax {
                            let yrow = y_base + (t as usize) * f;
                            let xrow = x_base + ((t + ot) as usize) * f;
                            // scatter is the mirrored gather: tap roles swap
                            fused_row(
                                &mut dxs[xrow..xrow + f],
                                &dys[yrow..yrow + f],
                                w2,
                                w1,
                                w0,
                                df as usize,
                            );
                        }
                    }
                }
            }
        }
    }
    {
        let dws = dw.data_mut();
        for bi in 0..b {
            for co in 0..cout {
                let y_base = (bi * cout + co) * l * f;
                for ci in 0..cin {
                    let x_base = (bi * cin + ci) * l * f;
                    let w_base = (co * cin + ci) * 9;
                    for kt in 0..3isize {
                        let ot = (kt - 1) * dt;
                        let tmin = (-ot).max(0);
                        let tmax = (l as isize - ot).min(l as isize);
                        let (mut a0, mut a1, mut a2) = (T::ZERO, T::ZERO, T::ZERO);
                        for t in tmin..tmax {
                            let yrow = y_base + (t as usize) * f;
                            let xrow = x_base + ((t + ot) as usize) * f;
                            let (b0, b1, b2) = fused_dot(
                                &dys[yrow..yrow + f],
                                &xs[xrow..xrow + f],
                                df as usize,
                            );
                            a0 += b0;
                            a1 += b1;
                            a2 += b2;
                        }
                        dws[w_base + kt as usize * 3] += a0;
                        dws[w_base + kt as usize * 3 + 1] += a1;
                        dws[w_base + kt as usize * 3 + 2] += a2;
                    }
                }
            }
        }
    }
    (dx, dw)
}

/// 4x3 average pool with stride = kernel and a fixed divisor of 12;
/// out-of-range cells read as zero. (ceil(L/4), ceil(F/3)) output grid.
pub fn avg_pool_4x3<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let &[b, c, l, f] = x.shape() else {
        panic!("bad input shape");
    };
    let (lp, fp) = (l.div_ceil(4), f.div_ceil(3));
    let inv = T::ONE / T::from_f64(12.0);
    let mut out = Tensor::zeros(&[b, c, lp, fp]);
    let xs = x.data();
    let os = out.data_mut();
    for bc in 0..b * c {
        let x_base = bc * l * f;
        let o_base = bc * lp * fp;
        for t in 0..lp {
            for fo in 0..fp {
                let mut acc = T::ZERO;
                for i in 0..4 {
                    let st = 4 * t + i;
                    if st >= l {
                        break;
                    }
                    for j in 0..3 {
                        let sf = 3 * fo + j;
                        if sf >= f {
                            break;
                        }
                        acc += xs[x_base + st * f + sf];
                    }
                }
                os[o_base + t * fp + fo] = acc * inv;
            }
        }
    }
    out
}

/// Gradient of [`avg_pool_4x3`] w.r.t. its input.
pub fn avg_pool_4x3_backward<T: Scalar>(input_shape: &[usize], dy: &Tensor<T>) -> Tensor<T> {
    let &[b, c, l, f] = input_shape else {
        panic!("bad input shape");
    };
    let (lp, fp) = (l.div_ceil(4), f.div_ceil(3));
    assert_eq!(dy.shape(), &[b, c, lp, fp]);
    let inv = T::ONE / T::from_f64(12.0);
    let mut dx = Tensor::zeros(input_shape);
    let dxs = dx.data_mut();
    let dys = dy.data();
    for bc in 0..b * c {
        let x_base = bc * l * f;
        let y_base = bc * lp * fp;
        for t in 0..lp {
            for fo in 0..fp {
                let g = dys[y_base + t * fp + fo] * inv;
                for i in 0..4 {
                    let st = 4 * t + i;
                    if st >= l {
                        break;
                    }
                    for j in 0..3 {
                        let sf = 3 * fo + j;
                        if sf >= f {
                            break;
                        }
                        dxs[x_base + st * f + sf] += g;
                    }
                }
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let data = (0..shape.iter().product()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Tensor::from_vec(shape, data)
    }

    /// Literal definition: out[b,co,t,f] = sum w[co,ci,kt,kf] * x at the
    /// dilated offset, zeros outside.
    fn conv_oracle(x: &Tensor<f64>, w: &Tensor<f64>, d: (usize, usize)) -> Tensor<f64> {
        let &[b, cin, l, f] = x.shape() else { unreachable!() };
        let cout = w.shape()[0];
        let mut out = Tensor::zeros(&[b, cout, l, f]);
        for bi in 0..b {
            for co in 0..cout {
                for t in 0..l as isize {
                    for fi in 0..f as isize {
                        let mut acc = 0.0;
                        for ci in 0..cin {
                            for kt in 0..3isize {
                                for kf in 0..3isize {
                                    let st = t + (kt - 1) * d.0 as isize;
                                    let sf = fi + (kf - 1) * d.1 as isize;
                                    if st >= 0 && st < l as isize && sf >= 0 && sf < f as isize {
                                        acc += w.data()
                                            [((co * cin + ci) * 3 + kt as usize) * 3 + kf as usize]
                                            * x.data()[((bi * cin + ci) * l + st as usize) * f
                                                + sf as usize];
                                    }
                                }
                            }
                        }
                        out.data_mut()[((bi * cout + co) * l + t as usize) * f + fi as usize] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn forward_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for &d in &[(1, 1), (2, 2), (2, 1)] {
            let x = random_tensor(&[2, 3, 7, 5], &mut rng);
            let w = random_tensor(&[4, 3, 3, 3], &mut rng);
            let got = conv2d(&x, &w, d);
            let want = conv_oracle(&x, &w, d);
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-12, "dilation {d:?}");
            }
        }
    }

    #[test]
    fn identity_kernel_passes_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_tensor(&[1, 1, 6, 6], &mut rng);
        let mut w = Tensor::zeros(&[1, 1, 3, 3]);
        w.data_mut()[4] = 1.0; // center tap
        assert_eq!(conv2d(&x, &w, (1, 1)).data(), x.data());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_tensor(&[2, 2, 5, 4], &mut rng);
        let w = random_tensor(&[3, 2, 3, 3], &mut rng);
        let dy = random_tensor(&[2, 3, 5, 4], &mut rng);
        let d = (2, 1);
        let (dx, dw) = conv2d_backward(&x, &w, d, &dy);

        // scalar objective: <conv(x, w), dy>
        let obj = |x: &Tensor<f64>, w: &Tensor<f64>| -> f64 {
            conv2d(x, w, d)
                .data()
                .iter()
                .zip(dy.data())
                .map(|(a, b)| a * b)
                .sum()
        };
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            let fd = (obj(&xp, &w) - obj(&xm, &w)) / (2.0 * h);
            assert!((fd - dx.data()[i]).abs() < 1e-6, "dx[{i}]");
        }
        for i in 0..w.len() {
            let mut wp = w.clone();
            wp.data_mut()[i] += h;
            let mut wm = w.clone();
            wm.data_mut()[i] -= h;
            let fd = (obj(&x, &wp) - obj(&x, &wm)) / (2.0 * h);
            assert!((fd - dw.data()[i]).abs() < 1e-6, "dw[{i}]");
        }
    }

    #[test]
    fn pool_divides_by_twelve() {
        let mut x = Tensor::<f64>::zeros(&[1, 1, 4, 3]);
        x.fill(1.0);
        let out = avg_pool_4x3(&x);
        assert_eq!(out.shape(), &[1, 1, 1, 1]);
        assert!((out.data()[0] - 1.0).abs() < 1e-12);

        // ragged edge: 5x4 input -> 2x2 output, fixed divisor keeps edges small
        let mut x = Tensor::<f64>::zeros(&[1, 1, 5, 4]);
        x.fill(1.0);
        let out = avg_pool_4x3(&x);
        assert_eq!(out.shape(), &[1, 1, 2, 2]);
        assert!((out.data()[0] - 1.0).abs() < 1e-12); // full 4x3 window
        assert!((out.data()[1] - 4.0 / 12.0).abs() < 1e-12); // 4x1 remnant
        assert!((out.data()[2] - 3.0 / 12.0).abs() < 1e-12); // 1x3 remnant
        assert!((out.data()[3] - 1.0 / 12.0).abs() < 1e-12); // 1x1 remnant
    }

    #[test]
    fn pool_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_tensor(&[2, 2, 7, 5], &mut rng);
        let dy = random_tensor(&[2, 2, 2, 2], &mut rng);
        let dx = avg_pool_4x3_backward(x.shape(), &dy);
        let obj = |x: &Tensor<f64>| -> f64 {
            avg_pool_4x3(x)
                .data()
                .iter()
                .zip(dy.data())
                .map(|(a, b)| a * b)
                .sum()
        };
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            let fd = (obj(&xp) - obj(&xm)) / (2.0 * h);
            assert!((fd - dx.data()[i]).abs() < 1e-6, "dx[{i}]");
        }
    }
}
