//! Dense numeric kernels: convolution, pooling, activations.
//!
//! Features are channel-major `[c][h][w]` f64 buffers. Convolutions copy
//! the input into a zero-padded scratch plane once so the tap loops run
//! branch-free; the 3x3 cases are unrolled.

use super::arch::ConvShape;

#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Feature {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Feature {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        &self.data[c * self.h * self.w..(c + 1) * self.h * self.w]
    }
}

/// Copy a feature into a zero-padded buffer with `pad` rows/cols per side.
fn pad_feature(x: &Feature, pad: usize) -> (Vec<f64>, usize, usize) {
    let ph = x.h + 2 * pad;
    let pw = x.w + 2 * pad;
    let mut padded = vec![0.0f64; x.c * ph * pw];
    for c in 0..x.c {
        for y in 0..x.h {
            let src = c * x.h * x.w + y * x.w;
            let dst = c * ph * pw + (y + pad) * pw + pad;
            padded[dst..dst + x.w].copy_from_slice(&x.data[src..src + x.w]);
        }
    }
    (padded, ph, pw)
}

/// Convolution with ReLU-compatible "same" padding. Returns pre-activation.
pub fn conv_forward(x: &Feature, weights: &[f64], bias: &[f64], shape: &ConvShape) -> Feature {
    debug_assert_eq!((x.c, x.h, x.w), (shape.in_c, shape.in_h, shape.in_w));
    let k = shape.kernel;
    let pad = k / 2;
    let (sy, sx) = shape.stride;
    let (padded, ph, pw) = pad_feature(x, pad);
    let mut out = Feature::zeros(shape.out_c, shape.out_h, shape.out_w);
    let (oh, ow) = (shape.out_h, shape.out_w);

    for oc in 0..shape.out_c {
        let plane = &mut out.data[oc * oh * ow..(oc + 1) * oh * ow];
        plane.fill(bias[oc]);
        for ic in 0..shape.in_c {
            let wbase = (oc * shape.in_c + ic) * k * k;
            let pplane = &padded[ic * ph * pw..(ic + 1) * ph * pw];
            for ky in 0..k {
                let wrow = &weights[wbase + ky * k..wbase + (ky + 1) * k];
                for oy in 0..oh {
                    let prow = &pplane[(oy * sy + ky) * pw..(oy * sy + ky) * pw + pw];
                    let orow = &mut plane[oy * ow..(oy + 1) * ow];
                    if k == 3 && sx == 1 {
                        let (w0, w1, w2) = (wrow[0], wrow[1], wrow[2]);
                        for (ox, o) in orow.iter_mut().enumerate() {
                            *o += w0 * prow[ox] + w1 * prow[ox + 1] + w2 * prow[ox + 2];
                        }
                    } else if k == 3 {
                        let (w0, w1, w2) = (wrow[0], wrow[1], wrow[2]);
                        for (ox, o) in orow.iter_mut().enumerate() {
                            let base = ox * sx;
                            *o += w0 * prow[base] + w1 * prow[base + 1] + w2 * prow[base + 2];
                        }
                    } else {
                        for (ox, o) in orow.iter_mut().enumerate() {
                            let base = ox * sx;
                            let mut acc = 0.0;
                            for kx in 0..k {
                                acc += wrow[kx] * prow[base + kx];
                            }
                            *o += acc;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradients of a convolution. `dout` is the gradient at the pre-activation
/// output. Returns `(dx, dw, db)`; `dx` is skipped when `need_dx` is false
/// (the first layer has no upstream).
pub fn conv_backward(
    x: &Feature,
    weights: &[f64],
    shape: &ConvShape,
    dout: &Feature,
    need_dx: bool,
) -> (Option<Feature>, Vec<f64>, Vec<f64>) {
    let k = shape.kernel;
    let pad = k / 2;
    let (sy, sx) = shape.stride;
    let (padded, ph, pw) = pad_feature(x, pad);
    let (oh, ow) = (shape.out_h, shape.out_w);
    let mut dw = vec![0.0f64; shape.weight_len()];
    let mut db = vec![0.0f64; shape.out_c];
    let mut dxp = if need_dx {
        vec![0.0f64; shape.in_c * ph * pw]
    } else {
        Vec::new()
    };

    for oc in 0..shape.out_c {
        let dplane = dout.plane(oc);
        db[oc] += dplane.iter().sum::<f64>();
        for ic in 0..shape.in_c {
            let wbase = (oc * shape.in_c + ic) * k * k;
            let pplane = &padded[ic * ph * pw..(ic + 1) * ph * pw];
            for ky in 0..k {
                if k == 3 {
                    let (mut a0, mut a1, mut a2) = (0.0f64, 0.0, 0.0);
                    for oy in 0..oh {
                        let prow = &pplane[(oy * sy + ky) * pw..(oy * sy + ky) * pw + pw];
                        let drow = &dplane[oy * ow..(oy + 1) * ow];
                        if sx == 1 {
                            for (ox, &d) in drow.iter().enumerate() {
                                a0 += d * prow[ox];
                                a1 += d * prow[ox + 1];
                                a2 += d * prow[ox + 2];
                            }
                        } else {
                            for (ox, &d) in drow.iter().enumerate() {
                                let base = ox * sx;
                                a0 += d * prow[base];
                                a1 += d * prow[base + 1];
                                a2 += d * prow[base + 2];
                            }
                        }
                    }
                    dw[wbase + ky * k] += a0;
                    dw[wbase + ky * k + 1] += a1;
                    dw[wbase + ky * k + 2] += a2;
                } else {
                    for kx in 0..k {
                        let mut acc = 0.0f64;
                        for oy in 0..oh {
                            let prow = &pplane[(oy * sy + ky) * pw..(oy * sy + ky) * pw + pw];
                            let drow = &dplane[oy * ow..(oy + 1) * ow];
                            for (ox, &d) in drow.iter().enumerate() {
                                acc += d * prow[ox * sx + kx];
                            }
                        }
                        dw[wbase + ky * k + kx] += acc;
                    }
                }
                if need_dx {
                    let wrow = &weights[wbase + ky * k..wbase + (ky + 1) * k];
                    let dxplane = &mut dxp[ic * ph * pw..(ic + 1) * ph * pw];
                    for oy in 0..oh {
                        let row_off = (oy * sy + ky) * pw;
                        let drow = &dplane[oy * ow..(oy + 1) * ow];
                        if k == 3 {
                            let (w0, w1, w2) = (wrow[0], wrow[1], wrow[2]);
                            for (ox, &d) in drow.iter().enumerate() {
                                let base = row_off + ox * sx;
                                dxplane[base] += w0 * d;
                                dxplane[base + 1] += w1 * d;
                                dxplane[base + 2] += w2 * d;
                            }
                        } else {
                            for (ox, &d) in drow.iter().enumerate() {
                                let base = row_off + ox * sx;
                                for kx in 0..k {
                                    dxplane[base + kx] += wrow[kx] * d;
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    let dx = if need_dx {
        // Crop the padding back off.
        let mut dx = Feature::zeros(shape.in_c, shape.in_h, shape.in_w);
        for ic in 0..shape.in_c {
            for y in 0..shape.in_h {
                let src = ic * ph * pw + (y + pad) * pw + pad;
                let dst = ic * shape.in_h * shape.in_w + y * shape.in_w;
                dx.data[dst..dst + shape.in_w].copy_from_slice(&dxp[src..src + shape.in_w]);
            }
        }
        Some(dx)
    } else {
        None
    };
    (dx, dw, db)
}

pub fn relu(pre: &Feature) -> Feature {
    Feature {
        c: pre.c,
        h: pre.h,
        w: pre.w,
        data: pre.data.iter().map(|&v| v.max(0.0)).collect(),
    }
}

/// Gate an output gradient by the pre-activation sign, in place.
pub fn relu_backward(dout: &mut Feature, pre: &Feature) {
    for (d, &p) in dout.data.iter_mut().zip(&pre.data) {
        if p <= 0.0 {
            *d = 0.0;
        }
    }
}

/// Non-overlapping average pool.
pub fn avgpool_forward(x: &Feature, kh: usize, kw: usize) -> Feature {
    debug_assert!(x.h % kh == 0 && x.w % kw == 0);
    let (oh, ow) = (x.h / kh, x.w / kw);
    let inv = 1.0 / (kh * kw) as f64;
    let mut out = Feature::zeros(x.c, oh, ow);
    for c in 0..x.c {
        let plane = x.plane(c);
        let oplane = &mut out.data[c * oh * ow..(c + 1) * oh * ow];
        for oy in 0..oh {
            for dy in 0..kh {
                let row = &plane[(oy * kh + dy) * x.w..(oy * kh + dy + 1) * x.w];
                let orow = &mut oplane[oy * ow..(oy + 1) * ow];
                for (ox, o) in orow.iter_mut().enumerate() {
                    let base = ox * kw;
                    let mut acc = 0.0;
                    for dx in 0..kw {
                        acc += row[base + dx];
                    }
                    *o += acc * inv;
                }
            }
        }
    }
    out
}

pub fn avgpool_backward(dout: &Feature, kh: usize, kw: usize, in_h: usize, in_w: usize) -> Feature {
    let inv = 1.0 / (kh * kw) as f64;
    let mut dx = Feature::zeros(dout.c, in_h, in_w);
    for c in 0..dout.c {
        let dplane = dout.plane(c);
        let xplane = &mut dx.data[c * in_h * in_w..(c + 1) * in_h * in_w];
        for oy in 0..dout.h {
            for ox in 0..dout.w {
                let g = dplane[oy * dout.w + ox] * inv;
                for dy in 0..kh {
                    let base = (oy * kh + dy) * in_w + ox * kw;
                    for dx_i in 0..kw {
                        xplane[base + dx_i] += g;
                    }
                }
            }
        }
    }
    dx
}

/// Spatial mean per channel.
pub fn global_pool(x: &Feature) -> Vec<f64> {
    let inv = 1.0 / (x.h * x.w) as f64;
    (0..x.c).map(|c| x.plane(c).iter().sum::<f64>() * inv).collect()
}

pub fn global_pool_backward(dvec: &[f64], c: usize, h: usize, w: usize) -> Feature {
    let inv = 1.0 / (h * w) as f64;
    let mut dx = Feature::zeros(c, h, w);
    for ci in 0..c {
        let g = dvec[ci] * inv;
        for v in dx.data[ci * h * w..(ci + 1) * h * w].iter_mut() {
            *v = g;
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(in_c: usize, out_c: usize, h: usize, w: usize, stride: (usize, usize)) -> ConvShape {
        ConvShape {
            in_c,
            out_c,
            in_h: h,
            in_w: w,
            out_h: (h + 2 - 3) / stride.0 + 1,
            out_w: (w + 2 - 3) / stride.1 + 1,
            stride,
            kernel: 3,
        }
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let s = shape(1, 1, 4, 5, (1, 1));
        let x = Feature {
            c: 1,
            h: 4,
            w: 5,
            data: (0..20).map(|i| i as f64).collect(),
        };
        // Center tap one, rest zero.
        let mut w = vec![0.0; 9];
        w[4] = 1.0;
        let out = conv_forward(&x, &w, &[0.0], &s);
        assert_eq!(out.data, x.data);
    }

    #[test]
    fn bias_fills_output() {
        let s = shape(1, 2, 4, 4, (1, 1));
        let x = Feature::zeros(1, 4, 4);
        let out = conv_forward(&x, &vec![0.5; 18], &[1.5, -2.0], &s);
        assert!(out.plane(0).iter().all(|&v| v == 1.5));
        assert!(out.plane(1).iter().all(|&v| v == -2.0));
    }

    #[test]
    fn strided_conv_shapes() {
        let s = shape(1, 1, 6, 8, (2, 4));
        assert_eq!((s.out_h, s.out_w), (3, 2));
        let x = Feature::zeros(1, 6, 8);
        let out = conv_forward(&x, &vec![0.0; 9], &[0.0], &s);
        assert_eq!(out.data.len(), 6);
    }

    #[test]
    fn avgpool_means_and_distributes() {
        let x = Feature {
            c: 1,
            h: 2,
            w: 4,
            data: vec![1., 3., 5., 7., 2., 4., 6., 8.],
        };
        let out = avgpool_forward(&x, 2, 2);
        assert_eq!(out.data, vec![2.5, 6.5]);
        let d = Feature {
            c: 1,
            h: 1,
            w: 2,
            data: vec![4.0, 8.0],
        };
        let dx = avgpool_backward(&d, 2, 2, 2, 4);
        assert_eq!(dx.data, vec![1., 1., 2., 2., 1., 1., 2., 2.]);
    }

    #[test]
    fn global_pool_mean() {
        let x = Feature {
            c: 2,
            h: 1,
            w: 2,
            data: vec![1., 3., 10., 20.],
        };
        assert_eq!(global_pool(&x), vec![2.0, 15.0]);
        let dx = global_pool_backward(&[2.0, 4.0], 2, 1, 2);
        assert_eq!(dx.data, vec![1., 1., 2., 2.]);
    }

    #[test]
    fn relu_gates_gradient_by_preactivation() {
        let pre = Feature {
            c: 1,
            h: 1,
            w: 3,
            data: vec![-1.0, 0.0, 2.0],
        };
        let post = relu(&pre);
        assert_eq!(post.data, vec![0.0, 0.0, 2.0]);
        let mut d = Feature {
            c: 1,
            h: 1,
            w: 3,
            data: vec![5.0, 5.0, 5.0],
        };
        relu_backward(&mut d, &pre);
        assert_eq!(d.data, vec![0.0, 0.0, 5.0]);
    }
}
