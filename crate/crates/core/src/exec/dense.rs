use super::weights::{add_relu, axpy, concat_rows, relu_inplace, WeightSource};
use crate::arch::{LayerSpec, DENSE_UNET_BLOCKS};
use crate::Real;

/// One `[H, W, C]` slab.
#[derive(Clone)]
pub(crate) struct Tensor<T> {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<T>,
}

/// `k x k` convolution (k in {1, 3}) with stride 1 or 2; stride-2 outputs have `ceil(H/2) x ceil(W/2)` cells.
fn conv<T: Real>(x: &Tensor<T>, wt: &[T], cout: usize, k: usize, stride: usize) -> Tensor<T> {
    let (oh, ow) = if stride == 1 { (x.h, x.w) } else { (x.h.div_ceil(2), x.w.div_ceil(2)) };
    let pad = (k / 2) as isize;
    let cin = x.c;
    let mut out = vec![T::zero(); oh * ow * cout];
    for oy in 0..oh {
        for ox in 0..ow {
            let o = &mut out[(oy * ow + ox) * cout..(oy * ow + ox + 1) * cout];
            for ky in 0..k {
                let iy = (oy * stride + ky) as isize - pad;
                if iy < 0 || iy >= x.h as isize {
                    continue;
                }
                for kx in 0..k {
                    let ix = (ox * stride + kx) as isize - pad;
                    if ix < 0 || ix >= x.w as isize {
                        continue;
                    }
                    let base = (iy as usize * x.w + ix as usize) * cin;
                    let wk = &wt[(ky * k + kx) * cin * cout..(ky * k + kx + 1) * cin * cout];
                    for ci in 0..cin {
                        let v = x.data[base + ci];
                        if v != T::zero() {
                            axpy(o, v, &wk[ci * cout..(ci + 1) * cout]);
                        }
                    }
                }
            }
        }
    }
    Tensor { h: oh, w: ow, c: cout, data: out }
}

/// Nearest-neighbour upsample of `x` to `h x w`.
fn upsample<T: Real>(x: &Tensor<T>, h: usize, w: usize) -> Tensor<T> {
    let mut data = Vec::with_capacity(h * w * x.c);
    for y in 0..h {
        for xx in 0..w {
            let src = ((y / 2) * x.w + xx / 2) * x.c;
            data.extend_from_slice(&x.data[src..src + x.c]);
        }
    }
    Tensor { h, w, c: x.c, data }
}

/// Dense 2D U-Net forward on one slab; the output keeps the input extent and has `F` channels.
pub(crate) fn unet2d_dense<T: Real>(input: Tensor<T>, layer: &LayerSpec, weights: &WeightSource<'_>) -> Tensor<T> {
    let ch = layer.dense_unet_channels();
    let scales = ch.len();
    let block = |x: &mut Tensor<T>, name: String| {
        let c = x.c;
        let mut r = conv(x, &weights.draw(&format!("{name}.0"), 9, c, c), c, 3, 1);
        relu_inplace(&mut r.data);
        let r = conv(&r, &weights.draw(&format!("{name}.1"), 9, c, c), c, 3, 1);
        add_relu(&mut x.data, &r.data);
    };
    let mut x = conv(&input, &weights.draw("stem", 9, input.c, ch[0]), ch[0], 3, 1);
    relu_inplace(&mut x.data);
    let mut skips: Vec<Tensor<T>> = Vec::with_capacity(scales);
    for l in 0..scales {
        if l > 0 {
            x = conv(&x, &weights.draw(&format!("down{l}"), 9, ch[l - 1], ch[l]), ch[l], 3, 2);
            relu_inplace(&mut x.data);
        }
        for k in 0..DENSE_UNET_BLOCKS[l.min(4)] {
            block(&mut x, format!("block{l}.{k}"));
        }
        skips.push(x.clone());
    }
    for l in (1..scales).rev() {
        let skip = &skips[l - 1];
        let up = upsample(&x, skip.h, skip.w);
        let cat = Tensor { h: skip.h, w: skip.w, c: up.c + skip.c, data: concat_rows(&up.data, up.c, &skip.data, skip.c) };
        x = conv(&cat, &weights.draw(&format!("fuse{}", l - 1), 1, cat.c, ch[l - 1]), ch[l - 1], 1, 1);
        relu_inplace(&mut x.data);
    }
    x
}
