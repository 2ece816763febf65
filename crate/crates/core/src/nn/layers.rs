use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array, Array1, Array2, Array4, ArrayView2, ArrayViewMut2, Axis, Dimension};

use super::{cst, init_uniform, prefixed, prefixed_mut, ParamMut, ParamView, Parameters, Scalar};

/// Fully connected layer, `y = x W + b` with `W` stored as `[in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(n_in: usize, n_out: usize, seed: u64, key: &str) -> Self {
        let w = init_uniform(n_in * n_out, n_in, seed, &format!("{key}.weight"));
        let b = init_uniform(n_out, n_in, seed, &format!("{key}.bias"));
        Self {
            weight: Array2::from_shape_vec((n_in, n_out), w).unwrap(),
            bias: Array1::from_vec(b),
        }
    }

    pub fn n_in(&self) -> usize {
        self.weight.nrows()
    }

    pub fn n_out(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: &Array2<T>) -> Array2<T> {
        let mut y = x.dot(&self.weight);
        y += &self.bias;
        y
    }

    /// Accumulates parameter gradients into `g` and returns `dL/dx`.
    pub fn backward(&self, x: &Array2<T>, dy: &Array2<T>, g: &mut Self) -> Array2<T> {
        general_mat_mul(T::one(), &x.t(), dy, T::one(), &mut g.weight);
        g.bias += &dy.sum_axis(Axis(0));
        dy.dot(&self.weight.t())
    }
}

impl<T: Scalar> Parameters<T> for Dense<T> {
    fn params(&self) -> Vec<ParamView<'_, T>> {
        vec![
            ParamView {
                name: "weight".into(),
                shape: self.weight.shape().to_vec(),
                data: self.weight.as_slice().unwrap(),
            },
            ParamView {
                name: "bias".into(),
                shape: self.bias.shape().to_vec(),
                data: self.bias.as_slice().unwrap(),
            },
        ]
    }

    fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        vec![
            ("weight".into(), self.weight.as_slice_mut().unwrap()),
            ("bias".into(), self.bias.as_slice_mut().unwrap()),
        ]
    }
}

/// 3x3 convolution, stride 1, zero padding 1. Weight is `[out, in * 9]`
/// with the kernel taps of each input channel contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(c_in: usize, c_out: usize, seed: u64, key: &str) -> Self {
        let fan_in = c_in * 9;
        let w = init_uniform(c_out * fan_in, fan_in, seed, &format!("{key}.weight"));
        let b = init_uniform(c_out, fan_in, seed, &format!("{key}.bias"));
        Self {
            weight: Array2::from_shape_vec((c_out, fan_in), w).unwrap(),
            bias: Array1::from_vec(b),
        }
    }

    pub fn c_in(&self) -> usize {
        self.weight.ncols() / 9
    }

    pub fn c_out(&self) -> usize {
        self.weight.nrows()
    }

    /// Returns the output and the zero-padded input planes needed by
    /// `backward`.
    pub fn forward(&self, x: &Array4<T>) -> (Array4<T>, Array2<T>) {
        let (b, c, h, w) = x.dim();
        debug_assert_eq!(c, self.c_in());
        let g = Geometry::new(h, w);
        let xpad = pad_planes(x, &g);
        let c_out = self.c_out();
        let mut y = Array4::zeros((b, c_out, h, w));
        let mut acc = Array2::<T>::zeros((c_out, g.len));
        for bi in 0..b {
            for (co, mut row) in acc.outer_iter_mut().enumerate() {
                row.fill(self.bias[co]);
            }
            let srcs: Vec<(&[T], usize)> = (0..c)
                .flat_map(|ci| (0..9).map(move |t| (ci, t)))
                .map(|(ci, t)| (xpad.row(bi * c + ci).to_slice().unwrap(), g.tap_offset(t)))
                .collect();
            shifted_matmul(acc.view_mut(), self.weight.view(), &srcs);
            for co in 0..c_out {
                let a = acc.row(co);
                let a = a.as_slice().unwrap();
                let mut out = y.slice_mut(s![bi, co, .., ..]);
                for (yy, mut row) in out.outer_iter_mut().enumerate() {
                    row.as_slice_mut().unwrap().copy_from_slice(&a[yy * g.wp..][..w]);
                }
            }
        }
        (y, xpad)
    }

    pub fn backward(&self, xpad: &Array2<T>, x_dim: (usize, usize, usize, usize), dy: &Array4<T>, g: &mut Self) -> Array4<T> {
        let (b, c, h, w) = x_dim;
        let c_out = self.c_out();
        let geo = Geometry::new(h, w);
        let margin = geo.max_offset();
        let padded_len = round_up((h + 2) * geo.wp, LANES);
        let dy = dy.as_standard_layout();
        let mut dx = Array4::zeros(x_dim);
        // Weights regrouped as [c_in, c_out * 9] for the input gradient.
        let wt = Array2::from_shape_fn((c, c_out * 9), |(ci, k)| self.weight[[k / 9, ci * 9 + k % 9]]);
        // Output gradients laid out like the accumulators of `forward`, with
        // zeros in the two spill columns and a leading margin.
        let mut dybuf = Array2::<T>::zeros((c_out, margin + padded_len));
        let mut acc = Array2::<T>::zeros((c, padded_len));
        for bi in 0..b {
            for co in 0..c_out {
                let mut row = dybuf.row_mut(co);
                let row = row.as_slice_mut().unwrap();
                let mut bias_sum = T::zero();
                for yy in 0..h {
                    let src = dy.slice(s![bi, co, yy, ..]);
                    let dst = &mut row[margin + yy * geo.wp..][..w];
                    for (d, &v) in dst.iter_mut().zip(src.iter()) {
                        *d = v;
                        bias_sum += v;
                    }
                }
                g.bias[co] += bias_sum;
            }
            let dyext = dybuf.slice(s![.., margin..margin + geo.len]);
            let xsrcs: Vec<(&[T], usize)> = (0..c)
                .flat_map(|ci| (0..9).map(move |t| (ci, t)))
                .map(|(ci, t)| (xpad.row(bi * c + ci).to_slice().unwrap(), geo.tap_offset(t)))
                .collect();
            shifted_matmul_t(g.weight.view_mut(), dyext, &xsrcs, geo.len);

            acc.fill(T::zero());
            let dsrcs: Vec<(&[T], usize)> = (0..c_out)
                .flat_map(|co| (0..9).map(move |t| (co, t)))
                .map(|(co, t)| (dybuf.row(co).to_slice().unwrap(), margin - geo.tap_offset(t)))
                .collect();
            shifted_matmul(acc.view_mut(), wt.view(), &dsrcs);
            for ci in 0..c {
                let a = acc.row(ci);
                let a = a.as_slice().unwrap();
                let mut out = dx.slice_mut(s![bi, ci, .., ..]);
                for (yy, mut row) in out.outer_iter_mut().enumerate() {
                    row.as_slice_mut().unwrap().copy_from_slice(&a[(yy + 1) * geo.wp + 1..][..w]);
                }
            }
        }
        dx
    }
}

impl<T: Scalar> Parameters<T> for Conv2d<T> {
    fn params(&self) -> Vec<ParamView<'_, T>> {
        vec![
            ParamView {
                name: "weight".into(),
                shape: self.weight.shape().to_vec(),
                data: self.weight.as_slice().unwrap(),
            },
            ParamView {
                name: "bias".into(),
                shape: self.bias.shape().to_vec(),
                data: self.bias.as_slice().unwrap(),
            },
        ]
    }

    fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        vec![
            ("weight".into(), self.weight.as_slice_mut().unwrap()),
            ("bias".into(), self.bias.as_slice_mut().unwrap()),
        ]
    }
}

const LANES: usize = 8;

fn round_up(n: usize, m: usize) -> usize {
    n.div_ceil(m) * m
}

/// Layout of a zero-padded `(h + 2) x (w + 2)` plane stored row-major.
/// Output pixel `(y, x)` maps to accumulator index `y * wp + x`; the two
/// extra columns per row are spill space that is discarded.
struct Geometry {
    wp: usize,
    /// Accumulator length, a multiple of [`LANES`].
    len: usize,
    /// Length of one padded input plane including read slack.
    plane: usize,
}

impl Geometry {
    fn new(h: usize, w: usize) -> Self {
        let wp = w + 2;
        let len = round_up(h * wp, LANES);
        Self {
            wp,
            len,
            plane: (len + 2 * wp + 2).max(round_up((h + 2) * wp, LANES)),
        }
    }

    fn tap_offset(&self, tap: usize) -> usize {
        (tap / 3) * self.wp + tap % 3
    }

    fn max_offset(&self) -> usize {
        2 * self.wp + 2
    }
}

/// Copies every `[b, c]` plane into a zero-padded row of a `[b * c, plane]` array.
fn pad_planes<T: Scalar>(x: &Array4<T>, g: &Geometry) -> Array2<T> {
    let (b, c, h, w) = x.dim();
    let mut out = Array2::zeros((b * c, g.plane));
    for bi in 0..b {
        for ci in 0..c {
            let mut row = out.row_mut(bi * c + ci);
            let row = row.as_slice_mut().unwrap();
            for yy in 0..h {
                let dst = &mut row[(yy + 1) * g.wp + 1..][..w];
                for (d, &v) in dst.iter_mut().zip(x.slice(s![bi, ci, yy, ..]).iter()) {
                    *d = v;
                }
            }
        }
    }
    out
}

/// Output row counts from which the packed matrix product beats plain
/// multiply-accumulate loops.
const GEMM_MIN_ROWS: usize = 16;

/// Stacks `src_k[offset_k..offset_k + n]` as the rows of a matrix.
fn gather_rows<T: Scalar>(srcs: &[(&[T], usize)], n: usize) -> Array2<T> {
    let mut col = Vec::with_capacity(srcs.len() * n);
    for &(src, off) in srcs {
        col.extend_from_slice(&src[off..off + n]);
    }
    Array2::from_shape_vec((srcs.len(), n), col).unwrap()
}

/// `out[m, i] += Σ_k w[m, k] · src_k[i + offset_k]` for `i < out.ncols()`.
fn shifted_matmul<T: Scalar>(mut out: ArrayViewMut2<'_, T>, w: ArrayView2<'_, T>, srcs: &[(&[T], usize)]) {
    let n = out.ncols();
    if out.nrows() >= GEMM_MIN_ROWS {
        general_mat_mul(T::one(), &w, &gather_rows(srcs, n), T::one(), &mut out);
        return;
    }
    for (m, mut row) in out.outer_iter_mut().enumerate() {
        let row = row.as_slice_mut().unwrap();
        for (k, &(src, off)) in srcs.iter().enumerate() {
            let wv = w[[m, k]];
            for (o, &v) in row.iter_mut().zip(&src[off..off + n]) {
                *o += wv * v;
            }
        }
    }
}

/// `g[m, k] += Σ_{i < n} d[m, i] · src_k[i + offset_k]`.
fn shifted_matmul_t<T: Scalar>(mut g: ArrayViewMut2<'_, T>, d: ArrayView2<'_, T>, srcs: &[(&[T], usize)], n: usize) {
    for (m, dm) in d.outer_iter().enumerate() {
        let dm = dm.to_slice().unwrap();
        for (k, &(src, off)) in srcs.iter().enumerate() {
            g[[m, k]] += dot_lanes(dm, &src[off..off + n]);
        }
    }
}

/// Dot product of two equal-length slices whose length is a multiple of [`LANES`].
fn dot_lanes<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); LANES];
    for (x, y) in a.chunks_exact(LANES).zip(b.chunks_exact(LANES)) {
        let x: &[T; LANES] = x.try_into().unwrap();
        let y: &[T; LANES] = y.try_into().unwrap();
        for j in 0..LANES {
            acc[j] += x[j] * y[j];
        }
    }
    acc.iter().fold(T::zero(), |s, &v| s + v)
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_C: f64 = 0.044_715;

/// `tanh` through a single `exp`, several times faster than the libm call.
#[inline]
fn tanh<T: Scalar>(z: T) -> T {
    let two = T::one() + T::one();
    let e = (two * z).exp();
    if e.is_infinite() {
        T::one()
    } else {
        T::one() - two / (e + T::one())
    }
}

/// Tanh approximation of GELU.
pub fn gelu<T: Scalar, D: Dimension>(x: &Array<T, D>) -> Array<T, D> {
    let (k, c, half): (T, T, T) = (cst(GELU_K), cst(GELU_C), cst(0.5));
    x.mapv(|v| half * v * (T::one() + tanh(k * (v + c * v * v * v))))
}

pub fn gelu_backward<T: Scalar, D: Dimension>(x: &Array<T, D>, dy: &Array<T, D>) -> Array<T, D> {
    let (k, c, half, three): (T, T, T, T) = (cst(GELU_K), cst(GELU_C), cst(0.5), cst(3.0));
    let mut dx = dy.clone();
    dx.zip_mut_with(x, |d, &v| {
        let t = tanh(k * (v + c * v * v * v));
        let dt = (T::one() - t * t) * k * (T::one() + three * c * v * v);
        *d = *d * (half * (T::one() + t) + half * v * dt);
    });
    dx
}

/// Negative-side slope of [`leaky_relu`].
pub const LEAKY_SLOPE: f64 = 0.3;

/// Leaky ReLU with slope [`LEAKY_SLOPE`]; unlike GELU it keeps the sign
/// information of zero-centred channel coefficients.
pub fn leaky_relu<T: Scalar, D: Dimension>(x: &Array<T, D>) -> Array<T, D> {
    let a: T = cst(LEAKY_SLOPE);
    x.mapv(|v| if v > T::zero() { v } else { a * v })
}

pub fn leaky_relu_backward<T: Scalar, D: Dimension>(x: &Array<T, D>, dy: &Array<T, D>) -> Array<T, D> {
    let a: T = cst(LEAKY_SLOPE);
    let mut dx = dy.clone();
    dx.zip_mut_with(x, |d, &v| {
        if v <= T::zero() {
            *d = *d * a;
        }
    });
    dx
}

/// Maps `[0,1]`-normalized channel tensors to `gain * (x - 0.5)`, so neither
/// the constant offset nor the small spread of the coefficients dominates
/// the first layer's gradients.
pub fn center<T: Scalar, D: Dimension>(x: &Array<T, D>, gain: f64) -> Array<T, D> {
    let (half, gain): (T, T) = (cst(0.5), cst(gain));
    x.mapv(|v| (v - half) * gain)
}

/// `sigmoid(slope * x)`.
pub fn scaled_sigmoid<T: Scalar, D: Dimension>(x: &Array<T, D>, slope: f64) -> Array<T, D> {
    let k: T = cst(slope);
    x.mapv(|v| T::one() / (T::one() + (-(k * v)).exp()))
}

/// Backward pass of [`scaled_sigmoid`] given its output `y`.
pub fn scaled_sigmoid_backward<T: Scalar, D: Dimension>(y: &Array<T, D>, dy: &Array<T, D>, slope: f64) -> Array<T, D> {
    let k: T = cst(slope);
    let mut dx = dy.clone();
    dx.zip_mut_with(y, |d, &y| *d = *d * y * (T::one() - y) * k);
    dx
}

pub fn sigmoid<T: Scalar, D: Dimension>(x: &Array<T, D>) -> Array<T, D> {
    x.mapv(|v| T::one() / (T::one() + (-v).exp()))
}

/// Two 3x3 convolutions `2 -> width -> 2` with a GELU in between.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnStem<T> {
    pub conv1: Conv2d<T>,
    pub conv2: Conv2d<T>,
}

pub struct CnnStemCache<T> {
    col1: Array2<T>,
    z1: Array4<T>,
    col2: Array2<T>,
    dim: (usize, usize, usize, usize),
}

impl<T: Scalar> CnnStem<T> {
    pub fn new(width: usize, seed: u64, key: &str) -> Self {
        Self {
            conv1: Conv2d::new(2, width, seed, &format!("{key}.conv1")),
            conv2: Conv2d::new(width, 2, seed, &format!("{key}.conv2")),
        }
    }

    pub fn forward(&self, x: &Array4<T>) -> (Array4<T>, CnnStemCache<T>) {
        let (z1, col1) = self.conv1.forward(x);
        let a1 = gelu(&z1);
        let (y, col2) = self.conv2.forward(&a1);
        (
            y,
            CnnStemCache {
                col1,
                z1,
                col2,
                dim: x.dim(),
            },
        )
    }

    pub fn backward(&self, cache: &CnnStemCache<T>, dy: &Array4<T>, g: &mut Self) -> Array4<T> {
        let da1 = self.conv2.backward(&cache.col2, cache.z1.dim(), dy, &mut g.conv2);
        let dz1 = gelu_backward(&cache.z1, &da1);
        self.conv1.backward(&cache.col1, cache.dim, &dz1, &mut g.conv1)
    }
}

impl<T: Scalar> Parameters<T> for CnnStem<T> {
    fn params(&self) -> Vec<ParamView<'_, T>> {
        prefixed("conv1", self.conv1.params())
            .chain(prefixed("conv2", self.conv2.params()))
            .collect()
    }

    fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        prefixed_mut("conv1", self.conv1.params_mut())
            .chain(prefixed_mut("conv2", self.conv2.params_mut()))
            .collect()
    }
}

/// Residual refinement block: `a(x + conv3(a(conv2(a(conv1(x))))))` with `a` the
/// leaky ReLU and channels `2 -> 8 -> 16 -> 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineBlock<T> {
    pub conv1: Conv2d<T>,
    pub conv2: Conv2d<T>,
    pub conv3: Conv2d<T>,
}

pub struct RefineCache<T> {
    cols: [Array2<T>; 3],
    z1: Array4<T>,
    z2: Array4<T>,
    sum: Array4<T>,
    dim: (usize, usize, usize, usize),
}

impl<T: Scalar> RefineBlock<T> {
    pub fn new(seed: u64, key: &str) -> Self {
        Self {
            conv1: Conv2d::new(2, 8, seed, &format!("{key}.conv1")),
            conv2: Conv2d::new(8, 16, seed, &format!("{key}.conv2")),
            conv3: Conv2d::new(16, 2, seed, &format!("{key}.conv3")),
        }
    }

    pub fn forward(&self, x: &Array4<T>) -> (Array4<T>, RefineCache<T>) {
        let (z1, c1) = self.conv1.forward(x);
        let (z2, c2) = self.conv2.forward(&leaky_relu(&z1));
        let (z3, c3) = self.conv3.forward(&leaky_relu(&z2));
        let sum = x + &z3;
        let y = leaky_relu(&sum);
        (
            y,
            RefineCache {
                cols: [c1, c2, c3],
                z1,
                z2,
                sum,
                dim: x.dim(),
            },
        )
    }

    pub fn backward(&self, cache: &RefineCache<T>, dy: &Array4<T>, g: &mut Self) -> Array4<T> {
        let dsum = leaky_relu_backward(&cache.sum, dy);
        let da2 = self.conv3.backward(&cache.cols[2], cache.z2.dim(), &dsum, &mut g.conv3);
        let dz2 = leaky_relu_backward(&cache.z2, &da2);
        let da1 = self.conv2.backward(&cache.cols[1], cache.z1.dim(), &dz2, &mut g.conv2);
        let dz1 = leaky_relu_backward(&cache.z1, &da1);
        let dx = self.conv1.backward(&cache.cols[0], cache.dim, &dz1, &mut g.conv1);
        dx + dsum
    }
}

impl<T: Scalar> Parameters<T> for RefineBlock<T> {
    fn params(&self) -> Vec<ParamView<'_, T>> {
        prefixed("conv1", self.conv1.params())
            .chain(prefixed("conv2", self.conv2.params()))
            .chain(prefixed("conv3", self.conv3.params()))
            .collect()
    }

    fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        prefixed_mut("conv1", self.conv1.params_mut())
            .chain(prefixed_mut("conv2", self.conv2.params_mut()))
            .chain(prefixed_mut("conv3", self.conv3.params_mut()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random4(dim: (usize, usize, usize, usize), seed: u64) -> Array4<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array4::from_shape_fn(dim, |_| rng.random_range(-1.0..1.0))
    }

    /// Direct nested-loop convolution oracle.
    fn conv_direct(conv: &Conv2d<f64>, x: &Array4<f64>) -> Array4<f64> {
        let (b, c, h, w) = x.dim();
        let co = conv.c_out();
        Array4::from_shape_fn((b, co, h, w), |(bi, o, y, xx)| {
            let mut acc = conv.bias[o];
            for ci in 0..c {
                for ky in 0..3 {
                    for kx in 0..3 {
                        let sy = y as isize + ky as isize - 1;
                        let sx = xx as isize + kx as isize - 1;
                        if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w {
                            acc += conv.weight[[o, ci * 9 + ky * 3 + kx]]
                                * x[[bi, ci, sy as usize, sx as usize]];
                        }
                    }
                }
            }
            acc
        })
    }

    #[test]
    fn conv_matches_direct_loops() {
        let conv = Conv2d::<f64>::new(3, 4, 1, "c");
        let x = random4((2, 3, 5, 6), 2);
        let (y, _) = conv.forward(&x);
        let oracle = conv_direct(&conv, &x);
        for (a, b) in y.iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_backward_matches_direct_adjoint_and_weight_oracle() {
        let conv = Conv2d::<f64>::new(3, 2, 7, "c");
        let x = random4((2, 3, 5, 6), 3);
        let dy = random4((2, 2, 5, 6), 4);
        let (_, cache) = conv.forward(&x);
        let mut g = conv.zeros_like();
        let dx = conv.backward(&cache, x.dim(), &dy, &mut g);
        // <conv(x) - b, dy> == <x, dx>
        let mut nobias = conv.clone();
        nobias.bias.fill(0.0);
        let lhs = (&conv_direct(&nobias, &x) * &dy).sum();
        let rhs = (&x * &dx).sum();
        assert!((lhs - rhs).abs() < 1e-10);
        // dW[o, ci, tap] = sum over pixels of dy * shifted x.
        for (o, k) in [(0, 0), (1, 13), (0, 26), (1, 4)] {
            let mut e = Conv2d::<f64>::new(3, 2, 7, "c");
            e.weight.fill(0.0);
            e.bias.fill(0.0);
            e.weight[[o, k]] = 1.0;
            let expected = (&conv_direct(&e, &x) * &dy).sum();
            assert!((g.weight[[o, k]] - expected).abs() < 1e-10);
        }
        assert!((g.bias[1] - dy.slice(s![.., 1, .., ..]).sum()).abs() < 1e-10);
    }

    #[test]
    fn fast_tanh_matches_libm() {
        for i in -400..=400 {
            let z = i as f64 * 0.05;
            assert!((tanh(z) - z.tanh()).abs() < 1e-15, "{z}");
        }
        assert_eq!(tanh(1e6f32), 1.0);
        assert_eq!(tanh(-1e6f32), -1.0);
    }

    #[test]
    fn gelu_derivative_matches_finite_difference() {
        let x = ndarray::Array1::linspace(-4.0f64, 4.0, 41);
        let ones = ndarray::Array1::ones(41);
        let d = gelu_backward(&x, &ones);
        let h = 1e-5;
        for (i, &v) in x.iter().enumerate() {
            let fd = (gelu(&ndarray::arr1(&[v + h]))[0] - gelu(&ndarray::arr1(&[v - h]))[0]) / (2.0 * h);
            assert!((fd - d[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn refine_block_input_gradient() {
        let block = RefineBlock::<f64>::new(5, "r");
        let x = random4((1, 2, 4, 4), 6);
        let (y, cache) = block.forward(&x);
        let mut g = block.zeros_like();
        let dx = block.backward(&cache, &(&y * 2.0), &mut g);
        let loss = |x: &Array4<f64>| block.forward(x).0.mapv(|v| v * v).sum();
        let h = 1e-5;
        for idx in [(0, 0, 0, 0), (0, 1, 2, 3), (0, 0, 3, 1)] {
            let mut xp = x.clone();
            xp[idx] += h;
            let mut xm = x.clone();
            xm[idx] -= h;
            let fd = (loss(&xp) - loss(&xm)) / (2.0 * h);
            assert!((fd - dx[idx]).abs() < 1e-6 * fd.abs().max(1.0));
        }
    }
}
