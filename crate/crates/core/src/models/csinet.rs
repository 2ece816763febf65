//! CSINet-style autoencoder: a single fixed-size convolution in front of a
//! dense bottleneck, and a dense expansion followed by residual refinement.

use ndarray::{Array2, Array4};

use super::ModelConfig;
use crate::nn::{
    center, leaky_relu, leaky_relu_backward, prefixed, prefixed_mut, scaled_sigmoid, scaled_sigmoid_backward, Conv2d, Dense, ParamMut, ParamView, Parameters,
    RefineBlock, Scalar,
};
use crate::nn::RefineCache;

#[derive(Debug, Clone, PartialEq)]
pub struct CsiNetEncoder<T> {
    pub config: ModelConfig,
    pub conv: Conv2d<T>,
    pub fc: Dense<T>,
}

pub struct CsiNetEncoderCache<T> {
    col: Array2<T>,
    z: Array4<T>,
    flat: Array2<T>,
}

impl<T: Scalar> CsiNetEncoder<T> {
    pub fn new(config: ModelConfig, code_len: usize, seed: u64) -> Self {
        let key = config.init_key();
        let len = config.feedback_len();
        Self {
            conv: Conv2d::new(2, 2, seed, &format!("{key}.conv")),
            fc: Dense::new(len, code_len, seed, &format!("{key}.fc")),
            config,
        }
    }

    pub fn forward(&self, x: &Array4<T>) -> (Array2<T>, CsiNetEncoderCache<T>) {
        let b = x.dim().0;
        let (z, col) = self.conv.forward(&center(x, self.config.signal_gain));
        let flat = leaky_relu(&z)
            .into_shape_with_order((b, self.config.feedback_len()))
            .unwrap();
        let code = self.fc.forward(&flat);
        (code, CsiNetEncoderCache { col, z, flat })
    }

    pub fn backward(&self, c: &CsiNetEncoderCache<T>, dcode: &Array2<T>, g: &mut Self) -> Array4<T> {
        let dflat = self.fc.backward(&c.flat, dcode, &mut g.fc);
        let da = dflat.into_shape_with_order(c.z.dim()).unwrap();
        let dz = leaky_relu_backward(&c.z, &da);
        self.conv.backward(&c.col, c.z.dim(), &dz, &mut g.conv)
    }
}

impl<T: Scalar> Parameters<T> for CsiNetEncoder<T> {
    fn params(&self) -> Vec<ParamView<'_, T>> {
        prefixed("conv", self.conv.params())
            .chain(prefixed("fc", self.fc.params()))
            .collect()
    }

    fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        prefixed_mut("conv", self.conv.params_mut())
            .chain(prefixed_mut("fc", self.fc.params_mut()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsiNetDecoder<T> {
    pub config: ModelConfig,
    pub fc: Dense<T>,
    pub refine: Vec<RefineBlock<T>>,
    pub conv: Conv2d<T>,
}

pub struct CsiNetDecoderCache<T> {
    code: Array2<T>,
    refine: Vec<RefineCache<T>>,
    col: Array2<T>,
    pre: (usize, usize, usize, usize),
    y: Array4<T>,
}

impl<T: Scalar> CsiNetDecoder<T> {
    pub fn new(config: ModelConfig, code_len: usize, seed: u64) -> Self {
        let key = config.init_key();
        let len = config.feedback_len();
        Self {
            fc: Dense::new(code_len, len, seed, &format!("{key}.fc")),
            refine: (0..config.widths.refine_blocks)
                .map(|i| RefineBlock::new(seed, &format!("{key}.refine{i}")))
                .collect(),
            conv: Conv2d::new(2, 2, seed, &format!("{key}.conv")),
            config,
        }
    }

    pub fn forward(&self, code: &Array2<T>) -> (Array4<T>, CsiNetDecoderCache<T>) {
        let b = code.nrows();
        let (nc, nt) = (self.config.n_delay, self.config.n_tx);
        let mut x = self
            .fc
            .forward(code)
            .into_shape_with_order((b, 2, nc, nt))
            .unwrap();
        let mut caches = Vec::with_capacity(self.refine.len());
        for block in &self.refine {
            let (y, c) = block.forward(&x);
            caches.push(c);
            x = y;
        }
        let pre = x.dim();
        let (o, col) = self.conv.forward(&x);
        let y = scaled_sigmoid(&o, self.config.output_slope());
        (
            y.clone(),
            CsiNetDecoderCache {
                code: code.clone(),
                refine: caches,
                col,
                pre,
                y,
            },
        )
    }

    pub fn backward(&self, c: &CsiNetDecoderCache<T>, dy: &Array4<T>, g: &mut Self) -> Array2<T> {
        let d_o = scaled_sigmoid_backward(&c.y, dy, self.config.output_slope());
        let mut dx = self.conv.backward(&c.col, c.pre, &d_o, &mut g.conv);
        for ((block, cache), gb) in self
            .refine
            .iter()
            .zip(&c.refine)
            .zip(g.refine.iter_mut())
            .rev()
        {
            dx = block.backward(cache, &dx, gb);
        }
        let b = dx.dim().0;
        let dflat = dx
            .into_shape_with_order((b, self.config.feedback_len()))
            .unwrap();
        self.fc.backward(&c.code, &dflat, &mut g.fc)
    }
}

impl<T: Scalar> Parameters<T> for CsiNetDecoder<T> {
    fn params(&self) -> Vec<ParamView<'_, T>> {
        let mut v: Vec<_> = prefixed("fc", self.fc.params()).collect();
        for (i, block) in self.refine.iter().enumerate() {
            v.extend(prefixed(&format!("refine{i}"), block.params()));
        }
        v.extend(prefixed("conv", self.conv.params()));
        v
    }

    fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        let mut v: Vec<_> = prefixed_mut("fc", self.fc.params_mut()).collect();
        for (i, block) in self.refine.iter_mut().enumerate() {
            v.extend(prefixed_mut(&format!("refine{i}"), block.params_mut()));
        }
        v.extend(prefixed_mut("conv", self.conv.params_mut()));
        v
    }
}
