//! Minimal layer library with explicit backward passes.
//!
//! Layers are generic over [`Scalar`] so that the same network can be run in
//! f32 for training and cloned into f64 for finite-difference checks. Every
//! layer exposes its parameters as named flat slices; a gradient is stored in
//! a value of the same type as the layer.

mod adam;
mod layers;
mod transformer;

pub use adam::{Adam, AdamConfig};
pub use layers::{
    center, gelu, gelu_backward, leaky_relu, leaky_relu_backward, scaled_sigmoid, scaled_sigmoid_backward, sigmoid, CnnStem, CnnStemCache, Conv2d, Dense,
    RefineBlock, RefineCache,
};
pub use transformer::{TransformerCache, TransformerStem};

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use rand::Rng;

pub trait Scalar:
    Float
    + NumAssign
    + LinalgScalar
    + ScalarOperand
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[inline]
pub fn cst<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("constant representable")
}

/// Borrowed view of one named parameter array.
pub struct ParamView<'a, T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [T],
}

pub type ParamMut<'a, T> = (String, &'a mut [T]);

/// Named access to the trainable arrays of a layer or network.
///
/// `params` and `params_mut` must enumerate the same arrays in the same order.
pub trait Parameters<T: Scalar> {
    fn params(&self) -> Vec<ParamView<'_, T>>;
    fn params_mut(&mut self) -> Vec<ParamMut<'_, T>>;

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.data.len()).sum()
    }

    fn fill_zero(&mut self) {
        for (_, data) in self.params_mut() {
            data.fill(T::zero());
        }
    }

    fn zeros_like(&self) -> Self
    where
        Self: Clone + Sized,
    {
        let mut g = self.clone();
        g.fill_zero();
        g
    }

    /// Adds `other` element-wise, scaled by `factor`.
    fn add_scaled(&mut self, other: &Self, factor: T)
    where
        Self: Sized,
    {
        for ((_, dst), src) in self.params_mut().into_iter().zip(other.params()) {
            for (d, s) in dst.iter_mut().zip(src.data) {
                *d = *d + *s * factor;
            }
        }
    }
}

pub(crate) fn prefixed<'a, T>(
    prefix: &str,
    views: Vec<ParamView<'a, T>>,
) -> impl Iterator<Item = ParamView<'a, T>> + 'a {
    let prefix = prefix.to_string();
    views.into_iter().map(move |mut v| {
        v.name = format!("{prefix}.{}", v.name);
        v
    })
}

pub(crate) fn prefixed_mut<'a, T>(
    prefix: &str,
    views: Vec<ParamMut<'a, T>>,
) -> impl Iterator<Item = ParamMut<'a, T>> + 'a {
    let prefix = prefix.to_string();
    views
        .into_iter()
        .map(move |(name, data)| (format!("{prefix}.{name}"), data))
}

/// Copies parameter values between networks of identical structure,
/// converting the scalar type.
pub fn copy_params<T: Scalar, U: Scalar>(src: &impl Parameters<T>, dst: &mut impl Parameters<U>) {
    let src = src.params();
    let dst = dst.params_mut();
    assert_eq!(src.len(), dst.len(), "parameter structure differs");
    for (s, (name, d)) in src.into_iter().zip(dst) {
        assert_eq!(s.name, name, "parameter order differs");
        assert_eq!(s.data.len(), d.len(), "parameter {name} length differs");
        for (x, y) in s.data.iter().zip(d.iter_mut()) {
            *y = U::from_f64(x.to_f64().unwrap()).unwrap();
        }
    }
}

/// Deterministic fan-in uniform initializer: values in `(-1/sqrt(fan_in), 1/sqrt(fan_in))`,
/// drawn from a stream keyed by `(seed, key)`.
pub(crate) fn init_uniform<T: Scalar>(len: usize, fan_in: usize, seed: u64, key: &str) -> Vec<T> {
    let mut rng = crate::seed::rng_for(seed, key);
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..len)
        .map(|_| cst(rng.random_range(-bound..bound)))
        .collect()
}
