use ndarray::{s, Array2, Array3, Array4, Axis};

use super::layers::{gelu, gelu_backward, Dense};
use super::{cst, prefixed, prefixed_mut, ParamMut, ParamView, Parameters, Scalar};

/// One single-head transformer block operating on the delay rows of a
/// `[b, 2, n_delay, n_tx]` tensor. Each row (real and imaginary parts
/// concatenated, `2 * n_tx` values) is a token. Tokens are embedded to
/// `model_dim`, passed through residual self-attention and a residual
/// feed-forward layer, projected back and added to the input.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerStem<T> {
    pub embed: Dense<T>,
    pub query: Dense<T>,
    pub key: Dense<T>,
    pub value: Dense<T>,
    pub output: Dense<T>,
    pub ff1: Dense<T>,
    pub ff2: Dense<T>,
    pub unembed: Dense<T>,
}

pub struct TransformerCache<T> {
    dim: (usize, usize, usize, usize),
    x: Array2<T>,
    h0: Array2<T>,
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    attn: Array3<T>,
    o: Array2<T>,
    h1: Array2<T>,
    z: Array2<T>,
    gz: Array2<T>,
    h2: Array2<T>,
}

pub(crate) fn to_tokens<T: Scalar>(u: &Array4<T>) -> Array2<T> {
    let (b, c, n, w) = u.dim();
    u.view()
        .permuted_axes([0, 2, 1, 3])
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((b * n, c * w))
        .unwrap()
}

pub(crate) fn from_tokens<T: Scalar>(t: Array2<T>, dim: (usize, usize, usize, usize)) -> Array4<T> {
    let (b, c, n, w) = dim;
    t.into_shape_with_order((b, n, c, w))
        .unwrap()
        .permuted_axes([0, 2, 1, 3])
        .as_standard_layout()
        .into_owned()
}

impl<T: Scalar> TransformerStem<T> {
    pub fn new(token_dim: usize, model_dim: usize, ff_expansion: usize, seed: u64, key: &str) -> Self {
        let d = model_dim;
        let k = |name: &str| format!("{key}.{name}");
        Self {
            embed: Dense::new(token_dim, d, seed, &k("embed")),
            query: Dense::new(d, d, seed, &k("query")),
            key: Dense::new(d, d, seed, &k("key")),
            value: Dense::new(d, d, seed, &k("value")),
            output: Dense::new(d, d, seed, &k("output")),
            ff1: Dense::new(d, ff_expansion * d, seed, &k("ff1")),
            ff2: Dense::new(ff_expansion * d, d, seed, &k("ff2")),
            unembed: Dense::new(d, token_dim, seed, &k("unembed")),
        }
    }

    pub fn model_dim(&self) -> usize {
        self.query.n_in()
    }

    pub fn forward(&self, u: &Array4<T>) -> (Array4<T>, TransformerCache<T>) {
        let dim = u.dim();
        let (b, _, n, _) = dim;
        let x = to_tokens(u);
        let h0 = self.embed.forward(&x);
        let q = self.query.forward(&h0);
        let k = self.key.forward(&h0);
        let v = self.value.forward(&h0);
        let scale: T = cst(1.0 / (self.model_dim() as f64).sqrt());

        let mut attn = Array3::<T>::zeros((b, n, n));
        let mut o = Array2::<T>::zeros(h0.dim());
        for bi in 0..b {
            let rows = s![bi * n..(bi + 1) * n, ..];
            let mut scores = q.slice(rows).dot(&k.slice(rows).t());
            scores.mapv_inplace(|s| s * scale);
            for mut row in scores.rows_mut() {
                let max = row.fold(T::neg_infinity(), |m, &s| m.max(s));
                row.mapv_inplace(|s| (s - max).exp());
                let total = row.sum();
                row.mapv_inplace(|s| s / total);
            }
            o.slice_mut(rows).assign(&scores.dot(&v.slice(rows)));
            attn.index_axis_mut(Axis(0), bi).assign(&scores);
        }
        let h1 = &h0 + &self.output.forward(&o);
        let z = self.ff1.forward(&h1);
        let gz = gelu(&z);
        let h2 = &h1 + &self.ff2.forward(&gz);
        let y = &x + &self.unembed.forward(&h2);
        (
            from_tokens(y, dim),
            TransformerCache {
                dim,
                x,
                h0,
                q,
                k,
                v,
                attn,
                o,
                h1,
                z,
                gz,
                h2,
            },
        )
    }

    pub fn backward(&self, c: &TransformerCache<T>, dy: &Array4<T>, g: &mut Self) -> Array4<T> {
        let (b, _, n, _) = c.dim;
        let dy = to_tokens(dy);
        let dh2 = self.unembed.backward(&c.h2, &dy, &mut g.unembed);
        let dgz = self.ff2.backward(&c.gz, &dh2, &mut g.ff2);
        let dz = gelu_backward(&c.z, &dgz);
        let dh1 = &dh2 + &self.ff1.backward(&c.h1, &dz, &mut g.ff1);
        let d_o = self.output.backward(&c.o, &dh1, &mut g.output);

        let scale: T = cst(1.0 / (self.model_dim() as f64).sqrt());
        let mut dq = Array2::<T>::zeros(c.q.dim());
        let mut dk = Array2::<T>::zeros(c.k.dim());
        let mut dv = Array2::<T>::zeros(c.v.dim());
        for bi in 0..b {
            let rows = s![bi * n..(bi + 1) * n, ..];
            let a = c.attn.index_axis(Axis(0), bi);
            let d_ob = d_o.slice(rows);
            let da = d_ob.dot(&c.v.slice(rows).t());
            dv.slice_mut(rows).assign(&a.t().dot(&d_ob));
            // Softmax Jacobian, row by row.
            let row_dot = (&a * &da).sum_axis(Axis(1));
            let mut ds = da;
            for ((mut r, ar), dot) in ds.rows_mut().into_iter().zip(a.rows()).zip(row_dot.iter()) {
                r.zip_mut_with(&ar, |d, &p| *d = p * (*d - *dot) * scale);
            }
            dq.slice_mut(rows).assign(&ds.dot(&c.k.slice(rows)));
            dk.slice_mut(rows).assign(&ds.t().dot(&c.q.slice(rows)));
        }
        let mut dh0 = dh1;
        dh0 += &self.query.backward(&c.h0, &dq, &mut g.query);
        dh0 += &self.key.backward(&c.h0, &dk, &mut g.key);
        dh0 += &self.value.backward(&c.h0, &dv, &mut g.value);
        let dx = &dy + &self.embed.backward(&c.x, &dh0, &mut g.embed);
        from_tokens(dx, c.dim)
    }
}

impl<T: Scalar> Parameters<T> for TransformerStem<T> {
    fn params(&self) -> Vec<ParamView<'_, T>> {
        prefixed("embed", self.embed.params())
            .chain(prefixed("query", self.query.params()))
            .chain(prefixed("key", self.key.params()))
            .chain(prefixed("value", self.value.params()))
            .chain(prefixed("output", self.output.params()))
            .chain(prefixed("ff1", self.ff1.params()))
            .chain(prefixed("ff2", self.ff2.params()))
            .chain(prefixed("unembed", self.unembed.params()))
            .collect()
    }

    fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        prefixed_mut("embed", self.embed.params_mut())
            .chain(prefixed_mut("query", self.query.params_mut()))
            .chain(prefixed_mut("key", self.key.params_mut()))
            .chain(prefixed_mut("value", self.value.params_mut()))
            .chain(prefixed_mut("output", self.output.params_mut()))
            .chain(prefixed_mut("ff1", self.ff1.params_mut()))
            .chain(prefixed_mut("ff2", self.ff2.params_mut()))
            .chain(prefixed_mut("unembed", self.unembed.params_mut()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn token_layout_round_trips() {
        let u = Array4::from_shape_fn((2, 2, 3, 4), |(a, b, c, d)| (a * 1000 + b * 100 + c * 10 + d) as f64);
        let t = to_tokens(&u);
        assert_eq!(t.dim(), (6, 8));
        // Token (sample 1, row 2): real row then imaginary row.
        assert_eq!(t[[5, 0]], 1020.0);
        assert_eq!(t[[5, 4]], 1120.0);
        assert_eq!(from_tokens(t, u.dim()), u);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let stem = TransformerStem::<f64>::new(8, 6, 2, 3, "t");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = Array4::from_shape_fn((2, 2, 5, 4), |_| rng.random_range(-1.0..1.0));
        let loss = |s: &TransformerStem<f64>, u: &Array4<f64>| s.forward(u).0.mapv(|v| v * v).sum();
        let (y, cache) = stem.forward(&u);
        let mut g = stem.zeros_like();
        let du = stem.backward(&cache, &(&y * 2.0), &mut g);
        let h = 1e-5;
        for idx in [(0, 0, 0, 0), (1, 1, 4, 3), (0, 1, 2, 1)] {
            let mut up = u.clone();
            up[idx] += h;
            let mut um = u.clone();
            um[idx] -= h;
            let fd = (loss(&stem, &up) - loss(&stem, &um)) / (2.0 * h);
            assert!((fd - du[idx]).abs() < 1e-6 * fd.abs().max(1.0), "{fd} vs {}", du[idx]);
        }
        let analytic: Vec<(String, Vec<f64>)> =
            g.params().into_iter().map(|p| (p.name, p.data.to_vec())).collect();
        for (pi, (name, grad)) in analytic.iter().enumerate() {
            for j in [0, grad.len() / 2, grad.len() - 1] {
                let mut sp = stem.clone();
                sp.params_mut()[pi].1[j] += h;
                let mut sm = stem.clone();
                sm.params_mut()[pi].1[j] -= h;
                let fd = (loss(&sp, &u) - loss(&sm, &u)) / (2.0 * h);
                assert!((fd - grad[j]).abs() < 1e-6 * fd.abs().max(1.0), "{name}[{j}]: {fd} vs {}", grad[j]);
            }
        }
    }
}
