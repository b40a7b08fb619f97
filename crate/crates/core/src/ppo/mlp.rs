//! Dense tanh network over a flat parameter vector, with manual backprop.

use rand::Rng;
use rand_distr::StandardNormal;

/// Fully connected network: tanh on hidden layers, linear output.
/// Parameters are stored layer by layer, each as a row-major `out × in`
/// weight matrix followed by the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
}

/// Layer activations from a forward pass, kept for backprop.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// `acts[0]` is the input, `acts[l]` the output of layer `l`.
    pub acts: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("non-empty cache")
    }
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// Gaussian init scaled by `1/sqrt(fan_in)`; the output layer is further
    /// scaled by `out_scale`. Biases start at zero.
    pub fn new(sizes: &[usize], out_scale: f64, rng: &mut impl Rng) -> Self {
        assert!(sizes.len() >= 2, "need input and output sizes");
        let mut params = Vec::with_capacity(param_count(sizes));
        let layers = sizes.len() - 1;
        for (l, w) in sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let mut scale = 1.0 / (n_in as f64).sqrt();
            if l + 1 == layers {
                scale *= out_scale;
            }
            for _ in 0..n_in * n_out {
                let z: f64 = rng.sample(StandardNormal);
                params.push(z * scale);
            }
            params.extend(std::iter::repeat_n(0.0, n_out));
        }
        Mlp {
            sizes: sizes.to_vec(),
            params,
        }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Mlp {
            sizes: sizes.to_vec(),
            params: vec![0.0; param_count(sizes)],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("sizes non-empty")
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn layer_count(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let mut off = 0;
        for l in 0..self.layer_count() {
            a = self.layer(l, &mut off, &a);
        }
        a
    }

    pub fn forward_cached(&self, x: &[f64]) -> MlpCache {
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(x.to_vec());
        let mut off = 0;
        for l in 0..self.layer_count() {
            let next = self.layer(l, &mut off, acts.last().expect("input pushed"));
            acts.push(next);
        }
        MlpCache { acts }
    }

    fn layer(&self, l: usize, off: &mut usize, a: &[f64]) -> Vec<f64> {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        debug_assert_eq!(a.len(), n_in);
        let w = &self.params[*off..*off + n_in * n_out];
        let b = &self.params[*off + n_in * n_out..*off + n_in * n_out + n_out];
        *off += n_in * n_out + n_out;
        let hidden = l + 1 < self.layer_count();
        (0..n_out)
            .map(|o| {
                let row = &w[o * n_in..(o + 1) * n_in];
                let z = b[o] + row.iter().zip(a).map(|(wi, ai)| wi * ai).sum::<f64>();
                if hidden {
                    z.tanh()
                } else {
                    z
                }
            })
            .collect()
    }

    /// Accumulate `d loss / d params` into `grad` given `d loss / d output`.
    pub fn backward(&self, cache: &MlpCache, grad_out: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let layers = self.layer_count();
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        let mut delta = grad_out.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let a_in = &cache.acts[l];
            let base = offsets[l];
            {
                let (gw, gb) = grad[base..base + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for o in 0..n_out {
                    let d = delta[o];
                    gb[o] += d;
                    let row = &mut gw[o * n_in..(o + 1) * n_in];
                    for (g, a) in row.iter_mut().zip(a_in) {
                        *g += d * a;
                    }
                }
            }
            if l > 0 {
                let w = &self.params[base..base + n_in * n_out];
                let mut prev = vec![0.0; n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    for (p, wi) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *p += d * wi;
                    }
                }
                for (p, a) in prev.iter_mut().zip(a_in) {
                    *p *= 1.0 - a * a;
                }
                delta = prev;
            }
        }
    }
}
