//! Single-direction LSTM layer with exact backpropagation through time.
//!
//! Gates are stacked `[input, forget, cell, output]` in the `4h` rows of the
//! weight matrices:
//!
//! ```text
//! a_t = W_ih x_t + W_hh h_{t-1} + b
//! i = σ(a_i)   f = σ(a_f)   g = tanh(a_g)   o = σ(a_o)
//! c_t = f ⊙ c_{t-1} + i ⊙ g
//! h_t = o ⊙ tanh(c_t)
//! ```
//!
//! with `h_0 = c_0 = 0`.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::params::{matvec_add, matvec_t_add, outer_add, ParamStore, Tensor};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lstm {
    pub w_ih: Tensor,
    pub w_hh: Tensor,
    pub bias: Tensor,
    pub input: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone, Default)]
pub struct LstmCache {
    pub steps: usize,
    /// Post-activation gates, `steps x 4h`.
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    /// Hidden states, `steps x h`.
    pub h: Vec<f64>,
}

impl LstmCache {
    pub fn output(&self, t: usize, hidden: usize) -> &[f64] {
        &self.h[t * hidden..(t + 1) * hidden]
    }

    pub fn last(&self, hidden: usize) -> &[f64] {
        self.output(self.steps - 1, hidden)
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Uniform `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot(values: &mut [f64], fan_in: usize, fan_out: usize, rng: &mut SplitMix64) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in values {
        *v = rng.uniform(-limit, limit);
    }
}

/// Fills a row-major `n x n` block with an orthogonal matrix obtained by
/// Gram-Schmidt on Gaussian rows.
pub fn orthogonal(block: &mut [f64], n: usize, rng: &mut SplitMix64) {
    loop {
        for v in block.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        let mut ok = true;
        for r in 0..n {
            for p in 0..r {
                let proj: f64 = (0..n).map(|j| block[r * n + j] * block[p * n + j]).sum();
                for j in 0..n {
                    block[r * n + j] -= proj * block[p * n + j];
                }
            }
            let norm: f64 = (0..n).map(|j| block[r * n + j].powi(2)).sum::<f64>().sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            for j in 0..n {
                block[r * n + j] /= norm;
            }
        }
        if ok {
            return;
        }
    }
}

impl Lstm {
    pub fn alloc(store: &mut ParamStore, prefix: &str, group: &str, input: usize, hidden: usize) -> Self {
        Lstm {
            w_ih: store.alloc(format!("{prefix}.w_ih"), group, 4 * hidden, input),
            w_hh: store.alloc(format!("{prefix}.w_hh"), group, 4 * hidden, hidden),
            bias: store.alloc(format!("{prefix}.bias"), group, 4 * hidden, 1),
            input,
            hidden,
        }
    }

    /// Glorot input weights, orthogonal recurrent blocks per gate, zero bias
    /// except a forget-gate bias of 1.
    pub fn init(&self, values: &mut [f64], rng: &mut SplitMix64) {
        let h = self.hidden;
        glorot(self.w_ih.slice_mut(values), self.input, h, rng);
        let w_hh = self.w_hh.slice_mut(values);
        for gate in 0..4 {
            orthogonal(&mut w_hh[gate * h * h..(gate + 1) * h * h], h, rng);
        }
        let bias = self.bias.slice_mut(values);
        bias.iter_mut().for_each(|b| *b = 0.0);
        bias[h..2 * h].iter_mut().for_each(|b| *b = 1.0);
    }

    /// Runs the layer over `inputs` (`steps x input`, row-major).
    pub fn forward(&self, p: &[f64], inputs: &[f64]) -> LstmCache {
        let (h, n_in) = (self.hidden, self.input);
        let steps = inputs.len() / n_in;
        debug_assert_eq!(steps * n_in, inputs.len());
        let mut cache = LstmCache {
            steps,
            gates: vec![0.0; steps * 4 * h],
            c: vec![0.0; steps * h],
            tanh_c: vec![0.0; steps * h],
            h: vec![0.0; steps * h],
        };
        let w_ih = self.w_ih.slice(p);
        let w_hh = self.w_hh.slice(p);
        let bias = self.bias.slice(p);
        let mut a = vec![0.0; 4 * h];
        for t in 0..steps {
            a.copy_from_slice(bias);
            matvec_add(w_ih, n_in, &inputs[t * n_in..(t + 1) * n_in], &mut a);
            if t > 0 {
                let (prev, _) = cache.h.split_at(t * h);
                matvec_add(w_hh, h, &prev[(t - 1) * h..], &mut a);
            }
            let gates = &mut cache.gates[t * 4 * h..(t + 1) * 4 * h];
            for j in 0..h {
                gates[j] = sigmoid(a[j]);
                gates[h + j] = sigmoid(a[h + j]);
                gates[2 * h + j] = a[2 * h + j].tanh();
                gates[3 * h + j] = sigmoid(a[3 * h + j]);
            }
            for j in 0..h {
                let c_prev = if t > 0 { cache.c[(t - 1) * h + j] } else { 0.0 };
                let c = gates[h + j] * c_prev + gates[j] * gates[2 * h + j];
                let tc = c.tanh();
                cache.c[t * h + j] = c;
                cache.tanh_c[t * h + j] = tc;
                cache.h[t * h + j] = gates[3 * h + j] * tc;
            }
        }
        cache
    }

    /// Accumulates parameter gradients into `grad` and input gradients into
    /// `d_inputs` (`steps x input`), given `d_h` (`steps x hidden`), the
    /// loss gradient with respect to each output.
    pub fn backward(
        &self,
        p: &[f64],
        inputs: &[f64],
        cache: &LstmCache,
        d_h: &[f64],
        grad: &mut [f64],
        d_inputs: &mut [f64],
    ) {
        let (h, n_in) = (self.hidden, self.input);
        let steps = cache.steps;
        let w_ih = self.w_ih.slice(p);
        let w_hh = self.w_hh.slice(p);
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut da = vec![0.0; 4 * h];
        for t in (0..steps).rev() {
            let gates = &cache.gates[t * 4 * h..(t + 1) * 4 * h];
            for j in 0..h {
                let (i, f, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                let tc = cache.tanh_c[t * h + j];
                let dh = d_h[t * h + j] + dh_next[j];
                let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
                let c_prev = if t > 0 { cache.c[(t - 1) * h + j] } else { 0.0 };
                da[j] = dc * g * i * (1.0 - i);
                da[h + j] = dc * c_prev * f * (1.0 - f);
                da[2 * h + j] = dc * i * (1.0 - g * g);
                da[3 * h + j] = dh * tc * o * (1.0 - o);
                dc_next[j] = dc * f;
            }
            let x = &inputs[t * n_in..(t + 1) * n_in];
            outer_add(self.w_ih.slice_mut(grad), &da, x);
            for (b, d) in self.bias.slice_mut(grad).iter_mut().zip(&da) {
                *b += d;
            }
            matvec_t_add(w_ih, n_in, &da, &mut d_inputs[t * n_in..(t + 1) * n_in]);
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            if t > 0 {
                let h_prev = &cache.h[(t - 1) * h..t * h];
                outer_add(self.w_hh.slice_mut(grad), &da, h_prev);
                matvec_t_add(w_hh, h, &da, &mut dh_next);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_rows() {
        let mut rng = SplitMix64::new(4);
        let n = 6;
        let mut m = vec![0.0; n * n];
        orthogonal(&mut m, n, &mut rng);
        for a in 0..n {
            for b in 0..n {
                let d: f64 = (0..n).map(|j| m[a * n + j] * m[b * n + j]).sum();
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!((d - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mut store = ParamStore::default();
        let lstm = Lstm::alloc(&mut store, "l", "g", 3, 4);
        let cache = lstm.forward(&store.values, &[1.0, 2.0, 3.0, -1.0, 0.5, 0.0]);
        assert!(cache.h.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut store = ParamStore::default();
        let lstm = Lstm::alloc(&mut store, "l", "g", 3, 4);
        let mut rng = SplitMix64::new(8);
        lstm.init(&mut store.values, &mut rng);
        let inputs: Vec<f64> = (0..15).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let weights: Vec<f64> = (0..20).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let loss = |p: &[f64], x: &[f64]| -> f64 {
            let c = lstm.forward(p, x);
            c.h.iter().zip(&weights).map(|(a, b)| a * b).sum()
        };
        let cache = lstm.forward(&store.values, &inputs);
        let mut grad = vec![0.0; store.len()];
        let mut d_in = vec![0.0; inputs.len()];
        lstm.backward(&store.values, &inputs, &cache, &weights, &mut grad, &mut d_in);
        let eps = 1e-6;
        for j in 0..store.len() {
            let mut p = store.values.clone();
            p[j] += eps;
            let up = loss(&p, &inputs);
            p[j] -= 2.0 * eps;
            let down = loss(&p, &inputs);
            let fd = (up - down) / (2.0 * eps);
            assert!((fd - grad[j]).abs() < 1e-8, "param {j}: {fd} vs {}", grad[j]);
        }
        for j in 0..inputs.len() {
            let mut x = inputs.clone();
            x[j] += eps;
            let up = loss(&store.values, &x);
            x[j] -= 2.0 * eps;
            let down = loss(&store.values, &x);
            let fd = (up - down) / (2.0 * eps);
            assert!((fd - d_in[j]).abs() < 1e-8, "input {j}");
        }
    }
}
