//! Stacks of fully connected layers over a slice of a flat parameter vector.
//!
//! Layer `l` stores its weights row-major as `out x in`, followed by its
//! biases. Hidden layers use a rectifier; the last layer is linear unless
//! `relu_last` is set.

use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use oboe_core::rng::StreamRng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseStack {
    /// Input width followed by each layer's output width.
    pub sizes: Vec<usize>,
    pub relu_last: bool,
    /// Start of this stack's parameters in the model's flat vector.
    pub offset: usize,
}

/// Activations kept for the backward pass: `acts[0]` is the input,
/// `acts[l + 1]` the output of layer `l` after its nonlinearity.
pub struct Tape {
    pub acts: Vec<Array2<f64>>,
}

impl Tape {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().expect("tape has an input")
    }
}

impl DenseStack {
    pub fn new(sizes: Vec<usize>, relu_last: bool, offset: usize) -> Self {
        assert!(!sizes.is_empty(), "a stack needs an input width");
        Self {
            sizes,
            relu_last,
            offset,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("nonempty")
    }

    pub fn num_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn end(&self) -> usize {
        self.offset + self.num_params()
    }

    /// `(weight offset, bias offset, in, out)` per layer.
    fn layers(&self) -> Vec<(usize, usize, usize, usize)> {
        let mut off = self.offset;
        self.sizes
            .windows(2)
            .map(|w| {
                let (i, o) = (w[0], w[1]);
                let entry = (off, off + i * o, i, o);
                off += i * o + o;
                entry
            })
            .collect()
    }

    fn relu_at(&self, l: usize) -> bool {
        l + 1 < self.num_layers() || self.relu_last
    }

    /// Fan-in scaled uniform weights, zero biases.
    pub fn init(&self, params: &mut [f64], rng: &mut StreamRng) {
        for (w, b, i, o) in self.layers() {
            let bound = (6.0 / i as f64).sqrt();
            for v in &mut params[w..w + i * o] {
                *v = rng.random_range(-bound..bound);
            }
            params[b..b + o].fill(0.0);
        }
    }

    pub fn weights<'a>(&self, params: &'a [f64], l: usize) -> ArrayView2<'a, f64> {
        let (w, _, i, o) = self.layers()[l];
        ArrayView2::from_shape((o, i), &params[w..w + i * o]).expect("weight shape")
    }

    pub fn bias<'a>(&self, params: &'a [f64], l: usize) -> ArrayView1<'a, f64> {
        let (_, b, _, o) = self.layers()[l];
        ArrayView1::from(&params[b..b + o])
    }

    pub fn forward(&self, params: &[f64], input: Array2<f64>) -> Tape {
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(input);
        for l in 0..self.num_layers() {
            let x = acts.last().expect("input");
            let mut z = x.dot(&self.weights(params, l).t());
            z += &self.bias(params, l);
            if self.relu_at(l) {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        Tape { acts }
    }

    /// Signs of every rectified activation on the tape, layer by layer.
    pub fn relu_pattern(&self, tape: &Tape, out: &mut Vec<bool>) {
        for l in 0..self.num_layers() {
            if self.relu_at(l) {
                out.extend(tape.acts[l + 1].iter().map(|&a| a > 0.0));
            }
        }
    }

    /// Accumulate parameter gradients into `grad` given the gradient of the
    /// loss with respect to the stack output; returns the input gradient.
    pub fn backward(&self, params: &[f64], tape: &Tape, d_out: Array2<f64>, grad: &mut [f64], want_input: bool) -> Option<Array2<f64>> {
        let layers = self.layers();
        let mut d = d_out;
        for l in (0..self.num_layers()).rev() {
            let (w_off, b_off, i, o) = layers[l];
            if self.relu_at(l) {
                ndarray::Zip::from(&mut d).and(&tape.acts[l + 1]).for_each(|g, &a| {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                });
            }
            let x = &tape.acts[l];
            {
                let mut gw = ArrayViewMut2::from_shape((o, i), &mut grad[w_off..w_off + i * o]).expect("shape");
                gw += &d.t().dot(x);
            }
            {
                let mut gb = ArrayViewMut1::from(&mut grad[b_off..b_off + o]);
                gb += &d.sum_axis(Axis(0));
            }
            if l > 0 || want_input {
                d = d.dot(&self.weights(params, l));
            }
        }
        want_input.then_some(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use oboe_core::rng::split_rng;

    #[test]
    fn param_count_and_offsets() {
        let s = DenseStack::new(vec![3, 4, 2], false, 10);
        assert_eq!(s.num_params(), 3 * 4 + 4 + 4 * 2 + 2);
        assert_eq!(s.end(), 10 + 26);
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let s = DenseStack::new(vec![3, 5, 2], true, 0);
        let mut p = vec![0.0; s.num_params()];
        s.init(&mut p, &mut split_rng(0, "init"));
        let x = Array2::from_shape_vec((2, 3), vec![0.3, -0.2, 0.9, 1.1, 0.4, -0.7]).unwrap();
        let loss = |x: &Array2<f64>| s.forward(&p, x.clone()).output().sum();
        let tape = s.forward(&p, x.clone());
        let mut g = vec![0.0; p.len()];
        let dx = s.backward(&p, &tape, Array2::ones((2, 2)), &mut g, true).unwrap();
        for r in 0..2 {
            for c in 0..3 {
                let mut a = x.clone();
                a[[r, c]] += 1e-6;
                let mut b = x.clone();
                b[[r, c]] -= 1e-6;
                let fd = (loss(&a) - loss(&b)) / 2e-6;
                assert!((fd - dx[[r, c]]).abs() < 1e-6);
            }
        }
    }
}
