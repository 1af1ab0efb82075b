use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use crate::{Error, Result};

/// Fully connected feed-forward network with a flat parameter vector.
///
/// Layer `l` occupies `in_l * out_l` weights stored row-major as an
/// `[in_l, out_l]` matrix, followed by `out_l` biases. Hidden layers apply
/// the activation, the output layer is affine.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    widths: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

/// Intermediate values of a batched forward pass, kept for backpropagation.
#[derive(Clone, Debug)]
pub struct Tape {
    pub input: Array2<f64>,
    /// Post-activation outputs of each hidden layer.
    pub hidden: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

impl Mlp {
    /// Zero-parameter network with the given layer widths (input first).
    pub fn new(widths: &[usize], activation: Activation) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidInput(format!(
                "layer widths must list at least input and output, all positive; got {widths:?}"
            )));
        }
        if let Activation::LeakyRelu { slope } = activation {
            if !(slope > 0.0 && slope.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "leaky relu slope must be positive, got {slope}"
                )));
            }
        }
        Ok(Mlp {
            widths: widths.to_vec(),
            activation,
            params: vec![0.0; Self::param_count(widths)],
        })
    }

    /// `Σ (in_l·out_l + out_l)` over layers.
    pub fn param_count(widths: &[usize]) -> usize {
        widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn with_params(widths: &[usize], activation: Activation, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::new(widths, activation)?;
        net.set_params(params)?;
        Ok(net)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params = params;
        Ok(())
    }

    /// `(weight offset, bias offset)` of layer `l` in the flat vector.
    pub fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let (w, b, _) = layer_range(&self.widths, l);
        (w, b)
    }

    fn layer(&self, l: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        layer_view(&self.widths, &self.params, l)
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init_glorot<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for l in 0..self.n_layers() {
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let (w, b) = self.layer_offsets(l);
            for p in &mut self.params[w..b] {
                *p = rng.random_range(-limit..limit);
            }
            self.params[b..b + fan_out].fill(0.0);
        }
    }

    /// Zeroes the output layer so the network outputs exactly zero.
    pub fn zero_output_layer(&mut self) {
        let (w, _) = self.layer_offsets(self.n_layers() - 1);
        self.params[w..].fill(0.0);
    }

    /// Single-sample evaluation.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::InvalidInput(format!(
                "network expects input of length {}, got {}",
                self.input_dim(),
                input.len()
            )));
        }
        let mut h = input.to_vec();
        let last = self.n_layers() - 1;
        for l in 0..=last {
            let (w, b) = self.layer(l);
            let mut next = b.to_vec();
            for (k, &hk) in h.iter().enumerate() {
                for (o, nx) in next.iter_mut().enumerate() {
                    *nx += hk * w[[k, o]];
                }
            }
            if l < last {
                self.activation.apply_slice(&mut next);
            }
            h = next;
        }
        Ok(h)
    }

    fn check_batch(&self, x: &ArrayView2<f64>) {
        assert_eq!(
            x.ncols(),
            self.input_dim(),
            "batch has {} columns, network expects {}",
            x.ncols(),
            self.input_dim()
        );
    }

    fn affine(&self, l: usize, x: &ArrayView2<f64>) -> Array2<f64> {
        let (w, b) = self.layer(l);
        let mut z = Array2::zeros((x.nrows(), w.ncols()));
        for mut row in z.rows_mut() {
            row.assign(&b);
        }
        general_mat_mul(1.0, x, &w, 1.0, &mut z);
        z
    }

    fn activate(&self, z: &mut Array2<f64>) {
        match z.as_slice_mut() {
            Some(s) => self.activation.apply_slice(s),
            None => z.mapv_inplace(|v| self.activation.apply(v)),
        }
    }

    /// Batched evaluation; rows are samples.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.check_batch(&x);
        let last = self.n_layers() - 1;
        let mut h = self.affine(0, &x);
        for l in 1..=last {
            self.activate(&mut h);
            h = self.affine(l, &h.view());
        }
        h
    }

    /// Batched evaluation that records the hidden activations.
    pub fn forward_tape(&self, x: ArrayView2<f64>) -> Tape {
        self.check_batch(&x);
        let last = self.n_layers() - 1;
        let mut hidden = Vec::with_capacity(last);
        let mut h = self.affine(0, &x);
        for l in 1..=last {
            self.activate(&mut h);
            let next = self.affine(l, &h.view());
            hidden.push(h);
            h = next;
        }
        Tape {
            input: x.to_owned(),
            hidden,
            output: h,
        }
    }

    /// Reverse-mode pass for a batched forward. `grad_out` holds the adjoint of
    /// every output row; parameter gradients (summed over rows) are *added* to
    /// `param_grad` when given. Returns the adjoint of the input batch.
    pub fn backward(
        &self,
        tape: &Tape,
        grad_out: ArrayView2<f64>,
        mut param_grad: Option<&mut [f64]>,
    ) -> Array2<f64> {
        assert_eq!(grad_out.dim(), tape.output.dim());
        let mut delta = grad_out.to_owned();
        for l in (0..self.n_layers()).rev() {
            let input = if l == 0 {
                tape.input.view()
            } else {
                tape.hidden[l - 1].view()
            };
            if let Some(g) = param_grad.as_deref_mut() {
                let (mut dw, mut db) = layer_view_mut(&self.widths, g, l);
                general_mat_mul(1.0, &input.t(), &delta, 1.0, &mut dw);
                db += &delta.sum_axis(Axis(0));
            }
            let (w, _) = self.layer(l);
            let mut grad_in = delta.dot(&w.t());
            if l > 0 {
                let act = self.activation;
                Zip::from(&mut grad_in)
                    .and(&tape.hidden[l - 1])
                    .for_each(|g, &h| *g *= act.d1(h));
            }
            delta = grad_in;
        }
        delta
    }

    /// Gradient of a scalar-output network with respect to its input, per row.
    pub fn input_gradient(&self, x: ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(self.output_dim(), 1, "input_gradient needs a scalar output");
        let tape = self.forward_tape(x);
        let ones = Array2::ones((x.nrows(), 1));
        self.backward(&tape, ones.view(), None)
    }

    /// Mean over rows of `(‖∇_u C(u)‖₂ − 1)²` for a scalar-output network `C`.
    ///
    /// When `param_grad` is given, `scale ×` the parameter gradient of that
    /// mean is added to it. The gradient flows through the input-gradient
    /// computation itself (double backpropagation), including the curvature
    /// of the activation.
    pub fn gradient_penalty(
        &self,
        u: ArrayView2<f64>,
        param_grad: Option<&mut [f64]>,
        scale: f64,
    ) -> f64 {
        assert_eq!(self.output_dim(), 1, "gradient penalty needs a scalar output");
        let n_layers = self.n_layers();
        let batch = u.nrows();
        let act = self.activation;
        let tape = self.forward_tape(u);

        // Input-gradient chain: g[l] = ∂s/∂a_l, q[l] = g[l]·W_lᵀ = ∂s/∂(input of layer l).
        let mut g: Vec<Array2<f64>> = vec![Array2::zeros((0, 0)); n_layers];
        let mut q: Vec<Array2<f64>> = vec![Array2::zeros((0, 0)); n_layers];
        g[n_layers - 1] = Array2::ones((batch, 1));
        for l in (0..n_layers).rev() {
            let (w, _) = self.layer(l);
            q[l] = g[l].dot(&w.t());
            if l > 0 {
                let mut gl = q[l].clone();
                Zip::from(&mut gl)
                    .and(&tape.hidden[l - 1])
                    .for_each(|x, &h| *x *= act.d1(h));
                g[l - 1] = gl;
            }
        }
        let v = &q[0];
        let norms: Vec<f64> = v
            .rows()
            .into_iter()
            .map(|r| r.dot(&r).sqrt())
            .collect();
        let penalty = norms.iter().map(|n| (n - 1.0).powi(2)).sum::<f64>() / batch as f64;

        let Some(grad) = param_grad else {
            return penalty;
        };

        let mut qbar = v.clone();
        for (mut row, &n) in qbar.rows_mut().into_iter().zip(&norms) {
            let coef = if n > 0.0 {
                scale * 2.0 * (n - 1.0) / (n * batch as f64)
            } else {
                0.0
            };
            row *= coef;
        }

        // Reverse through the input-gradient chain.
        let mut second: Vec<Option<Array2<f64>>> = vec![None; n_layers];
        for l in 0..n_layers {
            let (w, _) = self.layer(l);
            {
                let (mut dw, _) = layer_view_mut(&self.widths, grad, l);
                general_mat_mul(1.0, &qbar.t(), &g[l], 1.0, &mut dw);
            }
            if l == n_layers - 1 {
                break;
            }
            let gbar = qbar.dot(&w);
            let h = &tape.hidden[l];
            if act.has_curvature() {
                let mut abar = Array2::zeros(gbar.dim());
                Zip::from(&mut abar)
                    .and(h)
                    .and(&q[l + 1])
                    .and(&gbar)
                    .for_each(|a, &h, &qn, &gb| *a = act.d2(h) * qn * gb);
                second[l] = Some(abar);
            }
            let mut next = gbar;
            Zip::from(&mut next).and(h).for_each(|x, &h| *x *= act.d1(h));
            qbar = next;
        }

        // Second-order terms re-enter the ordinary forward graph.
        let mut carry: Option<Array2<f64>> = None;
        for l in (0..n_layers - 1).rev() {
            let mut abar = match second[l].take() {
                Some(a) => a,
                None => Array2::zeros((batch, self.widths[l + 1])),
            };
            if let Some(above) = carry.take() {
                let (w_above, _) = self.layer(l + 1);
                let mut hbar = above.dot(&w_above.t());
                Zip::from(&mut hbar)
                    .and(&tape.hidden[l])
                    .for_each(|x, &h| *x *= act.d1(h));
                abar += &hbar;
            }
            let input = if l == 0 {
                tape.input.view()
            } else {
                tape.hidden[l - 1].view()
            };
            let (mut dw, mut db) = layer_view_mut(&self.widths, grad, l);
            general_mat_mul(1.0, &input.t(), &abar, 1.0, &mut dw);
            db += &abar.sum_axis(Axis(0));
            carry = Some(abar);
        }
        penalty
    }
}

fn layer_range(widths: &[usize], l: usize) -> (usize, usize, usize) {
    let start: usize = widths[..=l].windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    let w_len = widths[l] * widths[l + 1];
    (start, start + w_len, start + w_len + widths[l + 1])
}

fn layer_view<'a>(
    widths: &[usize],
    params: &'a [f64],
    l: usize,
) -> (ArrayView2<'a, f64>, ArrayView1<'a, f64>) {
    let (w, b, end) = layer_range(widths, l);
    (
        ArrayView2::from_shape((widths[l], widths[l + 1]), &params[w..b]).unwrap(),
        ArrayView1::from(&params[b..end]),
    )
}

fn layer_view_mut<'a>(
    widths: &[usize],
    params: &'a mut [f64],
    l: usize,
) -> (ArrayViewMut2<'a, f64>, ArrayViewMut1<'a, f64>) {
    let (w, b, end) = layer_range(widths, l);
    let (ws, bs) = params[w..end].split_at_mut(b - w);
    (
        ArrayViewMut2::from_shape((widths[l], widths[l + 1]), ws).unwrap(),
        ArrayViewMut1::from(bs),
    )
}
