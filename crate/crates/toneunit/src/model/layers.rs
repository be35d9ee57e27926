use crate::numcore::{
    conv1d_backward, conv1d_forward, conv1d_output_len, linear_backward, linear_forward, Array2,
    Conv1dKernel, Padding, ParamTensor, Rng,
};
use crate::Result;

fn init_weights(rng: &mut Rng, rows: usize, cols: usize, fan_in: usize) -> Array2 {
    let scale = 1.0 / (fan_in as f64).sqrt();
    let mut a = Array2::zeros(rows, cols);
    for v in a.as_mut_slice() {
        *v = rng.next_normal() * scale;
    }
    a
}

/// A 1-D convolution with trainable weights and bias.
#[derive(Debug, Clone)]
pub struct ConvLayer {
    pub k: usize,
    pub cin: usize,
    pub cout: usize,
    pub stride: usize,
    pub padding: Padding,
    pub weights: ParamTensor,
    pub bias: ParamTensor,
}

impl ConvLayer {
    pub fn new(
        name: &str,
        k: usize,
        cin: usize,
        cout: usize,
        stride: usize,
        padding: Padding,
        rng: &mut Rng,
    ) -> Self {
        Self {
            k,
            cin,
            cout,
            stride,
            padding,
            weights: ParamTensor::new(
                format!("{name}.weights"),
                init_weights(rng, k * cin, cout, k * cin),
            ),
            bias: ParamTensor::new(format!("{name}.bias"), Array2::zeros(1, cout)),
        }
    }

    pub fn output_len(&self, t: usize) -> Result<usize> {
        conv1d_output_len(t, self.k, self.stride, self.padding)
    }

    pub fn forward(&self, input: &Array2) -> Result<Array2> {
        let kernel = Conv1dKernel::new(self.k, self.cin, self.cout, &self.weights.value)?;
        conv1d_forward(input, &kernel, self.stride, self.bias.value.row(0), self.padding)
    }

    /// Accumulates weight and bias gradients and returns the input gradient.
    pub fn backward(&mut self, input: &Array2, grad_out: &Array2) -> Result<Array2> {
        let kernel = Conv1dKernel::new(self.k, self.cin, self.cout, &self.weights.value)?;
        let (grad_in, grad_w, grad_b) =
            conv1d_backward(input, &kernel, self.stride, self.padding, grad_out)?;
        self.weights.grad.add_scaled(&grad_w, 1.0);
        for (g, &d) in self.bias.grad.row_mut(0).iter_mut().zip(&grad_b) {
            *g += d;
        }
        Ok(grad_in)
    }
}

/// A fully connected layer with trainable weights and bias.
#[derive(Debug, Clone)]
pub struct LinearLayer {
    pub weights: ParamTensor,
    pub bias: ParamTensor,
}

impl LinearLayer {
    pub fn new(name: &str, din: usize, dout: usize, rng: &mut Rng) -> Self {
        Self {
            weights: ParamTensor::new(format!("{name}.weights"), init_weights(rng, din, dout, din)),
            bias: ParamTensor::new(format!("{name}.bias"), Array2::zeros(1, dout)),
        }
    }

    pub fn forward(&self, input: &Array2) -> Result<Array2> {
        linear_forward(input, &self.weights.value, self.bias.value.row(0))
    }

    /// Accumulates weight and bias gradients and returns the input gradient.
    pub fn backward(&mut self, input: &Array2, grad_out: &Array2) -> Result<Array2> {
        let (grad_in, grad_w, grad_b) = linear_backward(input, &self.weights.value, grad_out)?;
        self.weights.grad.add_scaled(&grad_w, 1.0);
        for (g, &d) in self.bias.grad.row_mut(0).iter_mut().zip(&grad_b) {
            *g += d;
        }
        Ok(grad_in)
    }
}
