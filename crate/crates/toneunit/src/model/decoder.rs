use super::layers::{ConvLayer, LinearLayer};
use crate::numcore::{relu, relu_backward, Array2, Padding, Rng};
use crate::{Error, Result};

/// CTC decoder configuration: identical same-padded conv layers with ReLU
/// after each, then a linear projection to the alphabet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecoderConfig {
    pub n_layers: usize,
    pub kernel: usize,
    pub stride: usize,
    pub input_width: usize,
    pub hidden_width: usize,
    /// Output size including the blank.
    pub output_size: usize,
}

impl DecoderConfig {
    pub fn desk_default(input_width: usize, output_size: usize) -> Self {
        Self {
            n_layers: 4,
            kernel: 5,
            stride: 1,
            input_width,
            hidden_width: 64,
            output_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 || self.kernel == 0 || self.stride != 1 {
            return Err(Error::Config(
                "decoder needs >= 1 layers, kernel >= 1, stride 1".into(),
            ));
        }
        if self.input_width == 0 || self.hidden_width == 0 || self.output_size < 2 {
            return Err(Error::Config(
                "decoder widths must be positive; output must include the blank".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Decoder {
    pub config: DecoderConfig,
    pub convs: Vec<ConvLayer>,
    pub out: LinearLayer,
}

/// Activations retained by the decoder forward pass for backprop.
pub struct DecoderTape {
    inputs: Vec<Array2>,
    pre_acts: Vec<Array2>,
    out_input: Array2,
}

impl Decoder {
    pub fn new(config: DecoderConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut convs = Vec::with_capacity(config.n_layers);
        for i in 0..config.n_layers {
            let cin = if i == 0 {
                config.input_width
            } else {
                config.hidden_width
            };
            convs.push(ConvLayer::new(
                &format!("decoder.conv{i}"),
                config.kernel,
                cin,
                config.hidden_width,
                config.stride,
                Padding::Same,
                rng,
            ));
        }
        let out = LinearLayer::new("decoder.out", config.hidden_width, config.output_size, rng);
        Ok(Self { config, convs, out })
    }

    /// Logits over the alphabet, one row per input frame (stride 1 with same
    /// padding preserves the sequence length).
    pub fn forward(&self, input: &Array2) -> Result<(Array2, DecoderTape)> {
        let mut inputs = Vec::with_capacity(self.convs.len());
        let mut pre_acts = Vec::with_capacity(self.convs.len());
        let mut x = input.clone();
        for conv in &self.convs {
            let c = conv.forward(&x)?;
            inputs.push(x);
            x = relu(&c);
            pre_acts.push(c);
        }
        let logits = self.out.forward(&x)?;
        Ok((
            logits,
            DecoderTape {
                inputs,
                pre_acts,
                out_input: x,
            },
        ))
    }

    /// Accumulates parameter gradients and returns the gradient with respect
    /// to the decoder input.
    pub fn backward(&mut self, tape: &DecoderTape, grad_logits: &Array2) -> Result<Array2> {
        let mut g = self.out.backward(&tape.out_input, grad_logits)?;
        for i in (0..self.convs.len()).rev() {
            g = relu_backward(&tape.pre_acts[i], &g);
            g = self.convs[i].backward(&tape.inputs[i], &g)?;
        }
        Ok(g)
    }
}
