use super::layers::ConvLayer;
use crate::numcore::{relu, relu_backward, Array2, Padding, Rng};
use crate::{Error, Result};

/// Speech encoder configuration: a stack of strided conv blocks standing in
/// for a large pretrained encoder at desk scale. The leading stride-1 block
/// widens the receptive field so a latent frame sees a whole syllable of
/// context before downsampling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderConfig {
    pub input_width: usize,
    pub hidden_width: usize,
    /// Per-block strides; the total downsampling factor is their product.
    pub strides: Vec<usize>,
    pub kernel: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            input_width: 16,
            hidden_width: 64,
            strides: vec![1, 1, 2, 2],
            kernel: 5,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.strides.is_empty() || self.strides.iter().any(|&s| s == 0) || self.kernel == 0 {
            return Err(Error::Config("encoder needs blocks, stride, kernel >= 1".into()));
        }
        if self.input_width == 0 || self.hidden_width == 0 {
            return Err(Error::Config("encoder widths must be positive".into()));
        }
        Ok(())
    }

    pub fn downsampling(&self) -> usize {
        self.strides.iter().product()
    }
}

/// Conv-block encoder: same-padded strided convolutions with a ReLU between
/// blocks, leaving the final block linear so latents span both signs.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub blocks: Vec<ConvLayer>,
}

/// Activations retained by the encoder forward pass for backprop.
pub struct EncoderTape {
    inputs: Vec<Array2>,
    pre_acts: Vec<Array2>,
}

impl Encoder {
    pub fn new(config: EncoderConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut blocks = Vec::with_capacity(config.strides.len());
        for (i, &stride) in config.strides.iter().enumerate() {
            let cin = if i == 0 {
                config.input_width
            } else {
                config.hidden_width
            };
            blocks.push(ConvLayer::new(
                &format!("encoder.conv{i}"),
                config.kernel,
                cin,
                config.hidden_width,
                stride,
                Padding::Same,
                rng,
            ));
        }
        Ok(Self { config, blocks })
    }

    /// Latent frame count for an input of `t` frames: ceil(t / downsampling),
    /// applied block by block.
    pub fn output_len(&self, t: usize) -> usize {
        self.blocks
            .iter()
            .fold(t, |acc, b| b.output_len(acc).expect("same padding"))
    }

    pub fn forward(&self, input: &Array2) -> Result<(Array2, EncoderTape)> {
        if input.cols() != self.config.input_width {
            return Err(Error::ShapeMismatch {
                op: "encoder_forward",
                expected: format!("{} feature dims", self.config.input_width),
                got: format!("{}", input.cols()),
            });
        }
        let n = self.blocks.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre_acts = Vec::with_capacity(n);
        let mut x = input.clone();
        for (i, block) in self.blocks.iter().enumerate() {
            let c = block.forward(&x)?;
            inputs.push(x);
            x = if i + 1 < n { relu(&c) } else { c.clone() };
            pre_acts.push(c);
        }
        Ok((x, EncoderTape { inputs, pre_acts }))
    }

    /// Accumulates parameter gradients and returns the gradient with respect
    /// to the input frames.
    pub fn backward(&mut self, tape: &EncoderTape, grad_latents: &Array2) -> Result<Array2> {
        let n = self.blocks.len();
        let mut g = grad_latents.clone();
        for i in (0..n).rev() {
            if i + 1 < n {
                g = relu_backward(&tape.pre_acts[i], &g);
            }
            g = self.blocks[i].backward(&tape.inputs[i], &g)?;
        }
        Ok(g)
    }
}
