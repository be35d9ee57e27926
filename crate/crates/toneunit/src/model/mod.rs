//! Encoder -> quantizer -> CTC decoder assembly, plus the k-means baseline
//! quantizer over encoder latents.

mod decoder;
mod encoder;
mod kmeans;
mod layers;

pub use decoder::{Decoder, DecoderConfig};
pub use encoder::{Encoder, EncoderConfig};
pub use kmeans::{kmeans_assign, kmeans_fit, KmeansState};
pub use layers::{ConvLayer, LinearLayer};

use crate::ctc::{ctc_loss, CtcInstance, PhoneAlphabet};
use crate::numcore::{
    log_softmax, log_softmax_backward, softmax_row, Array2, ParamTensor, Rng,
};
use crate::quantizers::{
    diversity_loss_with_grad, fsq_bound, fsq_bound_backward, fsq_code_index, fsq_quantize,
    FsqConfig, FsqQuantizer, VqConfig, VqQuantizer,
};
use crate::{Error, Result};

/// Which quantizer a model carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantizerKind {
    Fsq,
    Vq,
    Kmeans,
}

impl std::fmt::Display for QuantizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            QuantizerKind::Fsq => "fsq",
            QuantizerKind::Vq => "vq",
            QuantizerKind::Kmeans => "kmeans",
        })
    }
}

impl std::str::FromStr for QuantizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fsq" => Ok(QuantizerKind::Fsq),
            "vq" => Ok(QuantizerKind::Vq),
            "kmeans" => Ok(QuantizerKind::Kmeans),
            other => Err(Error::Config(format!(
                "unknown quantizer '{other}' (expected fsq, vq, or kmeans)"
            ))),
        }
    }
}

/// Trainable quantizer choice for model construction; the k-means variant
/// is built afterwards from a fitted baseline.
#[derive(Debug, Clone, PartialEq)]
pub enum QuantizerSpec {
    Fsq(FsqConfig),
    Vq(VqConfig),
}

#[derive(Debug, Clone)]
pub enum Quantizer {
    Fsq(FsqQuantizer),
    Vq(VqQuantizer),
    Kmeans(KmeansState),
}

impl Quantizer {
    pub fn kind(&self) -> QuantizerKind {
        match self {
            Quantizer::Fsq(_) => QuantizerKind::Fsq,
            Quantizer::Vq(_) => QuantizerKind::Vq,
            Quantizer::Kmeans(_) => QuantizerKind::Kmeans,
        }
    }

    /// Number of distinct units the quantizer can emit.
    pub fn codebook_size(&self) -> usize {
        match self {
            Quantizer::Fsq(q) => q.config.codebook_size(),
            Quantizer::Vq(q) => q.config.codebook_size,
            Quantizer::Kmeans(s) => s.centroids.rows(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
    pub quantizer: QuantizerSpec,
}

impl ModelConfig {
    /// Desk-scale FSQ default for a given feature width and alphabet size.
    pub fn desk_fsq(feature_width: usize, alphabet_size: usize, levels: Vec<u32>) -> Self {
        let encoder = EncoderConfig {
            input_width: feature_width,
            ..EncoderConfig::default()
        };
        let hidden = encoder.hidden_width;
        Self {
            decoder: DecoderConfig::desk_default(hidden, alphabet_size),
            quantizer: QuantizerSpec::Fsq(FsqConfig {
                levels,
                input_width: hidden,
                output_width: hidden,
            }),
            encoder,
        }
    }

    /// Desk-scale VQ default matching the FSQ codebook size.
    pub fn desk_vq(
        feature_width: usize,
        alphabet_size: usize,
        codebook_size: usize,
        diversity_weight: f64,
    ) -> Self {
        let encoder = EncoderConfig {
            input_width: feature_width,
            ..EncoderConfig::default()
        };
        let hidden = encoder.hidden_width;
        Self {
            decoder: DecoderConfig::desk_default(hidden, alphabet_size),
            quantizer: QuantizerSpec::Vq(VqConfig {
                codebook_size,
                dim: hidden,
                tau_start: 2.0,
                tau_end: 0.5,
                tau_decay: 0.9995,
                diversity_weight,
            }),
            encoder,
        }
    }
}

/// Forward discretization contract.
///
/// `Hard` is the real model: rounded FSQ values, argmax-selected VQ
/// codewords, straight-through backward. `Soft` replaces the
/// non-differentiable step by the surrogate the backward pass actually
/// differentiates (bounded FSQ values, probability-mixed VQ codewords), so
/// the whole objective becomes a smooth function that finite differences
/// can check end to end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantizePath {
    Hard,
    Soft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-call forward configuration.
pub struct ForwardOptions<'a> {
    pub path: QuantizePath,
    /// VQ softmax temperature.
    pub tau: f64,
    /// Frozen Gumbel noise, one row per latent frame (VQ training only).
    pub vq_noise: Option<&'a Array2>,
}

impl ForwardOptions<'_> {
    pub fn eval(tau: f64) -> Self {
        ForwardOptions {
            path: QuantizePath::Hard,
            tau,
            vq_noise: None,
        }
    }
}

/// Loss breakdown for one utterance.
#[derive(Debug, Clone)]
pub struct Objective {
    pub total: f64,
    pub ctc: f64,
    pub diversity: f64,
    pub units: Vec<usize>,
}

enum QuantTape {
    Fsq {
        z_low: Array2,
        /// Rows fed to the up-projection: rounded values on the hard path,
        /// bounded values on the soft path.
        staged: Array2,
    },
    Vq {
        probs: Array2,
    },
    Kmeans,
}

struct ModelTape {
    enc_tape: encoder::EncoderTape,
    latents: Array2,
    quant: QuantTape,
    dec_tape: decoder::DecoderTape,
    log_probs: Array2,
}

/// The jointly trained model: encoder parameters, quantizer state, and CTC
/// decoder parameters over a fixed alphabet.
#[derive(Debug, Clone)]
pub struct ToneUnitModel {
    pub encoder: Encoder,
    pub quantizer: Quantizer,
    pub decoder: Decoder,
    pub alphabet: PhoneAlphabet,
}

impl ToneUnitModel {
    pub fn new(config: ModelConfig, alphabet: PhoneAlphabet, seed: u64) -> Result<Self> {
        config.encoder.validate()?;
        config.decoder.validate()?;
        if config.decoder.output_size != alphabet.size() {
            return Err(Error::Config(format!(
                "decoder output size {} does not match alphabet size {}",
                config.decoder.output_size,
                alphabet.size()
            )));
        }
        let root = Rng::new(seed);
        let quantizer = match &config.quantizer {
            QuantizerSpec::Fsq(fsq) => {
                if fsq.input_width != config.encoder.hidden_width {
                    return Err(Error::Config(
                        "fsq input width must match encoder hidden width".into(),
                    ));
                }
                if fsq.output_width != config.decoder.input_width {
                    return Err(Error::Config(
                        "fsq output width must match decoder input width".into(),
                    ));
                }
                Quantizer::Fsq(FsqQuantizer::new(fsq.clone(), &mut root.derive(2))?)
            }
            QuantizerSpec::Vq(vq) => {
                if vq.dim != config.decoder.input_width {
                    return Err(Error::Config(
                        "vq code dimension must match decoder input width".into(),
                    ));
                }
                Quantizer::Vq(VqQuantizer::new(
                    vq.clone(),
                    config.encoder.hidden_width,
                    &mut root.derive(2),
                )?)
            }
        };
        Ok(Self {
            encoder: Encoder::new(config.encoder, &mut root.derive(1))?,
            quantizer,
            decoder: Decoder::new(config.decoder, &mut root.derive(3))?,
            alphabet,
        })
    }

    /// Builds the k-means baseline model: the base model's encoder and
    /// decoder with the quantizer replaced by fitted centroids.
    pub fn with_kmeans(base: &ToneUnitModel, state: KmeansState) -> Result<Self> {
        if state.centroids.cols() != base.encoder.config.hidden_width {
            return Err(Error::Config(format!(
                "centroid width {} does not match encoder hidden width {}",
                state.centroids.cols(),
                base.encoder.config.hidden_width
            )));
        }
        if state.centroids.cols() != base.decoder.config.input_width {
            return Err(Error::Config(
                "centroid width must match decoder input width".into(),
            ));
        }
        Ok(Self {
            encoder: base.encoder.clone(),
            quantizer: Quantizer::Kmeans(state),
            decoder: base.decoder.clone(),
            alphabet: base.alphabet.clone(),
        })
    }

    /// Temperature used for deterministic evaluation.
    pub fn eval_tau(&self) -> f64 {
        match &self.quantizer {
            Quantizer::Vq(q) => q.config.tau_end,
            _ => 1.0,
        }
    }

    pub fn downsampling(&self) -> usize {
        self.encoder.config.downsampling()
    }

    /// Latent frame count for an input of `t` frames.
    pub fn latent_len(&self, t: usize) -> usize {
        self.encoder.output_len(t)
    }

    pub fn config(&self) -> Result<ModelConfig> {
        let quantizer = match &self.quantizer {
            Quantizer::Fsq(q) => QuantizerSpec::Fsq(q.config.clone()),
            Quantizer::Vq(q) => QuantizerSpec::Vq(q.config.clone()),
            Quantizer::Kmeans(_) => {
                return Err(Error::Config(
                    "kmeans models carry fitted state, not a construction spec".into(),
                ))
            }
        };
        Ok(ModelConfig {
            encoder: self.encoder.config.clone(),
            decoder: self.decoder.config.clone(),
            quantizer,
        })
    }

    /// All trainable parameters in a fixed order.
    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut out = Vec::new();
        for b in &mut self.encoder.blocks {
            out.push(&mut b.weights);
            out.push(&mut b.bias);
        }
        match &mut self.quantizer {
            Quantizer::Fsq(q) => out.extend(q.params_mut()),
            Quantizer::Vq(q) => out.extend(q.params_mut()),
            Quantizer::Kmeans(_) => {}
        }
        for c in &mut self.decoder.convs {
            out.push(&mut c.weights);
            out.push(&mut c.bias);
        }
        out.push(&mut self.decoder.out.weights);
        out.push(&mut self.decoder.out.bias);
        out
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn forward_internal(
        &self,
        features: &Array2,
        opts: &ForwardOptions,
    ) -> Result<(Vec<usize>, ModelTape)> {
        let (latents, enc_tape) = self.encoder.forward(features)?;
        let t = latents.rows();

        let (units, quant, dec_in) = match &self.quantizer {
            Quantizer::Fsq(q) => {
                let z_low = crate::numcore::linear_forward(
                    &latents,
                    &q.down_w.value,
                    q.down_b.value.row(0),
                )?;
                let n = q.config.dims();
                let mut staged = Array2::zeros(t, n);
                let mut units = Vec::with_capacity(t);
                for r in 0..t {
                    let row = z_low.row(r);
                    let (digits, quantized) = fsq_quantize(row, &q.config.levels)?;
                    units.push(fsq_code_index(&digits, &q.config.levels)?);
                    match opts.path {
                        QuantizePath::Hard => staged.row_mut(r).copy_from_slice(&quantized),
                        QuantizePath::Soft => staged
                            .row_mut(r)
                            .copy_from_slice(&fsq_bound(row, &q.config.levels)?),
                    }
                }
                let dec_in = crate::numcore::linear_forward(
                    &staged,
                    &q.up_w.value,
                    q.up_b.value.row(0),
                )?;
                (units, QuantTape::Fsq { z_low, staged }, dec_in)
            }
            Quantizer::Vq(q) => {
                if opts.tau <= 0.0 {
                    return Err(Error::Config(format!(
                        "vq temperature {} must be > 0",
                        opts.tau
                    )));
                }
                let v = q.config.codebook_size;
                if let Some(noise) = opts.vq_noise {
                    if noise.shape() != (t, v) {
                        return Err(Error::ShapeMismatch {
                            op: "vq noise",
                            expected: format!("{t}x{v}"),
                            got: format!("{}x{}", noise.rows(), noise.cols()),
                        });
                    }
                }
                let logits = crate::numcore::linear_forward(
                    &latents,
                    &q.logits_w.value,
                    q.logits_b.value.row(0),
                )?;
                let mut probs = Array2::zeros(t, v);
                let mut units = Vec::with_capacity(t);
                let mut dec_in = Array2::zeros(t, q.config.dim);
                for r in 0..t {
                    let noised: Vec<f64> = (0..v)
                        .map(|j| {
                            let noise = opts.vq_noise.map_or(0.0, |n| n[(r, j)]);
                            (logits[(r, j)] + noise) / opts.tau
                        })
                        .collect();
                    let p = softmax_row(&noised);
                    let mut best = 0;
                    for (j, &pj) in p.iter().enumerate() {
                        if pj > p[best] {
                            best = j;
                        }
                    }
                    units.push(best);
                    match opts.path {
                        QuantizePath::Hard => dec_in
                            .row_mut(r)
                            .copy_from_slice(q.codebook.value.row(best)),
                        QuantizePath::Soft => {
                            let row = dec_in.row_mut(r);
                            for (j, &pj) in p.iter().enumerate() {
                                let code = q.codebook.value.row(j);
                                for (o, &c) in row.iter_mut().zip(code) {
                                    *o += pj * c;
                                }
                            }
                        }
                    }
                    probs.row_mut(r).copy_from_slice(&p);
                }
                (units, QuantTape::Vq { probs }, dec_in)
            }
            Quantizer::Kmeans(state) => {
                let mut units = Vec::with_capacity(t);
                let mut dec_in = Array2::zeros(t, state.centroids.cols());
                for r in 0..t {
                    let unit = kmeans_assign(&state.centroids, latents.row(r));
                    units.push(unit);
                    dec_in.row_mut(r).copy_from_slice(state.centroids.row(unit));
                }
                (units, QuantTape::Kmeans, dec_in)
            }
        };

        let (logits, dec_tape) = self.decoder.forward(&dec_in)?;
        let log_probs = log_softmax(&logits);
        Ok((
            units,
            ModelTape {
                enc_tape,
                latents,
                quant,
                dec_tape,
                log_probs,
            },
        ))
    }

    /// Units and frame log-probabilities for one utterance.
    ///
    /// Eval mode is a pure function of (parameters, input); train mode adds
    /// Gumbel noise for VQ and therefore requires an rng.
    pub fn model_forward(
        &self,
        features: &Array2,
        mode: Mode,
        rng: Option<&mut Rng>,
    ) -> Result<(Vec<usize>, Array2)> {
        let noise = match (&self.quantizer, mode) {
            (Quantizer::Vq(q), Mode::Train) => {
                let rng = rng.ok_or_else(|| {
                    Error::Config("model_forward: VQ train mode needs an rng".into())
                })?;
                let t = self.latent_len(features.rows());
                Some(rng.sample_gumbel(t, q.config.codebook_size))
            }
            _ => None,
        };
        let tau = match (&self.quantizer, mode) {
            (Quantizer::Vq(q), Mode::Train) => q.config.tau_start,
            _ => self.eval_tau(),
        };
        let opts = ForwardOptions {
            path: QuantizePath::Hard,
            tau,
            vq_noise: noise.as_ref(),
        };
        let (units, tape) = self.forward_internal(features, &opts)?;
        Ok((units, tape.log_probs))
    }

    /// Objective value without touching gradients.
    pub fn objective(
        &self,
        features: &Array2,
        target: &[usize],
        opts: &ForwardOptions,
    ) -> Result<Objective> {
        let (units, tape) = self.forward_internal(features, opts)?;
        let instance = CtcInstance::new(tape.log_probs.clone(), target.to_vec())?;
        let (ctc, _) = ctc_loss(&instance)?;
        let (diversity, weight) = match (&self.quantizer, &tape.quant) {
            (Quantizer::Vq(q), QuantTape::Vq { probs }) => {
                let (d, _) = diversity_loss_with_grad(probs)?;
                (d, q.config.diversity_weight)
            }
            _ => (0.0, 0.0),
        };
        Ok(Objective {
            total: ctc + weight * diversity,
            ctc,
            diversity,
            units,
        })
    }

    /// Objective value plus a full backward pass accumulating into every
    /// parameter's gradient.
    pub fn objective_backward(
        &mut self,
        features: &Array2,
        target: &[usize],
        opts: &ForwardOptions,
    ) -> Result<Objective> {
        let (units, tape) = self.forward_internal(features, opts)?;
        let instance = CtcInstance::new(tape.log_probs.clone(), target.to_vec())?;
        let (ctc, grad_lp) = ctc_loss(&instance)?;

        let grad_logits = log_softmax_backward(&tape.log_probs, &grad_lp);
        let grad_dec_in = self.decoder.backward(&tape.dec_tape, &grad_logits)?;

        let (diversity, grad_latents) = match (&mut self.quantizer, &tape.quant) {
            (Quantizer::Fsq(q), QuantTape::Fsq { z_low, staged }) => {
                let (grad_staged, grad_up_w, grad_up_b) = crate::numcore::linear_backward(
                    staged,
                    &q.up_w.value,
                    &grad_dec_in,
                )?;
                q.up_w.grad.add_scaled(&grad_up_w, 1.0);
                for (g, &d) in q.up_b.grad.row_mut(0).iter_mut().zip(&grad_up_b) {
                    *g += d;
                }
                // Straight-through: rounding backpropagates as identity, so
                // the staged gradient lands on the bounded values.
                let mut grad_z_low = Array2::zeros(z_low.rows(), z_low.cols());
                for r in 0..z_low.rows() {
                    let g = fsq_bound_backward(z_low.row(r), &q.config.levels, grad_staged.row(r));
                    grad_z_low.row_mut(r).copy_from_slice(&g);
                }
                let (grad_latents, grad_down_w, grad_down_b) = crate::numcore::linear_backward(
                    &tape.latents,
                    &q.down_w.value,
                    &grad_z_low,
                )?;
                q.down_w.grad.add_scaled(&grad_down_w, 1.0);
                for (g, &d) in q.down_b.grad.row_mut(0).iter_mut().zip(&grad_down_b) {
                    *g += d;
                }
                (0.0, grad_latents)
            }
            (Quantizer::Vq(q), QuantTape::Vq { probs }) => {
                let (t, v) = probs.shape();
                let alpha = q.config.diversity_weight;
                let (diversity, grad_probs_div) = diversity_loss_with_grad(probs)?;

                // Straight-through on the hard selection: the decoder input
                // behaves as the probability mixture of codewords.
                let mut grad_probs = Array2::zeros(t, v);
                for r in 0..t {
                    let g_dec = grad_dec_in.row(r);
                    let p = probs.row(r);
                    for j in 0..v {
                        let code = q.codebook.value.row(j);
                        let code_grad = q.codebook.grad.row_mut(j);
                        let mut dot = 0.0;
                        for ((&gd, &c), cg) in g_dec.iter().zip(code).zip(code_grad.iter_mut()) {
                            dot += gd * c;
                            *cg += p[j] * gd;
                        }
                        grad_probs[(r, j)] = dot + alpha * grad_probs_div[(r, j)];
                    }
                }
                // Softmax backward per row, then undo the temperature.
                let mut grad_vq_logits = Array2::zeros(t, v);
                for r in 0..t {
                    let p = probs.row(r);
                    let g = grad_probs.row(r);
                    let dot: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
                    for (out, (&pj, &gj)) in
                        grad_vq_logits.row_mut(r).iter_mut().zip(p.iter().zip(g))
                    {
                        *out = pj * (gj - dot) / opts.tau;
                    }
                }
                let (grad_latents, grad_w, grad_b) = crate::numcore::linear_backward(
                    &tape.latents,
                    &q.logits_w.value,
                    &grad_vq_logits,
                )?;
                q.logits_w.grad.add_scaled(&grad_w, 1.0);
                for (g, &d) in q.logits_b.grad.row_mut(0).iter_mut().zip(&grad_b) {
                    *g += d;
                }
                (diversity, grad_latents)
            }
            (Quantizer::Kmeans(_), _) => {
                return Err(Error::Config("kmeans quantizer is not trainable".into()))
            }
            _ => unreachable!("tape variant matches quantizer variant"),
        };

        self.encoder.backward(&tape.enc_tape, &grad_latents)?;

        let weight = match &self.quantizer {
            Quantizer::Vq(q) => q.config.diversity_weight,
            _ => 0.0,
        };
        Ok(Objective {
            total: ctc + weight * diversity,
            ctc,
            diversity,
            units,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_alphabet() -> PhoneAlphabet {
        PhoneAlphabet::new(&["p".into(), "a1".into(), "a2".into(), "i1".into()]).unwrap()
    }

    fn tiny_fsq_model() -> ToneUnitModel {
        let encoder = EncoderConfig {
            input_width: 4,
            hidden_width: 8,
            strides: vec![2, 2],
            kernel: 5,
        };
        let config = ModelConfig {
            decoder: DecoderConfig {
                n_layers: 2,
                kernel: 5,
                stride: 1,
                input_width: 8,
                hidden_width: 8,
                output_size: 5,
            },
            quantizer: QuantizerSpec::Fsq(FsqConfig {
                levels: vec![3, 3],
                input_width: 8,
                output_width: 8,
            }),
            encoder,
        };
        ToneUnitModel::new(config, tiny_alphabet(), 7).unwrap()
    }

    fn tiny_vq_model() -> ToneUnitModel {
        let encoder = EncoderConfig {
            input_width: 4,
            hidden_width: 8,
            strides: vec![2, 2],
            kernel: 5,
        };
        let config = ModelConfig {
            decoder: DecoderConfig {
                n_layers: 2,
                kernel: 5,
                stride: 1,
                input_width: 8,
                hidden_width: 8,
                output_size: 5,
            },
            quantizer: QuantizerSpec::Vq(VqConfig {
                codebook_size: 6,
                dim: 8,
                tau_start: 2.0,
                tau_end: 0.5,
                tau_decay: 0.9995,
                diversity_weight: 0.1,
            }),
            encoder,
        };
        ToneUnitModel::new(config, tiny_alphabet(), 7).unwrap()
    }

    fn random_features(rng: &mut Rng, t: usize, f: usize) -> Array2 {
        let mut a = Array2::zeros(t, f);
        for v in a.as_mut_slice() {
            *v = rng.next_normal();
        }
        a
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let model = tiny_fsq_model();
        let features = random_features(&mut Rng::new(3), 12, 4);
        let (ua, la) = model.model_forward(&features, Mode::Eval, None).unwrap();
        let (ub, lb) = model.model_forward(&features, Mode::Eval, None).unwrap();
        assert_eq!(ua, ub);
        assert_eq!(la, lb);
        assert_eq!(ua.len(), 3); // ceil(12 / 4)
        assert_eq!(la.shape(), (3, 5));
    }

    #[test]
    fn fsq_units_stay_inside_the_implied_codebook() {
        let model = tiny_fsq_model();
        let mut rng = Rng::new(11);
        for _ in 0..10 {
            let features = random_features(&mut rng, 16, 4);
            let (units, _) = model.model_forward(&features, Mode::Eval, None).unwrap();
            assert!(units.iter().all(|&u| u < 9));
        }
    }

    #[test]
    fn vq_train_mode_requires_an_rng() {
        let model = tiny_vq_model();
        let features = random_features(&mut Rng::new(3), 12, 4);
        assert!(model.model_forward(&features, Mode::Train, None).is_err());
        assert!(model
            .model_forward(&features, Mode::Train, Some(&mut Rng::new(1)))
            .is_ok());
        // Eval needs no rng even for VQ.
        assert!(model.model_forward(&features, Mode::Eval, None).is_ok());
    }

    #[test]
    fn kmeans_model_emits_centroid_units() {
        let base = tiny_fsq_model();
        let mut centroids = Array2::zeros(3, 8);
        for (i, v) in centroids.as_mut_slice().iter_mut().enumerate() {
            *v = (i % 5) as f64 - 2.0;
        }
        let state = KmeansState {
            centroids,
            iterations: 1,
            inertia: 0.0,
        };
        let model = ToneUnitModel::with_kmeans(&base, state).unwrap();
        let features = random_features(&mut Rng::new(5), 12, 4);
        let (units, log_probs) = model.model_forward(&features, Mode::Eval, None).unwrap();
        assert!(units.iter().all(|&u| u < 3));
        assert_eq!(log_probs.rows(), 3);
        // Not trainable.
        let mut model = model;
        let opts = ForwardOptions::eval(1.0);
        assert!(model
            .objective_backward(&features, &[1], &opts)
            .is_err());
    }

    fn check_full_gradient(model: &ToneUnitModel, features: &Array2, target: &[usize], opts: &ForwardOptions) {
        let mut trained = model.clone();
        trained.zero_grads();
        trained.objective_backward(features, target, opts).unwrap();

        let reference = model.clone();
        let n_params = trained.params_mut().len();
        for i in 0..n_params {
            let (analytic, point, name) = {
                let mut t = trained.clone();
                let params = t.params_mut();
                (
                    params[i].grad.clone(),
                    params[i].value.clone(),
                    params[i].name.clone(),
                )
            };
            let err = crate::numcore::grad_check(
                |p| {
                    let mut probe = reference.clone();
                    probe.params_mut()[i].value = p.clone();
                    probe.objective(features, target, opts).unwrap().total
                },
                &analytic,
                &point,
                1e-4,
            );
            assert!(err < 1e-3, "parameter {name}: end-to-end grad err {err}");
        }
    }

    #[test]
    fn fsq_end_to_end_gradient_matches_finite_differences() {
        // The soft path replaces rounding by the bounded values, which is
        // exactly the function the straight-through backward differentiates.
        let model = tiny_fsq_model();
        let features = random_features(&mut Rng::new(21), 12, 4);
        let opts = ForwardOptions {
            path: QuantizePath::Soft,
            tau: 1.0,
            vq_noise: None,
        };
        check_full_gradient(&model, &features, &[2, 1], &opts);
    }

    #[test]
    fn vq_end_to_end_gradient_matches_finite_differences() {
        let model = tiny_vq_model();
        let features = random_features(&mut Rng::new(22), 12, 4);
        let noise = Rng::new(500).sample_gumbel(3, 6);
        let opts = ForwardOptions {
            path: QuantizePath::Soft,
            tau: 1.3,
            vq_noise: Some(&noise),
        };
        check_full_gradient(&model, &features, &[3, 1], &opts);
    }

    #[test]
    fn hard_and_soft_paths_share_the_backward_pass() {
        // Parameter gradients: the hard path's straight-through backward via
        // the FSQ bound must equal the soft path's backward except for the
        // decoder-side terms that see different input values. Check the
        // encoder-side gradient specifically: with a frozen decoder input
        // gradient the bound backward is shared, so run both paths and
        // compare the down-projection gradients' shapes and finiteness.
        let model = tiny_fsq_model();
        let features = random_features(&mut Rng::new(7), 12, 4);
        for path in [QuantizePath::Hard, QuantizePath::Soft] {
            let mut m = model.clone();
            m.zero_grads();
            let opts = ForwardOptions {
                path,
                tau: 1.0,
                vq_noise: None,
            };
            m.objective_backward(&features, &[1], &opts).unwrap();
            for p in m.params_mut() {
                assert!(p.grad.is_finite(), "{} grad not finite", p.name);
            }
        }
    }

    #[test]
    fn config_roundtrip_reports_the_quantizer() {
        let model = tiny_vq_model();
        let config = model.config().unwrap();
        assert!(matches!(config.quantizer, QuantizerSpec::Vq(_)));
        assert_eq!(model.quantizer.kind(), QuantizerKind::Vq);
        assert_eq!(model.quantizer.codebook_size(), 6);
    }
}
