//! The autoencoder-classifier: a shared encoder, a mirrored decoder, and a
//! single linear classifier head on the embedding. The head grows as new
//! classes arrive; existing rows are never touched by the expansion.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::adam::AdamState;
use crate::nn::layer::{backward_stack, forward_stack, Activation, DenseLayer, LayerGrad};
use crate::nn::loss::softmax;
use crate::nn::matrix::Matrix;

/// Layer plan for the autoencoder-classifier.
///
/// Encoder: `input → hidden[0] → … → hidden[last] → embedding`; hidden layers
/// use `hidden_activation`, the embedding layer uses `embedding_activation`.
/// Decoder mirrors the encoder back to `input_dim`, ending in
/// `decoder_output_activation`. The head is one linear layer
/// `embedding → num_classes` (softmax applied by the loss / `classify`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkArch {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub embedding_dim: usize,
    pub hidden_activation: Activation,
    pub embedding_activation: Activation,
    pub decoder_output_activation: Activation,
}

impl NetworkArch {
    /// 784-512-256-32 encoder with a linear embedding; sigmoid reconstruction.
    pub fn deep_image() -> NetworkArch {
        NetworkArch {
            input_dim: 784,
            hidden: vec![512, 256],
            embedding_dim: 32,
            hidden_activation: Activation::Relu,
            embedding_activation: Activation::Linear,
            decoder_output_activation: Activation::Sigmoid,
        }
    }

    /// Single hidden layer of 100 ReLU units doubling as the embedding.
    pub fn mlp100() -> NetworkArch {
        NetworkArch {
            input_dim: 784,
            hidden: vec![],
            embedding_dim: 100,
            hidden_activation: Activation::Relu,
            embedding_activation: Activation::Relu,
            decoder_output_activation: Activation::Sigmoid,
        }
    }

    /// Small net for low-dimensional synthetic data (linear reconstruction).
    pub fn small(input_dim: usize, hidden: Vec<usize>, embedding_dim: usize) -> NetworkArch {
        NetworkArch {
            input_dim,
            hidden,
            embedding_dim,
            hidden_activation: Activation::Relu,
            embedding_activation: Activation::Linear,
            decoder_output_activation: Activation::Linear,
        }
    }

    fn encoder_plan(&self) -> Vec<(usize, usize, Activation)> {
        let mut dims = vec![self.input_dim];
        dims.extend_from_slice(&self.hidden);
        dims.push(self.embedding_dim);
        let last = dims.len() - 2;
        (0..dims.len() - 1)
            .map(|i| {
                let act = if i == last { self.embedding_activation } else { self.hidden_activation };
                (dims[i], dims[i + 1], act)
            })
            .collect()
    }

    fn decoder_plan(&self) -> Vec<(usize, usize, Activation)> {
        let mut dims = vec![self.embedding_dim];
        dims.extend(self.hidden.iter().rev());
        dims.push(self.input_dim);
        let last = dims.len() - 2;
        (0..dims.len() - 1)
            .map(|i| {
                let act = if i == last { self.decoder_output_activation } else { self.hidden_activation };
                (dims[i], dims[i + 1], act)
            })
            .collect()
    }
}

/// A batch of embedding vectors with their class labels.
#[derive(Debug, Clone)]
pub struct EmbeddingBatch {
    pub points: Matrix,
    pub labels: Vec<usize>,
}

impl EmbeddingBatch {
    pub fn new(points: Matrix, labels: Vec<usize>) -> EmbeddingBatch {
        assert_eq!(points.rows(), labels.len(), "one label per embedding row");
        EmbeddingBatch { points, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    /// Concatenates two batches (same embedding dimension).
    pub fn concat(&self, other: &EmbeddingBatch) -> Result<EmbeddingBatch> {
        let points = self.points.vstack(&other.points)?;
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Ok(EmbeddingBatch { points, labels })
    }

    /// Row indices carrying the given label.
    pub fn indices_of(&self, label: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == label).then_some(i))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub arch: NetworkArch,
    pub encoder: Vec<DenseLayer>,
    pub decoder: Vec<DenseLayer>,
    pub head: DenseLayer,
}

impl NetworkParams {
    pub fn new_seeded<R: Rng + ?Sized>(arch: &NetworkArch, initial_classes: usize, rng: &mut R) -> NetworkParams {
        assert!(initial_classes > 0, "head needs at least one class");
        let encoder = arch
            .encoder_plan()
            .into_iter()
            .map(|(i, o, a)| DenseLayer::new_seeded(i, o, a, rng))
            .collect();
        let decoder = arch
            .decoder_plan()
            .into_iter()
            .map(|(i, o, a)| DenseLayer::new_seeded(i, o, a, rng))
            .collect();
        let head = DenseLayer::new_seeded(arch.embedding_dim, initial_classes, Activation::Linear, rng);
        NetworkParams { arch: arch.clone(), encoder, decoder, head }
    }

    pub fn num_classes(&self) -> usize {
        self.head.out_dim()
    }

    pub fn embedding_dim(&self) -> usize {
        self.arch.embedding_dim
    }

    /// Encoder activations for a batch (`acts[0]` is the input).
    pub fn encoder_forward(&self, x: &Matrix) -> Result<Vec<Matrix>> {
        if x.cols() != self.arch.input_dim {
            return Err(Error::shape(
                "encode",
                format!("input has {} cols, encoder expects {}", x.cols(), self.arch.input_dim),
            ));
        }
        forward_stack(&self.encoder, x)
    }

    /// Embeddings for a batch of inputs.
    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.encoder_forward(x)?.pop().unwrap())
    }

    pub fn decoder_forward(&self, z: &Matrix) -> Result<Vec<Matrix>> {
        if z.cols() != self.arch.embedding_dim {
            return Err(Error::shape(
                "decode",
                format!("embedding has {} cols, decoder expects {}", z.cols(), self.arch.embedding_dim),
            ));
        }
        forward_stack(&self.decoder, z)
    }

    /// Reconstructions from a batch of embeddings.
    pub fn decode(&self, z: &Matrix) -> Result<Matrix> {
        Ok(self.decoder_forward(z)?.pop().unwrap())
    }

    /// Classifier logits (pre-softmax) from embeddings.
    pub fn head_logits(&self, z: &Matrix) -> Result<Matrix> {
        self.head.forward(z)
    }

    /// Class probabilities for a batch of raw inputs.
    pub fn classify(&self, x: &Matrix) -> Result<Matrix> {
        let z = self.encode(x)?;
        Ok(softmax(&self.head_logits(&z)?))
    }

    /// Grows the head to `new_total` output rows. Existing rows and biases are
    /// preserved bit for bit; new rows use the standard seeded init; Adam
    /// accumulators for the new parameters start at zero.
    pub fn expand_head<R: Rng + ?Sized>(
        &mut self,
        new_total: usize,
        rng: &mut R,
        adam: Option<&mut AdamState>,
    ) -> Result<()> {
        let old = self.head.out_dim();
        if new_total < old {
            return Err(Error::Config(format!("head cannot shrink ({old} -> {new_total})")));
        }
        if new_total == old {
            return Ok(());
        }
        let f = self.arch.embedding_dim;
        let limit = (6.0 / (f + new_total) as f64).sqrt();
        let mut weights = Matrix::zeros(new_total, f);
        weights.data_mut()[..old * f].copy_from_slice(self.head.weights.data());
        for v in &mut weights.data_mut()[old * f..] {
            *v = rng.random_range(-limit..limit);
        }
        let mut bias = self.head.bias.clone();
        bias.resize(new_total, 0.0);
        self.head = DenseLayer { weights, bias, activation: Activation::Linear };
        if let Some(state) = adam {
            let slots = self.slot_lens();
            // Head weight and bias are the last two slots by construction.
            state.expand_slot(slots.len() - 2, new_total * f);
            state.expand_slot(slots.len() - 1, new_total);
        }
        Ok(())
    }

    fn layers(&self) -> impl Iterator<Item = &DenseLayer> {
        self.encoder.iter().chain(self.decoder.iter()).chain(std::iter::once(&self.head))
    }

    /// Flat parameter layout: for each layer (encoder…, decoder…, head) the
    /// weight buffer then the bias buffer. The head occupies the final two
    /// slots so head expansion only ever grows the tail.
    pub fn slot_lens(&self) -> Vec<usize> {
        let mut lens = Vec::new();
        for l in self.layers() {
            lens.push(l.weights.data().len());
            lens.push(l.bias.len());
        }
        lens
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in self
            .encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .chain(std::iter::once(&mut self.head))
        {
            let DenseLayer { weights, bias, .. } = l;
            out.push(weights.data_mut());
            out.push(bias.as_mut_slice());
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.slot_lens().iter().sum()
    }

    /// Reads one coordinate of the flat parameter vector (slot order above).
    pub fn param_get(&self, mut idx: usize) -> f64 {
        for l in self.layers() {
            let w = l.weights.data();
            if idx < w.len() {
                return w[idx];
            }
            idx -= w.len();
            if idx < l.bias.len() {
                return l.bias[idx];
            }
            idx -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn param_set(&mut self, mut idx: usize, value: f64) {
        for l in self
            .encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .chain(std::iter::once(&mut self.head))
        {
            let w = l.weights.data_mut();
            if idx < w.len() {
                w[idx] = value;
                return;
            }
            idx -= w.len();
            if idx < l.bias.len() {
                l.bias[idx] = value;
                return;
            }
            idx -= l.bias.len();
        }
        panic!("parameter index out of range");
    }
}

/// Per-parameter gradients in the same layout as [`NetworkParams`].
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub encoder: Vec<LayerGrad>,
    pub decoder: Vec<LayerGrad>,
    pub head: LayerGrad,
}

impl ParamGrads {
    pub fn zeros_like(params: &NetworkParams) -> ParamGrads {
        let zero = |l: &DenseLayer| LayerGrad {
            dw: Matrix::zeros(l.weights.rows(), l.weights.cols()),
            db: vec![0.0; l.bias.len()],
        };
        ParamGrads {
            encoder: params.encoder.iter().map(zero).collect(),
            decoder: params.decoder.iter().map(zero).collect(),
            head: zero(&params.head),
        }
    }

    fn layer_grads(&self) -> impl Iterator<Item = &LayerGrad> {
        self.encoder.iter().chain(self.decoder.iter()).chain(std::iter::once(&self.head))
    }

    fn layer_grads_mut(&mut self) -> impl Iterator<Item = &mut LayerGrad> {
        self.encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .chain(std::iter::once(&mut self.head))
    }

    /// `self += other * scale` across every buffer.
    pub fn add_scaled(&mut self, other: &ParamGrads, scale: f64) -> Result<()> {
        let pairs = self.layer_grads_mut().zip(other.layer_grads());
        for (a, b) in pairs {
            if a.dw.rows() != b.dw.rows() || a.dw.cols() != b.dw.cols() {
                return Err(Error::shape("grad_accumulate", "layer shape mismatch".to_string()));
            }
            for (x, y) in a.dw.data_mut().iter_mut().zip(b.dw.data()) {
                *x += y * scale;
            }
            for (x, y) in a.db.iter_mut().zip(&b.db) {
                *x += y * scale;
            }
        }
        Ok(())
    }

    pub fn grad_slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for g in self.layer_grads() {
            out.push(g.dw.data());
            out.push(g.db.as_slice());
        }
        out
    }

    /// Reads one coordinate, flat layout identical to `NetworkParams`.
    pub fn grad_get(&self, mut idx: usize) -> f64 {
        for g in self.layer_grads() {
            let w = g.dw.data();
            if idx < w.len() {
                return w[idx];
            }
            idx -= w.len();
            if idx < g.db.len() {
                return g.db[idx];
            }
            idx -= g.db.len();
        }
        panic!("gradient index out of range");
    }
}

/// Forward + backward for the full autoencoder-classifier given upstream loss
/// gradients. `d_logits` is the gradient wrt the head's (linear) output;
/// `d_recon` the gradient wrt the decoder output; either may be None when that
/// path is inactive. Extra gradient flowing straight into the embedding (e.g.
/// from an alignment penalty) enters via `d_embedding_extra`.
pub struct ForwardPass {
    pub encoder_acts: Vec<Matrix>,
    pub decoder_acts: Option<Vec<Matrix>>,
    pub logits: Matrix,
}

impl NetworkParams {
    /// Runs encoder, optionally decoder, and head. Decoder is skipped when
    /// `with_decoder` is false (pure classification passes).
    pub fn forward(&self, x: &Matrix, with_decoder: bool) -> Result<ForwardPass> {
        let encoder_acts = self.encoder_forward(x)?;
        let z = encoder_acts.last().unwrap();
        let decoder_acts = if with_decoder { Some(forward_stack(&self.decoder, z)?) } else { None };
        let logits = self.head.forward(z)?;
        Ok(ForwardPass { encoder_acts, decoder_acts, logits })
    }

    /// Backpropagates the given output gradients through the whole network.
    pub fn backward(
        &self,
        pass: &ForwardPass,
        d_logits: Option<&Matrix>,
        d_recon: Option<&Matrix>,
        d_embedding_extra: Option<&Matrix>,
    ) -> Result<ParamGrads> {
        let z = pass.encoder_acts.last().unwrap();
        let n = z.rows();
        let mut d_z = Matrix::zeros(n, z.cols());

        let head_grad;
        if let Some(dl) = d_logits {
            let head_acts = vec![z.clone(), pass.logits.clone()];
            let (mut grads, d_input) = backward_stack(std::slice::from_ref(&self.head), &head_acts, dl)?;
            head_grad = grads.pop().unwrap();
            d_z.add_assign(&d_input)?;
        } else {
            head_grad = LayerGrad {
                dw: Matrix::zeros(self.head.weights.rows(), self.head.weights.cols()),
                db: vec![0.0; self.head.bias.len()],
            };
        }

        let decoder_grads;
        if let Some(dr) = d_recon {
            let acts = pass
                .decoder_acts
                .as_ref()
                .ok_or_else(|| Error::shape("backward", "reconstruction gradient without decoder pass".to_string()))?;
            let (grads, d_input) = backward_stack(&self.decoder, acts, dr)?;
            decoder_grads = grads;
            d_z.add_assign(&d_input)?;
        } else {
            decoder_grads = self
                .decoder
                .iter()
                .map(|l| LayerGrad {
                    dw: Matrix::zeros(l.weights.rows(), l.weights.cols()),
                    db: vec![0.0; l.bias.len()],
                })
                .collect();
        }

        if let Some(extra) = d_embedding_extra {
            d_z.add_assign(extra)?;
        }

        let (encoder_grads, _) = backward_stack(&self.encoder, &pass.encoder_acts, &d_z)?;
        Ok(ParamGrads { encoder: encoder_grads, decoder: decoder_grads, head: head_grad })
    }
}
