//! Versioned binary checkpoints for networks (with optimizer state) and
//! mixtures. All scalars are little-endian; f64 values round-trip bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::gmm::{GaussianMixture, GmmComponent, GmmConfig};
use crate::model::{NetworkArch, NetworkParams};
use crate::nn::adam::{AdamHyper, AdamState};
use crate::nn::layer::Activation;
use crate::nn::matrix::Matrix;

const NET_MAGIC: &[u8; 8] = b"ICLANET1";
const GMM_MAGIC: &[u8; 8] = b"ICLAGMM1";

fn act_code(a: Activation) -> u8 {
    match a {
        Activation::Relu => 0,
        Activation::Sigmoid => 1,
        Activation::Linear => 2,
    }
}

fn act_from(code: u8, w: &mut Reader) -> Result<Activation> {
    match code {
        0 => Ok(Activation::Relu),
        1 => Ok(Activation::Sigmoid),
        2 => Ok(Activation::Linear),
        other => Err(w.err(format!("unknown activation code {other}"))),
    }
}

struct Writer {
    inner: BufWriter<File>,
}

impl Writer {
    fn create(path: &Path) -> Result<Writer> {
        Ok(Writer { inner: BufWriter::new(File::create(path)?) })
    }

    fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.inner.write_all(b)?;
        Ok(())
    }

    fn u64(&mut self, v: u64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    fn f64(&mut self, v: f64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    fn f64s(&mut self, vs: &[f64]) -> Result<()> {
        for &v in vs {
            self.f64(v)?;
        }
        Ok(())
    }
}

struct Reader {
    inner: BufReader<File>,
    offset: u64,
    name: String,
}

impl Reader {
    fn open(path: &Path) -> Result<Reader> {
        let file = File::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        Ok(Reader { inner: BufReader::new(file), offset: 0, name: path.display().to_string() })
    }

    fn err(&self, detail: String) -> Error {
        Error::Parse { source_name: self.name.clone(), offset: self.offset, detail }
    }

    fn bytes(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner
            .read_exact(buf)
            .map_err(|e| self.err(format!("expected {} more bytes: {e}", buf.len())))?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.bytes(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    fn usize(&mut self) -> Result<usize> {
        Ok(self.u64()? as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.bytes(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; n];
        let mut buf = vec![0u8; n * 8];
        self.bytes(&mut buf)?;
        for (i, chunk) in buf.chunks_exact(8).enumerate() {
            out[i] = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        Ok(out)
    }

    fn magic(&mut self, expected: &[u8; 8]) -> Result<()> {
        let mut m = [0u8; 8];
        self.bytes(&mut m)?;
        if &m != expected {
            return Err(Error::Parse {
                source_name: self.name.clone(),
                offset: 0,
                detail: format!("bad magic {m:?}, expected {expected:?}"),
            });
        }
        Ok(())
    }
}

/// Network checkpoint: architecture, parameters, and (optionally) the Adam
/// accumulators needed to continue training exactly where it stopped.
pub fn save_network(params: &NetworkParams, adam: Option<&AdamState>, path: &Path) -> Result<()> {
    let mut w = Writer::create(path)?;
    w.bytes(NET_MAGIC)?;
    let arch = &params.arch;
    w.u64(arch.input_dim as u64)?;
    w.u64(arch.hidden.len() as u64)?;
    for &h in &arch.hidden {
        w.u64(h as u64)?;
    }
    w.u64(arch.embedding_dim as u64)?;
    w.bytes(&[
        act_code(arch.hidden_activation),
        act_code(arch.embedding_activation),
        act_code(arch.decoder_output_activation),
    ])?;
    w.u64(params.num_classes() as u64)?;
    for layer in params.encoder.iter().chain(&params.decoder).chain(std::iter::once(&params.head)) {
        w.f64s(layer.weights.data())?;
        w.f64s(&layer.bias)?;
    }
    match adam {
        Some(state) => {
            w.bytes(&[1])?;
            w.f64(state.hyper.learning_rate)?;
            w.f64(state.hyper.beta1)?;
            w.f64(state.hyper.beta2)?;
            w.f64(state.hyper.epsilon)?;
            w.u64(state.step_count())?;
            for slot in state.moment_slots() {
                w.u64(slot.0.len() as u64)?;
                w.f64s(slot.0)?;
                w.f64s(slot.1)?;
            }
        }
        None => w.bytes(&[0])?,
    }
    w.inner.flush()?;
    Ok(())
}

pub fn load_network(path: &Path) -> Result<(NetworkParams, Option<AdamState>)> {
    let mut r = Reader::open(path)?;
    r.magic(NET_MAGIC)?;
    let input_dim = r.usize()?;
    let n_hidden = r.usize()?;
    let hidden: Vec<usize> = (0..n_hidden).map(|_| r.usize()).collect::<Result<_>>()?;
    let embedding_dim = r.usize()?;
    let mut acts = [0u8; 3];
    r.bytes(&mut acts)?;
    let arch = NetworkArch {
        input_dim,
        hidden,
        embedding_dim,
        hidden_activation: act_from(acts[0], &mut r)?,
        embedding_activation: act_from(acts[1], &mut r)?,
        decoder_output_activation: act_from(acts[2], &mut r)?,
    };
    let num_classes = r.usize()?;
    if num_classes == 0 {
        return Err(r.err("checkpoint declares zero classes".to_string()));
    }
    // Rebuild with placeholder values, then overwrite every buffer.
    let mut params = {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        NetworkParams::new_seeded(&arch, num_classes, &mut rng)
    };
    for layer in params
        .encoder
        .iter_mut()
        .chain(params.decoder.iter_mut())
        .chain(std::iter::once(&mut params.head))
    {
        let n = layer.weights.data().len();
        let w = r.f64s(n)?;
        layer.weights = Matrix::from_vec(layer.weights.rows(), layer.weights.cols(), w);
        layer.bias = r.f64s(layer.bias.len())?;
    }
    let mut has_adam = [0u8; 1];
    r.bytes(&mut has_adam)?;
    let adam = if has_adam[0] == 1 {
        let hyper = AdamHyper {
            learning_rate: r.f64()?,
            beta1: r.f64()?,
            beta2: r.f64()?,
            epsilon: r.f64()?,
        };
        let step = r.u64()?;
        let expected = params.slot_lens();
        let mut moments = Vec::with_capacity(expected.len());
        for (i, &len) in expected.iter().enumerate() {
            let stored = r.usize()?;
            if stored != len {
                return Err(r.err(format!("optimizer slot {i} has length {stored}, parameters need {len}")));
            }
            let m = r.f64s(len)?;
            let v = r.f64s(len)?;
            moments.push((m, v));
        }
        Some(AdamState::from_parts(hyper, step, moments))
    } else {
        None
    };
    Ok((params, adam))
}

/// Mixture checkpoint: per component the class id, weight, mean, and the
/// (already regularized) covariance. Cholesky factors are recomputed on load,
/// which is deterministic given identical covariance bits.
pub fn save_mixture(gmm: &GaussianMixture, path: &Path) -> Result<()> {
    let mut w = Writer::create(path)?;
    w.bytes(GMM_MAGIC)?;
    w.u64(gmm.dim as u64)?;
    w.u64(gmm.components.len() as u64)?;
    for c in &gmm.components {
        w.u64(c.class_id as u64)?;
        w.f64(c.weight)?;
        w.f64s(&c.mean)?;
        w.f64s(c.covariance.data())?;
    }
    w.inner.flush()?;
    Ok(())
}

pub fn load_mixture(path: &Path) -> Result<GaussianMixture> {
    let mut r = Reader::open(path)?;
    r.magic(GMM_MAGIC)?;
    let dim = r.usize()?;
    let count = r.usize()?;
    if dim == 0 || count == 0 {
        return Err(r.err(format!("degenerate mixture: dim {dim}, {count} components")));
    }
    let mut components = Vec::with_capacity(count);
    for _ in 0..count {
        let class_id = r.usize()?;
        let weight = r.f64()?;
        let mean = r.f64s(dim)?;
        let cov = Matrix::from_vec(dim, dim, r.f64s(dim * dim)?);
        let comp = GmmComponent::from_fitted(class_id, weight, mean, cov)
            .map_err(|e| r.err(format!("component for class {class_id}: {e}")))?;
        components.push(comp);
    }
    Ok(GaussianMixture { dim, components })
}

/// Checks that a fit config is compatible with a stored mixture (dimension
/// only; the ridge is baked into stored covariances).
pub fn check_mixture_dim(gmm: &GaussianMixture, expected_dim: usize, _cfg: &GmmConfig) -> Result<()> {
    if gmm.dim != expected_dim {
        return Err(Error::Data(format!(
            "mixture dimension {} does not match embedding dimension {expected_dim}",
            gmm.dim
        )));
    }
    Ok(())
}
