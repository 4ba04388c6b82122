//! 3→2→3 autoencoder over normalized SSM triples.
//!
//! The hidden layer uses tanh. The `Linear` variant has an identity output
//! and mean-absolute-error loss; the `Tanh` variant squashes the output to
//! (0, 1) with `(tanh(z) + 1) / 2` and trains with binary cross-entropy.
//! The reconstruction MAE is the risk score in both cases.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const INPUTS: usize = 3;
pub const HIDDEN: usize = 2;
/// Number of trainable parameters.
pub const PARAMS: usize = HIDDEN * INPUTS + HIDDEN + INPUTS * HIDDEN + INPUTS;
pub const MIN_TRAINING_SAMPLES: usize = 100;

const MAGIC: &[u8; 4] = b"SSAE";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AeVariant {
    Linear,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AeHyperparameters {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Training sets larger than this are subsampled (seeded) before training.
    pub max_samples: usize,
}

impl Default for AeHyperparameters {
    fn default() -> Self {
        AeHyperparameters { epochs: 200, learning_rate: 0.01, batch_size: 32, seed: 7, max_samples: 100_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    variant: AeVariant,
    /// Flat parameters: encoder weights (row-major, HIDDEN x INPUTS), encoder
    /// bias, decoder weights (row-major, INPUTS x HIDDEN), decoder bias.
    params: [f64; PARAMS],
    meta: TrainingMeta,
}

const ENC_B: usize = HIDDEN * INPUTS;
const DEC_W: usize = ENC_B + HIDDEN;
const DEC_B: usize = DEC_W + INPUTS * HIDDEN;

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

struct Forward {
    hidden: [f64; HIDDEN],
    pre_output: [f64; INPUTS],
    output: [f64; INPUTS],
}

impl Autoencoder {
    pub fn from_params(variant: AeVariant, params: [f64; PARAMS]) -> Self {
        Autoencoder {
            variant,
            params,
            meta: TrainingMeta { epochs: 0, learning_rate: 0.0, batch_size: 0, seed: 0, final_loss: f64::NAN },
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn initialized(variant: AeVariant, rng: &mut impl Rng) -> Self {
        let mut params = [0.0; PARAMS];
        let limit = (6.0 / (INPUTS + HIDDEN) as f64).sqrt();
        for i in (0..ENC_B).chain(DEC_W..DEC_B) {
            params[i] = rng.random_range(-limit..limit);
        }
        Autoencoder::from_params(variant, params)
    }

    pub fn variant(&self) -> AeVariant {
        self.variant
    }

    pub fn params(&self) -> &[f64; PARAMS] {
        &self.params
    }

    pub fn meta(&self) -> &TrainingMeta {
        &self.meta
    }

    fn forward(&self, x: &[f64; INPUTS]) -> Forward {
        let p = &self.params;
        let mut hidden = [0.0; HIDDEN];
        for (j, h) in hidden.iter_mut().enumerate() {
            let mut a = p[ENC_B + j];
            for (k, xk) in x.iter().enumerate() {
                a += p[j * INPUTS + k] * xk;
            }
            *h = a.tanh();
        }
        let mut pre_output = [0.0; INPUTS];
        let mut output = [0.0; INPUTS];
        for i in 0..INPUTS {
            let mut z = p[DEC_B + i];
            for (j, h) in hidden.iter().enumerate() {
                z += p[DEC_W + i * HIDDEN + j] * h;
            }
            pre_output[i] = z;
            output[i] = match self.variant {
                AeVariant::Linear => z,
                AeVariant::Tanh => (z.tanh() + 1.0) / 2.0,
            };
        }
        Forward { hidden, pre_output, output }
    }

    pub fn reconstruct(&self, x: &[f64; INPUTS]) -> [f64; INPUTS] {
        self.forward(x).output
    }

    /// Reconstruction mean absolute error, the risk score.
    pub fn risk(&self, x: &[f64; INPUTS]) -> f64 {
        let y = self.reconstruct(x);
        x.iter().zip(&y).map(|(a, b)| (a - b).abs()).sum::<f64>() / INPUTS as f64
    }

    fn sample_loss(&self, x: &[f64; INPUTS], fwd: &Forward) -> f64 {
        let per_dim: f64 = match self.variant {
            AeVariant::Linear => x.iter().zip(&fwd.output).map(|(a, b)| (b - a).abs()).sum(),
            // (tanh(z)+1)/2 = sigmoid(2z), so the BCE terms reduce to softplus.
            AeVariant::Tanh => {
                x.iter().zip(&fwd.pre_output).map(|(t, z)| t * softplus(-2.0 * z) + (1.0 - t) * softplus(2.0 * z)).sum()
            }
        };
        per_dim / INPUTS as f64
    }

    /// Mean training loss over `batch`.
    pub fn loss(&self, batch: &[[f64; INPUTS]]) -> f64 {
        let total: f64 = batch.iter().map(|x| self.sample_loss(x, &self.forward(x))).sum();
        total / batch.len() as f64
    }

    /// Mean loss over `batch` and its gradient with respect to [`Self::params`].
    pub fn loss_and_gradient(&self, batch: &[[f64; INPUTS]]) -> (f64, [f64; PARAMS]) {
        let p = &self.params;
        let mut grad = [0.0; PARAMS];
        let mut total = 0.0;
        for x in batch {
            let fwd = self.forward(x);
            total += self.sample_loss(x, &fwd);
            let mut dz = [0.0; INPUTS];
            for i in 0..INPUTS {
                let diff = fwd.output[i] - x[i];
                dz[i] = match self.variant {
                    AeVariant::Linear => {
                        if diff > 0.0 {
                            1.0
                        } else if diff < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    }
                    AeVariant::Tanh => 2.0 * (sigmoid(2.0 * fwd.pre_output[i]) - x[i]),
                } / INPUTS as f64;
            }
            let mut dh = [0.0; HIDDEN];
            for i in 0..INPUTS {
                grad[DEC_B + i] += dz[i];
                for j in 0..HIDDEN {
                    grad[DEC_W + i * HIDDEN + j] += dz[i] * fwd.hidden[j];
                    dh[j] += dz[i] * p[DEC_W + i * HIDDEN + j];
                }
            }
            for j in 0..HIDDEN {
                let da = dh[j] * (1.0 - fwd.hidden[j] * fwd.hidden[j]);
                grad[ENC_B + j] += da;
                for k in 0..INPUTS {
                    grad[j * INPUTS + k] += da * x[k];
                }
            }
        }
        let n = batch.len() as f64;
        for g in &mut grad {
            *g /= n;
        }
        (total / n, grad)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&FORMAT_VERSION.to_le_bytes())?;
        let variant: u32 = match self.variant {
            AeVariant::Linear => 0,
            AeVariant::Tanh => 1,
        };
        out.write_all(&variant.to_le_bytes())?;
        out.write_all(&(INPUTS as u32).to_le_bytes())?;
        out.write_all(&(HIDDEN as u32).to_le_bytes())?;
        for p in &self.params {
            out.write_all(&p.to_le_bytes())?;
        }
        out.write_all(&(self.meta.epochs as u64).to_le_bytes())?;
        out.write_all(&self.meta.learning_rate.to_le_bytes())?;
        out.write_all(&(self.meta.batch_size as u64).to_le_bytes())?;
        out.write_all(&self.meta.seed.to_le_bytes())?;
        out.write_all(&self.meta.final_loss.to_le_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        fn take<const N: usize>(input: &mut impl Read) -> Result<[u8; N]> {
            let mut buf = [0u8; N];
            input.read_exact(&mut buf).map_err(|e| Error::ModelFormat(format!("truncated model file: {e}")))?;
            Ok(buf)
        }
        let u32_of = |b: [u8; 4]| u32::from_le_bytes(b);

        if &take::<4>(&mut input)? != MAGIC {
            return Err(Error::ModelFormat("bad magic".into()));
        }
        let version = u32_of(take(&mut input)?);
        if version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!("unsupported version {version}")));
        }
        let variant = match u32_of(take(&mut input)?) {
            0 => AeVariant::Linear,
            1 => AeVariant::Tanh,
            v => return Err(Error::ModelFormat(format!("unknown variant tag {v}"))),
        };
        let (n_in, n_hidden) = (u32_of(take(&mut input)?), u32_of(take(&mut input)?));
        if (n_in as usize, n_hidden as usize) != (INPUTS, HIDDEN) {
            return Err(Error::ModelFormat(format!("unsupported shape {n_in}x{n_hidden}")));
        }
        let mut params = [0.0; PARAMS];
        for p in &mut params {
            *p = f64::from_le_bytes(take(&mut input)?);
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::ModelFormat("non-finite parameter".into()));
        }
        let meta = TrainingMeta {
            epochs: u64::from_le_bytes(take(&mut input)?) as usize,
            learning_rate: f64::from_le_bytes(take(&mut input)?),
            batch_size: u64::from_le_bytes(take(&mut input)?) as usize,
            seed: u64::from_le_bytes(take(&mut input)?),
            final_loss: f64::from_le_bytes(take(&mut input)?),
        };
        Ok(Autoencoder { variant, params, meta })
    }
}

/// Mini-batch gradient descent on safe-frame vectors. Deterministic for a
/// given seed.
pub fn ae_train(samples: &[[f64; INPUTS]], variant: AeVariant, hyper: &AeHyperparameters) -> Result<Autoencoder> {
    if samples.len() < MIN_TRAINING_SAMPLES {
        return Err(Error::InsufficientData { got: samples.len(), min: MIN_TRAINING_SAMPLES });
    }
    if hyper.batch_size == 0 || !(hyper.learning_rate > 0.0 && hyper.learning_rate.is_finite()) {
        return Err(Error::InvalidConfig("batch size and learning rate must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut data: Vec<[f64; INPUTS]> = samples.to_vec();
    if hyper.max_samples > 0 && data.len() > hyper.max_samples {
        data.shuffle(&mut rng);
        data.truncate(hyper.max_samples.max(MIN_TRAINING_SAMPLES));
    }
    let mut model = Autoencoder::initialized(variant, &mut rng);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut batch = Vec::with_capacity(hyper.batch_size);
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(hyper.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| data[i]));
            let (loss, grad) = model.loss_and_gradient(&batch);
            if !loss.is_finite() {
                return Err(Error::DivergedTraining { epoch });
            }
            for (p, g) in model.params.iter_mut().zip(&grad) {
                *p -= hyper.learning_rate * g;
            }
        }
        if model.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::DivergedTraining { epoch });
        }
    }
    let final_loss = model.loss(&data);
    if !final_loss.is_finite() {
        return Err(Error::DivergedTraining { epoch: hyper.epochs });
    }
    model.meta = TrainingMeta {
        epochs: hyper.epochs,
        learning_rate: hyper.learning_rate,
        batch_size: hyper.batch_size,
        seed: hyper.seed,
        final_loss,
    };
    Ok(model)
}
