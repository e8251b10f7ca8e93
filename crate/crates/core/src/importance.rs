//! Feature importance from loss gradients, and a transmitter-side evaluator
//! distilled from those gradients.
//!
//! For the affine decoder the gradient of `L = |s_hat - s|^2 / l` with
//! respect to the received tensor is `Omega = (2/l) W2^T (s_hat - s)`.
//! Pooling each `h x w` slice of `Omega` to a scalar and min-max normalizing
//! gives the importance vector. The evaluator is a ridge regression from the
//! transmitted tensor to those scores, so importance can be estimated
//! before anything is sent.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::binio::{self, Reader};
use crate::codec::{self, ChannelDraw, CodecModel, FeatureTensor, ImageSample, TrainChannel};
use crate::seeding::derive_seed;
use crate::{Error, Result};

/// Minimum number of pairs accepted by [`distill_train`].
pub const MIN_DISTILL_PAIRS: usize = 32;

/// How the `h x w` gradient entries of one feature are reduced to a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pooling {
    /// Plain average of the signed gradient entries.
    #[default]
    Signed,
    /// Average of the absolute gradient entries.
    Abs,
    /// Average of the positive parts.
    Relu,
}

impl std::str::FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signed" => Ok(Pooling::Signed),
            "abs" => Ok(Pooling::Abs),
            "relu" => Ok(Pooling::Relu),
            other => Err(Error::config(format!(
                "unknown pooling '{other}' (expected signed, abs or relu)"
            ))),
        }
    }
}

/// Normalized importance scores, one per feature.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceVector {
    pub scores: Vec<f64>,
    /// Set when every raw score was equal and the scores are all zero.
    pub tied: bool,
}

impl ImportanceVector {
    /// Min-max normalization to `[0, 1]`.
    pub fn from_raw(raw: &[f64]) -> Result<Self> {
        if raw.is_empty() || raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("raw importance scores must be finite".into()));
        }
        let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi == lo {
            return Ok(ImportanceVector {
                scores: vec![0.0; raw.len()],
                tied: true,
            });
        }
        Ok(ImportanceVector {
            scores: raw.iter().map(|v| (v - lo) / (hi - lo)).collect(),
            tied: false,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// `Omega = dL/dA_hat = (2/l) W2^T (s_hat - s)`, shaped like the features.
pub fn feature_gradient(model: &CodecModel, s: &ImageSample, s_hat: &ImageSample) -> Result<FeatureTensor> {
    let l = model.shape.l();
    if s.len() != l || s_hat.len() != l {
        return Err(Error::dim(format!(
            "codec works on {l} pixels, got {} and {}",
            s.len(),
            s_hat.len()
        )));
    }
    let r = DVector::from_iterator(l, s_hat.pixels.iter().zip(&s.pixels).map(|(a, b)| a - b));
    let g = model.w2.transpose() * r * (2.0 / l as f64);
    let sh = &model.shape;
    FeatureTensor::new(g.as_slice().to_vec(), sh.c, sh.h, sh.w)
}

/// Reduces each feature slice of `omega` to one raw score.
pub fn pool(omega: &FeatureTensor, pooling: Pooling) -> Vec<f64> {
    let n = omega.feature_len() as f64;
    (0..omega.c)
        .map(|k| {
            let f = omega.feature(k);
            match pooling {
                Pooling::Signed => f.iter().sum::<f64>() / n,
                Pooling::Abs => f.iter().map(|v| v.abs()).sum::<f64>() / n,
                Pooling::Relu => f.iter().map(|v| v.max(0.0)).sum::<f64>() / n,
            }
        })
        .collect()
}

/// Gradient-based importance of the features of `a_hat`, where
/// `s_hat = decode(model, a_hat)`.
pub fn grad_importance(
    model: &CodecModel,
    a_hat: &FeatureTensor,
    s: &ImageSample,
    s_hat: &ImageSample,
    pooling: Pooling,
) -> Result<ImportanceVector> {
    let sh = &model.shape;
    if (a_hat.c, a_hat.h, a_hat.w) != (sh.c, sh.h, sh.w) {
        return Err(Error::dim("feature tensor does not match the codec"));
    }
    let omega = feature_gradient(model, s, s_hat)?;
    ImportanceVector::from_raw(&pool(&omega, pooling))
}

/// Which decoder pass supplies the distillation labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelPass {
    /// Decode the transmitted tensor directly.
    #[default]
    Noiseless,
    /// Decode after one sampled channel realization per image.
    PostChannel,
}

impl std::str::FromStr for LabelPass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noiseless" => Ok(LabelPass::Noiseless),
            "post_channel" => Ok(LabelPass::PostChannel),
            other => Err(Error::config(format!(
                "unknown label pass '{other}' (expected noiseless or post_channel)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillConfig {
    pub channel: TrainChannel,
    pub power: f64,
    pub label_pass: LabelPass,
    pub pooling: Pooling,
    pub seed: u64,
}

/// One training example for the evaluator.
#[derive(Debug, Clone, PartialEq)]
pub struct DistillPair {
    /// The tensor the transmitter sees.
    pub features: FeatureTensor,
    pub importance: ImportanceVector,
}

/// Encodes every image, decodes it (optionally through a channel draw) and
/// labels the features with their gradient importance.
pub fn build_distill_dataset(
    model: &CodecModel,
    dataset: &[ImageSample],
    cfg: &DistillConfig,
) -> Result<Vec<DistillPair>> {
    model.validate()?;
    dataset
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let a = codec::encode(model, s)?;
            let a_hat = match cfg.label_pass {
                LabelPass::Noiseless => a.clone(),
                LabelPass::PostChannel => {
                    let seed = derive_seed(cfg.seed, &[i as u64]);
                    ChannelDraw::sample(&cfg.channel, &model.shape, cfg.power, seed)?.apply(&a)
                }
            };
            let s_hat = codec::decode(model, &a_hat)?;
            let importance = grad_importance(model, &a_hat, s, &s_hat, cfg.pooling)?;
            Ok(DistillPair {
                features: a,
                importance,
            })
        })
        .collect()
}

/// Per-feature mean and sample standard deviation of the labels.
pub fn importance_profile(pairs: &[DistillPair]) -> (Vec<f64>, Vec<f64>) {
    let c = pairs.first().map(|p| p.importance.len()).unwrap_or(0);
    let mut means = Vec::with_capacity(c);
    let mut stds = Vec::with_capacity(c);
    for k in 0..c {
        let col: Vec<f64> = pairs.iter().map(|p| p.importance.scores[k]).collect();
        means.push(crate::stats::mean(&col));
        stds.push(crate::stats::std_dev(&col));
    }
    (means, stds)
}

const DATASET_MAGIC: &[u8; 8] = b"FLDIST01";
const EVAL_MAGIC: &[u8; 8] = b"FLEVAL01";

pub fn save_distill_dataset(pairs: &[DistillPair], path: &Path) -> Result<()> {
    let first = pairs
        .first()
        .ok_or_else(|| Error::config("refusing to write an empty dataset"))?;
    let (c, h, w) = (first.features.c, first.features.h, first.features.w);
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(DATASET_MAGIC)?;
    for v in [pairs.len(), c, h, w] {
        binio::write_u64(&mut f, v as u64)?;
    }
    for p in pairs {
        if (p.features.c, p.features.h, p.features.w) != (c, h, w) || p.importance.len() != c {
            return Err(Error::dim("pairs differ in shape"));
        }
        binio::write_f64s(&mut f, &p.features.values)?;
        binio::write_f64s(&mut f, &p.importance.scores)?;
        binio::write_f64s(&mut f, &[p.importance.tied as u8 as f64])?;
    }
    f.flush()?;
    Ok(())
}

pub fn load_distill_dataset(path: &Path) -> Result<Vec<DistillPair>> {
    let mut r = Reader::new(BufReader::new(File::open(path)?));
    r.expect_magic(DATASET_MAGIC)?;
    let n = r.usize("pair count")?;
    let c = r.usize("c")?;
    let h = r.usize("h")?;
    let w = r.usize("w")?;
    let mut out = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        let features = FeatureTensor::new(r.f64s(c * h * w, "features")?, c, h, w)?;
        let scores = r.f64s(c, "scores")?;
        let tied = r.f64s(1, "tie flag")?[0] != 0.0;
        out.push(DistillPair {
            features,
            importance: ImportanceVector { scores, tied },
        });
    }
    r.expect_eof()?;
    Ok(out)
}

/// Ridge regression from a flattened feature tensor to importance scores.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatorModel {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    /// `c x (c*h*w)` regression weights.
    pub weights: DMatrix<f64>,
    pub input_mean: DVector<f64>,
    /// Intercept: the mean label.
    pub output_mean: DVector<f64>,
    /// Relative ridge strength the model was fitted with.
    pub ridge: f64,
    pub sample_count: usize,
    /// Fingerprint of the codec the labels came from (0 if unknown).
    pub source_codec: u64,
    pub fitted: bool,
}

impl EvaluatorModel {
    /// Scores before clipping.
    pub fn predict_raw(&self, a: &FeatureTensor) -> Result<Vec<f64>> {
        if !self.fitted {
            return Err(Error::config("importance evaluator has not been fitted"));
        }
        if (a.c, a.h, a.w) != (self.c, self.h, self.w) {
            return Err(Error::dim("feature tensor does not match the evaluator"));
        }
        let x = DVector::from_column_slice(&a.values) - &self.input_mean;
        Ok((&self.weights * x + &self.output_mean).as_slice().to_vec())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if !self.fitted {
            return Err(Error::config("refusing to save an unfitted evaluator"));
        }
        let mut f = BufWriter::new(File::create(path)?);
        f.write_all(EVAL_MAGIC)?;
        for v in [self.c, self.h, self.w, self.sample_count] {
            binio::write_u64(&mut f, v as u64)?;
        }
        binio::write_u64(&mut f, self.source_codec)?;
        binio::write_f64s(&mut f, &[self.ridge])?;
        binio::write_f64s(&mut f, self.weights.transpose().as_slice())?;
        binio::write_f64s(&mut f, self.input_mean.as_slice())?;
        binio::write_f64s(&mut f, self.output_mean.as_slice())?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = Reader::new(BufReader::new(File::open(path)?));
        r.expect_magic(EVAL_MAGIC)?;
        let c = r.usize("c")?;
        let h = r.usize("h")?;
        let w = r.usize("w")?;
        let sample_count = r.usize("sample count")?;
        let source_codec = r.u64("codec fingerprint")?;
        let ridge = r.f64s(1, "ridge")?[0];
        let m = c * h * w;
        let weights = DMatrix::from_row_slice(c, m, &r.f64s(c * m, "weights")?);
        let input_mean = DVector::from_vec(r.f64s(m, "input mean")?);
        let output_mean = DVector::from_vec(r.f64s(c, "output mean")?);
        r.expect_eof()?;
        Ok(EvaluatorModel {
            c,
            h,
            w,
            weights,
            input_mean,
            output_mean,
            ridge,
            sample_count,
            source_codec,
            fitted: true,
        })
    }
}

/// FNV-1a over the codec's weights, used to tie an evaluator to its codec.
pub fn codec_fingerprint(model: &CodecModel) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    let vals = model
        .w1
        .iter()
        .chain(model.b1.iter())
        .chain(model.w2.iter())
        .chain(model.b2.iter())
        .chain(model.input_offset.iter());
    for v in vals {
        for b in v.to_bits().to_le_bytes() {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x0100_0000_01b3);
        }
    }
    hash
}

/// Fits the evaluator in closed form.
///
/// Inputs and labels are centered, so the intercept is the mean label and is
/// not penalized. The ridge added to the Gram matrix is
/// `ridge * trace(G) / dim`.
pub fn distill_train(pairs: &[DistillPair], ridge: f64) -> Result<EvaluatorModel> {
    if pairs.len() < MIN_DISTILL_PAIRS {
        return Err(Error::config(format!(
            "evaluator needs at least {MIN_DISTILL_PAIRS} pairs, got {}",
            pairs.len()
        )));
    }
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(Error::config(format!("ridge must be non-negative, got {ridge}")));
    }
    let f0 = &pairs[0].features;
    let (c, h, w) = (f0.c, f0.h, f0.w);
    let m = c * h * w;
    let n = pairs.len();
    if pairs
        .iter()
        .any(|p| (p.features.c, p.features.h, p.features.w) != (c, h, w) || p.importance.len() != c)
    {
        return Err(Error::dim("pairs differ in shape"));
    }
    let x = DMatrix::from_fn(n, m, |i, j| pairs[i].features.values[j]);
    let y = DMatrix::from_fn(n, c, |i, j| pairs[i].importance.scores[j]);
    let mx = x.row_mean().transpose();
    let my = y.row_mean().transpose();
    let mut xc = x;
    for mut row in xc.row_iter_mut() {
        row -= mx.transpose();
    }
    let mut yc = y;
    for mut row in yc.row_iter_mut() {
        row -= my.transpose();
    }
    let mut gram = xc.transpose() * &xc;
    let trace = gram.trace();
    let reg = if trace > 0.0 { ridge * trace / m as f64 } else { 0.0 };
    let reg = reg.max(f64::MIN_POSITIVE.sqrt() * trace.max(1.0));
    for i in 0..m {
        gram[(i, i)] += reg;
    }
    let rhs = xc.transpose() * yc;
    let coef = gram
        .cholesky()
        .ok_or_else(|| Error::Numerical("evaluator normal equations are singular".into()))?
        .solve(&rhs);
    if coef.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("evaluator weights are not finite".into()));
    }
    Ok(EvaluatorModel {
        c,
        h,
        w,
        weights: coef.transpose(),
        input_mean: mx,
        output_mean: my,
        ridge,
        sample_count: n,
        source_codec: 0,
        fitted: true,
    })
}

/// Predicted importance, clipped to `[0, 1]`.
pub fn evaluate(evaluator: &EvaluatorModel, a: &FeatureTensor) -> Result<ImportanceVector> {
    let scores: Vec<f64> = evaluator
        .predict_raw(a)?
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0))
        .collect();
    let tied = scores.windows(2).all(|p| p[0] == p[1]);
    Ok(ImportanceVector { scores, tied })
}
