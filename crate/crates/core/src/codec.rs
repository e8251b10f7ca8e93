//! Affine semantic codec.
//!
//! The encoder maps an image `s` (length `l`) to a feature tensor of shape
//! `c x h x w`:
//!
//! ```text
//! A     = act(W1 (s - mu) + b1)      act = identity or tanh
//! s_hat = W2 A_hat + b2
//! L     = |s_hat - s|^2 / l
//! ```
//!
//! Features are paired into complex symbols in feature-major order, so
//! feature `k` occupies symbols `k*h*w/2 .. (k+1)*h*w/2`, and the block is
//! scaled to exactly meet the average power `P`.
//!
//! Training runs SGD with gradients computed in closed form through the
//! power normalizer and a frozen channel realization. For a per-symbol
//! scalar MMSE receiver the received tensor is
//!
//! ```text
//! A_hat = beta .* A + |A| * eps
//! ```
//!
//! where `beta` is the real post-equalization gain of each entry and `eps`
//! holds the equalized noise divided by `sqrt(k P)`. Both are fixed once the
//! channel and noise are drawn, which makes the gradient exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;

use crate::binio::{self, Reader};
use crate::fading::FadingSpec;
use crate::seeding::{self, derive_seed};
use crate::{Complex, Error, Result};

/// An image as a flat pixel vector, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    pub pixels: Vec<f64>,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

impl ImageSample {
    /// Validated constructor: pixels must be finite and in `[0, 1]`.
    pub fn new(pixels: Vec<f64>, width: usize, height: usize, channels: usize) -> Result<Self> {
        if pixels.len() != width * height * channels || pixels.is_empty() {
            return Err(Error::dim(format!(
                "{} pixels for a {width}x{height}x{channels} image",
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::config(format!("pixel value {bad} outside [0, 1]")));
        }
        Ok(ImageSample {
            pixels,
            width,
            height,
            channels,
        })
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Copy with every pixel clamped to `[0, 1]`; decoder outputs are not
    /// range-limited until they are scored.
    pub fn clamped(&self) -> ImageSample {
        ImageSample {
            pixels: self.pixels.iter().map(|p| p.clamp(0.0, 1.0)).collect(),
            ..*self
        }
    }
}

/// `c` features of `h x w` real values, stored feature-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub values: Vec<f64>,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl FeatureTensor {
    pub fn new(values: Vec<f64>, c: usize, h: usize, w: usize) -> Result<Self> {
        if values.len() != c * h * w || values.is_empty() {
            return Err(Error::dim(format!(
                "{} values for a {c}x{h}x{w} tensor",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("feature tensor has non-finite entries".into()));
        }
        Ok(FeatureTensor { values, c, h, w })
    }

    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        FeatureTensor {
            values: vec![0.0; c * h * w],
            c,
            h,
            w,
        }
    }

    pub fn feature_len(&self) -> usize {
        self.h * self.w
    }

    pub fn feature(&self, k: usize) -> &[f64] {
        let n = self.feature_len();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn feature_mut(&mut self, k: usize) -> &mut [f64] {
        let n = self.feature_len();
        &mut self.values[k * n..(k + 1) * n]
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Power-normalized channel symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolBlock {
    pub symbols: Vec<Complex>,
    /// Average power per symbol the block was scaled to.
    pub power: f64,
    /// Factor applied to the feature values; `from_symbols` divides it out.
    pub scale: f64,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl SymbolBlock {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn average_power(&self) -> f64 {
        self.symbols.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.symbols.len() as f64
    }

    /// Symbols of feature `k` (`h*w/2` of them).
    pub fn feature_symbols(&self, k: usize) -> &[Complex] {
        let n = self.h * self.w / 2;
        &self.symbols[k * n..(k + 1) * n]
    }
}

/// Pairs the tensor into complex symbols with `(1/k) |x|^2 = power`.
/// An all-zero tensor is sent as zeros with scale 1.
pub fn to_symbols(a: &FeatureTensor, power: f64) -> Result<SymbolBlock> {
    if a.values.len() % 2 != 0 {
        return Err(Error::dim(format!(
            "{} feature values cannot be paired into complex symbols",
            a.values.len()
        )));
    }
    if !(power > 0.0) || !power.is_finite() {
        return Err(Error::config(format!("power must be positive, got {power}")));
    }
    let k = a.values.len() / 2;
    let norm = a.norm();
    let scale = if norm > 0.0 {
        (k as f64 * power).sqrt() / norm
    } else {
        1.0
    };
    let symbols = a
        .values
        .chunks_exact(2)
        .map(|p| Complex::new(p[0] * scale, p[1] * scale))
        .collect();
    Ok(SymbolBlock {
        symbols,
        power,
        scale,
        c: a.c,
        h: a.h,
        w: a.w,
    })
}

/// Inverse of [`to_symbols`].
pub fn from_symbols(block: &SymbolBlock) -> Result<FeatureTensor> {
    if block.symbols.len() * 2 != block.c * block.h * block.w {
        return Err(Error::dim("symbol count does not match the tensor shape"));
    }
    let inv = 1.0 / block.scale;
    let mut values = Vec::with_capacity(block.symbols.len() * 2);
    for s in &block.symbols {
        values.push(s.re * inv);
        values.push(s.im * inv);
    }
    FeatureTensor::new(values, block.c, block.h, block.w)
}

/// Image and feature geometry of a codec.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodecShape {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl CodecShape {
    pub fn new(width: usize, height: usize, channels: usize, c: usize, h: usize, w: usize) -> Result<Self> {
        let s = CodecShape {
            width,
            height,
            channels,
            c,
            h,
            w,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.l() == 0 || self.m() == 0 {
            return Err(Error::config("codec dimensions must be positive"));
        }
        if (self.h * self.w) % 2 != 0 {
            return Err(Error::config(format!(
                "feature size {}x{} is odd; each feature must fill whole complex symbols",
                self.h, self.w
            )));
        }
        Ok(())
    }

    /// Source dimension.
    pub fn l(&self) -> usize {
        self.width * self.height * self.channels
    }

    /// Latent dimension `c*h*w`.
    pub fn m(&self) -> usize {
        self.c * self.h * self.w
    }

    /// Complex symbols per image.
    pub fn k(&self) -> usize {
        self.m() / 2
    }
}

/// Affine encoder/decoder pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CodecModel {
    pub shape: CodecShape,
    /// `m x l`.
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    /// `l x m`.
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
    /// Subtracted from the image before the encoder matrix.
    pub input_offset: DVector<f64>,
    /// Apply `tanh` to the encoder output.
    pub tanh: bool,
}

impl CodecModel {
    /// `W1 = I`, `W2 = I`, zero biases. Requires `l = c*h*w`.
    pub fn identity(shape: CodecShape) -> Result<Self> {
        shape.validate()?;
        if shape.l() != shape.m() {
            return Err(Error::config("identity codec needs l = c*h*w"));
        }
        let n = shape.l();
        Ok(CodecModel {
            shape,
            w1: DMatrix::identity(n, n),
            b1: DVector::zeros(n),
            w2: DMatrix::identity(n, n),
            b2: DVector::zeros(n),
            input_offset: DVector::zeros(n),
            tanh: false,
        })
    }

    /// Gaussian weights with variance `1/fan_in`, zero biases and offset.
    pub fn random(shape: CodecShape, seed: u64) -> Result<Self> {
        shape.validate()?;
        let (l, m) = (shape.l(), shape.m());
        let mut rng = seeding::rng_from_seed(seed);
        let s1 = 1.0 / (l as f64).sqrt();
        let s2 = 1.0 / (m as f64).sqrt();
        let w1 = DMatrix::from_fn(m, l, |_, _| seeding::gaussian(&mut rng) * s1);
        let w2 = DMatrix::from_fn(l, m, |_, _| seeding::gaussian(&mut rng) * s2);
        Ok(CodecModel {
            shape,
            w1,
            b1: DVector::zeros(m),
            w2,
            b2: DVector::zeros(l),
            input_offset: DVector::zeros(l),
            tanh: false,
        })
    }

    /// Whitened principal-component initialization.
    ///
    /// With data mean `mu` and covariance eigenpairs `(lambda_i, e_i)` sorted
    /// descending, the encoder is `diag(1/sqrt(lambda + eps)) E^T (s - mu)`
    /// and the decoder `E diag(sqrt(lambda + eps)) A + mu`. Every feature
    /// entry then has roughly unit variance, so the energy a feature
    /// contributes to the image is carried by the decoder columns. This is
    /// the regime where loss gradients reflect importance.
    pub fn whitened_pca(shape: CodecShape, data: &[ImageSample], eps: f64) -> Result<Self> {
        shape.validate()?;
        let (l, m) = (shape.l(), shape.m());
        if data.is_empty() {
            return Err(Error::config("PCA initialization needs at least one image"));
        }
        if m > l {
            return Err(Error::config("PCA initialization needs c*h*w <= l"));
        }
        let (mu, eig_vals, eig_vecs) = principal_components(data, l)?;
        let mut w1 = DMatrix::zeros(m, l);
        let mut w2 = DMatrix::zeros(l, m);
        for i in 0..m {
            let sd = (eig_vals[i].max(0.0) + eps).sqrt();
            for r in 0..l {
                w1[(i, r)] = eig_vecs[(r, i)] / sd;
                w2[(r, i)] = eig_vecs[(r, i)] * sd;
            }
        }
        Ok(CodecModel {
            shape,
            w1,
            b1: DVector::zeros(m),
            w2,
            b2: mu.clone(),
            input_offset: mu,
            tanh: false,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        let (l, m) = (self.shape.l(), self.shape.m());
        if self.w1.shape() != (m, l)
            || self.b1.len() != m
            || self.w2.shape() != (l, m)
            || self.b2.len() != l
            || self.input_offset.len() != l
        {
            return Err(Error::dim("codec weights do not match its shape"));
        }
        let all = self
            .w1
            .iter()
            .chain(self.b1.iter())
            .chain(self.w2.iter())
            .chain(self.b2.iter())
            .chain(self.input_offset.iter());
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("codec has non-finite weights".into()));
        }
        Ok(())
    }

    fn check_image(&self, s: &ImageSample) -> Result<()> {
        let sh = &self.shape;
        if (s.width, s.height, s.channels) != (sh.width, sh.height, sh.channels) {
            return Err(Error::dim(format!(
                "codec expects {}x{}x{} images, got {}x{}x{}",
                sh.width, sh.height, sh.channels, s.width, s.height, s.channels
            )));
        }
        Ok(())
    }

    /// Writes the model as a flat little-endian file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub(crate) fn write_to<W: Write>(&self, f: &mut W) -> Result<()> {
        f.write_all(CODEC_MAGIC)?;
        let s = &self.shape;
        for v in [s.width, s.height, s.channels, s.c, s.h, s.w, self.tanh as usize] {
            binio::write_u64(f, v as u64)?;
        }
        binio::write_f64s(f, &row_major(&self.w1))?;
        binio::write_f64s(f, self.b1.as_slice())?;
        binio::write_f64s(f, &row_major(&self.w2))?;
        binio::write_f64s(f, self.b2.as_slice())?;
        binio::write_f64s(f, self.input_offset.as_slice())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = Reader::new(BufReader::new(File::open(path)?));
        r.expect_magic(CODEC_MAGIC)?;
        let mut dims = [0usize; 7];
        for (d, name) in dims
            .iter_mut()
            .zip(["width", "height", "channels", "c", "h", "w", "tanh flag"])
        {
            *d = r.usize(name)?;
        }
        let shape = CodecShape::new(dims[0], dims[1], dims[2], dims[3], dims[4], dims[5])?;
        if dims[6] > 1 {
            return Err(Error::parse(CODEC_MAGIC.len() + 48, "tanh flag must be 0 or 1"));
        }
        let (l, m) = (shape.l(), shape.m());
        let w1 = DMatrix::from_row_slice(m, l, &r.f64s(m * l, "W1")?);
        let b1 = DVector::from_vec(r.f64s(m, "b1")?);
        let w2 = DMatrix::from_row_slice(l, m, &r.f64s(l * m, "W2")?);
        let b2 = DVector::from_vec(r.f64s(l, "b2")?);
        let input_offset = DVector::from_vec(r.f64s(l, "input offset")?);
        r.expect_eof()?;
        Ok(CodecModel {
            shape,
            w1,
            b1,
            w2,
            b2,
            input_offset,
            tanh: dims[6] == 1,
        })
    }
}

const CODEC_MAGIC: &[u8; 8] = b"FLCODEC1";

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// Data mean and covariance eigenpairs sorted by descending eigenvalue.
pub fn principal_components(
    data: &[ImageSample],
    l: usize,
) -> Result<(DVector<f64>, Vec<f64>, DMatrix<f64>)> {
    if data.iter().any(|s| s.len() != l) {
        return Err(Error::dim("images differ in size"));
    }
    let n = data.len() as f64;
    let mut mu = DVector::zeros(l);
    for s in data {
        mu += DVector::from_column_slice(&s.pixels);
    }
    mu /= n;
    let x = DMatrix::from_fn(l, data.len(), |r, c| data[c].pixels[r] - mu[r]);
    let cov = (&x * x.transpose()) / n;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(l, l, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((mu, vals, vecs))
}

/// `A = act(W1 (s - mu) + b1)`.
pub fn encode(model: &CodecModel, s: &ImageSample) -> Result<FeatureTensor> {
    model.check_image(s)?;
    let x = DVector::from_column_slice(&s.pixels) - &model.input_offset;
    let mut z = &model.w1 * x + &model.b1;
    if model.tanh {
        z.apply(|v| *v = v.tanh());
    }
    let sh = &model.shape;
    FeatureTensor::new(z.as_slice().to_vec(), sh.c, sh.h, sh.w)
}

/// `s_hat = W2 A_hat + b2`, not clamped.
pub fn decode(model: &CodecModel, a_hat: &FeatureTensor) -> Result<ImageSample> {
    let sh = &model.shape;
    if (a_hat.c, a_hat.h, a_hat.w) != (sh.c, sh.h, sh.w) {
        return Err(Error::dim(format!(
            "codec expects {}x{}x{} features, got {}x{}x{}",
            sh.c, sh.h, sh.w, a_hat.c, a_hat.h, a_hat.w
        )));
    }
    let a = DVector::from_column_slice(&a_hat.values);
    let s = &model.w2 * a + &model.b2;
    Ok(ImageSample {
        pixels: s.as_slice().to_vec(),
        width: sh.width,
        height: sh.height,
        channels: sh.channels,
    })
}

/// `(1/l) |s_hat - s|^2`.
pub fn loss(s: &[f64], s_hat: &[f64]) -> Result<f64> {
    if s.len() != s_hat.len() || s.is_empty() {
        return Err(Error::dim("loss inputs differ in length"));
    }
    Ok(s.iter().zip(s_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / s.len() as f64)
}

/// Channel model used while training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrainChannel {
    Noiseless,
    Awgn { snr_db: f64 },
    /// Block Rayleigh fading: feature `k` rides slot `k` of a fresh SOS
    /// realization per image.
    Rayleigh { snr_db: f64, fading: FadingSpec },
}

/// A frozen channel realization in the form `A_hat = beta .* A + |A| eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDraw {
    pub beta: Vec<f64>,
    pub eps: Vec<f64>,
}

impl ChannelDraw {
    pub fn identity(m: usize) -> Self {
        ChannelDraw {
            beta: vec![1.0; m],
            eps: vec![0.0; m],
        }
    }

    /// Per-feature scalar gains `gains[k]` with scalar MMSE equalization and
    /// complex AWGN of variance `noise_var` on every symbol.
    pub fn scalar_mmse<R: rand::Rng + ?Sized>(
        shape: &CodecShape,
        gains: &[Complex],
        power: f64,
        noise_var: f64,
        rng: &mut R,
    ) -> Self {
        assert_eq!(gains.len(), shape.c);
        let m = shape.m();
        let per = shape.h * shape.w;
        let norm = (shape.k() as f64 * power).sqrt();
        let mut beta = vec![0.0; m];
        let mut eps = vec![0.0; m];
        for (k, &h) in gains.iter().enumerate() {
            let den = h.norm_sqr() + noise_var / power;
            let (g, b) = if den > 0.0 {
                (h.conj() / den, h.norm_sqr() / den)
            } else {
                (Complex::new(0.0, 0.0), 0.0)
            };
            for j in (0..per).step_by(2) {
                let n = seeding::complex_gaussian(rng, noise_var);
                let e = g * n / norm;
                let i = k * per + j;
                beta[i] = b;
                beta[i + 1] = b;
                eps[i] = e.re;
                eps[i + 1] = e.im;
            }
        }
        ChannelDraw { beta, eps }
    }

    /// Draws a realization of `channel` for one image.
    pub fn sample(channel: &TrainChannel, shape: &CodecShape, power: f64, seed: u64) -> Result<Self> {
        let mut rng = seeding::rng_from_seed(seed);
        match *channel {
            TrainChannel::Noiseless => Ok(ChannelDraw::identity(shape.m())),
            TrainChannel::Awgn { snr_db } => {
                let gains = vec![Complex::new(1.0, 0.0); shape.c];
                Ok(Self::scalar_mmse(shape, &gains, power, noise_var(power, snr_db), &mut rng))
            }
            TrainChannel::Rayleigh { snr_db, fading } => {
                let params = fading.draw(derive_seed(seed, &[0]))?;
                let gains: Vec<Complex> = (0..shape.c as u64).map(|n| params.sample(n)).collect();
                Ok(Self::scalar_mmse(shape, &gains, power, noise_var(power, snr_db), &mut rng))
            }
        }
    }

    /// Applies the realization to a tensor.
    pub fn apply(&self, a: &FeatureTensor) -> FeatureTensor {
        let norm = a.norm();
        let values = a
            .values
            .iter()
            .zip(self.beta.iter().zip(&self.eps))
            .map(|(v, (b, e))| b * v + norm * e)
            .collect();
        FeatureTensor { values, ..*a }
    }
}

/// `sigma^2 = P / 10^(snr/10)`.
pub fn noise_var(power: f64, snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        power / 10f64.powf(snr_db / 10.0)
    }
}

/// Gradient of the mean batch loss with respect to every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
}

/// Mean loss and its exact gradient over a batch, each image paired with a
/// frozen channel realization.
pub fn loss_and_gradients(
    model: &CodecModel,
    batch: &[(&ImageSample, &ChannelDraw)],
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::config("empty batch"));
    }
    let (l, m) = (model.shape.l(), model.shape.m());
    let nb = batch.len();
    for (s, d) in batch {
        model.check_image(s)?;
        if d.beta.len() != m || d.eps.len() != m {
            return Err(Error::dim("channel realization does not match the latent size"));
        }
    }
    let s_mat = DMatrix::from_fn(l, nb, |r, c| batch[c].0.pixels[r]);
    let mut x = s_mat.clone();
    for mut col in x.column_iter_mut() {
        col -= &model.input_offset;
    }
    let mut a = &model.w1 * &x;
    for mut col in a.column_iter_mut() {
        col += &model.b1;
    }
    if model.tanh {
        a.apply(|v| *v = v.tanh());
    }
    let norms: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    let a_hat = DMatrix::from_fn(m, nb, |r, c| {
        let d = batch[c].1;
        d.beta[r] * a[(r, c)] + norms[c] * d.eps[r]
    });
    let mut resid = &model.w2 * &a_hat - &s_mat;
    for mut col in resid.column_iter_mut() {
        col += &model.b2;
    }
    let total: f64 = resid.iter().map(|v| v * v).sum::<f64>() / l as f64;
    let mean_loss = total / nb as f64;

    let gr = resid * (2.0 / (l as f64 * nb as f64));
    let gw2 = &gr * a_hat.transpose();
    let gb2 = gr.column_sum();
    let ga_hat = model.w2.transpose() * &gr;
    let mut gz = DMatrix::zeros(m, nb);
    for c in 0..nb {
        let d = batch[c].1;
        let proj: f64 = if norms[c] > 0.0 {
            (0..m).map(|r| d.eps[r] * ga_hat[(r, c)]).sum::<f64>() / norms[c]
        } else {
            0.0
        };
        for r in 0..m {
            let mut g = d.beta[r] * ga_hat[(r, c)] + a[(r, c)] * proj;
            if model.tanh {
                g *= 1.0 - a[(r, c)] * a[(r, c)];
            }
            gz[(r, c)] = g;
        }
    }
    let gw1 = &gz * x.transpose();
    let gb1 = gz.column_sum();
    Ok((
        mean_loss,
        Gradients {
            w1: gw1,
            b1: gb1,
            w2: gw2,
            b2: gb2,
        },
    ))
}

/// Loss of one image through a frozen realization (the function
/// [`loss_and_gradients`] differentiates).
pub fn loss_through(model: &CodecModel, s: &ImageSample, draw: &ChannelDraw) -> Result<f64> {
    let a = encode(model, s)?;
    let s_hat = decode(model, &draw.apply(&a))?;
    loss(&s.pixels, &s_hat.pixels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub power: f64,
    pub channel: TrainChannel,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean training loss of each epoch, measured on the forward passes that
    /// produced the updates.
    pub epoch_losses: Vec<f64>,
}

/// SGD training loop: per batch, draw CSI and noise for every image, run the
/// forward pass, and step along the exact gradient.
pub fn train(
    model: &CodecModel,
    dataset: &[ImageSample],
    cfg: &TrainConfig,
) -> Result<(CodecModel, TrainReport)> {
    model.validate()?;
    if dataset.is_empty() {
        return Err(Error::config("training set is empty"));
    }
    if cfg.batch == 0 || cfg.epochs == 0 {
        return Err(Error::config("epochs and batch size must be positive"));
    }
    if !(cfg.learning_rate > 0.0) || !cfg.learning_rate.is_finite() {
        return Err(Error::config("learning rate must be positive"));
    }
    let mut model = model.clone();
    let mut report = TrainReport {
        epoch_losses: Vec::with_capacity(cfg.epochs),
    };
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = seeding::rng_from_seed(derive_seed(cfg.seed, &[epoch as u64]));
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for (bi, chunk) in order.chunks(cfg.batch).enumerate() {
            let draws = chunk
                .iter()
                .enumerate()
                .map(|(j, _)| {
                    let seed = derive_seed(cfg.seed, &[epoch as u64, bi as u64, j as u64]);
                    ChannelDraw::sample(&cfg.channel, &model.shape, cfg.power, seed)
                })
                .collect::<Result<Vec<_>>>()?;
            let batch: Vec<_> = chunk.iter().map(|&i| &dataset[i]).zip(draws.iter()).collect();
            let (loss, g) = loss_and_gradients(&model, &batch)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            sum += loss * chunk.len() as f64;
            let lr = cfg.learning_rate;
            model.w1 -= g.w1 * lr;
            model.b1 -= g.b1 * lr;
            model.w2 -= g.w2 * lr;
            model.b2 -= g.b2 * lr;
        }
        let epoch_loss = sum / dataset.len() as f64;
        if !epoch_loss.is_finite() || model.w1.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                epoch,
                loss: epoch_loss,
            });
        }
        report.epoch_losses.push(epoch_loss);
    }
    Ok((model, report))
}
