//! Scheme comparison runs.
//!
//! For each link mode and test image (trial) the runner draws one channel
//! realization: a CSI history for the predictor plus the future slots the
//! image is sent over. All schemes and SNR points of a trial share that
//! realization and the same unit-variance noise stream (scaled by
//! `sigma`), so scheme differences are paired comparisons.
//!
//! Power bookkeeping: the transmit power `P` is the total per channel use.
//! SISO sends every symbol at `P`; the precoding-free MIMO mode gives each
//! antenna `P / Nt` and the SVD mode gives each stream `P / d`.

use rayon::prelude::*;

use super::config::{LinkConfig, Mode, Scheme};
use super::dataset;
use super::report::{ResultRow, TraceRecord};
use crate::allocator::{self, Allocation, FeatureOrder};
use crate::codec::{self, CodecModel, FeatureTensor, ImageSample, TrainConfig, TrainReport};
use crate::fading::{apply_mimo, mimo_generate, NoiseModel};
use crate::importance::{self, DistillConfig, DistillPair, EvaluatorModel};
use crate::metrics::QualityReport;
use crate::mimo::{mmse_equalizer, svd_decompose, transmit_mmse_block, transmit_svd_block};
use crate::predictor::{self, PredictorGrid};
use crate::seeding::derive_seed;
use crate::{CMatrix, Complex, Error, Result};

/// Environment variable bounding the worker threads of a run.
pub const THREADS_ENV: &str = "FASTLINK_THREADS";

const TAG_TRAIN_DATA: u64 = 1;
const TAG_DISTILL_DATA: u64 = 2;
const TAG_TEST_DATA: u64 = 3;
const TAG_CHANNEL: u64 = 4;
const TAG_NOISE: u64 = 5;
const TAG_TRAIN_LOOP: u64 = 6;
const TAG_DISTILL_LOOP: u64 = 7;

fn mode_tag(mode: Mode) -> u64 {
    match mode {
        Mode::Siso => 0,
        Mode::MimoMmse => 1,
        Mode::MimoSvd => 2,
    }
}

/// Builds a thread pool honoring [`THREADS_ENV`] (unset or 0: rayon default).
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::config(format!("{THREADS_ENV} must be an integer, got '{v}'")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Numerical(format!("cannot start worker pool: {e}")))
}

pub fn training_images(cfg: &LinkConfig) -> Result<Vec<ImageSample>> {
    dataset::synth_dataset(
        cfg.train_images,
        cfg.width,
        cfg.rho,
        derive_seed(cfg.seed, &[TAG_TRAIN_DATA]),
    )
}

pub fn distill_images(cfg: &LinkConfig) -> Result<Vec<ImageSample>> {
    dataset::synth_dataset(
        cfg.distill_images,
        cfg.width,
        cfg.rho,
        derive_seed(cfg.seed, &[TAG_DISTILL_DATA]),
    )
}

/// The test set: files from `test_image_dir` if set, otherwise `trials`
/// synthetic images.
pub fn test_images(cfg: &LinkConfig) -> Result<Vec<ImageSample>> {
    match &cfg.test_image_dir {
        Some(dir) => {
            let images = dataset::load_dir(dir)?;
            if images.is_empty() {
                return Err(Error::config(format!("no PGM/PPM images in {}", dir.display())));
            }
            Ok(images)
        }
        None => dataset::synth_dataset(
            cfg.trials,
            cfg.width,
            cfg.rho,
            derive_seed(cfg.seed, &[TAG_TEST_DATA]),
        ),
    }
}

/// Whitened-PCA initialization followed by SGD over the training channel.
pub fn train_codec(cfg: &LinkConfig) -> Result<(CodecModel, TrainReport)> {
    cfg.validate()?;
    let shape = cfg.shape()?;
    let data = training_images(cfg)?;
    let init = CodecModel::whitened_pca(shape, &data, cfg.pca_eps)?;
    let tc = TrainConfig {
        epochs: cfg.epochs,
        batch: cfg.batch,
        learning_rate: cfg.learning_rate,
        power: cfg.power,
        channel: cfg.train_channel()?,
        seed: derive_seed(cfg.seed, &[TAG_TRAIN_LOOP]),
    };
    codec::train(&init, &data, &tc)
}

/// Builds the distillation set for `model` and fits the evaluator.
pub fn distill(cfg: &LinkConfig, model: &CodecModel) -> Result<(EvaluatorModel, Vec<DistillPair>)> {
    cfg.validate()?;
    let data = distill_images(cfg)?;
    let dc = DistillConfig {
        channel: cfg.train_channel()?,
        power: cfg.power,
        label_pass: cfg.label_pass,
        pooling: cfg.pooling,
        seed: derive_seed(cfg.seed, &[TAG_DISTILL_LOOP]),
    };
    let pairs = importance::build_distill_dataset(model, &data, &dc)?;
    let mut ev = importance::distill_train(&pairs, cfg.ridge)?;
    ev.source_codec = importance::codec_fingerprint(model);
    Ok((ev, pairs))
}

/// Everything a run needs besides the configuration.
#[derive(Debug, Clone)]
pub struct Models {
    pub codec: CodecModel,
    pub evaluator: Option<EvaluatorModel>,
}

/// Trains the codec and, when an IE scheme is configured, the evaluator.
pub fn prepare_models(cfg: &LinkConfig) -> Result<Models> {
    let (codec, _) = train_codec(cfg)?;
    let evaluator = if cfg.schemes.iter().any(Scheme::uses_evaluator) {
        Some(distill(cfg, &codec)?.0)
    } else {
        None
    };
    Ok(Models { codec, evaluator })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    /// Replaces every importance vector (gradient and evaluator) when set.
    pub importance_override: Option<Vec<f64>>,
    /// Record the per-trial feature orders.
    pub trace: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    /// Sorted by mode, scheme, SNR (config order) and trial.
    pub rows: Vec<ResultRow>,
    pub traces: Vec<TraceRecord>,
}

/// Runs every (mode, scheme, SNR, trial) combination.
pub fn run_experiment(
    cfg: &LinkConfig,
    models: &Models,
    images: &[ImageSample],
    opts: &RunOptions,
) -> Result<RunOutput> {
    cfg.validate()?;
    let shape = cfg.shape()?;
    models.codec.validate()?;
    if models.codec.shape != shape {
        return Err(Error::config(format!(
            "codec shape {:?} does not match the configuration {:?}",
            models.codec.shape, shape
        )));
    }
    if images.is_empty() {
        return Err(Error::config("no test images"));
    }
    if let Some(bad) = images
        .iter()
        .find(|s| (s.width, s.height, s.channels) != (shape.width, shape.height, shape.channels))
    {
        return Err(Error::config(format!(
            "test image is {}x{}x{}, codec expects {}x{}x{}",
            bad.width, bad.height, bad.channels, shape.width, shape.height, shape.channels
        )));
    }
    if cfg.schemes.iter().any(Scheme::uses_evaluator) && opts.importance_override.is_none() {
        let ev = models
            .evaluator
            .as_ref()
            .ok_or_else(|| Error::config("IE schemes need a fitted importance evaluator"))?;
        if (ev.c, ev.h, ev.w) != (shape.c, shape.h, shape.w) {
            return Err(Error::config("evaluator shape does not match the codec"));
        }
        // 0 marks an evaluator fitted outside the harness.
        if ev.source_codec != 0 && ev.source_codec != importance::codec_fingerprint(&models.codec) {
            return Err(Error::config("evaluator was distilled from a different codec"));
        }
    }
    if let Some(o) = &opts.importance_override {
        if o.len() != shape.c || o.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("importance override must hold c finite scores"));
        }
    }

    let pool = thread_pool()?;
    let jobs: Vec<(Mode, usize)> = cfg
        .modes
        .iter()
        .flat_map(|&m| (0..images.len()).map(move |t| (m, t)))
        .collect();
    let results: Vec<(Vec<(Key, ResultRow)>, Vec<(Key, TraceRecord)>)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(mode, t)| run_trial(cfg, models, mode, t, &images[t], opts))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut rows = Vec::new();
    let mut traces = Vec::new();
    for (r, tr) in results {
        rows.extend(r);
        traces.extend(tr);
    }
    rows.sort_by_key(|(k, _)| *k);
    traces.sort_by_key(|(k, _)| *k);
    Ok(RunOutput {
        rows: rows.into_iter().map(|(_, r)| r).collect(),
        traces: traces.into_iter().map(|(_, t)| t).collect(),
    })
}

/// Sort key: (mode position, scheme position, SNR position, trial).
type Key = (usize, usize, usize, usize);

struct TrialChannel {
    /// Actual CSI of the slots the image is sent over.
    future: Vec<CMatrix>,
    /// Predicted CSI of the same slots, when a PC scheme needs it.
    predicted: Option<Vec<CMatrix>>,
    predictor_nmse: f64,
}

fn draw_channel(cfg: &LinkConfig, mode: Mode, trial: usize, slots: usize) -> Result<TrialChannel> {
    let (nr, nt) = match mode {
        Mode::Siso => (1, 1),
        _ => (cfg.nr, cfg.nt),
    };
    let hist = cfg.predictor_history;
    let seed = derive_seed(cfg.seed, &[TAG_CHANNEL, mode_tag(mode), trial as u64]);
    let seq = mimo_generate(&cfg.fading()?, hist + slots, nr, nt, seed)?;
    let future = seq.as_mimo().unwrap_or(&[])[hist..].to_vec();
    if !cfg.schemes.iter().any(Scheme::uses_prediction) {
        return Ok(TrialChannel {
            future,
            predicted: None,
            predictor_nmse: 0.0,
        });
    }
    let mut states = Vec::with_capacity(nr * nt);
    for r in 0..nr {
        for c in 0..nt {
            let link = seq.link(r, c);
            states.push(predictor::fit(&link[..hist], cfg.predictor_order, cfg.slot_period)?);
        }
    }
    let pred = predictor::predict_mimo(&PredictorGrid { nr, nt, states }, slots)?;
    let truth = crate::fading::CsiSequence::Mimo {
        matrices: future.clone(),
        slot_period: cfg.slot_period,
    };
    let predictor_nmse = predictor::nmse(&truth, &pred)?;
    Ok(TrialChannel {
        future,
        predicted: pred.as_mimo().map(<[CMatrix]>::to_vec),
        predictor_nmse,
    })
}

fn allocate(
    cfg: &LinkConfig,
    mode: Mode,
    a: &FeatureTensor,
    omega: &[f64],
    csi: &[CMatrix],
    noise_var: f64,
) -> Result<Allocation> {
    let p = cfg.power / cfg.blocks_per_slot(mode) as f64;
    match mode {
        Mode::Siso => {
            let gains: Vec<Complex> = csi.iter().map(|h| h[(0, 0)]).collect();
            allocator::time_allocate(a, omega, &gains)
        }
        Mode::MimoMmse => allocator::st_allocate_mmse(a, omega, csi, p, noise_var),
        Mode::MimoSvd => allocator::st_allocate_svd_streams(a, omega, csi, cfg.streams),
    }
}

/// Sends the organized tensor over the actual channel and returns the
/// receiver's estimate, still in transmission order.
fn transmit(
    cfg: &LinkConfig,
    mode: Mode,
    sent: &FeatureTensor,
    csi: &[CMatrix],
    noise_var: f64,
    noise_seed: u64,
) -> Result<FeatureTensor> {
    let blocks = cfg.blocks_per_slot(mode);
    let p = cfg.power / blocks as f64;
    let block = codec::to_symbols(sent, p)?;
    let per = sent.feature_len() / 2;
    let mut rx = block.clone();
    let mut noise = NoiseModel::new(noise_var, noise_seed)?;
    let scalar_mmse = |gain: Complex| {
        let den = gain.norm_sqr() + noise_var / p;
        if den > 0.0 {
            gain.conj() / den
        } else {
            Complex::new(0.0, 0.0)
        }
    };
    for (t, h) in csi.iter().enumerate() {
        let x = CMatrix::from_fn(blocks, per, |j, i| block.symbols[(t * blocks + j) * per + i]);
        let x_hat = match mode {
            Mode::Siso => {
                let y = apply_mimo(&x, h, &mut noise)?;
                y * scalar_mmse(h[(0, 0)])
            }
            Mode::MimoMmse => {
                let eq = mmse_equalizer(h, p, noise_var)?;
                transmit_mmse_block(&x, &mut noise, &eq)?
            }
            Mode::MimoSvd => {
                let svd = svd_decompose(h)?;
                let mut z = transmit_svd_block(&x, &svd, &mut noise)?;
                for (k, mut row) in z.row_iter_mut().enumerate() {
                    row *= scalar_mmse(Complex::new(svd.singular_values[k], 0.0));
                }
                z
            }
        };
        for j in 0..blocks {
            for i in 0..per {
                rx.symbols[(t * blocks + j) * per + i] = x_hat[(j, i)];
            }
        }
    }
    codec::from_symbols(&rx)
}

fn run_trial(
    cfg: &LinkConfig,
    models: &Models,
    mode: Mode,
    trial: usize,
    s: &ImageSample,
    opts: &RunOptions,
) -> Result<(Vec<(Key, ResultRow)>, Vec<(Key, TraceRecord)>)> {
    let model = &models.codec;
    let c = model.shape.c;
    let slots = c / cfg.blocks_per_slot(mode);
    let a = codec::encode(model, s)?;
    let chan = draw_channel(cfg, mode, trial, slots)?;
    let noise_seed = derive_seed(cfg.seed, &[TAG_NOISE, mode_tag(mode), trial as u64]);

    let needs = |f: fn(&Scheme) -> bool| cfg.schemes.iter().any(|s| *s != Scheme::Jscc && f(s));
    let omega_grad = match (&opts.importance_override, needs(|s| !s.uses_evaluator())) {
        (Some(o), _) => Some(o.clone()),
        (None, true) => {
            // Transmitter-side surrogate: a local noiseless pass.
            let s_local = codec::decode(model, &a)?;
            Some(importance::grad_importance(model, &a, s, &s_local, cfg.pooling)?.scores)
        }
        (None, false) => None,
    };
    let omega_ie = match (&opts.importance_override, needs(Scheme::uses_evaluator)) {
        (Some(o), _) => Some(o.clone()),
        (None, true) => {
            let ev = models
                .evaluator
                .as_ref()
                .ok_or_else(|| Error::config("IE schemes need a fitted importance evaluator"))?;
            Some(importance::evaluate(ev, &a)?.scores)
        }
        (None, false) => None,
    };

    let mode_pos = cfg.modes.iter().position(|m| *m == mode).unwrap_or(0);
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    for (snr_pos, &snr_db) in cfg.snr_db.iter().enumerate() {
        let noise_var = cfg.noise_var(snr_db);
        for (scheme_pos, &scheme) in cfg.schemes.iter().enumerate() {
            let csi_for_alloc = if scheme.uses_prediction() {
                chan.predicted.as_deref().unwrap_or(&chan.future)
            } else {
                &chan.future
            };
            let (sent, order, block_rank) = if scheme == Scheme::Jscc {
                (a.clone(), FeatureOrder::identity(c), (0..c).collect())
            } else {
                let omega = if scheme.uses_evaluator() { &omega_ie } else { &omega_grad };
                let omega = omega.as_deref().unwrap_or(&[]);
                let al = allocate(cfg, mode, &a, omega, csi_for_alloc, noise_var)?;
                (al.tensor, al.order, al.block_rank)
            };
            let x_hat = transmit(cfg, mode, &sent, &chan.future, noise_var, noise_seed)?;
            let a_hat = allocator::inverse_allocate(&x_hat, &order)?;
            let s_hat = codec::decode(model, &a_hat)?;
            let q = QualityReport::score(s, &s_hat)?;
            let key = (mode_pos, scheme_pos, snr_pos, trial);
            rows.push((
                key,
                ResultRow {
                    scheme,
                    mode,
                    snr_db,
                    trial,
                    psnr: q.psnr,
                    ssim: q.ssim,
                    mse: q.mse,
                    side_info_bits: if scheme == Scheme::Jscc {
                        0
                    } else {
                        allocator::side_info_bits(c)
                    },
                    predictor_nmse: if scheme.uses_prediction() {
                        chan.predictor_nmse
                    } else {
                        0.0
                    },
                },
            ));
            if opts.trace {
                traces.push((
                    key,
                    TraceRecord {
                        scheme,
                        mode,
                        snr_db,
                        trial,
                        eta: order.eta,
                        block_rank,
                    },
                ));
            }
        }
    }
    Ok((rows, traces))
}
