//! Correlated Rayleigh fading via the enhanced sum-of-sinusoids model.
//!
//! A single link is the normalized sum of `M` sinusoids,
//!
//! ```text
//! h(n Ts) = 1/sqrt(M) * sum_m [ I_m(n Ts) + j Q_m(n Ts) ]
//! I_m(n Ts) = a_m cos((2 pi fd n Ts + psi_m) cos(alpha_m) + phi_m)
//! Q_m(n Ts) = b_m sin((2 pi fd n Ts + psi_m) cos(alpha_m) + phi_m)
//! ```
//!
//! with `a_m, b_m ~ N(0, 1)` and the three angles uniform on `[-pi, pi)`.
//! Averaged over realizations, `E|h|^2 = 1` and the envelope is Rayleigh
//! with scale `sqrt(1/2)`. MIMO channels are assembled from independent
//! links. Block fading is assumed: one CSI sample per slot, constant over
//! all symbols of that slot.

use std::f64::consts::PI;

use crate::seeding::{self, derive_seed, SimRng};
use crate::{CMatrix, Complex, Error, Result};

/// Physical parameters shared by every link of a channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingSpec {
    /// Number of sinusoids `M`.
    pub num_paths: usize,
    /// Maximum Doppler shift in Hz.
    pub doppler_hz: f64,
    /// Sampling (slot) period in seconds.
    pub sample_period: f64,
}

impl FadingSpec {
    pub fn new(num_paths: usize, doppler_hz: f64, sample_period: f64) -> Result<Self> {
        let spec = FadingSpec {
            num_paths,
            doppler_hz,
            sample_period,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_paths == 0 {
            return Err(Error::config("sum-of-sinusoids needs at least one path"));
        }
        if !(self.sample_period > 0.0) || !self.sample_period.is_finite() {
            return Err(Error::config(format!(
                "sample period must be positive, got {}",
                self.sample_period
            )));
        }
        if !(self.doppler_hz >= 0.0) || !self.doppler_hz.is_finite() {
            return Err(Error::config(format!(
                "Doppler shift must be non-negative, got {}",
                self.doppler_hz
            )));
        }
        Ok(())
    }

    /// `fd * Ts`, the Doppler shift normalized to the slot rate.
    pub fn normalized_doppler(&self) -> f64 {
        self.doppler_hz * self.sample_period
    }

    /// Draws one link realization.
    pub fn draw(&self, seed: u64) -> Result<SosParams> {
        SosParams::draw(self.num_paths, self.doppler_hz, self.sample_period, seed)
    }
}

/// One realization of the sum-of-sinusoids generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SosParams {
    pub num_paths: usize,
    pub doppler_hz: f64,
    pub sample_period: f64,
    /// In-phase amplitudes `a_m`.
    pub amp_i: Vec<f64>,
    /// Quadrature amplitudes `b_m`.
    pub amp_q: Vec<f64>,
    /// Arrival angles `alpha_m`.
    pub arrival: Vec<f64>,
    /// Phase shifts `phi_m`.
    pub phase: Vec<f64>,
    /// Auxiliary phases `psi_m`.
    pub aux_phase: Vec<f64>,
    pub seed: u64,
}

impl SosParams {
    /// Draws the per-path parameters deterministically from `seed`.
    pub fn draw(num_paths: usize, doppler_hz: f64, sample_period: f64, seed: u64) -> Result<Self> {
        FadingSpec {
            num_paths,
            doppler_hz,
            sample_period,
        }
        .validate()?;
        let mut rng = seeding::rng_from_seed(seed);
        let mut amp_i = Vec::with_capacity(num_paths);
        let mut amp_q = Vec::with_capacity(num_paths);
        let mut arrival = Vec::with_capacity(num_paths);
        let mut phase = Vec::with_capacity(num_paths);
        let mut aux_phase = Vec::with_capacity(num_paths);
        for _ in 0..num_paths {
            amp_i.push(seeding::gaussian(&mut rng));
            amp_q.push(seeding::gaussian(&mut rng));
            arrival.push(seeding::uniform_angle(&mut rng));
            phase.push(seeding::uniform_angle(&mut rng));
            aux_phase.push(seeding::uniform_angle(&mut rng));
        }
        Ok(SosParams {
            num_paths,
            doppler_hz,
            sample_period,
            amp_i,
            amp_q,
            arrival,
            phase,
            aux_phase,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        FadingSpec {
            num_paths: self.num_paths,
            doppler_hz: self.doppler_hz,
            sample_period: self.sample_period,
        }
        .validate()?;
        let m = self.num_paths;
        if [
            self.amp_i.len(),
            self.amp_q.len(),
            self.arrival.len(),
            self.phase.len(),
            self.aux_phase.len(),
        ]
        .iter()
        .any(|&len| len != m)
        {
            return Err(Error::config("per-path parameter arrays must all have length M"));
        }
        Ok(())
    }

    /// The channel gain at sample index `n`.
    // Kept out of line so every caller gets bit-identical values.
    #[inline(never)]
    pub fn sample(&self, n: u64) -> Complex {
        let omega = 2.0 * PI * self.doppler_hz * self.sample_period * n as f64;
        let mut acc = Complex::new(0.0, 0.0);
        for m in 0..self.num_paths {
            let arg = (omega + self.aux_phase[m]) * self.arrival[m].cos() + self.phase[m];
            let (s, c) = arg.sin_cos();
            acc.re += self.amp_i[m] * c;
            acc.im += self.amp_q[m] * s;
        }
        acc / (self.num_paths as f64).sqrt()
    }
}

/// Time-indexed CSI, one sample (or matrix) per slot.
#[derive(Debug, Clone, PartialEq)]
pub enum CsiSequence {
    Siso {
        gains: Vec<Complex>,
        slot_period: f64,
    },
    /// `Nr x Nt` matrices.
    Mimo {
        matrices: Vec<CMatrix>,
        slot_period: f64,
    },
}

impl CsiSequence {
    pub fn len(&self) -> usize {
        match self {
            CsiSequence::Siso { gains, .. } => gains.len(),
            CsiSequence::Mimo { matrices, .. } => matrices.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn slot_period(&self) -> f64 {
        match self {
            CsiSequence::Siso { slot_period, .. } | CsiSequence::Mimo { slot_period, .. } => {
                *slot_period
            }
        }
    }

    /// `(Nr, Nt)`; SISO is `(1, 1)`. An empty MIMO sequence reports `(0, 0)`.
    pub fn dims(&self) -> (usize, usize) {
        match self {
            CsiSequence::Siso { .. } => (1, 1),
            CsiSequence::Mimo { matrices, .. } => matrices
                .first()
                .map(|m| (m.nrows(), m.ncols()))
                .unwrap_or((0, 0)),
        }
    }

    pub fn as_siso(&self) -> Option<&[Complex]> {
        match self {
            CsiSequence::Siso { gains, .. } => Some(gains),
            CsiSequence::Mimo { .. } => None,
        }
    }

    pub fn as_mimo(&self) -> Option<&[CMatrix]> {
        match self {
            CsiSequence::Mimo { matrices, .. } => Some(matrices),
            CsiSequence::Siso { .. } => None,
        }
    }

    /// The CSI of slot `t` as a matrix (`1 x 1` for SISO).
    pub fn slot_matrix(&self, t: usize) -> CMatrix {
        match self {
            CsiSequence::Siso { gains, .. } => CMatrix::from_element(1, 1, gains[t]),
            CsiSequence::Mimo { matrices, .. } => matrices[t].clone(),
        }
    }

    /// Link `(r, c)` as a scalar time series.
    pub fn link(&self, r: usize, c: usize) -> Vec<Complex> {
        match self {
            CsiSequence::Siso { gains, .. } => {
                assert!(r == 0 && c == 0, "SISO sequence has a single link");
                gains.clone()
            }
            CsiSequence::Mimo { matrices, .. } => matrices.iter().map(|m| m[(r, c)]).collect(),
        }
    }
}

/// Evaluates `t` consecutive samples `h_0 .. h_{t-1}` of one link.
pub fn sos_generate(params: &SosParams, t: usize) -> Result<CsiSequence> {
    params.validate()?;
    if t == 0 {
        return Err(Error::config("CSI sequence length must be at least 1"));
    }
    Ok(CsiSequence::Siso {
        gains: (0..t as u64).map(|n| params.sample(n)).collect(),
        slot_period: params.sample_period,
    })
}

/// Seed used for link `(r, c)` of a MIMO channel drawn with `seed`.
pub fn link_seed(seed: u64, r: usize, c: usize) -> u64 {
    derive_seed(seed, &[r as u64, c as u64])
}

/// `Nr x Nt` independent links, each an SOS stream seeded by [`link_seed`].
pub fn mimo_generate(
    spec: &FadingSpec,
    t: usize,
    nr: usize,
    nt: usize,
    seed: u64,
) -> Result<CsiSequence> {
    if nr == 0 || nt == 0 {
        return Err(Error::config("antenna counts must be at least 1"));
    }
    if t == 0 {
        return Err(Error::config("CSI sequence length must be at least 1"));
    }
    let mut matrices = vec![CMatrix::zeros(nr, nt); t];
    for r in 0..nr {
        for c in 0..nt {
            let link = sos_generate(&spec.draw(link_seed(seed, r, c))?, t)?;
            for (m, h) in matrices.iter_mut().zip(link.as_siso().unwrap_or_default()) {
                m[(r, c)] = *h;
            }
        }
    }
    Ok(CsiSequence::Mimo {
        matrices,
        slot_period: spec.sample_period,
    })
}

/// Additive white circular Gaussian noise source.
///
/// `variance` is the total power per complex sample. The stream is
/// deterministic given the seed; a zero variance still advances the stream
/// so noise draws stay aligned across SNR points.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    variance: f64,
    seed: u64,
    rng: SimRng,
}

impl NoiseModel {
    pub fn new(variance: f64, seed: u64) -> Result<Self> {
        if !(variance >= 0.0) || !variance.is_finite() {
            return Err(Error::config(format!(
                "noise variance must be finite and non-negative, got {variance}"
            )));
        }
        Ok(NoiseModel {
            variance,
            seed,
            rng: seeding::rng_from_seed(seed),
        })
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn draw(&mut self) -> Complex {
        seeding::complex_gaussian(&mut self.rng, 1.0) * self.variance.sqrt()
    }
}

/// `y = h x + n` for one block-fading slot.
pub fn apply_siso(x: &[Complex], h: Complex, noise: &mut NoiseModel) -> Vec<Complex> {
    x.iter().map(|&xi| h * xi + noise.draw()).collect()
}

/// `Y = H X + N`, with `X` holding one transmit vector per column.
pub fn apply_mimo(x: &CMatrix, h: &CMatrix, noise: &mut NoiseModel) -> Result<CMatrix> {
    if h.ncols() != x.nrows() {
        return Err(Error::dim(format!(
            "channel is {}x{} but the transmit block has {} rows",
            h.nrows(),
            h.ncols(),
            x.nrows()
        )));
    }
    if x.ncols() == 0 {
        return Err(Error::dim("transmit block has no columns"));
    }
    let mut y = h * x;
    // Column-major fill so that per-column noise is contiguous in the stream.
    for c in 0..y.ncols() {
        for r in 0..y.nrows() {
            y[(r, c)] += noise.draw();
        }
    }
    Ok(y)
}
