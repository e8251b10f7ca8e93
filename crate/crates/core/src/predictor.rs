//! CSI prediction from sampled history.
//!
//! Two predictors share one interface: [`PredictorState::Oracle`] returns the
//! true future (the known-CSI case) and [`PredictorState::LinearMmse`] is an
//! order-`p` linear predictor fitted by least squares on the history. For a
//! wide-sense stationary Gaussian process the linear MMSE predictor is the
//! best predictor of its class, which makes it a sound stand-in for a
//! learned sequence model.

use nalgebra::{DMatrix, DVector};

use crate::fading::CsiSequence;
use crate::{CMatrix, Complex, Error, Result};

/// Relative ridge on the normal equations, scaled by the mean energy per
/// regression row.
const RIDGE: f64 = 1e-8;

/// A fitted order-`p` linear predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMmse {
    /// Coefficients `w_1..w_p`; the prediction is `sum_i w_i h_{n-i}`.
    pub coeffs: Vec<Complex>,
    /// The last `p` history samples, oldest first.
    pub window: Vec<Complex>,
    /// One-step NMSE of the fit on its own history.
    pub fit_nmse: f64,
    pub slot_period: f64,
}

impl LinearMmse {
    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    fn step(&self, window: &[Complex]) -> Complex {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, w)| w * window[window.len() - 1 - i])
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PredictorState {
    /// Known future CSI.
    Oracle {
        future: Vec<Complex>,
        slot_period: f64,
    },
    LinearMmse(LinearMmse),
}

impl PredictorState {
    pub fn oracle(future: Vec<Complex>, slot_period: f64) -> Self {
        PredictorState::Oracle {
            future,
            slot_period,
        }
    }

    fn slot_period(&self) -> f64 {
        match self {
            PredictorState::Oracle { slot_period, .. } => *slot_period,
            PredictorState::LinearMmse(m) => m.slot_period,
        }
    }
}

/// Fits an order-`p` one-step linear predictor to `history`.
///
/// Solves the normal equations `(X^H X + eps I) w = X^H y`, where row `n` of
/// `X` is `[h_{n-1}, ..., h_{n-p}]` and `y_n = h_n`.
pub fn fit(history: &[Complex], order: usize, slot_period: f64) -> Result<PredictorState> {
    if order == 0 {
        return Err(Error::config("predictor order must be at least 1"));
    }
    if history.len() < 4 * order {
        return Err(Error::config(format!(
            "predictor of order {order} needs at least {} history samples, got {}",
            4 * order,
            history.len()
        )));
    }
    if history.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::config("history contains non-finite samples"));
    }
    let p = order;
    let rows = history.len() - p;
    let mut gram = CMatrix::zeros(p, p);
    let mut rhs = DVector::<Complex>::zeros(p);
    for n in p..history.len() {
        for i in 0..p {
            let xi = history[n - 1 - i];
            rhs[i] += xi.conj() * history[n];
            for j in 0..p {
                gram[(i, j)] += xi.conj() * history[n - 1 - j];
            }
        }
    }
    let trace: f64 = (0..p).map(|i| gram[(i, i)].re).sum();
    let mut ridge = RIDGE * trace / rows as f64;
    if ridge == 0.0 {
        ridge = f64::MIN_POSITIVE;
    }
    // Escalate the ridge if the Gram matrix is numerically indefinite.
    let coeffs = loop {
        let reg = &gram + DMatrix::<Complex>::identity(p, p).scale(ridge);
        if let Some(ch) = reg.cholesky() {
            let w = ch.solve(&rhs);
            if w.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
                break w;
            }
        }
        ridge *= 10.0;
        if !ridge.is_finite() || ridge > trace.max(1.0) {
            return Err(Error::Numerical("predictor normal equations are singular".into()));
        }
    };
    let mut model = LinearMmse {
        coeffs: coeffs.iter().copied().collect(),
        window: history[history.len() - p..].to_vec(),
        fit_nmse: 0.0,
        slot_period,
    };
    let mut err = 0.0;
    let mut energy = 0.0;
    for n in p..history.len() {
        err += (model.step(&history[n - p..n]) - history[n]).norm_sqr();
        energy += history[n].norm_sqr();
    }
    model.fit_nmse = if energy > 0.0 { err / energy } else { 0.0 };
    Ok(PredictorState::LinearMmse(model))
}

/// Predicts the next `steps` samples.
///
/// The linear predictor runs recursively: each prediction is appended to the
/// regression window. The oracle returns the true future.
pub fn predict(state: &PredictorState, steps: usize) -> Result<CsiSequence> {
    let gains = match state {
        PredictorState::Oracle { future, .. } => {
            if steps > future.len() {
                return Err(Error::config(format!(
                    "oracle holds {} future samples, {steps} requested",
                    future.len()
                )));
            }
            future[..steps].to_vec()
        }
        PredictorState::LinearMmse(m) => {
            let mut window = m.window.clone();
            let mut out = Vec::with_capacity(steps);
            for _ in 0..steps {
                let next = m.step(&window);
                out.push(next);
                window.remove(0);
                window.push(next);
            }
            out
        }
    };
    Ok(CsiSequence::Siso {
        gains,
        slot_period: state.slot_period(),
    })
}

/// Per-link predictor states of an `Nr x Nt` channel, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorGrid {
    pub nr: usize,
    pub nt: usize,
    pub states: Vec<PredictorState>,
}

/// Predicts every link independently and assembles per-slot matrices.
pub fn predict_mimo(grid: &PredictorGrid, steps: usize) -> Result<CsiSequence> {
    if grid.nr == 0 || grid.nt == 0 || grid.states.len() != grid.nr * grid.nt {
        return Err(Error::dim(format!(
            "predictor grid {}x{} holds {} states",
            grid.nr,
            grid.nt,
            grid.states.len()
        )));
    }
    let mut matrices = vec![CMatrix::zeros(grid.nr, grid.nt); steps];
    for r in 0..grid.nr {
        for c in 0..grid.nt {
            let seq = predict(&grid.states[r * grid.nt + c], steps)?;
            for (m, g) in matrices.iter_mut().zip(seq.as_siso().unwrap_or(&[])) {
                m[(r, c)] = *g;
            }
        }
    }
    Ok(CsiSequence::Mimo {
        matrices,
        slot_period: grid.states[0].slot_period(),
    })
}

/// Normalized prediction error `sum |h - h_pred|^2 / sum |h|^2`.
///
/// Works on SISO and MIMO sequences of equal shape. Zero true energy gives 0
/// for an exact prediction and infinity otherwise.
pub fn nmse(truth: &CsiSequence, predicted: &CsiSequence) -> Result<f64> {
    if truth.len() != predicted.len() || truth.dims() != predicted.dims() {
        return Err(Error::dim("prediction and truth differ in shape"));
    }
    let mut err = 0.0;
    let mut energy = 0.0;
    for t in 0..truth.len() {
        let a = truth.slot_matrix(t);
        let b = predicted.slot_matrix(t);
        err += (&a - &b).norm_squared();
        energy += a.norm_squared();
    }
    Ok(if energy > 0.0 {
        err / energy
    } else if err == 0.0 {
        0.0
    } else {
        f64::INFINITY
    })
}
