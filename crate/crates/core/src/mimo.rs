//! MIMO receive processing: MMSE equalization, per-stream SINR and SVD
//! precoding.

use nalgebra::DMatrix;

use crate::fading::{apply_mimo, NoiseModel};
use crate::{CMatrix, CVector, Complex, Error, Result};

/// SINR reported when a stream sees neither interference nor noise.
pub const DEFAULT_SINR_CAP_DB: f64 = 300.0;

/// Linear MMSE receive filter `G = H^H (H H^H + (sigma^2/P) I)^-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Equalizer {
    /// `Nt x Nr` filter; row `j` recovers transmit antenna `j`.
    pub g: CMatrix,
    /// The `Nr x Nt` channel the filter was built for.
    pub h: CMatrix,
    /// Transmit power per antenna.
    pub power: f64,
    pub noise_var: f64,
}

impl Equalizer {
    /// Frobenius norm of `G (H H^H + (sigma^2/P) I) - H^H`.
    pub fn residual(&self) -> f64 {
        let nr = self.h.nrows();
        let gram = &self.h * self.h.adjoint()
            + CMatrix::identity(nr, nr).scale(self.noise_var / self.power);
        (&self.g * gram - self.h.adjoint()).norm()
    }
}

/// Builds the MMSE equalizer for channel `h`.
///
/// `noise_var = 0` is accepted and yields the zero-forcing limit when the
/// channel has full column rank. When the regularized Gram matrix is not
/// invertible the error is returned rather than a non-finite filter.
pub fn mmse_equalizer(h: &CMatrix, power: f64, noise_var: f64) -> Result<Equalizer> {
    if !(power > 0.0) || !power.is_finite() {
        return Err(Error::config(format!("transmit power must be positive, got {power}")));
    }
    if !(noise_var >= 0.0) || !noise_var.is_finite() {
        return Err(Error::config(format!("noise variance must be non-negative, got {noise_var}")));
    }
    if h.is_empty() || h.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::config("channel matrix must be non-empty and finite"));
    }
    let (nr, nt) = h.shape();
    let reg = noise_var / power;
    // Both forms are equal for reg > 0 (push-through identity); the smaller
    // Gram matrix is the one that stays invertible in the zero-noise limit.
    let g = if nr <= nt {
        let gram = h * h.adjoint() + CMatrix::identity(nr, nr).scale(reg);
        let inv = hermitian_inverse(gram)?;
        h.adjoint() * inv
    } else {
        let gram = h.adjoint() * h + CMatrix::identity(nt, nt).scale(reg);
        let inv = hermitian_inverse(gram)?;
        inv * h.adjoint()
    };
    if g.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::Numerical("MMSE filter is not finite".into()));
    }
    Ok(Equalizer {
        g,
        h: h.clone(),
        power,
        noise_var,
    })
}

fn hermitian_inverse(m: CMatrix) -> Result<CMatrix> {
    let n = m.nrows();
    let scale = (0..n).map(|i| m[(i, i)].re).fold(0.0, f64::max);
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::Numerical("regularized Gram matrix is singular".into()))?;
    let l = chol.l();
    let min_pivot = (0..n).map(|i| l[(i, i)].re).fold(f64::INFINITY, f64::min);
    if !(min_pivot * min_pivot > scale * 1e-14) {
        return Err(Error::Numerical("regularized Gram matrix is singular".into()));
    }
    Ok(chol.inverse())
}

/// Post-equalization SINR of each transmit stream, capped at
/// [`DEFAULT_SINR_CAP_DB`].
pub fn sinr_per_tx(eq: &Equalizer) -> Vec<f64> {
    sinr_per_tx_capped(eq, DEFAULT_SINR_CAP_DB)
}

/// Linear SINR per transmit antenna:
/// `P |g_j h_j|^2 / (P sum_{k != j} |g_j h_k|^2 + ||g_j||^2 sigma^2)`.
pub fn sinr_per_tx_capped(eq: &Equalizer, cap_db: f64) -> Vec<f64> {
    let cap = 10f64.powf(cap_db / 10.0);
    let nt = eq.h.ncols();
    let gh = &eq.g * &eq.h;
    (0..nt)
        .map(|j| {
            let gnorm2: f64 = eq.g.row(j).iter().map(|v| v.norm_sqr()).sum();
            if gnorm2 == 0.0 {
                return 0.0;
            }
            let signal = eq.power * gh[(j, j)].norm_sqr();
            let interference: f64 = (0..nt)
                .filter(|&k| k != j)
                .map(|k| gh[(j, k)].norm_sqr())
                .sum::<f64>()
                * eq.power;
            let den = interference + gnorm2 * eq.noise_var;
            if den == 0.0 {
                cap
            } else {
                (signal / den).min(cap)
            }
        })
        .collect()
}

/// `H = U D V^H` with full unitary `U` and `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdTriple {
    /// `Nr x Nr` unitary.
    pub u: CMatrix,
    /// `Nr x Nt` real diagonal block.
    pub d: DMatrix<f64>,
    /// `Nt x Nt` unitary.
    pub v: CMatrix,
    /// `min(Nr, Nt)` singular values, descending.
    pub singular_values: Vec<f64>,
    /// The decomposed channel.
    pub h: CMatrix,
}

impl SvdTriple {
    pub fn rank_bound(&self) -> usize {
        self.singular_values.len()
    }

    pub fn reconstruct(&self) -> CMatrix {
        let d = self.d.map(|x| Complex::new(x, 0.0));
        &self.u * d * self.v.adjoint()
    }

    /// Precoder `V_bar`: the first `d` columns of `V`.
    pub fn precoder(&self, d: usize) -> Result<CMatrix> {
        if d == 0 || d > self.rank_bound() {
            return Err(Error::config(format!(
                "stream count {d} must be in 1..={}",
                self.rank_bound()
            )));
        }
        Ok(self.v.columns(0, d).into_owned())
    }
}

/// Singular value decomposition with a deterministic phase convention:
/// each column of `U` has its largest-magnitude entry real and
/// non-negative, and the matching column of `V` is rotated to keep
/// `U D V^H` unchanged.
pub fn svd_decompose(h: &CMatrix) -> Result<SvdTriple> {
    if h.is_empty() || h.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::config("channel matrix must be non-empty and finite"));
    }
    let (nr, nt) = h.shape();
    let n = nr.min(nt);
    let svd = h.clone().svd(true, true);
    let u_thin = svd.u.ok_or_else(|| Error::Numerical("SVD did not return U".into()))?;
    let v_thin = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD did not return V".into()))?
        .adjoint();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let singular_values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i].max(0.0)).collect();

    let mut u_cols: Vec<CVector> = order.iter().map(|&i| u_thin.column(i).into_owned()).collect();
    let mut v_cols: Vec<CVector> = order.iter().map(|&i| v_thin.column(i).into_owned()).collect();
    for (uc, vc) in u_cols.iter_mut().zip(v_cols.iter_mut()) {
        let rot = canonical_rotation(uc);
        *uc *= rot;
        *vc *= rot;
    }
    complete_basis(&mut u_cols, nr);
    complete_basis(&mut v_cols, nt);
    for c in u_cols.iter_mut().skip(n).chain(v_cols.iter_mut().skip(n)) {
        let rot = canonical_rotation(c);
        *c *= rot;
    }

    let mut d = DMatrix::zeros(nr, nt);
    for (i, &s) in singular_values.iter().enumerate() {
        d[(i, i)] = s;
    }
    Ok(SvdTriple {
        u: CMatrix::from_columns(&u_cols),
        d,
        v: CMatrix::from_columns(&v_cols),
        singular_values,
        h: h.clone(),
    })
}

/// Unit-modulus factor that makes the largest-magnitude entry of `col` real
/// and non-negative.
fn canonical_rotation(col: &CVector) -> Complex {
    let mut best = 0;
    for i in 1..col.len() {
        if col[i].norm() > col[best].norm() * (1.0 + 1e-12) {
            best = i;
        }
    }
    let pivot = col[best];
    if pivot.norm() == 0.0 {
        Complex::new(1.0, 0.0)
    } else {
        pivot.conj() / pivot.norm()
    }
}

/// Extends orthonormal `cols` to a basis of `C^dim` by Gram-Schmidt over the
/// standard basis vectors.
fn complete_basis(cols: &mut Vec<CVector>, dim: usize) {
    let mut e = 0;
    while cols.len() < dim && e < dim {
        let mut cand = CVector::zeros(dim);
        cand[e] = Complex::new(1.0, 0.0);
        e += 1;
        // Two passes of modified Gram-Schmidt for numerical orthogonality.
        for _ in 0..2 {
            for c in cols.iter() {
                let proj = c.dotc(&cand);
                cand -= c * proj;
            }
        }
        let norm = cand.norm();
        if norm > 1e-8 {
            cols.push(cand / Complex::new(norm, 0.0));
        }
    }
}

/// Precoding-free transmission of one vector: `x_hat = G (H x + n)`.
pub fn transmit_mmse(x: &CVector, noise: &mut NoiseModel, eq: &Equalizer) -> Result<CVector> {
    let xm = CMatrix::from_column_slice(x.len(), 1, x.as_slice());
    let out = transmit_mmse_block(&xm, noise, eq)?;
    Ok(out.column(0).into_owned())
}

/// Column-wise [`transmit_mmse`] for an `Nt x m` block.
pub fn transmit_mmse_block(x: &CMatrix, noise: &mut NoiseModel, eq: &Equalizer) -> Result<CMatrix> {
    let y = apply_mimo(x, &eq.h, noise)?;
    Ok(&eq.g * y)
}

/// SVD-precoded transmission of one `d`-vector: `y = H V_bar x + n`, and
/// the first `d` entries of `U^H y` are returned.
pub fn transmit_svd(x: &CVector, svd: &SvdTriple, noise: &mut NoiseModel) -> Result<CVector> {
    let xm = CMatrix::from_column_slice(x.len(), 1, x.as_slice());
    let out = transmit_svd_block(&xm, svd, noise)?;
    Ok(out.column(0).into_owned())
}

/// Column-wise [`transmit_svd`] for a `d x m` block.
pub fn transmit_svd_block(x: &CMatrix, svd: &SvdTriple, noise: &mut NoiseModel) -> Result<CMatrix> {
    let d = x.nrows();
    let precoder = svd.precoder(d)?;
    let y = apply_mimo(&(precoder * x), &svd.h, noise)?;
    let z = svd.u.adjoint() * y;
    Ok(z.rows(0, d).into_owned())
}
