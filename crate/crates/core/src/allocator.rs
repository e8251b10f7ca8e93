//! Rank-matched feature allocation.
//!
//! Every allocator reduces to the same step: sort resource blocks by quality
//! (`u`), sort features by importance (`v`), and put the `i`-th most
//! important feature on the `i`-th best block. The resulting order `eta`
//! says which feature each block carries: block `b` carries `A[eta[b]]`.
//! Sorting is stable, so ties keep ascending index order.

use crate::codec::FeatureTensor;
use crate::mimo::{mmse_equalizer, sinr_per_tx, svd_decompose};
use crate::{CMatrix, Complex, Error, Result};

/// Transmission order: block `b` carries feature `eta[b]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureOrder {
    pub eta: Vec<usize>,
}

impl FeatureOrder {
    pub fn identity(c: usize) -> Self {
        FeatureOrder { eta: (0..c).collect() }
    }

    /// Checks that `eta` is a permutation of `0..c`.
    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![false; self.eta.len()];
        for &e in &self.eta {
            if e >= seen.len() || seen[e] {
                return Err(Error::Integrity(format!(
                    "feature order {:?} is not a permutation",
                    self.eta
                )));
            }
            seen[e] = true;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QualityKind {
    Magnitude,
    Sinr,
    SingularValue,
}

/// Per-block quality, `blocks_per_slot x slots`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockQualityMatrix {
    pub blocks_per_slot: usize,
    pub slots: usize,
    /// Flattened slot by slot, block index fastest.
    pub values: Vec<f64>,
    pub kind: QualityKind,
}

impl BlockQualityMatrix {
    pub fn new(blocks_per_slot: usize, slots: usize, values: Vec<f64>, kind: QualityKind) -> Result<Self> {
        if values.len() != blocks_per_slot * slots {
            return Err(Error::dim("quality matrix size mismatch"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Numerical("block qualities must be finite and non-negative".into()));
        }
        Ok(BlockQualityMatrix {
            blocks_per_slot,
            slots,
            values,
            kind,
        })
    }

    pub fn get(&self, block: usize, slot: usize) -> f64 {
        self.values[slot * self.blocks_per_slot + block]
    }
}

/// Result of a forward allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// The organized tensor: slice `b` is the feature sent on block `b`.
    pub tensor: FeatureTensor,
    pub order: FeatureOrder,
    /// Blocks sorted by descending quality (the receiver's feedback).
    pub block_rank: Vec<usize>,
    /// Features sorted by descending importance.
    pub feature_rank: Vec<usize>,
    pub quality: BlockQualityMatrix,
}

/// Indices that sort `xs` descending; ties keep ascending index order.
pub fn argsort_desc(xs: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[b].total_cmp(&xs[a]));
    idx
}

/// `eta[u[i]] = v[i]` with `u`, `v` the descending orders of quality and
/// importance.
pub fn rank_match(importance: &[f64], quality: &[f64]) -> Result<(FeatureOrder, Vec<usize>, Vec<usize>)> {
    if importance.len() != quality.len() {
        return Err(Error::dim(format!(
            "{} importance scores for {} resource blocks",
            importance.len(),
            quality.len()
        )));
    }
    let u = argsort_desc(quality);
    let v = argsort_desc(importance);
    let mut eta = vec![0; u.len()];
    for (&ui, &vi) in u.iter().zip(&v) {
        eta[ui] = vi;
    }
    Ok((FeatureOrder { eta }, u, v))
}

/// `A_tilde[b] = A[eta[b]]`.
pub fn apply_order(a: &FeatureTensor, order: &FeatureOrder) -> Result<FeatureTensor> {
    order.validate()?;
    if order.len() != a.c {
        return Err(Error::dim("order length differs from the feature count"));
    }
    let mut out = a.clone();
    for (b, &e) in order.eta.iter().enumerate() {
        out.feature_mut(b).copy_from_slice(a.feature(e));
    }
    Ok(out)
}

/// Restores the original feature order: `A_hat[eta[b]] = X_hat[b]`.
pub fn inverse_allocate(x_hat: &FeatureTensor, order: &FeatureOrder) -> Result<FeatureTensor> {
    order.validate()?;
    if order.len() != x_hat.c {
        return Err(Error::dim("order length differs from the feature count"));
    }
    let mut out = x_hat.clone();
    for (b, &e) in order.eta.iter().enumerate() {
        out.feature_mut(e).copy_from_slice(x_hat.feature(b));
    }
    Ok(out)
}

fn allocate_with(a: &FeatureTensor, importance: &[f64], quality: BlockQualityMatrix) -> Result<Allocation> {
    if importance.len() != a.c {
        return Err(Error::dim(format!(
            "{} importance scores for {} features",
            importance.len(),
            a.c
        )));
    }
    let (order, u, v) = rank_match(importance, &quality.values)?;
    Ok(Allocation {
        tensor: apply_order(a, &order)?,
        order,
        block_rank: u,
        feature_rank: v,
        quality,
    })
}

/// SISO allocation: one feature per slot, ranked by `|h|`.
pub fn time_allocate(a: &FeatureTensor, importance: &[f64], csi: &[Complex]) -> Result<Allocation> {
    if csi.len() != a.c {
        return Err(Error::dim(format!("{} CSI samples for {} features", csi.len(), a.c)));
    }
    let q = BlockQualityMatrix::new(1, csi.len(), csi.iter().map(|h| h.norm()).collect(), QualityKind::Magnitude)?;
    allocate_with(a, importance, q)
}

fn check_slots(c: usize, blocks: usize, slots: usize) -> Result<()> {
    if blocks == 0 || c % blocks != 0 {
        return Err(Error::config(format!(
            "{c} features cannot be split evenly over {blocks} blocks per slot"
        )));
    }
    if slots != c / blocks {
        return Err(Error::dim(format!(
            "{slots} CSI slots supplied, {} needed",
            c / blocks
        )));
    }
    Ok(())
}

fn check_uniform(csi: &[CMatrix]) -> Result<(usize, usize)> {
    let first = csi.first().ok_or_else(|| Error::dim("empty CSI sequence"))?;
    let dims = first.shape();
    if csi.iter().any(|h| h.shape() != dims) {
        return Err(Error::dim("CSI matrices differ in shape"));
    }
    Ok(dims)
}

/// Post-MMSE SINR of every transmit antenna in every slot.
pub fn quality_mmse(csi: &[CMatrix], power: f64, noise_var: f64) -> Result<BlockQualityMatrix> {
    let (_, nt) = check_uniform(csi)?;
    let mut values = Vec::with_capacity(nt * csi.len());
    for h in csi {
        values.extend(sinr_per_tx(&mmse_equalizer(h, power, noise_var)?));
    }
    BlockQualityMatrix::new(nt, csi.len(), values, QualityKind::Sinr)
}

/// The `streams` largest singular values of every slot.
pub fn quality_svd(csi: &[CMatrix], streams: usize) -> Result<BlockQualityMatrix> {
    let (nr, nt) = check_uniform(csi)?;
    if streams == 0 || streams > nr.min(nt) {
        return Err(Error::config(format!(
            "stream count {streams} must be in 1..={}",
            nr.min(nt)
        )));
    }
    let mut values = Vec::with_capacity(streams * csi.len());
    for h in csi {
        values.extend(&svd_decompose(h)?.singular_values[..streams]);
    }
    BlockQualityMatrix::new(streams, csi.len(), values, QualityKind::SingularValue)
}

/// Precoding-free MIMO allocation over `(antenna, slot)` blocks ranked by
/// post-MMSE SINR. `power` is the per-antenna transmit power.
pub fn st_allocate_mmse(
    a: &FeatureTensor,
    importance: &[f64],
    csi: &[CMatrix],
    power: f64,
    noise_var: f64,
) -> Result<Allocation> {
    let (_, nt) = check_uniform(csi)?;
    check_slots(a.c, nt, csi.len())?;
    allocate_with(a, importance, quality_mmse(csi, power, noise_var)?)
}

/// SVD-precoded MIMO allocation over `(subchannel, slot)` blocks ranked by
/// singular value, with all `min(Nr, Nt)` subchannels in use.
pub fn st_allocate_svd(a: &FeatureTensor, importance: &[f64], csi: &[CMatrix]) -> Result<Allocation> {
    let (nr, nt) = check_uniform(csi)?;
    st_allocate_svd_streams(a, importance, csi, nr.min(nt))
}

/// [`st_allocate_svd`] restricted to the `streams` dominant subchannels.
pub fn st_allocate_svd_streams(
    a: &FeatureTensor,
    importance: &[f64],
    csi: &[CMatrix],
    streams: usize,
) -> Result<Allocation> {
    check_uniform(csi)?;
    check_slots(a.c, streams, csi.len())?;
    allocate_with(a, importance, quality_svd(csi, streams)?)
}

/// Side information for one image: `c * ceil(log2 c)` bits.
pub fn side_info_bits(c: usize) -> u64 {
    if c <= 1 {
        return 0;
    }
    let bits = usize::BITS - (c - 1).leading_zeros();
    c as u64 * bits as u64
}
