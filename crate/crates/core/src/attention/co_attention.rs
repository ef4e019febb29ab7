use crate::error::{Error, Result};
use crate::tensor::Var;

/// Output of [`co_attention`].
#[derive(Clone, Debug)]
pub struct CoAttended<'t> {
    /// Length-dv attended visual vector.
    pub visual: Var<'t>,
    /// k×dv per-channel region weights.
    pub weights: Var<'t>,
    /// Region rows whose norm fell below the degeneracy floor.
    pub degenerate_regions: Vec<bool>,
    pub degenerate_words: Vec<bool>,
}

/// Similarity-driven attention between regions `V` (k×dv) and word rows
/// `Q` (n×dv).
///
/// With `normalize`, both sides are first scaled to unit-L2 rows. The
/// region-by-channel map `V·Qᵀ·Q` is turned into weights by a softmax over
/// regions for each channel, and the output channel `t` is
/// `Σᵢ weight[i][t]·V[i][t]`.
pub fn co_attention<'t>(regions: &Var<'t>, words: &Var<'t>, normalize: bool) -> Result<CoAttended<'t>> {
    let (vs, qs) = (regions.shape(), words.shape());
    if vs.len() != 2 || qs.len() != 2 || vs[1] != qs[1] {
        return Err(Error::dim("co_attention", &vs, &qs));
    }
    if vs[0] == 0 {
        return Err(Error::Contract("co-attention over zero regions".into()));
    }
    let (v, degenerate_regions, q, degenerate_words) = if normalize {
        let (v, dv) = regions.l2_normalize(1)?;
        let (q, dq) = words.l2_normalize(1)?;
        (v, dv, q, dq)
    } else {
        (*regions, vec![false; vs[0]], *words, vec![false; qs[0]])
    };
    let similarity = v.matmul(&q.transpose()?)?.matmul(&q)?;
    let weights = similarity.softmax(0)?;
    let visual = weights.mul(&v)?.sum(0)?;
    Ok(CoAttended {
        visual,
        weights,
        degenerate_regions,
        degenerate_words,
    })
}
