use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Mean over the first `valid_len` rows of `feats·weight`. Order of those
/// rows does not matter. An all-PAD input (`valid_len == 0`) gives a zero
/// vector and `true` in the second slot.
pub fn linear_gap_encode<'t>(
    tape: &'t Tape,
    feats: &Var<'t>,
    weight: &Var<'t>,
    valid_len: usize,
) -> Result<(Var<'t>, bool)> {
    let shape = feats.shape();
    let wshape = weight.shape();
    if shape.len() != 2 || wshape.len() != 2 || shape[1] != wshape[0] {
        return Err(Error::dim("linear_gap_encode", &shape, &wshape));
    }
    if valid_len > shape[0] {
        return Err(Error::Index {
            what: "sequence length",
            index: valid_len,
            len: shape[0],
        });
    }
    if valid_len == 0 {
        return Ok((tape.constant(Tensor::zeros(vec![wshape[1]])), true));
    }
    let rows = if valid_len == shape[0] {
        *feats
    } else {
        feats.gather_rows(&(0..valid_len).collect::<Vec<_>>(), None)?
    };
    Ok((rows.matmul(weight)?.mean(0)?, false))
}
