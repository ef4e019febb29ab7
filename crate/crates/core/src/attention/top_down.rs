use crate::error::{Error, Result};
use crate::tensor::{Activation, Var};

/// Weights of one top-down attention block, bound on a tape.
#[derive(Clone, Copy, Debug)]
pub struct TopDownVars<'t> {
    /// dq×a question projection and its bias.
    pub question_weight: Var<'t>,
    pub question_bias: Var<'t>,
    /// (dv+a)×a joint projection and its bias.
    pub joint_weight: Var<'t>,
    pub joint_bias: Var<'t>,
    /// a×h glimpse scorer and its bias.
    pub glimpse_weight: Var<'t>,
    pub glimpse_bias: Var<'t>,
}

/// Question-conditioned attention over regions.
///
/// The projected question is tiled next to every region row, the joint
/// rows pass through `activation`, and each of the `h` glimpse columns
/// of scores is normalized by a softmax over regions. Returns the
/// glimpse-major concatenation of attended vectors (length `dv·h`) and the
/// `k×h` attention mask.
pub fn top_down_attention<'t>(
    regions: &Var<'t>,
    question: &Var<'t>,
    vars: &TopDownVars<'t>,
    activation: Activation,
) -> Result<(Var<'t>, Var<'t>)> {
    let shape = regions.shape();
    let [k, dv] = shape[..] else {
        return Err(Error::dim("top_down_attention", &shape, &question.shape()));
    };
    if k == 0 {
        return Err(Error::Contract("top-down attention over zero regions".into()));
    }
    let projected = question
        .matmul(&vars.question_weight)?
        .add_row(&vars.question_bias)?;
    let joint = regions.concat(&projected.repeat_rows(k)?, 1)?;
    let hidden = joint
        .matmul(&vars.joint_weight)?
        .add_row(&vars.joint_bias)?
        .activation(activation);
    let scores = hidden.matmul(&vars.glimpse_weight)?.add_row(&vars.glimpse_bias)?;
    let mask = scores.softmax(0)?;
    let glimpses = scores.shape()[1];
    let attended = mask.transpose()?.matmul(regions)?.reshape(vec![glimpses * dv])?;
    Ok((attended, mask))
}
