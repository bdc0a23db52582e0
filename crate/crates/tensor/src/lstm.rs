use crate::error::{dim_err, Result};
use crate::graph::{Graph, Var};
use crate::scalar::Float;

/// Weights of an LSTM cell without biases. Gate rows are stacked in the
/// order input, forget, candidate, output.
#[derive(Clone, Copy, Debug)]
pub struct LstmParams {
    /// `[4H, D]`, applied to the step input.
    pub w_input: Var,
    /// `[4H, H]`, applied to the previous hidden state.
    pub w_hidden: Var,
}

/// One LSTM step: returns `(h, c)`.
pub fn lstm_step<T: Float>(
    g: &mut Graph<T>,
    x: Var,
    h_prev: Var,
    c_prev: Var,
    params: &LstmParams,
) -> Result<(Var, Var)> {
    let hidden = g.shape(h_prev).last().copied().unwrap_or(0);
    let ws = g.shape(params.w_hidden).to_vec();
    if ws != [4 * hidden, hidden] || g.shape(c_prev) != g.shape(h_prev) {
        return dim_err(format!(
            "lstm_step: hidden {:?}, cell {:?}, recurrent weight {:?} disagree",
            g.shape(h_prev),
            g.shape(c_prev),
            ws
        ));
    }
    let from_x = g.linear(x, params.w_input)?;
    let from_h = g.linear(h_prev, params.w_hidden)?;
    let gates = g.add(from_x, from_h)?;
    let axis = g.shape(gates).len() - 1;
    let i = g.slice(gates, axis, 0, hidden)?;
    let f = g.slice(gates, axis, hidden, hidden)?;
    let cand = g.slice(gates, axis, 2 * hidden, hidden)?;
    let o = g.slice(gates, axis, 3 * hidden, hidden)?;
    let i = g.sigmoid(i);
    let f = g.sigmoid(f);
    let cand = g.tanh(cand);
    let o = g.sigmoid(o);
    let keep = g.mul(f, c_prev)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let squashed = g.tanh(c);
    let h = g.mul(o, squashed)?;
    Ok((h, c))
}
