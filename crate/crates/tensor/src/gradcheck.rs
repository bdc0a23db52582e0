//! Central finite-difference checking of analytic gradients.

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Denominator floor of [`relative_error`]; gradients smaller than this are
/// compared absolutely.
pub const RELATIVE_FLOOR: f64 = 1e-6;

pub const DEFAULT_STEP: f64 = 1e-4;

/// `|a − n| / max(|a|, |n|, RELATIVE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

#[derive(Clone, Copy, Debug)]
pub struct CheckConfig {
    pub step: f64,
    /// Skip coordinates whose ±step perturbation switches a ReLU or max-pool
    /// branch; the function is not differentiable across such a switch.
    pub skip_branch_switches: bool,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            step: DEFAULT_STEP,
            skip_branch_switches: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped: usize,
    /// (input, flat index, analytic, numeric) of the worst coordinate.
    pub worst: Option<(usize, usize, f64, f64)>,
}

impl CheckReport {
    pub fn merge(&mut self, other: &CheckReport) {
        if other.max_rel_error > self.max_rel_error || self.worst.is_none() {
            self.max_rel_error = self.max_rel_error.max(other.max_rel_error);
            if other.worst.is_some() && other.max_rel_error >= self.max_rel_error {
                self.worst = other.worst;
            }
        }
        self.checked += other.checked;
        self.skipped += other.skipped;
    }
}

/// Compares the gradient of the scalar built by `f` with respect to every
/// coordinate of every input against central differences.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], config: CheckConfig, f: F) -> Result<CheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<(f64, u64)> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.constant(t.clone())).collect();
        let loss = f(&mut g, &vars)?;
        Ok((g.value(loss).item(), g.branch_signature()))
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let loss = f(&mut g, &vars)?;
    let base_signature = g.branch_signature();
    let grads = g.backward(loss)?;

    let mut report = CheckReport::default();
    let mut work = inputs.to_vec();
    for (which, v) in vars.iter().enumerate() {
        let analytic: Vec<f64> = match grads.get(*v) {
            Some(t) => t.data().to_vec(),
            None => vec![0.0; inputs[which].numel()],
        };
        for idx in 0..inputs[which].numel() {
            let original = work[which].data()[idx];
            work[which].data_mut()[idx] = original + config.step;
            let (plus, sig_plus) = eval(&work)?;
            work[which].data_mut()[idx] = original - config.step;
            let (minus, sig_minus) = eval(&work)?;
            work[which].data_mut()[idx] = original;
            if config.skip_branch_switches && (sig_plus != base_signature || sig_minus != base_signature) {
                report.skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * config.step);
            let err = relative_error(analytic[idx], numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((which, idx, analytic[idx], numeric));
            }
        }
    }
    Ok(report)
}

/// Deterministic pseudo-random tensor with entries in `[-1, 1)`.
pub fn probe_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut state = seed ^ 0x9e37_79b9_7f4a_7c15;
    Tensor::from_fn(shape.to_vec(), |_| {
        state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    })
}

/// `Σ out ⊙ R` for a fixed probe `R`, turning any tensor into a scalar
/// whose gradient exercises every output element. Its own nodes are exempt
/// from an injected sign fault.
pub fn probe_loss(g: &mut Graph<f64>, out: Var, seed: u64) -> Result<Var> {
    g.seal_sign_fault();
    let probe = probe_tensor(g.shape(out), seed);
    let r = g.constant(probe);
    let weighted = g.mul(out, r)?;
    Ok(g.sum(weighted))
}
