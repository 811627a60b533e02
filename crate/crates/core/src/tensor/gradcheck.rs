//! Central finite-difference check of tape gradients.

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Relative error `|analytic - numeric| / max(|analytic|, |numeric|)`
/// (Euclidean norms) for each input tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub per_input: Vec<f64>,
}

impl GradCheck {
    pub fn max_rel_err(&self) -> f64 {
        self.per_input.iter().copied().fold(0.0, f64::max)
    }
}

fn eval(inputs: &[Tensor], f: &dyn Fn(&mut Tape, &[Var]) -> Result<Var>) -> Result<(Tape, Vec<Var>, Var)> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().enumerate().map(|(i, t)| tape.param(&format!("input{i}"), t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    if tape.value(loss).numel() != 1 {
        return Err(Error::Usage("gradcheck needs a scalar loss".into()));
    }
    Ok((tape, vars, loss))
}

/// Compares the gradient of the scalar `f(inputs)` with central differences
/// of step `eps` in every input element.
pub fn gradcheck(inputs: &[Tensor], eps: f64, f: impl Fn(&mut Tape, &[Var]) -> Result<Var>) -> Result<GradCheck> {
    let (tape, vars, loss) = eval(inputs, &f)?;
    let grads = tape.backward_full(loss)?;
    let mut per_input = Vec::with_capacity(inputs.len());
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(inputs[i].dims()));
        let mut diff2 = 0.0;
        let mut a2 = 0.0;
        let mut n2 = 0.0;
        for j in 0..inputs[i].numel() {
            let mut probe = inputs.to_vec();
            probe[i].data_mut()[j] += eps;
            let (t, _, l) = eval(&probe, &f)?;
            let up = t.value(l).item();
            probe[i].data_mut()[j] -= 2.0 * eps;
            let (t, _, l) = eval(&probe, &f)?;
            let down = t.value(l).item();
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic.data()[j];
            diff2 += (a - numeric).powi(2);
            a2 += a * a;
            n2 += numeric * numeric;
        }
        let scale = a2.sqrt().max(n2.sqrt());
        per_input.push(if scale == 0.0 { 0.0 } else { diff2.sqrt() / scale });
    }
    Ok(GradCheck { per_input })
}
