//! LSTM cell with gate order (input, forget, candidate, output).

use super::{gemm, gemm_nt, gemm_tn, Tensor};
use crate::error::{shape_err, Error, Result};

/// Borrowed cell parameters: `wx [din, 4h]`, `wh [h, 4h]`, `b [4h]`.
#[derive(Clone, Copy)]
pub struct LstmParams<'a> {
    pub wx: &'a Tensor,
    pub wh: &'a Tensor,
    pub b: &'a Tensor,
}

impl<'a> LstmParams<'a> {
    pub fn units(&self) -> usize {
        self.wh.dims()[0]
    }

    pub fn input_dim(&self) -> usize {
        self.wx.dims()[0]
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let h = self.wh.dims().first().copied().unwrap_or(0);
        if self.wh.dims() != [h, 4 * h] {
            return Err(shape_err!("lstm wh must be [h, 4h], got {:?}", self.wh.dims()));
        }
        if self.wx.rank() != 2 || self.wx.dims()[1] != 4 * h {
            return Err(shape_err!("lstm wx must be [din, {}], got {:?}", 4 * h, self.wx.dims()));
        }
        if self.b.dims() != [4 * h] {
            return Err(shape_err!("lstm bias must be [{}], got {:?}", 4 * h, self.b.dims()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(units: usize) -> Self {
        LstmState {
            h: vec![0.0; units],
            c: vec![0.0; units],
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Applies gate nonlinearities to pre-activations `z` in place and advances
/// the cell state.
fn cell_update(z: &mut [f64], c: &mut [f64], h: &mut [f64]) {
    let n = c.len();
    for k in 0..n {
        let i = sigmoid(z[k]);
        let f = sigmoid(z[n + k]);
        let g = z[2 * n + k].tanh();
        let o = sigmoid(z[3 * n + k]);
        z[k] = i;
        z[n + k] = f;
        z[2 * n + k] = g;
        z[3 * n + k] = o;
        c[k] = f * c[k] + i * g;
        h[k] = o * c[k].tanh();
    }
}

/// One time step. Returns the new hidden vector (also stored in the state).
pub fn lstm_step(x: &[f64], state: &mut LstmState, params: LstmParams<'_>) -> Result<Vec<f64>> {
    params.validate()?;
    let hdim = params.units();
    if x.len() != params.input_dim() {
        return Err(shape_err!("lstm input width {} != {}", x.len(), params.input_dim()));
    }
    if state.h.len() != hdim || state.c.len() != hdim {
        return Err(shape_err!("lstm state must have {hdim} units"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite lstm input".into()));
    }
    let mut z = params.b.data().to_vec();
    gemm(1, x.len(), 4 * hdim, x, params.wx.data(), &mut z, true);
    gemm(1, hdim, 4 * hdim, &state.h, params.wh.data(), &mut z, true);
    cell_update(&mut z, &mut state.c, &mut state.h);
    Ok(state.h.clone())
}

/// Activations cached by a full-sequence forward pass for backpropagation.
#[derive(Clone, Debug)]
pub(crate) struct LstmCache {
    /// Post-activation gates `[t, 4h]`.
    gates: Vec<f64>,
    /// Cell states `[t, h]`.
    cells: Vec<f64>,
}

/// Runs the cell over `x [t, din]` from a zero state; returns `h [t, units]`.
pub(crate) fn lstm_sequence(x: &Tensor, params: LstmParams<'_>) -> Result<(Tensor, LstmCache)> {
    params.validate()?;
    if x.rank() != 2 || x.dims()[1] != params.input_dim() {
        return Err(shape_err!(
            "lstm sequence input must be [T, {}], got {:?}",
            params.input_dim(),
            x.dims()
        ));
    }
    let (t_len, din) = (x.dims()[0], x.dims()[1]);
    let hdim = params.units();
    let g4 = 4 * hdim;
    let mut gates = vec![0.0; t_len * g4];
    for row in gates.chunks_mut(g4) {
        row.copy_from_slice(params.b.data());
    }
    gemm(t_len, din, g4, x.data(), params.wx.data(), &mut gates, true);
    let mut hs = vec![0.0; t_len * hdim];
    let mut cells = vec![0.0; t_len * hdim];
    let mut h = vec![0.0; hdim];
    let mut c = vec![0.0; hdim];
    for t in 0..t_len {
        let z = &mut gates[t * g4..(t + 1) * g4];
        gemm(1, hdim, g4, &h, params.wh.data(), z, true);
        cell_update(z, &mut c, &mut h);
        hs[t * hdim..(t + 1) * hdim].copy_from_slice(&h);
        cells[t * hdim..(t + 1) * hdim].copy_from_slice(&c);
    }
    Ok((Tensor::new(&[t_len, hdim], hs)?, LstmCache { gates, cells }))
}

pub(crate) struct LstmGrads {
    pub dx: Option<Vec<f64>>,
    pub dwx: Vec<f64>,
    pub dwh: Vec<f64>,
    pub db: Vec<f64>,
}

/// Backpropagation through time for `lstm_sequence`.
pub(crate) fn lstm_sequence_backward(
    x: &Tensor,
    out: &Tensor,
    cache: &LstmCache,
    dout: &[f64],
    params: LstmParams<'_>,
    need_dx: bool,
) -> LstmGrads {
    let (t_len, din) = (x.dims()[0], x.dims()[1]);
    let hdim = params.units();
    let g4 = 4 * hdim;
    let hs = out.data();
    let mut dz_all = vec![0.0; t_len * g4];
    let mut dwh = vec![0.0; hdim * g4];
    let mut dh_next = vec![0.0; hdim];
    let mut dc_next = vec![0.0; hdim];
    for t in (0..t_len).rev() {
        let gates = &cache.gates[t * g4..(t + 1) * g4];
        let c = &cache.cells[t * hdim..(t + 1) * hdim];
        let dz = &mut dz_all[t * g4..(t + 1) * g4];
        for k in 0..hdim {
            let (i, f, g, o) = (gates[k], gates[hdim + k], gates[2 * hdim + k], gates[3 * hdim + k]);
            let c_prev = if t > 0 { cache.cells[(t - 1) * hdim + k] } else { 0.0 };
            let tc = c[k].tanh();
            let dh = dout[t * hdim + k] + dh_next[k];
            let d_o = dh * tc;
            let dc = dh * o * (1.0 - tc * tc) + dc_next[k];
            dz[k] = dc * g * i * (1.0 - i);
            dz[hdim + k] = dc * c_prev * f * (1.0 - f);
            dz[2 * hdim + k] = dc * i * (1.0 - g * g);
            dz[3 * hdim + k] = d_o * o * (1.0 - o);
            dc_next[k] = dc * f;
        }
        if t > 0 {
            let h_prev = &hs[(t - 1) * hdim..t * hdim];
            gemm_tn(hdim, 1, g4, h_prev, dz, &mut dwh, true);
        }
        gemm_nt(1, g4, hdim, dz, params.wh.data(), &mut dh_next, false);
    }
    let mut dwx = vec![0.0; din * g4];
    gemm_tn(din, t_len, g4, x.data(), &dz_all, &mut dwx, false);
    let mut db = vec![0.0; g4];
    for row in dz_all.chunks(g4) {
        for (d, v) in db.iter_mut().zip(row) {
            *d += v;
        }
    }
    let dx = need_dx.then(|| {
        let mut dx = vec![0.0; t_len * din];
        gemm_nt(t_len, g4, din, &dz_all, params.wx.data(), &mut dx, false);
        dx
    });
    LstmGrads { dx, dwx, dwh, db }
}
