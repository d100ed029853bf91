//! Trainable layers with explicit forward and backward passes: token
//! embedding, a masked LSTM with full backpropagation through time, masked
//! mean pooling, and a dense projection.

use crate::batch::FlatBatch;
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::{matmul, matmul_nt, matmul_tn, sigmoid_scalar, Tensor};

pub const INIT_RANGE: f64 = 0.08;

/// Token embedding table, `vocab_size x dim`. Row 0 is the PAD embedding and
/// stays zero: its gradient is dropped so the optimizer never moves it.
#[derive(Debug, Clone)]
pub struct EmbeddingLayer {
    pub table: Tensor,
}

impl EmbeddingLayer {
    pub fn new(vocab_size: usize, dim: usize, rng: &mut SeededRng) -> EmbeddingLayer {
        let mut table = Tensor::uniform(vec![vocab_size, dim], -INIT_RANGE, INIT_RANGE, rng);
        for v in &mut table.data_mut()[..dim] {
            *v = 0.0;
        }
        EmbeddingLayer { table }
    }

    pub fn vocab_size(&self) -> usize {
        self.table.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.table.shape()[1]
    }

    pub fn zero_pad_row(&mut self) {
        let dim = self.dim();
        for v in &mut self.table.data_mut()[..dim] {
            *v = 0.0;
        }
    }
}

/// Gather embeddings for a flat batch: output is `rows x text_size x dim`.
pub fn embedding_forward(flat: &FlatBatch, layer: &EmbeddingLayer) -> Result<Tensor> {
    let dim = layer.dim();
    let vocab = layer.vocab_size();
    let mut out = Tensor::zeros(vec![flat.rows, flat.text_size, dim]);
    let table = layer.table.data();
    let data = out.data_mut();
    for (pos, &id) in flat.ids.iter().enumerate() {
        let id = id as usize;
        if id >= vocab {
            return Err(Error::Index(format!(
                "token id {} out of range for vocabulary of {}",
                id, vocab
            )));
        }
        data[pos * dim..(pos + 1) * dim].copy_from_slice(&table[id * dim..(id + 1) * dim]);
    }
    Ok(out)
}

/// Scatter-add the upstream gradient back into a table-shaped gradient.
/// Repeated ids accumulate; the PAD row is zeroed.
pub fn embedding_backward(
    upstream: &Tensor,
    flat: &FlatBatch,
    layer: &EmbeddingLayer,
) -> Result<Tensor> {
    let dim = layer.dim();
    if upstream.shape() != [flat.rows, flat.text_size, dim] {
        return Err(Error::Shape(format!(
            "embedding upstream shape {:?}, expected [{}, {}, {}]",
            upstream.shape(),
            flat.rows,
            flat.text_size,
            dim
        )));
    }
    let mut grad = Tensor::zeros(vec![layer.vocab_size(), dim]);
    let g = grad.data_mut();
    let up = upstream.data();
    for (pos, &id) in flat.ids.iter().enumerate() {
        let id = id as usize;
        if id == 0 {
            continue;
        }
        for k in 0..dim {
            g[id * dim + k] += up[pos * dim + k];
        }
    }
    Ok(grad)
}

/// Single-layer LSTM. Weights hold the four gate blocks stacked as
/// `[input, forget, cell, output]`, each `hidden` rows, acting on the
/// concatenation `[x_t, h_{t-1}]`.
#[derive(Debug, Clone)]
pub struct LstmLayer {
    pub w: Tensor,
    pub b: Tensor,
    d_in: usize,
    hidden: usize,
}

impl LstmLayer {
    pub fn new(d_in: usize, hidden: usize, rng: &mut SeededRng) -> LstmLayer {
        let w = Tensor::uniform(vec![4 * hidden, d_in + hidden], -INIT_RANGE, INIT_RANGE, rng);
        let mut b = Tensor::zeros(vec![4 * hidden]);
        // Forget-gate bias starts at 1 so early training does not erase state.
        for v in &mut b.data_mut()[hidden..2 * hidden] {
            *v = 1.0;
        }
        LstmLayer { w, b, d_in, hidden }
    }

    /// Rebuild from checkpoint tensors; shapes fix `d_in` and `hidden`.
    pub fn from_params(w: Tensor, b: Tensor) -> Result<LstmLayer> {
        if w.shape().len() != 2 || w.shape()[0] % 4 != 0 {
            return Err(Error::Shape(format!(
                "LSTM weight shape {:?} is not [4*hidden, d_in+hidden]",
                w.shape()
            )));
        }
        let hidden = w.shape()[0] / 4;
        if w.shape()[1] <= hidden || b.shape() != [4 * hidden] {
            return Err(Error::Shape(format!(
                "LSTM parameter shapes {:?} / {:?} are inconsistent",
                w.shape(),
                b.shape()
            )));
        }
        let d_in = w.shape()[1] - hidden;
        Ok(LstmLayer { w, b, d_in, hidden })
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }
}

struct LstmStepCache {
    active: Vec<usize>,
    /// `[x_t, h_{t-1}]` per active row, the matmul input.
    z: Tensor,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tanh_c: Vec<f64>,
    c_prev: Vec<f64>,
}

pub struct LstmCache {
    steps: Vec<LstmStepCache>,
    rows: usize,
    t_len: usize,
}

fn lstm_run(
    x: &Tensor,
    mask: &[u8],
    layer: &LstmLayer,
    record: bool,
) -> Result<(Tensor, Option<LstmCache>)> {
    let shape = x.shape();
    if shape.len() != 3 || shape[2] != layer.d_in {
        return Err(Error::Shape(format!(
            "LSTM input shape {:?}, expected [rows, steps, {}]",
            shape, layer.d_in
        )));
    }
    let (n, t_len, d) = (shape[0], shape[1], shape[2]);
    if mask.len() != n * t_len {
        return Err(Error::Shape(format!(
            "mask length {} does not match {} rows x {} steps",
            mask.len(),
            n,
            t_len
        )));
    }
    let h = layer.hidden;
    let mut h_state = vec![0.0f64; n * h];
    let mut c_state = vec![0.0f64; n * h];
    let mut hidden = Tensor::zeros(vec![n, t_len, h]);
    let mut steps = Vec::with_capacity(if record { t_len } else { 0 });
    let w = &layer.w;
    let b = layer.b.data();
    let xd = x.data();

    for t in 0..t_len {
        let active: Vec<usize> = (0..n).filter(|&r| mask[r * t_len + t] == 1).collect();
        let na = active.len();
        let mut step = LstmStepCache {
            active: Vec::new(),
            z: Tensor::zeros(vec![0, 0]),
            i: Vec::new(),
            f: Vec::new(),
            g: Vec::new(),
            o: Vec::new(),
            tanh_c: Vec::new(),
            c_prev: Vec::new(),
        };
        if na > 0 {
            let mut z = Tensor::zeros(vec![na, d + h]);
            {
                let zd = z.data_mut();
                for (a, &r) in active.iter().enumerate() {
                    let dst = a * (d + h);
                    zd[dst..dst + d].copy_from_slice(&xd[(r * t_len + t) * d..(r * t_len + t + 1) * d]);
                    zd[dst + d..dst + d + h].copy_from_slice(&h_state[r * h..(r + 1) * h]);
                }
            }
            let pre = matmul_nt(&z, w)?;
            let pd = pre.data();
            let mut iv = vec![0.0; na * h];
            let mut fv = vec![0.0; na * h];
            let mut gv = vec![0.0; na * h];
            let mut ov = vec![0.0; na * h];
            let mut tc = vec![0.0; na * h];
            let mut cp = vec![0.0; na * h];
            for (a, &r) in active.iter().enumerate() {
                let base = a * 4 * h;
                for k in 0..h {
                    let ig = sigmoid_scalar(pd[base + k] + b[k]);
                    let fg = sigmoid_scalar(pd[base + h + k] + b[h + k]);
                    let gg = (pd[base + 2 * h + k] + b[2 * h + k]).tanh();
                    let og = sigmoid_scalar(pd[base + 3 * h + k] + b[3 * h + k]);
                    let c_old = c_state[r * h + k];
                    let c_new = fg * c_old + ig * gg;
                    let th = c_new.tanh();
                    iv[a * h + k] = ig;
                    fv[a * h + k] = fg;
                    gv[a * h + k] = gg;
                    ov[a * h + k] = og;
                    tc[a * h + k] = th;
                    cp[a * h + k] = c_old;
                    c_state[r * h + k] = c_new;
                    h_state[r * h + k] = og * th;
                }
            }
            if record {
                step = LstmStepCache {
                    active,
                    z,
                    i: iv,
                    f: fv,
                    g: gv,
                    o: ov,
                    tanh_c: tc,
                    c_prev: cp,
                };
            }
        }
        // Every row reports its current state at step t; masked rows carry
        // the previous state through unchanged.
        {
            let hd = hidden.data_mut();
            for r in 0..n {
                hd[(r * t_len + t) * h..(r * t_len + t + 1) * h]
                    .copy_from_slice(&h_state[r * h..(r + 1) * h]);
            }
        }
        if record {
            steps.push(step);
        }
    }
    let cache = if record {
        Some(LstmCache {
            steps,
            rows: n,
            t_len,
        })
    } else {
        None
    };
    Ok((hidden, cache))
}

/// Forward pass recording the cache needed for backpropagation.
pub fn lstm_forward(x: &Tensor, mask: &[u8], layer: &LstmLayer) -> Result<(Tensor, LstmCache)> {
    let (hidden, cache) = lstm_run(x, mask, layer, true)?;
    Ok((hidden, cache.unwrap()))
}

/// Forward pass without the cache, for inference.
pub fn lstm_infer(x: &Tensor, mask: &[u8], layer: &LstmLayer) -> Result<Tensor> {
    Ok(lstm_run(x, mask, layer, false)?.0)
}

#[derive(Debug)]
pub struct LstmGrads {
    pub w: Tensor,
    pub b: Tensor,
}

/// Backpropagation through time. `upstream` carries a gradient for the
/// hidden output at every step; masked steps pass their gradient straight
/// through to the last active step.
pub fn lstm_backward(
    upstream: &Tensor,
    cache: &LstmCache,
    layer: &LstmLayer,
) -> Result<(LstmGrads, Tensor)> {
    let (n, t_len, h, d) = (cache.rows, cache.t_len, layer.hidden, layer.d_in);
    if upstream.shape() != [n, t_len, h] {
        return Err(Error::Shape(format!(
            "LSTM upstream shape {:?}, expected [{}, {}, {}]",
            upstream.shape(),
            n,
            t_len,
            h
        )));
    }
    let up = upstream.data();
    let mut dh = vec![0.0f64; n * h];
    let mut dc = vec![0.0f64; n * h];
    let mut dw = Tensor::zeros(vec![4 * h, d + h]);
    let mut db = Tensor::zeros(vec![4 * h]);
    let mut dx = Tensor::zeros(vec![n, t_len, d]);

    for t in (0..t_len).rev() {
        for r in 0..n {
            for k in 0..h {
                dh[r * h + k] += up[(r * t_len + t) * h + k];
            }
        }
        let step = &cache.steps[t];
        let na = step.active.len();
        if na == 0 {
            continue;
        }
        let mut d_gates = Tensor::zeros(vec![na, 4 * h]);
        {
            let dg = d_gates.data_mut();
            for (a, &r) in step.active.iter().enumerate() {
                for k in 0..h {
                    let i = step.i[a * h + k];
                    let f = step.f[a * h + k];
                    let g = step.g[a * h + k];
                    let o = step.o[a * h + k];
                    let th = step.tanh_c[a * h + k];
                    let cp = step.c_prev[a * h + k];
                    let dh_rk = dh[r * h + k];
                    let dck = dh_rk * o * (1.0 - th * th) + dc[r * h + k];
                    dg[a * 4 * h + k] = dck * g * i * (1.0 - i);
                    dg[a * 4 * h + h + k] = dck * cp * f * (1.0 - f);
                    dg[a * 4 * h + 2 * h + k] = dck * i * (1.0 - g * g);
                    dg[a * 4 * h + 3 * h + k] = dh_rk * th * o * (1.0 - o);
                    dc[r * h + k] = dck * f;
                }
            }
        }
        let dw_step = matmul_tn(&d_gates, &step.z)?;
        for (acc, v) in dw.data_mut().iter_mut().zip(dw_step.data()) {
            *acc += v;
        }
        {
            let dbd = db.data_mut();
            let dg = d_gates.data();
            for a in 0..na {
                for j in 0..4 * h {
                    dbd[j] += dg[a * 4 * h + j];
                }
            }
        }
        let dz = matmul(&d_gates, &layer.w)?;
        let dzd = dz.data();
        let dxd = dx.data_mut();
        for (a, &r) in step.active.iter().enumerate() {
            let src = a * (d + h);
            dxd[(r * t_len + t) * d..(r * t_len + t + 1) * d]
                .copy_from_slice(&dzd[src..src + d]);
            dh[r * h..(r + 1) * h].copy_from_slice(&dzd[src + d..src + d + h]);
        }
    }
    Ok((LstmGrads { w: dw, b: db }, dx))
}

/// Mean over valid timesteps per row: `rows x steps x dim -> rows x dim`.
/// A row with no valid step has no defined mean and is an error.
pub fn masked_mean_pool(hidden: &Tensor, mask: &[u8]) -> Result<Tensor> {
    let shape = hidden.shape();
    if shape.len() != 3 {
        return Err(Error::Shape(format!(
            "pool input shape {:?}, expected 3 axes",
            shape
        )));
    }
    let (n, t_len, h) = (shape[0], shape[1], shape[2]);
    if mask.len() != n * t_len {
        return Err(Error::Shape(format!(
            "mask length {} does not match {} rows x {} steps",
            mask.len(),
            n,
            t_len
        )));
    }
    let mut out = Tensor::zeros(vec![n, h]);
    let hd = hidden.data();
    let od = out.data_mut();
    for r in 0..n {
        let mut count = 0usize;
        for t in 0..t_len {
            if mask[r * t_len + t] == 1 {
                count += 1;
                for k in 0..h {
                    od[r * h + k] += hd[(r * t_len + t) * h + k];
                }
            }
        }
        if count == 0 {
            return Err(Error::Data(format!("row {} has no valid timesteps to pool", r)));
        }
        let inv = 1.0 / count as f64;
        for k in 0..h {
            od[r * h + k] *= inv;
        }
    }
    Ok(out)
}

/// Spread the pooled gradient back over the valid steps of each row.
pub fn masked_mean_pool_backward(upstream: &Tensor, mask: &[u8], t_len: usize) -> Result<Tensor> {
    let shape = upstream.shape();
    if shape.len() != 2 {
        return Err(Error::Shape(format!(
            "pool upstream shape {:?}, expected 2 axes",
            shape
        )));
    }
    let (n, h) = (shape[0], shape[1]);
    if mask.len() != n * t_len {
        return Err(Error::Shape(format!(
            "mask length {} does not match {} rows x {} steps",
            mask.len(),
            n,
            t_len
        )));
    }
    let mut out = Tensor::zeros(vec![n, t_len, h]);
    let od = out.data_mut();
    let up = upstream.data();
    for r in 0..n {
        let count = (0..t_len).filter(|&t| mask[r * t_len + t] == 1).count();
        if count == 0 {
            return Err(Error::Data(format!("row {} has no valid timesteps to pool", r)));
        }
        let inv = 1.0 / count as f64;
        for t in 0..t_len {
            if mask[r * t_len + t] == 1 {
                for k in 0..h {
                    od[(r * t_len + t) * h + k] = up[r * h + k] * inv;
                }
            }
        }
    }
    Ok(out)
}

/// Affine projection `x @ w + b`.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub w: Tensor,
    pub b: Tensor,
}

impl DenseLayer {
    pub fn new(d_in: usize, d_out: usize, rng: &mut SeededRng) -> DenseLayer {
        DenseLayer {
            w: Tensor::uniform(vec![d_in, d_out], -INIT_RANGE, INIT_RANGE, rng),
            b: Tensor::zeros(vec![d_out]),
        }
    }

    pub fn from_params(w: Tensor, b: Tensor) -> Result<DenseLayer> {
        if w.shape().len() != 2 || b.shape() != [w.shape()[1]] {
            return Err(Error::Shape(format!(
                "dense parameter shapes {:?} / {:?} are inconsistent",
                w.shape(),
                b.shape()
            )));
        }
        Ok(DenseLayer { w, b })
    }

    pub fn d_in(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn d_out(&self) -> usize {
        self.w.shape()[1]
    }
}

pub fn dense_forward(x: &Tensor, layer: &DenseLayer) -> Result<Tensor> {
    let mut out = matmul(x, &layer.w)?;
    let d_out = layer.d_out();
    let b = layer.b.data();
    for (pos, v) in out.data_mut().iter_mut().enumerate() {
        *v += b[pos % d_out];
    }
    Ok(out)
}

#[derive(Debug)]
pub struct DenseGrads {
    pub w: Tensor,
    pub b: Tensor,
}

pub fn dense_backward(
    upstream: &Tensor,
    x: &Tensor,
    layer: &DenseLayer,
) -> Result<(DenseGrads, Tensor)> {
    let dw = matmul_tn(x, upstream)?;
    let d_out = layer.d_out();
    let mut db = Tensor::zeros(vec![d_out]);
    {
        let dbd = db.data_mut();
        for (pos, v) in upstream.data().iter().enumerate() {
            dbd[pos % d_out] += v;
        }
    }
    let dx = matmul_nt(upstream, &layer.w)?;
    Ok((DenseGrads { w: dw, b: db }, dx))
}
