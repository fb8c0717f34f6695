use rand::Rng;

use crate::error::{Error, Result};

/// Feed-forward field network: tanh hidden layers, identity output.
///
/// Input features are `(x, t, ln t)`. Parameters live in one flat buffer, layer by
/// layer, each layer storing its row-major `out x in` weight matrix then its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldNet {
    widths: Vec<usize>,
    params: Vec<f64>,
}

impl FieldNet {
    /// Default layout for dimension `d`: `[d + 2, 128, 128, 128, d]`.
    pub fn default_widths(d: usize) -> Vec<usize> {
        Self::widths_for(d, &[128, 128, 128])
    }

    pub fn widths_for(d: usize, hidden: &[usize]) -> Vec<usize> {
        let mut w = vec![d + 2];
        w.extend_from_slice(hidden);
        w.push(d);
        w
    }

    fn param_len(widths: &[usize]) -> usize {
        widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn check_widths(widths: &[usize]) -> Result<()> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::invalid(format!("invalid layer widths {widths:?}")));
        }
        if widths[0] < 3 {
            return Err(Error::invalid("input width must be d + 2 with d >= 1"));
        }
        Ok(())
    }

    pub fn zeros(widths: &[usize]) -> Self {
        FieldNet {
            widths: widths.to_vec(),
            params: vec![0.0; Self::param_len(widths)],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Result<Self> {
        Self::check_widths(widths)?;
        let mut net = Self::zeros(widths);
        let mut off = 0;
        for w in widths.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let limit = (6.0 / (n_in + n_out) as f64).sqrt();
            for p in &mut net.params[off..off + n_in * n_out] {
                *p = rng.random_range(-limit..limit);
            }
            off += n_in * n_out + n_out;
        }
        Ok(net)
    }

    pub fn from_params(widths: &[usize], params: Vec<f64>) -> Result<Self> {
        Self::check_widths(widths)?;
        let want = Self::param_len(widths);
        if params.len() != want {
            return Err(Error::invalid(format!(
                "expected {want} parameters for widths {widths:?}, got {}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NumericFault("non-finite network parameter".into()));
        }
        Ok(FieldNet {
            widths: widths.to_vec(),
            params,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn layer_count(&self) -> usize {
        self.widths.len() - 1
    }

    /// `(weight, bias)` slices of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (off, n_in, n_out) = self.layer_offset(l);
        let w = &self.params[off..off + n_in * n_out];
        let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
        (w, b)
    }

    fn layer_offset(&self, l: usize) -> (usize, usize, usize) {
        let off = self.widths[..=l]
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum();
        (off, self.widths[l], self.widths[l + 1])
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub(crate) fn features(x: &[f64], t: f64, out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(x);
        out.push(t);
        out.push(t.ln());
    }

    /// Raw network output for state `x` at time `t`.
    pub fn forward(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.output_dim()];
        self.forward_into(x, t, &mut out)?;
        Ok(out)
    }

    pub fn forward_into(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        if x.len() + 2 != self.input_dim() || out.len() != self.output_dim() {
            return Err(Error::invalid(format!(
                "network with widths {:?} cannot take a {}-dimensional state",
                self.widths,
                x.len()
            )));
        }
        let mut a = Vec::with_capacity(self.input_dim());
        Self::features(x, t, &mut a);
        let mut next = Vec::new();
        let layers = self.layer_count();
        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            next.clear();
            next.extend(b.iter().enumerate().map(|(j, bj)| {
                let row = &w[j * n_in..(j + 1) * n_in];
                bj + dot(row, &a)
            }));
            if l + 1 < layers {
                next.iter_mut().for_each(|v| *v = v.tanh());
            }
            std::mem::swap(&mut a, &mut next);
        }
        out.copy_from_slice(&a);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericFault("non-finite network output".into()));
        }
        Ok(())
    }

    /// Forward pass over states packed back to back in `xs`, all at time `t`.
    pub fn forward_batch(&self, xs: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        let d = self.output_dim();
        if self.input_dim() != d + 2 || xs.len() % d != 0 || out.len() != xs.len() {
            return Err(Error::invalid(format!(
                "network with widths {:?} cannot take a batch of length {}",
                self.widths,
                xs.len()
            )));
        }
        let n = xs.len() / d;
        let mut a = Vec::with_capacity(n * self.input_dim());
        let lt = t.ln();
        for x in xs.chunks_exact(d) {
            a.extend_from_slice(x);
            a.push(t);
            a.push(lt);
        }
        let mut next = Vec::new();
        let layers = self.layer_count();
        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            next.clear();
            next.resize(n * n_out, 0.0);
            let mut s = 0;
            while s + 4 <= n {
                let rows = [
                    &a[s * n_in..(s + 1) * n_in],
                    &a[(s + 1) * n_in..(s + 2) * n_in],
                    &a[(s + 2) * n_in..(s + 3) * n_in],
                    &a[(s + 3) * n_in..(s + 4) * n_in],
                ];
                for j in 0..n_out {
                    let v = dot4(&w[j * n_in..(j + 1) * n_in], rows);
                    for (k, vk) in v.iter().enumerate() {
                        next[(s + k) * n_out + j] = b[j] + vk;
                    }
                }
                s += 4;
            }
            for s in s..n {
                let row = &a[s * n_in..(s + 1) * n_in];
                for j in 0..n_out {
                    next[s * n_out + j] = b[j] + dot(&w[j * n_in..(j + 1) * n_in], row);
                }
            }
            if l + 1 < layers {
                next.iter_mut().for_each(|v| *v = v.tanh());
            }
            std::mem::swap(&mut a, &mut next);
        }
        out.copy_from_slice(&a);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericFault("non-finite network output".into()));
        }
        Ok(())
    }

    /// Adds the gradient of `sum_k (f_k(x, t) - target_k)^2 * scale` to `grad` and returns
    /// the unscaled squared error.
    pub(crate) fn accumulate_grad(
        &self,
        x: &[f64],
        t: f64,
        target: &[f64],
        scale: f64,
        grad: &mut [f64],
        ws: &mut Workspace,
    ) -> f64 {
        let layers = self.layer_count();
        ws.acts.resize_with(layers + 1, Vec::new);
        Self::features(x, t, &mut ws.acts[0]);
        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let (prev, rest) = ws.acts.split_at_mut(l + 1);
            let a = &prev[l];
            let z = &mut rest[0];
            z.clear();
            z.extend(
                b.iter()
                    .enumerate()
                    .map(|(j, bj)| bj + dot(&w[j * n_in..(j + 1) * n_in], a)),
            );
            if l + 1 < layers {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
        }
        let out = &ws.acts[layers];
        let mut sq = 0.0;
        ws.delta.clear();
        for (o, y) in out.iter().zip(target) {
            let r = o - y;
            sq += r * r;
            ws.delta.push(2.0 * r * scale);
        }
        // Backward pass, last layer first.
        let mut end = self.params.len();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let start = end - (n_in * n_out + n_out);
            let a = &ws.acts[l];
            {
                let (gw, gb) = grad[start..end].split_at_mut(n_in * n_out);
                for j in 0..n_out {
                    let dj = ws.delta[j];
                    gb[j] += dj;
                    if dj != 0.0 {
                        for (g, ai) in gw[j * n_in..(j + 1) * n_in].iter_mut().zip(a) {
                            *g += dj * ai;
                        }
                    }
                }
            }
            if l > 0 {
                let w = &self.params[start..start + n_in * n_out];
                ws.back.clear();
                ws.back.resize(n_in, 0.0);
                for j in 0..n_out {
                    let dj = ws.delta[j];
                    if dj != 0.0 {
                        for (bk, wk) in ws.back.iter_mut().zip(&w[j * n_in..(j + 1) * n_in]) {
                            *bk += dj * wk;
                        }
                    }
                }
                for (bk, ak) in ws.back.iter_mut().zip(a) {
                    *bk *= 1.0 - ak * ak;
                }
                std::mem::swap(&mut ws.delta, &mut ws.back);
            }
            end = start;
        }
        sq
    }
}

#[derive(Debug, Default)]
pub(crate) struct Workspace {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    back: Vec<f64>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators keep the loop vectorizable
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
fn dot4(w: &[f64], rows: [&[f64]; 4]) -> [f64; 4] {
    let mut acc = [0.0; 4];
    for (i, wi) in w.iter().enumerate() {
        acc[0] += wi * rows[0][i];
        acc[1] += wi * rows[1][i];
        acc[2] += wi * rows[2][i];
        acc[3] += wi * rows[3][i];
    }
    acc
}
