//! Dense building blocks with explicit backward passes. Matrices are
//! row-major `f64` slices; parameters are addressed by offset into one flat
//! parameter vector so gradients share the same layout.

/// `c = a · b + beta · c` for strided operands.
#[allow(clippy::too_many_arguments)]
#[inline]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
    rsc: usize,
    csc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    debug_assert!(k == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    debug_assert!(c.len() > (m - 1) * rsc + (n - 1) * csc);
    // SAFETY: the asserted bounds cover every element touched by the kernel.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// Offsets of an affine map `y = x W + b` with `W: n_in × n_out`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub w: usize,
    pub b: Option<usize>,
    pub n_in: usize,
    pub n_out: usize,
}

impl Linear {
    pub fn forward(&self, p: &[f64], x: &[f64], rows: usize) -> Vec<f64> {
        let mut y = vec![0.0; rows * self.n_out];
        if let Some(b) = self.b {
            let bias = &p[b..b + self.n_out];
            for row in y.chunks_exact_mut(self.n_out) {
                row.copy_from_slice(bias);
            }
        }
        let w = &p[self.w..self.w + self.n_in * self.n_out];
        gemm(
            rows, self.n_in, self.n_out, x, self.n_in, 1, w, self.n_out, 1, 1.0, &mut y,
            self.n_out, 1,
        );
        y
    }

    /// Accumulates parameter gradients and returns `dx`.
    pub fn backward(
        &self,
        p: &[f64],
        g: &mut [f64],
        x: &[f64],
        dy: &[f64],
        rows: usize,
    ) -> Vec<f64> {
        self.accumulate(g, x, dy, rows);
        let w = &p[self.w..self.w + self.n_in * self.n_out];
        let mut dx = vec![0.0; rows * self.n_in];
        gemm(
            rows, self.n_out, self.n_in, dy, self.n_out, 1, w, 1, self.n_out, 0.0, &mut dx,
            self.n_in, 1,
        );
        dx
    }

    /// Parameter gradients only.
    pub fn accumulate(&self, g: &mut [f64], x: &[f64], dy: &[f64], rows: usize) {
        let (n_in, n_out) = (self.n_in, self.n_out);
        gemm(
            n_in,
            rows,
            n_out,
            x,
            1,
            n_in,
            dy,
            n_out,
            1,
            1.0,
            &mut g[self.w..self.w + n_in * n_out],
            n_out,
            1,
        );
        if let Some(b) = self.b {
            let db = &mut g[b..b + n_out];
            for row in dy.chunks_exact(n_out) {
                for (d, v) in db.iter_mut().zip(row) {
                    *d += v;
                }
            }
        }
    }
}

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerNorm {
    pub gamma: usize,
    pub beta: usize,
    pub dim: usize,
}

#[derive(Debug, Clone, Default)]
pub struct NormCache {
    xhat: Vec<f64>,
    rstd: Vec<f64>,
}

impl LayerNorm {
    pub fn forward(&self, p: &[f64], x: &[f64]) -> (Vec<f64>, NormCache) {
        let d = self.dim;
        let gamma = &p[self.gamma..self.gamma + d];
        let beta = &p[self.beta..self.beta + d];
        let rows = x.len() / d;
        let mut y = vec![0.0; x.len()];
        let mut xhat = vec![0.0; x.len()];
        let mut rstd = vec![0.0; rows];
        for r in 0..rows {
            let xr = &x[r * d..(r + 1) * d];
            let mean = xr.iter().sum::<f64>() / d as f64;
            let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let rs = 1.0 / (var + LN_EPS).sqrt();
            rstd[r] = rs;
            for i in 0..d {
                let h = (xr[i] - mean) * rs;
                xhat[r * d + i] = h;
                y[r * d + i] = h * gamma[i] + beta[i];
            }
        }
        (y, NormCache { xhat, rstd })
    }

    pub fn backward(&self, p: &[f64], g: &mut [f64], cache: &NormCache, dy: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let rows = dy.len() / d;
        let mut dx = vec![0.0; dy.len()];
        for r in 0..rows {
            let dyr = &dy[r * d..(r + 1) * d];
            let xh = &cache.xhat[r * d..(r + 1) * d];
            let mut sum_dh = 0.0;
            let mut sum_dh_xh = 0.0;
            for i in 0..d {
                g[self.gamma + i] += dyr[i] * xh[i];
                g[self.beta + i] += dyr[i];
                let dh = dyr[i] * p[self.gamma + i];
                sum_dh += dh;
                sum_dh_xh += dh * xh[i];
            }
            let rs = cache.rstd[r];
            let inv_d = 1.0 / d as f64;
            for i in 0..d {
                let dh = dyr[i] * p[self.gamma + i];
                dx[r * d + i] = rs * (dh - inv_d * sum_dh - xh[i] * inv_d * sum_dh_xh);
            }
        }
        dx
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    gelu_grad_with(x, gelu_tanh(x))
}

#[inline]
fn gelu_tanh(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    // cheaper than libm tanh; saturates cleanly for large |u|
    1.0 - 2.0 / ((2.0 * u).exp() + 1.0)
}

/// Derivative given the inner `tanh` already computed by the forward pass.
#[inline]
fn gelu_grad_with(x: f64, t: f64) -> f64 {
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// Pre-norm transformer block: `x + Attn(LN(x))`, then `+ FFN(LN(·))`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub ln1: LayerNorm,
    pub qkv: Linear,
    pub proj: Linear,
    pub ln2: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
    pub n_heads: usize,
}

#[derive(Debug, Clone, Default)]
pub struct BlockCache {
    rows: usize,
    ln1: NormCache,
    a: Vec<f64>,
    qkv: Vec<f64>,
    probs: Vec<f64>,
    attn: Vec<f64>,
    ln2: NormCache,
    b: Vec<f64>,
    h1: Vec<f64>,
    tanh: Vec<f64>,
    act: Vec<f64>,
}

impl BlockCache {
    /// Attention weights, `heads × rows × rows`, query-major within a head.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

impl Block {
    fn dim(&self) -> usize {
        self.ln1.dim
    }

    pub fn forward(&self, p: &[f64], x: &[f64], causal: bool) -> (Vec<f64>, BlockCache) {
        let d = self.dim();
        let t = x.len() / d;
        let nh = self.n_heads;
        let dh = d / nh;
        let scale = 1.0 / (dh as f64).sqrt();

        let (a, ln1) = self.ln1.forward(p, x);
        let qkv = self.qkv.forward(p, &a, t);
        let mut probs = vec![0.0; nh * t * t];
        let mut attn = vec![0.0; t * d];
        for h in 0..nh {
            let ph = &mut probs[h * t * t..(h + 1) * t * t];
            gemm(
                t,
                dh,
                t,
                &qkv[h * dh..],
                3 * d,
                1,
                &qkv[d + h * dh..],
                1,
                3 * d,
                0.0,
                ph,
                t,
                1,
            );
            for i in 0..t {
                let row = &mut ph[i * t..(i + 1) * t];
                let lim = if causal { i + 1 } else { t };
                let mut mx = f64::NEG_INFINITY;
                for v in row[..lim].iter_mut() {
                    *v *= scale;
                    mx = mx.max(*v);
                }
                let mut sum = 0.0;
                for v in row[..lim].iter_mut() {
                    *v = (*v - mx).exp();
                    sum += *v;
                }
                for v in row[..lim].iter_mut() {
                    *v /= sum;
                }
                for v in row[lim..].iter_mut() {
                    *v = 0.0;
                }
            }
            gemm(
                t,
                t,
                dh,
                ph,
                t,
                1,
                &qkv[2 * d + h * dh..],
                3 * d,
                1,
                0.0,
                &mut attn[h * dh..],
                d,
                1,
            );
        }
        let proj = self.proj.forward(p, &attn, t);
        let mid: Vec<f64> = x.iter().zip(&proj).map(|(a, b)| a + b).collect();

        let (b, ln2) = self.ln2.forward(p, &mid);
        let h1 = self.ff1.forward(p, &b, t);
        let tanh: Vec<f64> = h1.iter().map(|&v| gelu_tanh(v)).collect();
        let act: Vec<f64> = h1
            .iter()
            .zip(&tanh)
            .map(|(&v, &t)| 0.5 * v * (1.0 + t))
            .collect();
        let h2 = self.ff2.forward(p, &act, t);
        let out: Vec<f64> = mid.iter().zip(&h2).map(|(a, b)| a + b).collect();
        (
            out,
            BlockCache {
                rows: t,
                ln1,
                a,
                qkv,
                probs,
                attn,
                ln2,
                b,
                h1,
                tanh,
                act,
            },
        )
    }

    pub fn backward(&self, p: &[f64], g: &mut [f64], c: &BlockCache, dout: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let t = c.rows;
        let nh = self.n_heads;
        let dh = d / nh;
        let scale = 1.0 / (dh as f64).sqrt();

        // feed-forward branch
        let dact = self.ff2.backward(p, g, &c.act, dout, t);
        let dh1: Vec<f64> = dact
            .iter()
            .zip(c.h1.iter().zip(&c.tanh))
            .map(|(da, (&h, &t))| da * gelu_grad_with(h, t))
            .collect();
        let db = self.ff1.backward(p, g, &c.b, &dh1, t);
        let mut dmid = self.ln2.backward(p, g, &c.ln2, &db);
        for (a, b) in dmid.iter_mut().zip(dout) {
            *a += b;
        }

        // attention branch
        let dattn = self.proj.backward(p, g, &c.attn, &dmid, t);
        let mut dqkv = vec![0.0; t * 3 * d];
        let mut dp = vec![0.0; t * t];
        for h in 0..nh {
            let ph = &c.probs[h * t * t..(h + 1) * t * t];
            // dP = dO_h V_h^T
            gemm(
                t,
                dh,
                t,
                &dattn[h * dh..],
                d,
                1,
                &c.qkv[2 * d + h * dh..],
                1,
                3 * d,
                0.0,
                &mut dp,
                t,
                1,
            );
            // dV_h = P^T dO_h
            gemm(
                t,
                t,
                dh,
                ph,
                1,
                t,
                &dattn[h * dh..],
                d,
                1,
                0.0,
                &mut dqkv[2 * d + h * dh..],
                3 * d,
                1,
            );
            // softmax backward, folded with the score scale
            for i in 0..t {
                let pr = &ph[i * t..(i + 1) * t];
                let dr = &mut dp[i * t..(i + 1) * t];
                let dot: f64 = pr.iter().zip(dr.iter()).map(|(a, b)| a * b).sum();
                for (dv, pv) in dr.iter_mut().zip(pr) {
                    *dv = pv * (*dv - dot) * scale;
                }
            }
            // dQ_h = dS K_h ; dK_h = dS^T Q_h
            gemm(
                t,
                t,
                dh,
                &dp,
                t,
                1,
                &c.qkv[d + h * dh..],
                3 * d,
                1,
                0.0,
                &mut dqkv[h * dh..],
                3 * d,
                1,
            );
            gemm(
                t,
                t,
                dh,
                &dp,
                1,
                t,
                &c.qkv[h * dh..],
                3 * d,
                1,
                0.0,
                &mut dqkv[d + h * dh..],
                3 * d,
                1,
            );
        }
        let da = self.qkv.backward(p, g, &c.a, &dqkv, t);
        let mut dx = self.ln1.backward(p, g, &c.ln1, &da);
        for (a, b) in dx.iter_mut().zip(&dmid) {
            *a += b;
        }
        dx
    }
}

/// Numerically stable log-softmax of one row.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = mx + logits.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
    logits.iter().map(|v| v - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for l in 0..k {
                    c[i * n + j] += a[i * k + l] * b[l * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn gemm_matches_naive() {
        let a: Vec<f64> = (0..12).map(|v| v as f64 * 0.5 - 2.0).collect();
        let b: Vec<f64> = (0..20).map(|v| (v as f64).sin()).collect();
        let mut c = vec![0.0; 15];
        gemm(3, 4, 5, &a, 4, 1, &b, 5, 1, 0.0, &mut c, 5, 1);
        for (x, y) in c.iter().zip(naive(3, 4, 5, &a, &b)) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn gelu_derivative() {
        for x in [-3.0, -0.5, 0.0, 0.7, 2.5] {
            let fd = (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6;
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn log_softmax_is_stable() {
        let l = log_softmax(&[1000.0, 0.0]);
        assert!(l[0].abs() < 1e-12 && (l[1] + 1000.0).abs() < 1e-9);
        let u = log_softmax(&[3.0; 7]);
        assert!((u[0] + 7f64.ln()).abs() < 1e-12);
    }
}
