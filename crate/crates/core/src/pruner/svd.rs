//! Low-rank baseline: truncated SVD of each prunable matrix.

use super::PrunePlan;
use crate::error::{Error, Result};
use crate::model::{Attention, FeedForward, Parameters, Stack, TargetKind, Weight};
use crate::tensor::Tensor;

const TOLERANCE: f64 = 1e-10;
const MAX_SWEEPS: usize = 100;

/// `a = u · diag(s) · vt` with `s` descending and `min(m, n)` components.
#[derive(Debug, Clone, PartialEq)]
pub struct Svd {
    pub u: Tensor,
    pub s: Vec<f64>,
    pub vt: Tensor,
}

/// One-sided Jacobi SVD. Each left singular vector's first nonzero entry
/// is made positive.
pub fn svd(a: &Tensor) -> Result<Svd> {
    let (m, n) = a.dims2()?;
    if m < n {
        let t = svd(&a.transpose()?)?;
        let mut out = Svd {
            u: t.vt.transpose()?,
            s: t.s,
            vt: t.u.transpose()?,
        };
        fix_signs(&mut out);
        return Ok(out);
    }
    // columns of the working matrix and of V
    let mut w: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| a.get2(i, j)).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        converged = true;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                if gamma == 0.0 || gamma.abs() <= TOLERANCE * (alpha * beta).sqrt() {
                    continue;
                }
                converged = false;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for cols in [&mut w, &mut v] {
                    let (lo, hi) = cols.split_at_mut(q);
                    for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
                        let (xp, xq) = (*x, *y);
                        *x = c * xp - s * xq;
                        *y = s * xp + c * xq;
                    }
                }
            }
        }
    }
    if !converged {
        return Err(Error::NonFinite("svd (no convergence)"));
    }
    let sigma: Vec<f64> = w.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| sigma[y].total_cmp(&sigma[x]).then(x.cmp(&y)));

    let mut u = Tensor::zeros(&[m, n]);
    let mut vt = Tensor::zeros(&[n, n]);
    let mut s = Vec::with_capacity(n);
    for (r, &j) in order.iter().enumerate() {
        s.push(sigma[j]);
        if sigma[j] > 0.0 {
            for i in 0..m {
                u.set2(i, r, w[j][i] / sigma[j]);
            }
        }
        for i in 0..n {
            vt.set2(r, i, v[j][i]);
        }
    }
    let mut out = Svd { u, s, vt };
    fix_signs(&mut out);
    Ok(out)
}

fn fix_signs(svd: &mut Svd) {
    let (m, r) = (svd.u.rows(), svd.s.len());
    let n = svd.vt.cols();
    for c in 0..r {
        let first = (0..m).map(|i| svd.u.get2(i, c)).find(|&x| x != 0.0);
        if first.is_some_and(|x| x < 0.0) {
            for i in 0..m {
                svd.u.set2(i, c, -svd.u.get2(i, c));
            }
            for j in 0..n {
                svd.vt.set2(c, j, -svd.vt.get2(c, j));
            }
        }
    }
}

/// Leading `r` components as `(u [m×r], s [r], vt [r×n])`.
pub fn truncate(svd: &Svd, r: usize) -> Result<(Tensor, Tensor, Tensor)> {
    if r > svd.s.len() {
        return Err(Error::contract(format!("rank {r} exceeds {}", svd.s.len())));
    }
    let idx: Vec<usize> = (0..r).collect();
    Ok((
        svd.u.select_cols(&idx)?,
        Tensor::vector(svd.s[..r].to_vec()),
        svd.vt.select_rows(&idx)?,
    ))
}

/// Rank whose factors `r·(d+k+1)` fit the kept budget `d·k·(1−p)`.
pub fn svd_rank(d: usize, k: usize, p: f64) -> usize {
    let r = super::floor_exact((d * k) as f64 * (1.0 - p) / (d + k + 1) as f64);
    r.min(d.min(k))
}

fn factor(w: &Weight<Tensor>, p: f64) -> Result<Weight<Tensor>> {
    let Weight::Dense(t) = w else {
        return Err(Error::contract("matrix is already factored"));
    };
    if p == 0.0 {
        return Ok(w.clone());
    }
    let (d, k) = t.dims2()?;
    let (u, s, v) = truncate(&svd(t)?, svd_rank(d, k, p))?;
    Ok(Weight::Factored { u, s, v })
}

fn factor_attention(a: &Attention<Tensor>, qk: f64, v: f64) -> Result<Attention<Tensor>> {
    Ok(Attention {
        wq: factor(&a.wq, qk)?,
        wk: factor(&a.wk, qk)?,
        wv: factor(&a.wv, v)?,
        wo: factor(&a.wo, v)?,
        ..a.clone()
    })
}

fn factor_ffn(f: &FeedForward<Tensor>, p: f64) -> Result<FeedForward<Tensor>> {
    Ok(FeedForward {
        w1: factor(&f.w1, p)?,
        w2: factor(&f.w2, p)?,
        ..f.clone()
    })
}

/// Replace every prunable matrix by its rank-[`svd_rank`] truncation.
pub fn svd_compress(params: &Parameters, p: f64) -> Result<Parameters> {
    svd_compress_plan(params, &PrunePlan::Uniform { p })
}

/// [`svd_compress`] with per-matrix rates from a plan. Matrices with rate 0
/// stay dense.
pub fn svd_compress_plan(params: &Parameters, plan: &PrunePlan) -> Result<Parameters> {
    plan.validate()?;
    let c = params.config;
    let mut out = params.clone();
    let (ne, nd) = (c.n_enc_layers, c.n_dec_layers);
    for (l, layer) in out.encoder.iter_mut().enumerate() {
        let r = |k| plan.rate_for(Stack::Encoder, l, k, ne);
        layer.self_attn = factor_attention(&layer.self_attn, r(TargetKind::SelfQk), r(TargetKind::SelfV))?;
        layer.ffn = factor_ffn(&layer.ffn, r(TargetKind::Ffn))?;
    }
    for (l, layer) in out.decoder.iter_mut().enumerate() {
        let r = |k| plan.rate_for(Stack::Decoder, l, k, nd);
        layer.self_attn = factor_attention(&layer.self_attn, r(TargetKind::SelfQk), r(TargetKind::SelfV))?;
        layer.cross_attn = factor_attention(&layer.cross_attn, r(TargetKind::CrossQk), r(TargetKind::CrossV))?;
        layer.ffn = factor_ffn(&layer.ffn, r(TargetKind::Ffn))?;
    }
    out.check_shapes()?;
    Ok(out)
}
