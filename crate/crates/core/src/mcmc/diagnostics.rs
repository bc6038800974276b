//! Split-chain R̂ and rank-normalized bulk/tail effective sample sizes.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

fn check_shape(chains: &[Vec<f64>]) -> Result<()> {
    if chains.len() < 2 {
        return Err(Error::InsufficientDraws(format!(
            "need at least 2 chains, got {}",
            chains.len()
        )));
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::InsufficientDraws("chains differ in length".into()));
    }
    if n < 4 {
        return Err(Error::InsufficientDraws(format!(
            "need at least 4 draws per chain, got {n}"
        )));
    }
    if chains.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::InsufficientDraws("non-finite draw".into()));
    }
    Ok(())
}

/// Halves of every chain; the middle draw of odd-length chains is dropped.
fn split(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    let half = chains[0].len() / 2;
    let mut out = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        out.push(&c[..half]);
        out.push(&c[c.len() - half..]);
    }
    out
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Potential scale reduction over split chains.
pub fn rhat(chains: &[Vec<f64>]) -> Result<f64> {
    check_shape(chains)?;
    let parts = split(chains);
    let n = parts[0].len() as f64;
    let means: Vec<f64> = parts.iter().map(|c| mean(c)).collect();
    let w = parts.iter().map(|c| var(c)).sum::<f64>() / parts.len() as f64;
    if !(w > 0.0) {
        return Err(Error::DegenerateChains);
    }
    let b = n * var(&means);
    let var_plus = (n - 1.0) / n * w + b / n;
    Ok(math::sqrt(var_plus / w))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EssMode {
    /// Rank-normalized draws.
    Bulk,
    /// Minimum over the 5% and 95% quantile indicators.
    Tail,
}

pub fn ess(chains: &[Vec<f64>], mode: EssMode) -> Result<f64> {
    check_shape(chains)?;
    if chains.iter().flatten().all(|&x| x == chains[0][0]) {
        return Err(Error::DegenerateChains);
    }
    match mode {
        EssMode::Bulk => ess_basic(&rank_normalize(chains)),
        EssMode::Tail => {
            let mut pooled: Vec<f64> = chains.iter().flatten().copied().collect();
            pooled.sort_by(f64::total_cmp);
            let q05 = crate::stats::quantile_sorted(&pooled, 0.05);
            let q95 = crate::stats::quantile_sorted(&pooled, 0.95);
            let low = indicator(chains, |x| x <= q05);
            let high = indicator(chains, |x| x <= q95);
            Ok(ess_basic(&low)?.min(ess_basic(&high)?))
        }
    }
}

fn indicator(chains: &[Vec<f64>], f: impl Fn(f64) -> bool) -> Vec<Vec<f64>> {
    chains
        .iter()
        .map(|c| c.iter().map(|&x| if f(x) { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Normal scores of pooled fractional ranks, `(r − 3/8) / (S + 1/4)`.
pub fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let total: usize = chains.iter().map(Vec::len).sum();
    let mut idx: Vec<(f64, usize, usize)> = Vec::with_capacity(total);
    for (c, chain) in chains.iter().enumerate() {
        for (i, &x) in chain.iter().enumerate() {
            idx.push((x, c, i));
        }
    }
    idx.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<Vec<f64>> = chains.iter().map(|c| alloc::vec![0.0; c.len()]).collect();
    let s = total as f64;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && idx[end].0 == idx[start].0 {
            end += 1;
        }
        // average 1-based rank over ties
        let rank = (start + 1 + end) as f64 / 2.0;
        let z = math::normal_quantile((rank - 0.375) / (s + 0.25));
        for &(_, c, i) in &idx[start..end] {
            out[c][i] = z;
        }
        start = end;
    }
    out
}

/// Multi-chain ESS with Geyer's initial monotone sequence on split chains.
fn ess_basic(chains: &[Vec<f64>]) -> Result<f64> {
    let parts = split(chains);
    let m = parts.len();
    let n = parts[0].len();
    let means: Vec<f64> = parts.iter().map(|c| mean(c)).collect();
    let acov = |lag: usize| -> f64 {
        let mut total = 0.0;
        for (c, mu) in parts.iter().zip(&means) {
            let mut s = 0.0;
            for i in 0..n - lag {
                s += (c[i] - mu) * (c[i + lag] - mu);
            }
            total += s / n as f64;
        }
        total / m as f64
    };
    let nf = n as f64;
    let mean_var = acov(0) * nf / (nf - 1.0);
    let var_plus = mean_var * (nf - 1.0) / nf
        + if m > 1 { var(&means) } else { 0.0 };
    if !(var_plus > 0.0) {
        return Err(Error::DegenerateChains);
    }
    let rho = |lag: usize| 1.0 - (mean_var - acov(lag)) / var_plus;

    let mut tau = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let r0 = if t == 0 { 1.0 } else { rho(t) };
        let pair = r0 + rho(t + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        t += 2;
    }
    let tau = (tau - 1.0).max(1.0 / libm::log10((m * n) as f64));
    Ok((m * n) as f64 / tau)
}
