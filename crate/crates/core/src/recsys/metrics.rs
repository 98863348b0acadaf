use crate::error::{Error, Result};

/// `f(rho) = 1` for `rho >= 0.8`, else `0.3^((0.8 - rho) * 10 / 3)`.
pub fn recency_transform(rho: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::invalid("rho", format!("{rho} is outside [0, 1]")));
    }
    if rho >= 0.8 {
        Ok(1.0)
    } else {
        Ok(0.3f64.powf((0.8 - rho) * 10.0 / 3.0))
    }
}

/// Per-item prices and recency, raw and transformed.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemWeights {
    prices: Vec<f64>,
    recency_raw: Vec<f64>,
    recency_transformed: Vec<f64>,
}

impl ItemWeights {
    pub fn new(prices: Vec<f64>, recency_raw: Vec<f64>) -> Result<Self> {
        if prices.len() != recency_raw.len() {
            return Err(Error::LengthMismatch {
                expected: prices.len(),
                actual: recency_raw.len(),
            });
        }
        if prices.is_empty() {
            return Err(Error::Empty("item weights"));
        }
        if prices.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::invalid("prices", "entries must be finite and > 0"));
        }
        let recency_transformed = recency_raw
            .iter()
            .map(|&r| recency_transform(r))
            .collect::<Result<_>>()?;
        Ok(Self {
            prices,
            recency_raw,
            recency_transformed,
        })
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn recency_raw(&self) -> &[f64] {
        &self.recency_raw
    }

    pub fn recency_transformed(&self) -> &[f64] {
        &self.recency_transformed
    }
}

/// Items `0..scores.len()` by descending score, excluding `exclude`
/// (sorted ascending), truncated to `k`. Ties go to the lower index.
pub fn top_k(scores: &[f64], exclude: &[u32], k: usize) -> Vec<u32> {
    let mut candidates: Vec<u32> = (0..scores.len() as u32)
        .filter(|j| exclude.binary_search(j).is_err())
        .collect();
    let order = |a: &u32, b: &u32| {
        scores[*b as usize]
            .total_cmp(&scores[*a as usize])
            .then(a.cmp(b))
    };
    if candidates.len() > k {
        candidates.select_nth_unstable_by(k, order);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(order);
    candidates
}

/// Hits in the first `k` ranked items over `min(k, |held_out|)`.
/// `held_out` must be sorted ascending.
pub fn recall_at_k(ranked: &[u32], held_out: &[u32], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("k", "must be >= 1"));
    }
    if held_out.is_empty() {
        return Err(Error::Undefined("recall with an empty held-out set".into()));
    }
    let hits = ranked
        .iter()
        .take(k)
        .filter(|j| held_out.binary_search(j).is_ok())
        .count();
    Ok(hits as f64 / k.min(held_out.len()) as f64)
}

/// Mean of the min-max normalized weight over the first `k` ranked items.
/// A constant weight vector normalizes to 1.
pub fn avg_weight_at_k(ranked: &[u32], weights: &[f64], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("k", "must be >= 1"));
    }
    let top = &ranked[..k.min(ranked.len())];
    if top.is_empty() {
        return Err(Error::Empty("ranking"));
    }
    let lo = weights.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let total: f64 = top
        .iter()
        .map(|&j| {
            let w = weights[j as usize];
            if span > 0.0 {
                (w - lo) / span
            } else {
                1.0
            }
        })
        .sum();
    Ok(total / top.len() as f64)
}

pub fn avg_price_at_k(ranked: &[u32], prices: &[f64], k: usize) -> Result<f64> {
    avg_weight_at_k(ranked, prices, k)
}

pub fn avg_recency_at_k(ranked: &[u32], f_rho: &[f64], k: usize) -> Result<f64> {
    avg_weight_at_k(ranked, f_rho, k)
}
