//! Min-norm convex combination of per-objective gradients.
//!
//! Given gradients `g_1..g_n`, find simplex weights `alpha` minimizing
//! `|| sum_i alpha_i g_i ||^2`. The minimizer `d` is the common descent
//! vector: stepping along `-d` does not increase any objective to first
//! order, and `d = 0` means the point is Pareto stationary.

use crate::error::{Error, Result};
use crate::numerics::{all_finite, dot_unchecked, norm};

/// Default Frank-Wolfe iteration cap.
pub const DEFAULT_MAX_ITER: usize = 100;
/// Default Frank-Wolfe duality-gap tolerance.
pub const DEFAULT_TOL: f64 = 1e-7;

/// Per-objective gradients at the current parameters, all of one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    grads: Vec<Vec<f64>>,
}

impl GradientSet {
    pub fn new(grads: Vec<Vec<f64>>) -> Result<Self> {
        let first = grads.first().ok_or(Error::Empty("gradient set"))?;
        let dim = first.len();
        for (i, g) in grads.iter().enumerate() {
            if g.len() != dim {
                return Err(Error::LengthMismatch {
                    expected: dim,
                    actual: g.len(),
                });
            }
            if !all_finite(g) {
                return Err(Error::NonFinite(format!("gradient of objective {i}")));
            }
        }
        Ok(Self { grads })
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.grads[0].len()
    }

    pub fn grads(&self) -> &[Vec<f64>] {
        &self.grads
    }

    /// Gram matrix `M[i][j] = g_i . g_j`.
    pub fn gram(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i..n {
                let v = dot_unchecked(&self.grads[i], &self.grads[j]);
                m[i][j] = v;
                m[j][i] = v;
            }
        }
        m
    }
}

/// Convex weights over the objectives.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexWeights(Vec<f64>);

impl SimplexWeights {
    /// Validates non-negativity and unit sum (within 1e-9).
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::Empty("simplex weights"));
        }
        if alphas.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::invalid("alphas", "weights must be finite and >= 0"));
        }
        let sum: f64 = alphas.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("alphas", format!("weights sum to {sum}, not 1")));
        }
        Ok(Self(alphas))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Weight on the first point of the min-norm point of segment `[a, b]`,
/// given `aa = a.a`, `ab = a.b`, `bb = b.b`.
///
/// `None` when the segment is degenerate (`a == b`).
fn segment_min_norm_weight(aa: f64, ab: f64, bb: f64) -> Option<f64> {
    let denom = aa + bb - 2.0 * ab;
    if denom <= 0.0 {
        return None;
    }
    Some(((bb - ab) / denom).clamp(0.0, 1.0))
}

/// Closed-form solution for two objectives:
/// `alpha = clamp((g2 - g1).g2 / ||g1 - g2||^2, 0, 1)`.
///
/// Identical gradients (including both zero) give uniform weights.
pub fn solve_two_objective(g1: &[f64], g2: &[f64]) -> Result<SimplexWeights> {
    if g1.len() != g2.len() {
        return Err(Error::LengthMismatch {
            expected: g1.len(),
            actual: g2.len(),
        });
    }
    if !all_finite(g1) || !all_finite(g2) {
        return Err(Error::NonFinite("gradient".into()));
    }
    let diff_sq: f64 = g1.iter().zip(g2).map(|(a, b)| (a - b) * (a - b)).sum();
    if diff_sq == 0.0 {
        return Ok(SimplexWeights::uniform(2));
    }
    let num: f64 = g1.iter().zip(g2).map(|(a, b)| (b - a) * b).sum();
    let alpha = (num / diff_sq).clamp(0.0, 1.0);
    Ok(SimplexWeights(vec![alpha, 1.0 - alpha]))
}

fn gram_times(m: &[Vec<f64>], alpha: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot_unchecked(row, alpha)).collect()
}

/// Min-norm weights for `n >= 2` gradients by Frank-Wolfe with away steps
/// on the Gram matrix.
///
/// Starts from the best pairwise closed-form solution, so the objective never
/// exceeds the smallest single-gradient norm. Each iteration takes either the
/// Frank-Wolfe step toward the vertex minimizing `(M alpha)_i` or an away step
/// from the active vertex maximizing it, with exact line search. Stops once
/// `min_i (M alpha)_i >= alpha^T M alpha - tol` or after `max_iter` steps.
pub fn solve_frank_wolfe(grads: &GradientSet, max_iter: usize, tol: f64) -> Result<SimplexWeights> {
    let n = grads.len();
    if n < 2 {
        return Err(Error::invalid("gradients", "Frank-Wolfe needs at least 2 objectives"));
    }
    let m = grads.gram();
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Gram matrix".into()));
    }

    let mut alpha = best_pair_start(&m);
    for _ in 0..max_iter {
        let m_alpha = gram_times(&m, &alpha);
        let current = dot_unchecked(&alpha, &m_alpha);

        let (toward, toward_val) = argmin(&m_alpha);
        let fw_gap = current - toward_val;
        if fw_gap <= tol {
            break;
        }

        let (away, away_val) = m_alpha
            .iter()
            .enumerate()
            .filter(|(i, _)| alpha[*i] > 0.0)
            .fold((usize::MAX, f64::NEG_INFINITY), |acc, (i, &v)| {
                if v > acc.1 {
                    (i, v)
                } else {
                    acc
                }
            });
        let away_gap = away_val - current;

        if fw_gap >= away_gap || alpha[away] >= 1.0 {
            // Segment between the current combination d and g_toward.
            let gamma = segment_min_norm_weight(current, toward_val, m[toward][toward])
                .map_or(0.0, |w| 1.0 - w);
            if gamma <= 0.0 {
                break;
            }
            for a in alpha.iter_mut() {
                *a *= 1.0 - gamma;
            }
            alpha[toward] += gamma;
        } else {
            // Move along alpha - e_away, up to dropping the away vertex.
            let gamma_max = alpha[away] / (1.0 - alpha[away]);
            // f(alpha + s u) with u = alpha - e_away.
            let slope = current - away_val;
            let curvature = current - 2.0 * away_val + m[away][away];
            let gamma = if curvature > 0.0 {
                (-slope / curvature).clamp(0.0, gamma_max)
            } else {
                gamma_max
            };
            if gamma <= 0.0 {
                break;
            }
            for a in alpha.iter_mut() {
                *a *= 1.0 + gamma;
            }
            alpha[away] -= gamma;
            if gamma >= gamma_max {
                alpha[away] = 0.0;
            }
        }
        renormalize(&mut alpha);
    }
    if let Some(exact) = polish_on_support(&m, &alpha, tol) {
        alpha = exact;
    }
    Ok(SimplexWeights(alpha))
}

fn kkt_gap(m: &[Vec<f64>], alpha: &[f64]) -> f64 {
    let m_alpha = gram_times(m, alpha);
    dot_unchecked(alpha, &m_alpha) - argmin(&m_alpha).1
}

const MAX_POLISH_OBJECTIVES: usize = 12;

/// When Frank-Wolfe stops short of the tolerance, searches supports for an
/// exact stationary point. The optimum always has an affinely independent
/// support, on which the equality-constrained system is nonsingular.
fn polish_on_support(m: &[Vec<f64>], alpha: &[f64], tol: f64) -> Option<Vec<f64>> {
    let n = alpha.len();
    let mut best_gap = kkt_gap(m, alpha);
    if best_gap <= tol || n > MAX_POLISH_OBJECTIVES {
        return None;
    }
    let mut best = None;
    for mask in 3u32..(1 << n) {
        if mask.count_ones() < 2 {
            continue;
        }
        let support: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
        let Some(candidate) = solve_on_support(m, &support) else {
            continue;
        };
        let gap = kkt_gap(m, &candidate);
        if gap < best_gap {
            best_gap = gap;
            best = Some(candidate);
            if gap <= tol {
                break;
            }
        }
    }
    best
}

fn solve_on_support(m: &[Vec<f64>], support: &[usize]) -> Option<Vec<f64>> {
    let k = support.len();
    // [M_S 1; 1^T 0] [a; -mu] = [0; 1]
    let mut sys = vec![vec![0.0; k + 2]; k + 1];
    for (r, &i) in support.iter().enumerate() {
        for (c, &j) in support.iter().enumerate() {
            sys[r][c] = m[i][j];
        }
        sys[r][k] = 1.0;
        sys[k][r] = 1.0;
    }
    sys[k][k + 1] = 1.0;
    let solution = gauss_solve(sys)?;
    if solution[..k].iter().any(|&a| a < -1e-12 || !a.is_finite()) {
        return None;
    }
    let mut exact = vec![0.0; m.len()];
    for (r, &i) in support.iter().enumerate() {
        exact[i] = solution[r].max(0.0);
    }
    renormalize(&mut exact);
    Some(exact)
}

/// Gaussian elimination with partial pivoting on an augmented matrix.
fn gauss_solve(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let n = a.len();
    let scale = a.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs()));
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[pivot][col].abs() <= 1e-13 * scale {
            return None;
        }
        a.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..=n {
                a[row][c] -= f * a[col][c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (a[row][n] - tail) / a[row][row];
    }
    Some(x)
}

fn argmin(values: &[f64]) -> (usize, f64) {
    values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc })
}

fn renormalize(alpha: &mut [f64]) {
    for a in alpha.iter_mut() {
        if *a < 0.0 {
            *a = 0.0;
        }
    }
    let sum: f64 = alpha.iter().sum();
    for a in alpha.iter_mut() {
        *a /= sum;
    }
}

/// Best closed-form two-point solution among all pairs (and single vertices).
fn best_pair_start(m: &[Vec<f64>]) -> Vec<f64> {
    let n = m.len();
    let (mut best, mut best_val) = (vec![0.0; n], f64::INFINITY);
    for i in 0..n {
        if m[i][i] < best_val {
            best_val = m[i][i];
            best = vec![0.0; n];
            best[i] = 1.0;
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let Some(w) = segment_min_norm_weight(m[i][i], m[i][j], m[j][j]) else {
                continue;
            };
            let val = w * w * m[i][i] + 2.0 * w * (1.0 - w) * m[i][j] + (1.0 - w) * (1.0 - w) * m[j][j];
            if val < best_val {
                best_val = val;
                best = vec![0.0; n];
                best[i] = w;
                best[j] = 1.0 - w;
            }
        }
    }
    best
}

/// Analytical solver for two objectives, Frank-Wolfe otherwise.
pub fn solve_min_norm(grads: &GradientSet) -> Result<SimplexWeights> {
    match grads.len() {
        1 => Ok(SimplexWeights(vec![1.0])),
        2 => solve_two_objective(&grads.grads[0], &grads.grads[1]),
        _ => solve_frank_wolfe(grads, DEFAULT_MAX_ITER, DEFAULT_TOL),
    }
}

/// `sum_i alpha_i g_i`.
pub fn combine(grads: &GradientSet, weights: &SimplexWeights) -> Result<Vec<f64>> {
    if grads.len() != weights.len() {
        return Err(Error::LengthMismatch {
            expected: grads.len(),
            actual: weights.len(),
        });
    }
    let mut out = vec![0.0; grads.dim()];
    for (g, &a) in grads.grads.iter().zip(weights.as_slice()) {
        if a == 0.0 {
            continue;
        }
        for (o, gi) in out.iter_mut().zip(g) {
            *o += a * gi;
        }
    }
    Ok(out)
}

pub fn is_pareto_stationary(d: &[f64], tol: f64) -> bool {
    norm(d) <= tol
}
