#![allow(dead_code)]

use cadp::corpus::TokenSequence;
use cadp::lm::{nll, Gradient, LmParameters};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central finite differences of the sequence NLL, one coordinate at a time.
pub fn finite_difference_gradient(
    params: &LmParameters<f64>,
    seq: &TokenSequence,
    h: f64,
) -> Vec<f64> {
    let mut work = params.clone();
    let n = params.flat_view().len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let orig = work.flat_view()[i];
        work.flat_view_mut()[i] = orig + h;
        let plus = nll(&work, seq).unwrap();
        work.flat_view_mut()[i] = orig - h;
        let minus = nll(&work, seq).unwrap();
        work.flat_view_mut()[i] = orig;
        out.push((plus - minus) / (2.0 * h));
    }
    out
}

/// Largest entrywise relative error, `|a - b| / max(|a|, |b|, floor)`.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

pub fn random_sequence(rng: &mut ChaCha8Rng, vocab: usize, len: usize) -> TokenSequence {
    TokenSequence::new((0..len).map(|_| rng.random_range(0..vocab)).collect(), "")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn grad_values(g: &Gradient<f64>) -> &[f64] {
    g.flat_view()
}

/// Order-`alpha` Rényi divergence `D(N(1, s^2) || N(0, s^2))` by composite
/// Simpson integration of `p^alpha q^(1-alpha)` in log space.
pub fn renyi_divergence_quadrature(sigma: f64, alpha: f64) -> f64 {
    let log_norm = -(sigma * (2.0 * std::f64::consts::PI).sqrt()).ln();
    let log_p = |x: f64| log_norm - (x - 1.0).powi(2) / (2.0 * sigma * sigma);
    let log_q = |x: f64| log_norm - x * x / (2.0 * sigma * sigma);
    let log_f = |x: f64| alpha * log_p(x) + (1.0 - alpha) * log_q(x);
    // The integrand is a Gaussian bump centred at alpha with width sigma.
    let (lo, hi) = (alpha - 40.0 * sigma, alpha + 40.0 * sigma);
    let n = 40_000;
    let h = (hi - lo) / n as f64;
    let peak = log_f(alpha);
    let mut acc = 0.0;
    for k in 0..=n {
        let w = if k == 0 || k == n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * (log_f(lo + k as f64 * h) - peak).exp();
    }
    let log_integral = peak + (acc * h / 3.0).ln();
    log_integral / (alpha - 1.0)
}

/// Rank by explicit sort: 1 + position of the last entry tied with the
/// planted value in ascending order.
pub fn rank_by_sort(perplexities: &[f64], planted: usize) -> usize {
    let mut sorted = perplexities.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let target = perplexities[planted];
    sorted.iter().rposition(|&p| p == target).unwrap() + 1
}

/// Membership accuracy by explicit confusion matrix: the `n` smallest
/// scores (ties by pool position, pool alternating member/non-member) are
/// predicted members.
pub fn mi_by_confusion(members: &[f64], non_members: &[f64]) -> f64 {
    let n = members.len();
    let mut pool = Vec::new();
    for i in 0..n {
        pool.push((members[i], true, 2 * i));
        pool.push((non_members[i], false, 2 * i + 1));
    }
    let mut predicted = vec![false; 2 * n];
    let mut order: Vec<usize> = (0..2 * n).collect();
    order.sort_by(|&a, &b| pool[a].0.total_cmp(&pool[b].0).then(pool[a].2.cmp(&pool[b].2)));
    for &i in &order[..n] {
        predicted[i] = true;
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for (i, &(_, member, _)) in pool.iter().enumerate() {
        match (member, predicted[i]) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
        }
    }
    assert_eq!(tp + tn + fp + fn_, 2 * n);
    (tp + tn) as f64 / (2 * n) as f64
}
