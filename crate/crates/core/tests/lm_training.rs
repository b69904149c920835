mod common;

use cadp::corpus::TokenSequence;
use cadp::lm::{apply_update, init_params, nll, per_example_gradient, perplexity, Gradient};
use cadp::privacy::sgd_step;
use cadp::LmParams;
use common::*;

/// Entries smaller than this are compared absolutely: central differences
/// at h = 1e-5 carry ~1e-10 of round-off.
const FD_FLOOR: f64 = 1e-5;

#[test]
fn gradient_matches_finite_differences_d8() {
    let mut r = rng(1);
    for instance in 0..3 {
        let p: LmParams = init_params(12, 8, 8, 100 + instance).unwrap();
        let s = random_sequence(&mut r, 12, 6);
        let (_, g) = per_example_gradient(&p, &s).unwrap();
        let fd = finite_difference_gradient(&p, &s, 1e-5);
        let err = max_relative_error(g.flat_view(), &fd, FD_FLOOR);
        assert!(err < 1e-4, "instance {instance}: max relative error {err}");
    }
}

#[test]
fn batch_gradient_is_mean_of_per_example_gradients() {
    let p: LmParams = init_params(12, 5, 6, 4).unwrap();
    let mut r = rng(9);
    let seqs: Vec<TokenSequence> = (0..4).map(|i| random_sequence(&mut r, 12, 3 + i)).collect();
    let mut mean = Gradient::zeros(p.layout());
    for s in &seqs {
        mean.add_assign(&per_example_gradient(&p, s).unwrap().1).unwrap();
    }
    mean.scale(0.25);
    let batch_loss = |q: &LmParams| seqs.iter().map(|s| nll(q, s).unwrap()).sum::<f64>() / 4.0;
    let mut work = p.clone();
    let h = 1e-5;
    for i in (0..p.flat_view().len()).step_by(7) {
        let orig = work.flat_view()[i];
        work.flat_view_mut()[i] = orig + h;
        let plus = batch_loss(&work);
        work.flat_view_mut()[i] = orig - h;
        let minus = batch_loss(&work);
        work.flat_view_mut()[i] = orig;
        let fd = (plus - minus) / (2.0 * h);
        let g = mean.flat_view()[i];
        assert!((fd - g).abs() / fd.abs().max(g.abs()).max(FD_FLOOR) < 1e-4);
    }
}

#[test]
fn overfits_a_single_short_sequence() {
    let mut p: LmParams = init_params(8, 8, 8, 3).unwrap();
    let s = TokenSequence::new(vec![2, 5, 7], "");
    for _ in 0..500 {
        let (_, g) = per_example_gradient(&p, &s).unwrap();
        apply_update(&mut p, &g, 0.5).unwrap();
    }
    let final_nll = nll(&p, &s).unwrap();
    assert!(final_nll < 0.01, "nll {final_nll}");
    let ppl = perplexity(&p, &s).unwrap();
    assert!((ppl - 1.0).abs() < 0.02, "perplexity {ppl}");
    let probs = cadp::lm::next_token_probs(&p, &[2, 5]).unwrap();
    assert!(probs[7] > 0.99);
}

#[test]
fn full_batch_sgd_decreases_nll_for_50_steps() {
    let mut r = rng(21);
    let seqs: Vec<TokenSequence> = (0..20).map(|i| random_sequence(&mut r, 15, 3 + i % 5)).collect();
    let batch: Vec<&TokenSequence> = seqs.iter().collect();
    let mut p: LmParams = init_params(15, 8, 8, 5).unwrap();
    let total = |q: &LmParams| seqs.iter().map(|s| nll(q, s).unwrap()).sum::<f64>();
    let mut prev = total(&p);
    for step in 0..50 {
        sgd_step(&mut p, &batch, 0.1).unwrap();
        let cur = total(&p);
        assert!(cur < prev, "step {step}: {cur} >= {prev}");
        prev = cur;
    }
}
