mod common;

use std::path::Path;

use cadp::corpus::{load_corpus, TokenSequence, Tokenizer, Vocabulary};
use cadp::detector::{
    alpha_context, apply_phi, classify, partition_batch, AlphaContext, AugmentationConfig, DetectorModel, Label,
    SynonymTable,
};
use cadp::experiment::synth::{synonym_table, write_desk_corpus, SynthOptions};
use cadp::experiment::{train_detector_from_config, DetectorConfig};
use cadp::lm::{init_params, next_token_probs, LmParameters};
use cadp::privacy::sgd_step;

fn trained_detector(dir: &Path) -> (DetectorModel, f64, f64) {
    let files = write_desk_corpus(&dir.join("data"), &SynthOptions::default(), &["450"]).unwrap();
    let text = format!(
        "seeds = {}\nnegatives = {}\nsynonyms = {}\nseed = 11\n",
        files.detector_seeds.display(),
        files.detector_negatives.display(),
        files.synonyms.display()
    );
    let cfg = DetectorConfig::parse(&text, dir).unwrap();
    let (model, metrics, _) = train_detector_from_config(&cfg).unwrap();
    (model, metrics.true_positive_rate, metrics.false_positive_rate)
}

#[test]
fn detector_on_the_desk_family() {
    let dir = tempfile::tempdir().unwrap();
    let (model, tpr, fpr) = trained_detector(dir.path());
    assert!(tpr >= 0.95, "held-out TPR {tpr}");
    assert!(fpr <= 0.05, "held-out FPR {fpr}");
    assert_eq!(model.measured_gamma, tpr);
    for text in [
        "My bank security code is",
        "My new bank security code is",
        "my banking security pin reads 450",
        "My bank security code is 123",
    ] {
        assert_eq!(model.classify_text(text).0, Label::Sensitive, "{text}");
    }
    for text in ["the room number is 214", "alice will visit the park on monday"] {
        assert_eq!(model.classify_text(text).0, Label::NonSensitive, "{text}");
    }
    let (_, score) = classify(&model, &TokenSequence::new(vec![1, 2], "we fixed the lamp on friday"));
    assert!((0.0..=1.0).contains(&score));
}

#[test]
fn partition_isolates_the_planted_canary() {
    let dir = tempfile::tempdir().unwrap();
    let (model, _, _) = trained_detector(dir.path());
    let neutral = load_corpus(&dir.path().join("data/detector_negatives.txt"), true, 1).unwrap();
    let mut batch: Vec<TokenSequence> = neutral
        .sequences
        .iter()
        .filter(|s| !s.source_text.contains(" is "))
        .take(7)
        .cloned()
        .collect();
    batch.insert(3, TokenSequence::new(vec![1, 2], "my banking security pin reads 450"));
    let refs: Vec<&TokenSequence> = batch.iter().collect();
    let (b_s, b_ns) = partition_batch(&model, &refs);
    assert_eq!(b_s.len(), 1);
    assert_eq!(b_s[0].source_text, "my banking security pin reads 450");
    assert_eq!(b_ns.len(), 7);
}

#[test]
fn phi_preserves_count_and_foreign_words() {
    let table = synonym_table();
    let cfg = AugmentationConfig {
        synonyms: table.clone(),
        substitution_rate: 0.7,
        passes: 1,
        seed: 5,
    };
    for (k, text) in ["my bank security code is 555", "the cat sat on my new mat", "is is is"].iter().enumerate() {
        for v in 0..20 {
            let out = apply_phi(text, &cfg, v + k as u64);
            let a: Vec<&str> = text.split_whitespace().collect();
            let b: Vec<&str> = out.split_whitespace().collect();
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                if table.get(x).is_none() {
                    assert_eq!(x, y);
                } else {
                    assert!(x == y || table.get(x).unwrap().iter().any(|s| s == y));
                }
            }
        }
    }
}

fn toy_lm() -> (LmParameters<f64>, Vocabulary, Vec<TokenSequence>) {
    let lines = [
        "my bank security code is 450",
        "the park is open",
        "we fixed the lamp",
        "the lamp is bright",
        "my bank account is open",
    ];
    let mut vocab = Vocabulary::new();
    for l in lines {
        for w in l.split(' ') {
            vocab.insert(w);
        }
    }
    let seqs: Vec<TokenSequence> = lines
        .iter()
        .map(|l| TokenSequence::new(vocab.encode(&l.split(' ').collect::<Vec<_>>()), *l))
        .collect();
    let mut params = init_params(vocab.size(), 16, 16, 7).unwrap();
    let batch: Vec<&TokenSequence> = seqs.iter().collect();
    for _ in 0..800 {
        sgd_step(&mut params, &batch, 0.5).unwrap();
    }
    (params, vocab, seqs)
}

#[test]
fn alpha_context_matches_brute_force_and_is_a_proper_suffix() {
    let (params, vocab, seqs) = toy_lm();
    let identity = AugmentationConfig {
        synonyms: SynonymTable::new(),
        substitution_rate: 0.0,
        passes: 1,
        seed: 0,
    };
    let seq = &seqs[0];
    let i = 6;
    let full = next_token_probs(&params, &seq.ids[..i - 1]).unwrap()[seq.ids[i - 1]];
    assert!(full > 0.9, "toy model did not learn the completion: {full}");
    // Independent oracle: recompute every suffix probability directly.
    let brute = (0..i)
        .find(|&len| {
            let ctx = &seq.ids[i - 1 - len..i - 1];
            let p = next_token_probs(&params, ctx).unwrap()[seq.ids[i - 1]];
            (full - p).abs() <= 0.1
        })
        .unwrap();
    let got = alpha_context(&params, seq, i, 0.1, &identity, &vocab, &Tokenizer::default()).unwrap();
    match got {
        AlphaContext::Found { start, len, ref ids, .. } => {
            assert_eq!(len, brute);
            assert!(len < i - 1, "context should be shorter than the full prefix");
            assert_eq!(start + len, i);
            assert_eq!(ids.as_slice(), &seq.ids[i - 1 - len..i - 1]);
        }
        AlphaContext::NotFound { .. } => panic!("identity paraphrase always finds a context"),
    }

    // Larger alpha never needs a longer context.
    let mut last = usize::MAX;
    for k in 0..=20 {
        let a = k as f64 / 20.0;
        let len = alpha_context(&params, seq, i, a, &identity, &vocab, &Tokenizer::default())
            .unwrap()
            .len()
            .unwrap();
        assert!(len <= last);
        last = len;
    }
    assert_eq!(last, 0);
}
