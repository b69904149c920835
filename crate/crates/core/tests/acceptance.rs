//! Criteria 1 to 10, one line each. Run with `cargo test --test acceptance`.

mod common;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use cadp::attacks::{exposure, rank_from_perplexities};
use cadp::corpus::TokenSequence;
use cadp::detector::{FormatDetector, SensitivityOracle};
use cadp::error::Error;
use cadp::experiment::synth::{write_desk_corpus, SynthOptions};
use cadp::experiment::{
    report_paths, train, train_detector_from_config, DetectorConfig, ExperimentConfig, RunManifest, SynthFiles,
};
use cadp::lm::{init_params, per_example_gradient, LmParameters};
use cadp::privacy::{
    clip_vector, dp_sgd_step, gaussian_rdp_epsilon, sgd_step, theorem1_budget, AccountantState, NoiseStream,
    PrivacySpec,
};
use cadp::LmParams;
use common::*;
use rand::Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1001);
    let mut worst: f64 = 0.0;
    let instances = 24;
    for k in 0..instances {
        let p: LmParams = init_params(12, 8, 8, 5000 + k).unwrap();
        let len = r.random_range(2..9);
        let s = random_sequence(&mut r, 12, len);
        let (_, g) = per_example_gradient(&p, &s).unwrap();
        let fd = finite_difference_gradient(&p, &s, 1e-5);
        worst = worst.max(max_relative_error(g.flat_view(), &fd, 1e-5));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(worst < 1e-4, "max relative error {worst:.3e} over {instances} instances");
    ensure!(secs < 60.0, "took {secs:.1}s");
    Ok(format!("{instances} instances, max relative error {worst:.2e}, {secs:.1}s"))
}

fn spec(sigma: f64, clip: f64, eta: f64) -> PrivacySpec<f64> {
    PrivacySpec {
        sigma,
        clip,
        delta: 1e-5,
        alpha: 2.0,
        eta,
    }
}

fn criterion_2() -> Outcome {
    let mut r = rng(2002);
    for _ in 0..10_000 {
        let n = r.random_range(1..64);
        let scale = 10f64.powf(r.random_range(-3.0..3.0));
        let g: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0) * scale).collect();
        let c = r.random_range(0.01..5.0);
        let norm = l2(&clip_vector(&g, c).unwrap());
        ensure!(norm <= c, "clipped norm {norm} exceeds {c}");
    }

    let seqs: Vec<TokenSequence> = (0..6).map(|_| random_sequence(&mut r, 12, 5)).collect();
    let batch: Vec<&TokenSequence> = seqs.iter().collect();
    let mut private: LmParameters<f64> = init_params(12, 6, 6, 3).unwrap();
    let mut plain = private.clone();
    let tiny = spec(1e-300, 1e6, 0.3);
    let mut noise = NoiseStream::new(4);
    for _ in 0..5 {
        dp_sgd_step(&mut private, &batch, &tiny, &mut noise).unwrap();
        sgd_step(&mut plain, &batch, 0.3).unwrap();
    }
    let bits = |p: &LmParameters<f64>| p.flat_view().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    ensure!(bits(&private) == bits(&plain), "vanishing-noise step differs from plain SGD");

    let start: LmParameters<f64> = init_params(12, 4, 4, 8).unwrap();
    let small = &batch[..4];
    let (sigma, c) = (1.5, 0.5);
    let s = spec(sigma, c, 1.0);
    let dim = start.flat_view().len();
    let mut clipped_mean = vec![0.0; dim];
    for seq in small {
        let (_, g) = per_example_gradient(&start, seq).unwrap();
        for (m, v) in clipped_mean.iter_mut().zip(clip_vector(g.flat_view(), c).unwrap()) {
            *m += v / small.len() as f64;
        }
    }
    let draws = 10_000;
    let mut mean_update = vec![0.0; dim];
    for seed in 0..draws {
        let mut p = start.clone();
        dp_sgd_step(&mut p, small, &s, &mut NoiseStream::new(seed)).unwrap();
        for ((m, b), a) in mean_update.iter_mut().zip(start.flat_view()).zip(p.flat_view()) {
            *m += (b - a) / draws as f64;
        }
    }
    let band = 3.0 * sigma * c / ((draws * small.len() as u64) as f64).sqrt();
    let worst = mean_update.iter().zip(&clipped_mean).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure!(worst <= band, "Monte Carlo deviation {worst:.3e} exceeds band {band:.3e}");
    Ok(format!("10^4 clips within C, bitwise SGD match, MC deviation {worst:.2e} <= {band:.2e}"))
}

fn state(epochs: usize, n_s: usize, batch: usize, eps: f64, gamma: f64) -> AccountantState<f64> {
    AccountantState {
        epochs,
        sensitive_count: n_s,
        batch_size: batch,
        per_step_epsilon: eps,
        alpha: 2.0,
        gamma,
        private_steps: 0,
    }
}

fn criterion_3() -> Outcome {
    let hand = [(50, 10.0 + 1e5f64.ln()), (5, 100.0 + 1e5f64.ln())];
    for (batch, expected) in hand {
        let (eps, delta) = theorem1_budget(&state(10, 100, batch, 0.5, 1.0), 1e-5).unwrap();
        ensure!((eps - expected).abs() < 1e-9, "|B|={batch}: {eps} vs {expected}");
        ensure!(delta == 1e-5, "delta changed to {delta}");
    }
    let (eps, _) = theorem1_budget(&state(10, 100, 5, 0.5, 1.0), 1e-5).unwrap();
    ensure!((eps - 111.5129).abs() < 1e-4, "|B|=5 instance gives {eps}");
    match theorem1_budget(&state(10, 100, 50, 0.5, 0.99), 1e-5) {
        Err(Error::DeltaBelowDetectorFloor { .. }) => {}
        other => return Err(format!("gamma=0.99, delta=1e-5 not rejected: {other:?}")),
    }
    let mut worst: f64 = 0.0;
    for sigma in [0.5, 0.8, 1.0, 2.0, 4.0] {
        for alpha in [1.5, 2.0, 3.0, 5.0, 8.0, 16.0, 32.0] {
            let closed = gaussian_rdp_epsilon(sigma, alpha).unwrap();
            worst = worst.max((closed - renyi_divergence_quadrature(sigma, alpha)).abs());
        }
    }
    ensure!(worst < 1e-6, "quadrature mismatch {worst:.3e}");
    Ok(format!("budget {eps:.4} at |B|=5, gamma=0.99 rejected, quadrature gap {worst:.1e}"))
}

fn criterion_4() -> Outcome {
    let e = exposure(1, 729).unwrap();
    ensure!((e - 729f64.log2()).abs() < 1e-9, "exposure(1, 729) = {e}");
    let z = exposure(1000, 1000).unwrap();
    ensure!(z.abs() < 1e-12, "exposure(|R|, |R|) = {z}");
    let mut r = rng(4004);
    for t in 0..100 {
        let n = r.random_range(1..500);
        let table: Vec<f64> = (0..n).map(|_| (r.random_range(1.0..40.0f64) * 2.0).round() / 2.0).collect();
        let planted = r.random_range(0..n);
        let ours = rank_from_perplexities(&table, planted).unwrap();
        let oracle = rank_by_sort(&table, planted);
        ensure!(ours == oracle, "table {t}: rank {ours} vs sort oracle {oracle}");
    }
    Ok("closed forms exact, 100 rank tables agree".into())
}

/// Shared desk-scale setup: synthetic corpus, detector, four regimes.
struct Desk {
    root: PathBuf,
    files: SynthFiles,
    detector: PathBuf,
    detector_tpr: f64,
    detector_fpr: f64,
    runs: Vec<(String, RunManifest, f64)>,
}

const DESK: &str = "canary_prefix = my banking security pin reads\ncanary_fill = 450\ncanary_count = 50\n\
d_emb = 64\nd_hid = 64\nepochs = 20\nbatch_size = 32\nlearning_rate = 1.0\n\
sigma = 8\nclip = 1\nprivate_learning_rate = 0.02\ndelta = 1e-5\nmi_n = 50\n\
data_seed = 1\ninit_seed = 2\nnoise_seed = 3\n";

impl Desk {
    fn config_text(&self, regime: &str, run_id: &str, detector: Option<&str>) -> String {
        let mut text = format!(
            "run_id = {run_id}\nregime = {regime}\ncorpus = {}\nlabels = {}\nsynonyms = {}\n{DESK}",
            self.files.corpus.display(),
            self.files.labels.display(),
            self.files.synonyms.display()
        );
        if let Some(d) = detector {
            text.push_str(&format!("detector = {d}\n"));
        }
        text
    }

    fn write_config(&self, name: &str, text: &str) -> PathBuf {
        let p = self.root.join(format!("{name}.cfg"));
        fs::write(&p, text).unwrap();
        p
    }

    fn run_config(path: &Path) -> (RunManifest, f64) {
        let start = Instant::now();
        let m = train(&ExperimentConfig::load(path).unwrap()).unwrap();
        (m, start.elapsed().as_secs_f64())
    }

    fn setup(root: &Path) -> Desk {
        let files = write_desk_corpus(&root.join("data"), &SynthOptions::default(), &["450"]).unwrap();
        let det_text = format!(
            "seeds = {}\nnegatives = {}\nsynonyms = {}\nseed = 11\noutput_dir = {}\n",
            files.detector_seeds.display(),
            files.detector_negatives.display(),
            files.synonyms.display(),
            root.join("detector").display()
        );
        let (_, metrics, report) = train_detector_from_config(&DetectorConfig::parse(&det_text, root).unwrap()).unwrap();
        let mut desk = Desk {
            root: root.to_path_buf(),
            files,
            detector: root.join("detector").join(&report.checkpoint),
            detector_tpr: metrics.true_positive_rate,
            detector_fpr: metrics.false_positive_rate,
            runs: Vec::new(),
        };
        let det = desk.detector.display().to_string();
        for regime in ["nodp", "dpsgd", "sdpsgd", "cadp"] {
            let detector = (regime == "cadp").then_some(det.as_str());
            let p = desk.write_config(regime, &desk.config_text(regime, regime, detector));
            let (m, secs) = Desk::run_config(&p);
            desk.runs.push((regime.to_string(), m, secs));
        }
        desk
    }

    fn run(&self, regime: &str) -> &RunManifest {
        &self.runs.iter().find(|(r, _, _)| r == regime).unwrap().1
    }

    fn final_attack(&self, regime: &str) -> &cadp::attacks::AttackReport {
        self.run(regime).attacks.last().unwrap()
    }
}

fn criterion_5(desk: &Desk) -> Outcome {
    let m = desk.run("nodp");
    let secs = desk.runs[0].2;
    let a = desk.final_attack("nodp");
    let floor = 0.8 * (a.candidate_space_size as f64).log2();
    ensure!(m.data.canary.as_ref().map(|c| c.count) == Some(50), "canary not planted 50 times");
    ensure!(a.epoch == 20, "final attack at epoch {}", a.epoch);
    ensure!(a.exposure >= floor, "nodp exposure {:.3} below {floor:.3}", a.exposure);
    ensure!(secs < 600.0, "nodp run took {secs:.0}s");
    Ok(format!(
        "nodp exposure {:.3} >= {floor:.3} (rank {} of {}), {secs:.0}s",
        a.exposure, a.canary_rank, a.candidate_space_size
    ))
}

fn criterion_6(desk: &Desk) -> Outcome {
    let canary = m_sentence(desk.run("cadp"));
    let regex = FormatDetector::new(&[r"\bis\s+\d{3}\b"]).unwrap();
    ensure!(!regex.is_sensitive(&canary), "regex baseline flags the canary '{canary}'");
    let (nodp, sd, cadp) = (desk.final_attack("nodp"), desk.final_attack("sdpsgd"), desk.final_attack("cadp"));
    let dp = desk.final_attack("dpsgd");
    ensure!(
        cadp.exposure <= 0.5 * nodp.exposure,
        "exposure cadp {:.3} > half of nodp {:.3}",
        cadp.exposure,
        nodp.exposure
    );
    ensure!(cadp.exposure < sd.exposure, "exposure cadp {:.3} >= sdpsgd {:.3}", cadp.exposure, sd.exposure);
    ensure!(
        cadp.valid_perplexity <= dp.valid_perplexity,
        "perplexity cadp {:.2} > dpsgd {:.2}",
        cadp.valid_perplexity,
        dp.valid_perplexity
    );
    Ok(format!(
        "exposure nodp {:.2} / sdpsgd {:.2} / cadp {:.2}; perplexity cadp {:.1} <= dpsgd {:.1}",
        nodp.exposure, sd.exposure, cadp.exposure, cadp.valid_perplexity, dp.valid_perplexity
    ))
}

fn m_sentence(m: &RunManifest) -> String {
    let c = m.config.canary.as_ref().unwrap();
    format!("{} {}", c.prefix, c.fill)
}

fn criterion_7(desk: &Desk) -> Outcome {
    let acc = |r: &str| desk.final_attack(r).mi_accuracy;
    let (nodp, dp, cadp) = (acc("nodp"), acc("dpsgd"), acc("cadp"));
    ensure!(desk.run("nodp").config.mi_n == 50, "mi_n is not 50");
    ensure!(nodp >= 0.70, "nodp MI accuracy {nodp:.3} < 0.70");
    ensure!(dp <= 0.60, "dpsgd MI accuracy {dp:.3} > 0.60");
    ensure!(cadp <= 0.60, "cadp MI accuracy {cadp:.3} > 0.60");
    Ok(format!("MI accuracy nodp {nodp:.2}, dpsgd {dp:.2}, cadp {cadp:.2} (chance 0.50)"))
}

fn criterion_8(desk: &Desk) -> Outcome {
    let model = cadp::detector::load_detector(&desk.detector).unwrap();
    let corpus = fs::read_to_string(&desk.files.corpus).unwrap();
    let labels = fs::read_to_string(&desk.files.labels).unwrap();
    let neutral: Vec<&str> = corpus
        .lines()
        .zip(labels.lines())
        .filter(|(_, l)| l.trim() == "0")
        .map(|(t, _)| t)
        .collect();
    let flagged = neutral.iter().filter(|t| model.is_sensitive(t)).count();
    let corpus_fpr = flagged as f64 / neutral.len() as f64;
    let (tpr, fpr) = (desk.detector_tpr, desk.detector_fpr);
    ensure!(tpr >= 0.95, "held-out TPR {tpr:.3} < 0.95");
    ensure!(fpr <= 0.05, "held-out FPR {fpr:.3} > 0.05");
    ensure!(corpus_fpr <= 0.05, "FPR on neutral corpus lines {corpus_fpr:.3} > 0.05");
    Ok(format!(
        "held-out TPR {tpr:.3}, FPR {fpr:.3}; FPR on {} neutral corpus lines {corpus_fpr:.3}",
        neutral.len()
    ))
}

fn checkpoints(m: &RunManifest) -> Vec<Vec<u8>> {
    m.epochs.iter().map(|e| fs::read(m.config.output_dir.join(&e.checkpoint)).unwrap()).collect()
}

fn criterion_9(desk: &Desk) -> Outcome {
    for (stub, reference) in [("never_sensitive", "nodp"), ("always_sensitive", "dpsgd")] {
        let p = desk.write_config(stub, &desk.config_text("cadp", stub, Some(stub)));
        let (m, _) = Desk::run_config(&p);
        let want = checkpoints(desk.run(reference));
        let got = checkpoints(&m);
        ensure!(got.len() == 20 && got == want, "cadp with {stub} differs from {reference}");
    }
    Ok("cadp+never_sensitive == nodp, cadp+always_sensitive == dpsgd over 20 checkpoints".into())
}

fn criterion_10(desk: &Desk) -> Outcome {
    let manifests: Vec<PathBuf> = desk.runs.iter().map(|(_, m, _)| m.config.output_dir.join("manifest.json")).collect();
    let snapshot = |dir: &Path| -> Vec<Vec<u8>> {
        let m = RunManifest::load(&dir.join("manifest.json")).unwrap();
        let mut out = vec![
            fs::read(dir.join("manifest.json")).unwrap(),
            fs::read(dir.join("attacks.csv")).unwrap(),
        ];
        out.extend(checkpoints(&m));
        out
    };
    let report_bytes = |out: &Path| -> Vec<Vec<u8>> {
        let files = report_paths(out, &manifests).unwrap();
        files.iter().filter(|p| p.extension().is_some_and(|e| e == "csv")).map(|p| fs::read(p).unwrap()).collect()
    };
    let cadp_dir = desk.run("cadp").config.output_dir.clone();
    let before = snapshot(&cadp_dir);
    let report_before = report_bytes(&desk.root.join("report_a"));
    let (_, _) = Desk::run_config(&desk.root.join("cadp.cfg"));
    ensure!(snapshot(&cadp_dir) == before, "cadp rerun changed manifest, attacks or checkpoints");
    ensure!(report_bytes(&desk.root.join("report_b")) == report_before, "report CSVs differ after rerun");
    Ok(format!("cadp rerun byte-identical ({} files), report CSVs identical", before.len()))
}

fn guarded<T>(f: impl FnOnce() -> Result<T, String>) -> Result<T, String> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(o) => o,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |n: usize, o: Outcome| match o {
        Ok(d) => println!("criterion {n}: PASS {d}"),
        Err(d) => {
            failed += 1;
            println!("criterion {n}: FAIL {d}");
        }
    };
    report(1, guarded(criterion_1));
    report(2, guarded(criterion_2));
    report(3, guarded(criterion_3));
    report(4, guarded(criterion_4));

    let dir = tempfile::tempdir().unwrap();
    match guarded(|| Ok(Desk::setup(dir.path()))) {
        Ok(desk) => {
            let desk_checks: [(usize, fn(&Desk) -> Outcome); 6] = [
                (5, criterion_5),
                (6, criterion_6),
                (7, criterion_7),
                (8, criterion_8),
                (9, criterion_9),
                (10, criterion_10),
            ];
            for (n, check) in desk_checks {
                report(n, guarded(|| check(&desk)));
            }
        }
        Err(e) => {
            for n in 5..=10 {
                report(n, Err(format!("desk setup failed: {e}")));
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
