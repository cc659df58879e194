//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with the measured values. Training fixtures are shared and
//! fully seeded, so every number here is reproducible.

use std::sync::OnceLock;
use std::time::Instant;

use cjme::cli::eval::{eval_classify, eval_sweep, BetaArg};
use cjme::cli::train::{train_model, TrainSettings};
use cjme::dataio::{gen_synthetic, Checkpoint, DatasetBundle, Dominance, Split, SynthConfig};
use cjme::evalkit::{
    harmonic_mean, leave_one_out_map, mean_class_accuracy, average_precision, EmbeddedSplit,
};
use cjme::gcca::fit_gcca;
use cjme::inference::{
    select_modality, AlphaPolarity, ChosenModality, Direction, InferenceConfig, ModalityMode,
};
use cjme::numerics::{DenseMatrix, SeededRng};
use cjme::objective::Distance;
use cjme::projector::{grad_check, ProjectionModel};

const CHANCE: f64 = 100.0 / 12.0;
/// Criterion 4 bar: five times the chance rate.
const UNSEEN_BAR: f64 = 5.0 * CHANCE;
/// Criterion 5 bar: two times the chance rate.
const COLLAPSE_BAR: f64 = 2.0 * CHANCE;
/// Calibrated link between the trained model and the feature-space
/// oracle on the frozen fixture (observed 0.89; asserted with headroom).
const ORACLE_FRACTION: f64 = 0.5;
/// Calibrated attention agreement on the frozen fixture (observed above
/// 0.9; asserted with headroom). The criterion itself is > 0.5.
const AGREEMENT_FLOOR: f64 = 0.75;

fn bundle() -> &'static DatasetBundle {
    static BUNDLE: OnceLock<DatasetBundle> = OnceLock::new();
    BUNDLE.get_or_init(|| gen_synthetic(&SynthConfig::default()).expect("fixture bundle"))
}

fn trained() -> &'static (Checkpoint, f64) {
    static TRAINED: OnceLock<(Checkpoint, f64)> = OnceLock::new();
    TRAINED.get_or_init(|| {
        let settings = TrainSettings::defaults_for(8);
        let start = Instant::now();
        let out = train_model(bundle(), &settings).expect("default training");
        (out.checkpoint, start.elapsed().as_secs_f64())
    })
}

fn attention_bundle() -> &'static DatasetBundle {
    static BUNDLE: OnceLock<DatasetBundle> = OnceLock::new();
    BUNDLE.get_or_init(|| {
        gen_synthetic(&SynthConfig {
            audio_dominant_fraction: 0.3,
            ..SynthConfig::default()
        })
        .expect("attention fixture bundle")
    })
}

fn attention_trained() -> &'static Checkpoint {
    static TRAINED: OnceLock<Checkpoint> = OnceLock::new();
    TRAINED.get_or_init(|| {
        let settings = TrainSettings::defaults_for(8);
        train_model(attention_bundle(), &settings)
            .expect("attention training")
            .checkpoint
    })
}

#[test]
fn acceptance_1_gradient_correctness() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..10u64 {
        let report = grad_check(seed).expect("grad check");
        worst = worst.max(report.max_rel_err);
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(worst < 1e-5, "max relative error {worst}");
    assert!(elapsed < 30.0, "gradient check took {elapsed:.1} s");
    println!("[PASS] criterion 1: gradcheck over 10 seeds, max rel err {worst:.3e} in {elapsed:.2} s");
}

#[test]
fn acceptance_2_metric_oracles() {
    let hm_video = harmonic_mean(43.27, 27.11);
    assert!((hm_video - 33.34).abs() <= 0.01, "{hm_video}");
    let hm_audio = harmonic_mean(28.35, 18.35);
    assert!((hm_audio - 22.22).abs() <= 0.1, "{hm_audio}");
    assert_eq!(average_precision(&[true, true]), Some(1.0));
    let ap24 = average_precision(&[false, true, false, true]).unwrap();
    assert_eq!(ap24, 0.5);
    println!(
        "[PASS] criterion 2: HM(43.27, 27.11) = {hm_video:.4}, HM(28.35, 18.35) = {hm_audio:.4}, AP fixtures exact"
    );
}

#[test]
fn acceptance_3_calibrated_stacking_monotonicity() {
    let (ckpt, _) = trained();
    let cfg = InferenceConfig::default();
    for split in [Split::Val, Split::Test] {
        let sweep = eval_sweep(ckpt, bundle(), split, &cfg, 1).expect("sweep");
        assert_eq!(sweep.points.len(), 25);
        for w in sweep.points.windows(2) {
            assert!(w[1].s <= w[0].s + 1e-12, "S increased along the grid");
            assert!(w[1].u >= w[0].u - 1e-12, "U decreased along the grid");
        }
        // Beta 0 reproduces the unbiased evaluation exactly.
        let unbiased = eval_classify(ckpt, bundle(), split, BetaArg::Fixed(0.0), &cfg, 1)
            .expect("unbiased eval");
        assert_eq!(sweep.points[0].beta, 0.0);
        assert_eq!(sweep.points[0].s, unbiased.report.s);
        assert_eq!(sweep.points[0].u, unbiased.report.u);
        assert_eq!(
            sweep.points[0].unseen_preds,
            unbiased.report.unseen_pred_count
        );
        // Endpoints: zero unseen predictions without bias, all-unseen at
        // the top of the grid.
        let n = bundle().split_indices(split).len();
        assert_eq!(sweep.points[0].unseen_preds, 0, "split {split}");
        assert_eq!(sweep.points.last().unwrap().unseen_preds, n, "split {split}");
    }
    println!("[PASS] criterion 3: sweep monotone, beta=0 unbiased with 0 unseen predictions, last point all-unseen (val and test)");
}

/// Nearest-class-prototype oracle in raw concatenated feature space;
/// prototypes are class means over the whole bundle.
fn oracle_unseen_macc(bundle: &DatasetBundle) -> f64 {
    let n_classes = bundle.classes.len();
    let dim = bundle.dims.audio + bundle.dims.video;
    let mut means = vec![vec![0.0f64; dim]; n_classes];
    let mut counts = vec![0usize; n_classes];
    for e in &bundle.examples {
        let m = &mut means[e.class_idx];
        for (i, v) in e.audio.iter().chain(&e.video).enumerate() {
            m[i] += v;
        }
        counts[e.class_idx] += 1;
    }
    for (m, &c) in means.iter_mut().zip(&counts) {
        for v in m.iter_mut() {
            *v /= c as f64;
        }
    }
    let test_idx = bundle.split_indices(Split::Test);
    let mut preds = Vec::new();
    let mut truths = Vec::new();
    for &i in &test_idx {
        let e = &bundle.examples[i];
        let mut best = 0;
        let mut best_d = f64::MAX;
        for (c, m) in means.iter().enumerate() {
            let d: f64 = e
                .audio
                .iter()
                .chain(&e.video)
                .zip(m)
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        preds.push(best);
        truths.push(e.class_idx);
    }
    let unseen: Vec<usize> = (0..n_classes)
        .filter(|&c| !bundle.seen_flags()[c])
        .collect();
    mean_class_accuracy(&preds, &truths, &unseen).unwrap().0
}

#[test]
fn acceptance_4_synthetic_gzsl_end_to_end() {
    let oracle_u = oracle_unseen_macc(bundle());
    assert!(
        oracle_u >= 90.0,
        "oracle should nearly solve the fixture, got {oracle_u}"
    );
    let (ckpt, train_secs) = trained();
    assert!(*train_secs < 60.0, "default training took {train_secs:.1} s");
    let out = eval_classify(
        ckpt,
        bundle(),
        Split::Test,
        BetaArg::Auto,
        &InferenceConfig::default(),
        1,
    )
    .expect("auto-beta eval");
    let u = out.report.u;
    assert!(u > UNSEEN_BAR, "unseen mAcc {u:.2} below {UNSEEN_BAR:.2}");
    assert!(
        u >= ORACLE_FRACTION * oracle_u,
        "unseen mAcc {u:.2} below {ORACLE_FRACTION} x oracle {oracle_u:.2}"
    );
    println!(
        "[PASS] criterion 4: unseen mAcc {u:.2} at best-val beta {:.4} (bar {UNSEEN_BAR:.2}, oracle {oracle_u:.2}, trained in {train_secs:.1} s)",
        out.report.beta
    );
}

#[test]
fn acceptance_5_ablation_direction() {
    // Both triplet losses off: alignment alone cannot place class
    // embeddings, so unseen accuracy collapses.
    let mut settings = TrainSettings::defaults_for(8);
    settings.objective.gamma = 0.0;
    let ablated = train_model(bundle(), &settings).expect("lambda-only training");
    let collapsed = eval_classify(
        &ablated.checkpoint,
        bundle(),
        Split::Test,
        BetaArg::Auto,
        &InferenceConfig::default(),
        1,
    )
    .expect("ablated eval");
    assert!(
        collapsed.report.u <= COLLAPSE_BAR,
        "lambda-only unseen mAcc {:.2} above {COLLAPSE_BAR:.2}",
        collapsed.report.u
    );

    let (ckpt, _) = trained();
    let full = eval_classify(
        ckpt,
        bundle(),
        Split::Test,
        BetaArg::Auto,
        &InferenceConfig::default(),
        1,
    )
    .expect("full eval");
    assert!(full.report.u > UNSEEN_BAR);
    println!(
        "[PASS] criterion 5: lambda-only unseen mAcc {:.2} <= {COLLAPSE_BAR:.2}, full objective {:.2} > {UNSEEN_BAR:.2}",
        collapsed.report.u, full.report.u
    );
}

#[test]
fn acceptance_6_attention_agreement() {
    let ckpt = attention_trained();
    let attn = ckpt.attention.as_ref().expect("attention trained");
    // The labeling rule sets alpha toward 1 when audio carries the
    // signal, so single-modality decisions use inverted polarity.
    let cfg = InferenceConfig {
        attention_threshold: 0.7,
        alpha_polarity: AlphaPolarity::Inverted,
        modality: ModalityMode::Select,
        ..Default::default()
    };
    let mut agree = 0usize;
    let mut total = 0usize;
    for e in &attention_bundle().examples {
        if e.split != Split::Test {
            continue;
        }
        let truth = match e.dominant {
            Some(Dominance::Audio) => ChosenModality::Audio,
            Some(Dominance::Video) => ChosenModality::Video,
            _ => continue,
        };
        let decision = select_modality(attn, &ckpt.projection, e, &cfg).expect("select");
        total += 1;
        if decision == truth {
            agree += 1;
        }
    }
    assert!(total > 0, "fixture must contain degraded test examples");
    let agreement = agree as f64 / total as f64;
    assert!(
        agreement > 0.5,
        "agreement {agreement:.3} not above chance on {total} degraded examples"
    );
    assert!(
        agreement >= AGREEMENT_FLOOR,
        "agreement {agreement:.3} below calibrated floor {AGREEMENT_FLOOR}"
    );
    println!(
        "[PASS] criterion 6: attention agreement {agreement:.3} on {total} degraded test examples (threshold 0.7, inverted polarity)"
    );
}

#[test]
fn acceptance_7_gcca_fixtures() {
    let mut rng = SeededRng::new(1);
    let x = DenseMatrix::from_fn(50, 6, |_, _| rng.standard_normal());
    let identical = fit_gcca(&[x.clone(), x.clone(), x], 4, 1e-8).unwrap();
    for &c in &identical.correlations {
        assert!(c >= 1.0 - 1e-6, "identical views correlation {c}");
    }

    let mut rng = SeededRng::new(3);
    let latent = DenseMatrix::from_fn(400, 4, |_, _| rng.standard_normal());
    let mut shared_views = Vec::new();
    for &d in &[8usize, 10, 6] {
        let mix = DenseMatrix::from_fn(4, d, |_, _| rng.standard_normal());
        let mut v = latent.matmul(&mix).unwrap();
        for val in v.data_mut() {
            *val += 0.01 * rng.standard_normal();
        }
        shared_views.push(v);
    }
    let shared = fit_gcca(&shared_views, 4, 1e-8).unwrap();
    for &c in shared.correlations.iter().take(4) {
        assert!(c >= 0.9, "shared-latent correlation {c}");
    }

    let mut rng = SeededRng::new(2);
    let independent_views: Vec<DenseMatrix> = (0..3)
        .map(|_| DenseMatrix::from_fn(2000, 8, |_, _| rng.standard_normal()))
        .collect();
    let independent = fit_gcca(&independent_views, 4, 1e-8).unwrap();
    assert!(
        independent.correlations[0] <= 0.2,
        "independent views leading correlation {}",
        independent.correlations[0]
    );
    println!(
        "[PASS] criterion 7: GCCA correlations — identical {:.8}, shared top-4 min {:.3}, independent leading {:.3}",
        identical.correlations[0],
        shared.correlations.iter().take(4).cloned().fold(f64::MAX, f64::min),
        independent.correlations[0]
    );
}

#[test]
fn acceptance_8_determinism() {
    use std::process::Command;
    let bin = env!("CARGO_BIN_EXE_cjme");
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");

    let run = |args: &[&str]| {
        let out = Command::new(bin).args(args).output().expect("spawn cjme");
        assert!(
            out.status.success(),
            "cjme {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        out.stdout
    };

    run(&[
        "gen-synth", "--out", data.to_str().unwrap(),
        "--classes", "6", "--unseen", "2", "--per-class", "20",
        "--audio-dim", "12", "--video-dim", "12", "--text-dim", "8",
    ]);

    let m1 = dir.path().join("m1.cjme");
    let m2 = dir.path().join("m2.cjme");
    let train_args = |out: &std::path::Path| {
        vec![
            "train".to_string(),
            "--data".into(), data.to_str().unwrap().into(),
            "--out".into(), out.to_str().unwrap().into(),
            "--epochs".into(), "5".into(),
            "--batch".into(), "16".into(),
            "--hidden".into(), "32".into(),
            "--embed-dim".into(), "16".into(),
            "--attention-hidden".into(), "8".into(),
            "--seed".into(), "9".into(),
        ]
    };
    let log1 = run(&train_args(&m1).iter().map(String::as_str).collect::<Vec<_>>());
    let log2 = run(&train_args(&m2).iter().map(String::as_str).collect::<Vec<_>>());
    let bytes1 = std::fs::read(&m1).unwrap();
    let bytes2 = std::fs::read(&m2).unwrap();
    assert_eq!(bytes1, bytes2, "checkpoints differ between identical runs");
    // Training logs (minus the checkpoint path line) must match too.
    let strip = |log: &[u8]| {
        String::from_utf8_lossy(log)
            .lines()
            .filter(|l| !l.starts_with("checkpoint written"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&log1), strip(&log2), "training logs differ");

    let r1 = dir.path().join("r1.tsv");
    let r4 = dir.path().join("r4.tsv");
    let out1 = run(&[
        "eval", "classify", "--data", data.to_str().unwrap(),
        "--model", m1.to_str().unwrap(), "--beta", "auto",
        "--threads", "1", "--out", r1.to_str().unwrap(),
    ]);
    let out4 = run(&[
        "eval", "classify", "--data", data.to_str().unwrap(),
        "--model", m1.to_str().unwrap(), "--beta", "auto",
        "--threads", "4", "--out", r4.to_str().unwrap(),
    ]);
    assert_eq!(out1, out4, "eval stdout depends on --threads");
    assert_eq!(
        std::fs::read(&r1).unwrap(),
        std::fs::read(&r4).unwrap(),
        "report files depend on --threads"
    );

    let rt1 = run(&[
        "eval", "retrieve", "--data", data.to_str().unwrap(),
        "--model", m1.to_str().unwrap(), "--direction", "t2av", "--threads", "1",
    ]);
    let rt3 = run(&[
        "eval", "retrieve", "--data", data.to_str().unwrap(),
        "--model", m1.to_str().unwrap(), "--direction", "t2av", "--threads", "3",
    ]);
    assert_eq!(rt1, rt3, "retrieval output depends on --threads");
    println!("[PASS] criterion 8: identical checkpoints/logs across runs; eval byte-identical for any --threads");
}

fn clustered_fixture() -> EmbeddedSplit {
    let centers = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]];
    let mut audio = Vec::new();
    let mut video = Vec::new();
    let mut class_of = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for k in 0..3 {
            let jitter = k as f64 * 0.01;
            audio.push(vec![center[0] + jitter, center[1]]);
            video.push(vec![center[0], center[1] + jitter]);
            class_of.push(c);
        }
    }
    EmbeddedSplit {
        example_idx: (0..9).collect(),
        class_of,
        audio,
        video,
        class_embeddings: centers.iter().map(|c| c.to_vec()).collect(),
        class_seen: vec![true, true, false],
        class_names: vec!["a".into(), "b".into(), "c".into()],
    }
}

#[test]
fn acceptance_9_retrieval_protocol() {
    // Perfectly clustered: every direction scores exactly 100.00.
    let es = clustered_fixture();
    for dir in Direction::ALL {
        let r = leave_one_out_map(&es, dir, Distance::Euclidean, 1).unwrap();
        assert_eq!(r.s, 100.0, "{dir} S");
        assert_eq!(r.u, 100.0, "{dir} U");
    }

    // Class-prior baseline by exhaustive enumeration: 2 relevant items
    // uniformly placed in a gallery of 8.
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 1..=8usize {
        for j in (i + 1)..=8 {
            sum += (1.0 / i as f64 + 2.0 / j as f64) / 2.0;
            count += 1;
        }
    }
    let prior = 100.0 * sum / count as f64;

    // Untrained random projections of random features: mean leave-one-out
    // mAP over seeded trials concentrates at the prior.
    let trials = 300;
    let mut total = 0.0;
    for trial in 0..trials {
        let mut rng = SeededRng::new(5000 + trial);
        let model = ProjectionModel::init(6, 5, 4, 3, 8, false, &mut rng).unwrap();
        let audio: Vec<Vec<f64>> = (0..9)
            .map(|_| {
                let raw: Vec<f64> = (0..6).map(|_| rng.standard_normal()).collect();
                model.embed_audio(&raw).unwrap()
            })
            .collect();
        let video: Vec<Vec<f64>> = (0..9)
            .map(|_| {
                let raw: Vec<f64> = (0..5).map(|_| rng.standard_normal()).collect();
                model.embed_video(&raw).unwrap()
            })
            .collect();
        let es = EmbeddedSplit {
            example_idx: (0..9).collect(),
            class_of: vec![0, 0, 0, 1, 1, 1, 2, 2, 2],
            audio,
            video,
            class_embeddings: vec![vec![0.0; 3]; 3],
            class_seen: vec![true, true, false],
            class_names: vec!["a".into(), "b".into(), "c".into()],
        };
        let r = leave_one_out_map(&es, Direction::A2V, Distance::Euclidean, 1).unwrap();
        let overall: f64 =
            r.per_class.iter().map(|(_, ap)| ap).sum::<f64>() / r.per_class.len() as f64;
        total += overall;
    }
    let mean = total / trials as f64;
    assert!(
        (mean - prior).abs() <= 0.2 * prior,
        "random-projection mAP {mean:.2} outside ±20% of prior {prior:.2}"
    );
    println!(
        "[PASS] criterion 9: clustered fixture mAP 100.00 in all directions; random projections {mean:.2} vs prior {prior:.2} (±20%)"
    );
}
