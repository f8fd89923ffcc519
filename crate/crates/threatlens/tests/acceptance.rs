//! Acceptance suite. Each test covers one numbered criterion and prints a
//! pass line on success; run with `--nocapture` to see them:
//!
//! 1. CRF forward algorithm and Viterbi agree with exhaustive enumeration.
//! 2. Analytic gradients match central finite differences.
//! 3. Shape and conservation contracts.
//! 4. Synthetic end-to-end learning (CNN and tagger).
//! 5. Published-dataset reproduction (skipped unless the converted
//!    dataset is present; see README).
//! 6. Determinism: identical seeds give identical metrics, replays give
//!    byte-identical alert files.
//! 7. Checkpoint round-trips reproduce metrics bit-exactly.

mod common;

use std::sync::OnceLock;

use rand::Rng;

use threatlens::classifier::{ClassifierConfig, ClassifierModel, EmbeddingInit};
use threatlens::crf::{log_partition, sequence_score, viterbi, EmissionMatrix};
use threatlens::ner::{Label, NerConfig, NerModel};
use threatlens::pipeline::{read_alerts, run_pipeline, PipelineConfig};
use threatlens::tensor::{
    grad_check, lstm_step, seeded_rng, Activation, LstmCell, Param, Tape, Tensor,
};
use threatlens::textprep::{build_vocabulary, normalize, Vocabulary};
use threatlens::trainer::{
    evaluate_classifier, evaluate_ner, load_classification_split, load_ner_split,
    train_classifier, train_ner, ClassMetrics, EarlyStopPolicy, NerMetrics, Role,
    TrainedClassifier, TrainedNer,
};

const GRAD_TOL: f64 = 1e-4;
const FD_STEP: f64 = 1e-5;

// ---------------------------------------------------------------------------
// Criterion 1 — CRF oracle equivalence
// ---------------------------------------------------------------------------

/// Exhaustive enumeration over all m^n paths; the independent oracle.
fn enumerate_paths(n: usize, m: usize) -> Vec<Vec<usize>> {
    let mut paths: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..n {
        paths = paths
            .iter()
            .flat_map(|p| {
                (0..m).map(move |l| {
                    let mut q = p.clone();
                    q.push(l);
                    q
                })
            })
            .collect();
    }
    paths
}

#[test]
fn criterion_1_crf_matches_exhaustive_enumeration() {
    let mut rng = seeded_rng(101);
    for case in 0..500 {
        let n = rng.gen_range(1..=5);
        let m = rng.gen_range(1..=4);
        let em = EmissionMatrix::from_values(
            n,
            m,
            (0..n * m).map(|_| rng.gen_range(-3.0..3.0)).collect(),
        )
        .unwrap();
        let trans: Vec<f64> = (0..(m + 2) * (m + 2))
            .map(|_| rng.gen_range(-1.5..1.5))
            .collect();

        let paths = enumerate_paths(n, m);
        let scores: Vec<f64> = paths
            .iter()
            .map(|p| sequence_score(&em, p, &trans).unwrap())
            .collect();
        let max_score = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let brute_log_z = {
            let m0 = max_score;
            m0 + scores.iter().map(|s| (s - m0).exp()).sum::<f64>().ln()
        };

        let log_z = log_partition(&em, &trans);
        assert!(
            (log_z - brute_log_z).abs() < 1e-9,
            "case {case}: log partition {log_z} vs enumeration {brute_log_z}"
        );

        let (best_path, best_score) = viterbi(&em, &trans);
        assert!(
            (best_score - max_score).abs() < 1e-9,
            "case {case}: viterbi {best_score} vs brute max {max_score}"
        );
        let attained = sequence_score(&em, &best_path, &trans).unwrap();
        assert!(
            (attained - best_score).abs() < 1e-9,
            "case {case}: returned path does not attain its score"
        );
    }
    println!("acceptance criterion 1 (CRF oracle equivalence, 500 cases): pass");
}

// ---------------------------------------------------------------------------
// Criterion 2 — gradient checks
// ---------------------------------------------------------------------------

fn random_param(rng: &mut rand_chacha::ChaCha8Rng, shape: &[usize]) -> Param {
    let len = shape.iter().product();
    Param::new(Tensor::new(
        shape,
        (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    ))
}

#[test]
fn criterion_2_softmax_xent_gradients() {
    for seed in 0..20u64 {
        let mut rng = seeded_rng(200 + seed);
        let m = rng.gen_range(2..=6);
        let target = rng.gen_range(0..m);
        let logits = random_param(&mut rng, &[m]);
        let mut tape = Tape::new();
        let v = tape.param(&logits);
        let (_, loss) = tape.softmax_xent(v, target);
        tape.backward(loss);
        let err = grad_check(
            std::slice::from_ref(&logits),
            || {
                let mut t = Tape::new();
                let v = t.param(&logits);
                let (_, l) = t.softmax_xent(v, target);
                t.scalar_value(l)
            },
            FD_STEP,
        );
        assert!(err < GRAD_TOL, "seed {seed}: max relative error {err}");
    }
    println!("acceptance criterion 2a (softmax-xent gradients, 20 seeds): pass");
}

#[test]
fn criterion_2_conv_text_gradients() {
    for seed in 0..20u64 {
        let mut rng = seeded_rng(300 + seed);
        let d = rng.gen_range(1..=4);
        let h = rng.gen_range(1..=3);
        let n = rng.gen_range(h..=h + 5);
        let s = random_param(&mut rng, &[n, d]);
        let w = random_param(&mut rng, &[h, d]);
        let b = random_param(&mut rng, &[1]);
        let params = [s.clone(), w.clone(), b.clone()];
        let eval = |s: &Param, w: &Param, b: &Param| {
            let mut t = Tape::new();
            let sv = t.param(s);
            let wv = t.param(w);
            let bv = t.param(b);
            let out = t.conv_text(sv, wv, bv, Activation::Identity).unwrap();
            let sq = t.mul(out, out);
            let l = t.sum(sq);
            (t, l)
        };
        let (mut tape, loss) = eval(&s, &w, &b);
        tape.backward(loss);
        let err = grad_check(
            &params,
            || {
                let (t, l) = eval(&s, &w, &b);
                t.scalar_value(l)
            },
            FD_STEP,
        );
        assert!(err < GRAD_TOL, "seed {seed}: max relative error {err}");
    }
    println!("acceptance criterion 2b (conv_text gradients, 20 seeds): pass");
}

#[test]
fn criterion_2_lstm_step_gradients() {
    for seed in 0..20u64 {
        let mut rng = seeded_rng(400 + seed);
        let input_dim = rng.gen_range(1..=4);
        let hidden_dim = rng.gen_range(1..=3);
        let cell = LstmCell::new(input_dim, hidden_dim, 400 + seed, "fd");
        let x: Vec<f64> = (0..input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h0: Vec<f64> = (0..hidden_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c0: Vec<f64> = (0..hidden_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let eval = |cell: &LstmCell| {
            let mut t = Tape::new();
            let vars = cell.vars(&mut t);
            let xv = t.leaf(&[input_dim], x.clone());
            let hv = t.leaf(&[hidden_dim], h0.clone());
            let cv = t.leaf(&[hidden_dim], c0.clone());
            let (h1, c1) = lstm_step(&mut t, &vars, xv, hv, cv);
            let both = t.concat(&[h1, c1]);
            let l = t.sum(both);
            (t, l)
        };
        let (mut tape, loss) = eval(&cell);
        tape.backward(loss);
        let err = grad_check(
            &cell.params(),
            || {
                let (t, l) = eval(&cell);
                t.scalar_value(l)
            },
            FD_STEP,
        );
        assert!(err < GRAD_TOL, "seed {seed}: max relative error {err}");
    }
    println!("acceptance criterion 2c (LSTM step gradients, 20 seeds): pass");
}

fn tiny_vocab(seed: u64) -> Vocabulary {
    let mut rng = seeded_rng(seed);
    let words: Vec<Vec<String>> = vec![(0..10)
        .map(|i| {
            let len = rng.gen_range(2..6);
            (0..len)
                .map(|j| char::from(b'a' + ((i + j + 1) % 26) as u8))
                .collect()
        })
        .collect()];
    build_vocabulary(words.iter().map(Vec::as_slice), 1).unwrap()
}

#[test]
fn criterion_2_classifier_loss_gradients() {
    for seed in 0..20u64 {
        let mut rng = seeded_rng(500 + seed);
        let vocab = tiny_vocab(seed);
        let cfg = ClassifierConfig {
            embedding_dim: rng.gen_range(2..=5),
            embedding_init: EmbeddingInit::Random,
            kernel_heights: vec![1, 2],
            filters_per_kernel: rng.gen_range(1..=3),
            dropout_p: 0.0,
            max_len: 10,
        };
        let model = ClassifierModel::with_dims(cfg, vocab.word_count(), 500 + seed);
        let sentence =
            |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<String> {
                let n = rng.gen_range(1..5);
                (0..n)
                    .map(|_| vocab.word(rng.gen_range(2..vocab.word_count() as u32)))
                    .map(|w| w.unwrap().to_owned())
                    .collect()
            };
        let batch = vec![
            (vocab.encode(&sentence(&mut rng), 10), true),
            (vocab.encode(&sentence(&mut rng), 10), false),
        ];
        model.batch_loss_backward(&batch).unwrap();
        let err = grad_check(
            &model.trainable_params(),
            || model.batch_loss(&batch).unwrap(),
            FD_STEP,
        );
        assert!(err < GRAD_TOL, "seed {seed}: max relative error {err}");
    }
    println!("acceptance criterion 2d (classifier loss gradients, 20 seeds): pass");
}

#[test]
fn criterion_2_ner_nll_gradients() {
    for seed in 0..20u64 {
        let mut rng = seeded_rng(600 + seed);
        let vocab = tiny_vocab(seed + 77);
        let cfg = NerConfig {
            word_dim: rng.gen_range(2..=4),
            char_dim: rng.gen_range(2..=3),
            char_hidden: rng.gen_range(1..=3),
            word_hidden: rng.gen_range(1..=3),
            dropout_after_char: false,
            dropout_after_word: false,
            embedding_init: EmbeddingInit::Random,
            max_len: 10,
        };
        let model = NerModel::with_dims(cfg, vocab.word_count(), vocab.char_count(), 600 + seed);
        let n = rng.gen_range(1..4);
        let tokens: Vec<String> = (0..n)
            .map(|_| {
                vocab
                    .word(rng.gen_range(2..vocab.word_count() as u32))
                    .unwrap()
                    .to_owned()
            })
            .collect();
        let enc = vocab.encode(&tokens, 10);
        let gold: Vec<Label> = (0..n)
            .map(|_| Label::from_index(rng.gen_range(0..6)).unwrap())
            .collect();
        let batch = vec![(enc, gold)];
        model.batch_nll_backward(&batch).unwrap();
        let err = grad_check(
            &model.trainable_params(),
            || model.batch_nll(&batch).unwrap(),
            FD_STEP,
        );
        assert!(err < GRAD_TOL, "seed {seed}: max relative error {err}");
    }
    println!("acceptance criterion 2e (tagger NLL gradients, 20 seeds): pass");
}

// ---------------------------------------------------------------------------
// Criterion 3 — shape and conservation contracts
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_conv_length_softmax_dropout() {
    // Convolution output length is n−h+1 for every 1 ≤ h ≤ n ≤ 20.
    let mut tape = Tape::new();
    for n in 1..=20usize {
        for h in 1..=n {
            let d = 3;
            let s = tape.leaf(&[n, d], vec![0.25; n * d]);
            let w = tape.leaf(&[h, d], vec![0.5; h * d]);
            let b = tape.leaf_scalar(0.1);
            let out = tape.conv_text(s, w, b, Activation::Relu).unwrap();
            assert_eq!(tape.value(out).len(), n - h + 1, "n={n} h={h}");
        }
    }

    // Softmax normalization for |logit| ≤ 1e3, strict (0,1) well inside
    // the representable range.
    let mut rng = seeded_rng(33);
    for _ in 0..200 {
        let m = rng.gen_range(2..=8);
        let logits: Vec<f64> = (0..m).map(|_| rng.gen_range(-1e3..1e3)).collect();
        let v = tape.leaf(&[m], logits);
        let (probs, _) = tape.softmax_xent(v, 0);
        let sum: f64 = probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9, "softmax sum {sum}");
        assert!(probs.iter().all(|&p| (0.0..=1.0).contains(&p)));

        let mild: Vec<f64> = (0..m).map(|_| rng.gen_range(-300.0..300.0)).collect();
        let v = tape.leaf(&[m], mild);
        let (probs, _) = tape.softmax_xent(v, 0);
        assert!(probs.iter().all(|&p| p > 0.0 && p < 1.0));
    }

    // Dropout at inference is exactly the identity.
    let x = tape.leaf(&[64], (0..64).map(|i| i as f64 * 0.37 - 11.0).collect());
    let y = tape
        .dropout(x, 0.5, &mut threatlens::tensor::DropoutMode::Infer)
        .unwrap();
    assert_eq!(x, y);
    assert_eq!(tape.value(x), tape.value(y));

    println!("acceptance criterion 3a (conv length / softmax / dropout): pass");
}

#[test]
fn criterion_3_pipeline_count_conservation() {
    // Rigged stages (always-relevant classifier, all-O tagger) keep this
    // about plumbing, not learning: 1000 rows, some malformed.
    let sentences: Vec<Vec<String>> = vec![
        ["windows", "kernel", "exploit", "coffee", "sunny", "deploy"]
            .map(String::from)
            .to_vec(),
    ];
    let vocab = build_vocabulary(sentences.iter().map(Vec::as_slice), 1).unwrap();

    let clf_cfg = ClassifierConfig {
        embedding_dim: 4,
        embedding_init: EmbeddingInit::Random,
        kernel_heights: vec![1, 2],
        filters_per_kernel: 2,
        dropout_p: 0.0,
        max_len: 20,
    };
    let clf = ClassifierModel::with_dims(clf_cfg, vocab.word_count(), 1);
    for p in [&clf.out_w, &clf.out_b] {
        p.borrow_mut().values_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    clf.out_b.borrow_mut().values_mut()[1] = 8.0;

    let ner_cfg = NerConfig {
        word_dim: 4,
        char_dim: 3,
        char_hidden: 2,
        word_hidden: 2,
        dropout_after_char: false,
        dropout_after_word: false,
        embedding_init: EmbeddingInit::Random,
        max_len: 20,
    };
    let tagger = NerModel::with_dims(ner_cfg, vocab.word_count(), vocab.char_count(), 2);
    for p in [&tagger.proj_w, &tagger.proj_b, &tagger.crf.transitions] {
        p.borrow_mut().values_mut().iter_mut().for_each(|v| *v = 0.0);
    }

    let dir = tempfile::tempdir().unwrap();
    let clf_path = dir.path().join("clf.ckpt");
    let ner_path = dir.path().join("ner.ckpt");
    threatlens::checkpoint::save_classifier(&clf_path, &clf, &vocab).unwrap();
    threatlens::checkpoint::save_ner(&ner_path, &tagger, &vocab).unwrap();
    let kw_path = dir.path().join("kw.txt");
    std::fs::write(&kw_path, "windows\nkernel\n").unwrap();

    let mut csv = String::from("id,account,posted_at,account_set,text\n");
    let mut rng = seeded_rng(5);
    for i in 0..1000 {
        match i % 10 {
            // malformed: bad timestamp
            3 => csv.push_str(&format!("{i},acct,not-a-date,S1,windows kernel\n")),
            // malformed: normalizes to nothing
            7 => csv.push_str(&format!("{i},acct,2017-01-01T00:00:00Z,S1,!!! ???\n")),
            // no keyword: filtered out
            1 | 5 => csv.push_str(&format!(
                "{i},acct,2017-01-01T00:00:00Z,S1,coffee sunny deploy\n"
            )),
            _ => {
                let extra = if rng.gen_bool(0.5) { "exploit" } else { "sunny" };
                csv.push_str(&format!(
                    "{i},acct,2017-01-01T00:00:00Z,S1,windows kernel {extra}\n"
                ));
            }
        }
    }
    let input = dir.path().join("input.csv");
    std::fs::write(&input, csv).unwrap();

    let cfg = PipelineConfig {
        keyword_file: kw_path,
        classifier_checkpoint: clf_path,
        ner_checkpoint: ner_path,
        input,
        output: dir.path().join("alerts.jsonl"),
        infrastructure_name: Some("synthetic".into()),
        threshold_override: None,
        emitted_at: Some(chrono::DateTime::from_timestamp(1486382400, 0).unwrap()),
    };
    let summary = run_pipeline(&cfg).unwrap();
    assert_eq!(summary.ingested, 1000);
    assert_eq!(summary.malformed, 200);
    assert_eq!(summary.filtered_out, 200);
    assert_eq!(summary.alerts, 600);
    assert!(summary.conserved());
    assert_eq!(read_alerts(&cfg.output).unwrap().len(), 600);
    println!(
        "acceptance criterion 3b (pipeline count conservation over 1000 rows): pass ({summary:?})"
    );
}

// ---------------------------------------------------------------------------
// Criterion 4/6/7 shared fixture — synthetic end-to-end training, run twice
// ---------------------------------------------------------------------------

struct SynthRuns {
    clf_a: TrainedClassifier,
    clf_b_metrics: ClassMetrics,
    clf_b_losses: Vec<f64>,
    clf_a_losses: Vec<f64>,
    ner_a: TrainedNer,
    ner_b_metrics: NerMetrics,
}

static SYNTH: OnceLock<SynthRuns> = OnceLock::new();

fn synth_runs() -> &'static SynthRuns {
    SYNTH.get_or_init(|| {
        let train = common::classifier_corpus("synthetic-train", 2000, 8181, 0);
        let heldout = common::classifier_corpus("synthetic-heldout", 500, 9292, 100_000);
        let config = ClassifierConfig {
            embedding_dim: 100,
            embedding_init: EmbeddingInit::Random,
            kernel_heights: vec![3, 5, 7],
            filters_per_kernel: 128,
            dropout_p: 0.5,
            max_len: 40,
        };
        let policy = EarlyStopPolicy::default();
        let clf_a = train_classifier(&config, &train, &heldout, &policy, 42, None, None).unwrap();
        let clf_b = train_classifier(&config, &train, &heldout, &policy, 42, None, None).unwrap();
        let clf_a_losses: Vec<f64> = clf_a.history.epochs.iter().map(|e| e.train_loss).collect();
        let clf_b_losses: Vec<f64> = clf_b.history.epochs.iter().map(|e| e.train_loss).collect();

        let ner_train = common::ner_corpus("ner-train", 512, 7001);
        let ner_val = common::ner_corpus("ner-val", 128, 7002);
        let ner_config = NerConfig {
            word_dim: 48,
            char_dim: 16,
            char_hidden: 32,
            word_hidden: 32,
            dropout_after_char: false,
            dropout_after_word: false,
            embedding_init: EmbeddingInit::Random,
            max_len: 40,
        };
        let ner_a =
            train_ner(&ner_config, &ner_train, &ner_val, &policy, 43, None, None).unwrap();
        let ner_b =
            train_ner(&ner_config, &ner_train, &ner_val, &policy, 43, None, None).unwrap();

        SynthRuns {
            clf_a,
            clf_b_metrics: clf_b.val_metrics,
            clf_a_losses,
            clf_b_losses,
            ner_a,
            ner_b_metrics: ner_b.val_metrics,
        }
    })
}

#[test]
fn criterion_4_synthetic_end_to_end_learning() {
    let runs = synth_runs();
    let m = &runs.clf_a.val_metrics;
    assert!(
        m.tpr >= 0.98 && m.tnr >= 0.98,
        "classifier tpr {} tnr {}",
        m.tpr,
        m.tnr
    );
    let f1 = runs.ner_a.val_metrics.micro_f1;
    assert!(f1 >= 0.95, "tagger micro-F1 {f1}");
    println!(
        "acceptance criterion 4 (synthetic end-to-end): pass (tpr {:.4}, tnr {:.4}, micro-F1 {:.4})",
        m.tpr, m.tnr, f1
    );
}

#[test]
fn criterion_4_extraction_matches_published_examples() {
    // The well-known announcement shapes the templates mirror.
    let runs = synth_runs();
    let vocab = &runs.ner_a.vocab;

    let a2 = normalize(
        "Vuln: Linux Kernel CVE-2017-5546 Local Denial of Service Vulnerability https://t.co/bLEJIb1ZVD",
    )
    .unwrap();
    let tagged = runs.ner_a.model.tag_tokens(&a2, vocab).unwrap();
    let expected = vec![
        Label::O,
        Label::Pro,
        Label::Pro,
        Label::Id,
        Label::Vul,
        Label::Vul,
        Label::Vul,
        Label::Vul,
        Label::Vul,
    ];
    assert_eq!(tagged.labels, expected, "tokens {:?}", tagged.tokens);

    let c2 = normalize(
        "ZDI-17-109 : Adobe Flash Player Type Confusion Remote Code Execution Vulnerability",
    )
    .unwrap();
    let tagged = runs.ner_a.model.tag_tokens(&c2, vocab).unwrap();
    assert_eq!(tagged.labels[0], Label::Id, "tokens {:?}", tagged.tokens);
    assert_eq!(
        &tagged.labels[2..5],
        &[Label::Pro, Label::Pro, Label::Pro],
        "tokens {:?}",
        tagged.tokens
    );

    // Relevance of the published announcement texts under the synthetic
    // classifier (they carry trigger vocabulary).
    let clf_vocab = &runs.clf_a.vocab;
    for text in [
        "Vuln: Linux Kernel CVE-2017-5546 Local Denial of Service Vulnerability",
        "#Vuln: #Microsoft #Windows CVE-2017-0016 Memory Corruption Vulnerability #bugtraq",
        "Vuln: Apache Tomcat CVE-2016-6816 Security Bypass Vulnerability",
    ] {
        let tokens = normalize(text).unwrap();
        let enc = clf_vocab.encode(&tokens, runs.clf_a.model.config.max_len);
        assert!(
            runs.clf_a.model.predict(&enc).unwrap(),
            "expected relevant: {text}"
        );
    }
    println!("acceptance criterion 4 (published-example extraction): pass");
}

// ---------------------------------------------------------------------------
// Criterion 5 — published-dataset reproduction (gated on the dataset)
// ---------------------------------------------------------------------------

#[test]
fn criterion_5_published_dataset_reproduction() {
    let dir = match std::env::var("THREATLENS_DATASET_DIR") {
        Ok(d) => std::path::PathBuf::from(d),
        Err(_) => {
            println!(
                "acceptance criterion 5 (published-dataset reproduction): SKIPPED \
                 (set THREATLENS_DATASET_DIR to the converted dataset; see README)"
            );
            return;
        }
    };
    let a1 = load_classification_split(&dir.join("A1.csv"), Role::Train).unwrap();
    let a2 = load_classification_split(&dir.join("A2.csv"), Role::Validation).unwrap();

    let config = ClassifierConfig {
        embedding_dim: 100,
        embedding_init: EmbeddingInit::Random,
        kernel_heights: vec![3, 5, 7],
        filters_per_kernel: 128,
        dropout_p: 0.5,
        max_len: 40,
    };
    let policy = EarlyStopPolicy::default();
    let out = train_classifier(&config, &a1, &a2, &policy, 42, None, None).unwrap();
    let m = &out.val_metrics;
    assert!(
        (m.tpr - 0.916).abs() <= 0.07,
        "A2 TPR {} not within ±0.07 of 0.916",
        m.tpr
    );
    assert!(
        (m.tnr - 0.904).abs() <= 0.07,
        "A2 TNR {} not within ±0.07 of 0.904",
        m.tnr
    );

    let ner_a1 = load_ner_split(&dir.join("A1.conll"), Role::Train).unwrap();
    let ner_a2 = load_ner_split(&dir.join("A2.conll"), Role::Validation).unwrap();
    let ner_config = NerConfig {
        word_dim: 100,
        char_dim: 100,
        char_hidden: 100,
        word_hidden: 100,
        dropout_after_char: false,
        dropout_after_word: false,
        embedding_init: EmbeddingInit::Random,
        max_len: 40,
    };
    let ner_out = train_ner(&ner_config, &ner_a1, &ner_a2, &policy, 42, None, None).unwrap();
    let f1 = ner_out.val_metrics.micro_f1;
    assert!(
        (f1 - 0.932).abs() <= 0.05,
        "A2 micro-F1 {f1} not within ±0.05 of 0.932"
    );
    println!(
        "acceptance criterion 5 (published-dataset reproduction): pass \
         (A2 tpr {:.3} tnr {:.3} f1 {:.3})",
        m.tpr, m.tnr, f1
    );
}

// ---------------------------------------------------------------------------
// Criterion 6 — determinism
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_same_seed_same_metrics() {
    let runs = synth_runs();
    let a = &runs.clf_a.val_metrics;
    let b = &runs.clf_b_metrics;
    assert_eq!(a.tpr.to_bits(), b.tpr.to_bits());
    assert_eq!(a.tnr.to_bits(), b.tnr.to_bits());
    assert_eq!(
        (a.true_positives, a.true_negatives, a.false_positives, a.false_negatives),
        (b.true_positives, b.true_negatives, b.false_positives, b.false_negatives)
    );
    assert_eq!(runs.clf_a_losses.len(), runs.clf_b_losses.len());
    for (x, y) in runs.clf_a_losses.iter().zip(&runs.clf_b_losses) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
    assert_eq!(
        runs.ner_a.val_metrics.micro_f1.to_bits(),
        runs.ner_b_metrics.micro_f1.to_bits()
    );
    println!("acceptance criterion 6a (seeded training determinism): pass");
}

#[test]
fn criterion_6_replays_are_byte_identical() {
    let fixture = common::build_pipeline_fixture(2024);
    let replay = common::classifier_corpus("replay", 120, 515, 700_000);
    let csv = common::split_to_csv(&replay, false);
    let input = fixture.dir.path().join("replay.csv");
    std::fs::write(&input, csv).unwrap();

    let cfg = PipelineConfig {
        keyword_file: fixture.keyword_file.clone(),
        classifier_checkpoint: fixture.classifier_ckpt.clone(),
        ner_checkpoint: fixture.ner_ckpt.clone(),
        input,
        output: fixture.dir.path().join("alerts.jsonl"),
        infrastructure_name: Some("case-study".into()),
        threshold_override: None,
        emitted_at: Some(chrono::DateTime::from_timestamp(1486382400, 0).unwrap()),
    };
    let s1 = run_pipeline(&cfg).unwrap();
    let bytes1 = std::fs::read(&cfg.output).unwrap();
    let s2 = run_pipeline(&cfg).unwrap();
    let bytes2 = std::fs::read(&cfg.output).unwrap();
    assert_eq!(s1, s2);
    assert_eq!(bytes1, bytes2);
    assert!(s1.alerts > 0, "replay produced no alerts: {s1:?}");
    assert!(s1.conserved());
    println!(
        "acceptance criterion 6b (byte-identical replays): pass ({} alerts, {} bytes)",
        s1.alerts,
        bytes1.len()
    );
}

// ---------------------------------------------------------------------------
// Criterion 7 — checkpoint round-trip
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_checkpoint_roundtrip_reproduces_metrics() {
    let runs = synth_runs();
    let dir = tempfile::tempdir().unwrap();

    let heldout = common::classifier_corpus("synthetic-heldout", 500, 9292, 100_000);
    let clf_path = dir.path().join("clf.ckpt");
    threatlens::checkpoint::save_classifier(&clf_path, &runs.clf_a.model, &runs.clf_a.vocab)
        .unwrap();
    let loaded = threatlens::checkpoint::load(&clf_path).unwrap();
    let (model, vocab) = match loaded.model {
        threatlens::checkpoint::LoadedModel::Classifier(m) => (m, loaded.vocab),
        _ => panic!("wrong checkpoint kind"),
    };
    let reloaded = evaluate_classifier(&model, &vocab, &heldout).unwrap();
    let original = &runs.clf_a.val_metrics;
    assert_eq!(original.tpr.to_bits(), reloaded.tpr.to_bits());
    assert_eq!(original.tnr.to_bits(), reloaded.tnr.to_bits());

    let ner_val = common::ner_corpus("ner-val", 128, 7002);
    let ner_path = dir.path().join("ner.ckpt");
    threatlens::checkpoint::save_ner(&ner_path, &runs.ner_a.model, &runs.ner_a.vocab).unwrap();
    let loaded = threatlens::checkpoint::load(&ner_path).unwrap();
    let (model, vocab) = match loaded.model {
        threatlens::checkpoint::LoadedModel::Ner(m) => (m, loaded.vocab),
        _ => panic!("wrong checkpoint kind"),
    };
    let reloaded = evaluate_ner(&model, &vocab, &ner_val).unwrap();
    assert_eq!(
        runs.ner_a.val_metrics.micro_f1.to_bits(),
        reloaded.micro_f1.to_bits()
    );
    assert_eq!(runs.ner_a.val_metrics.per_label, reloaded.per_label);
    println!("acceptance criterion 7 (checkpoint round-trip): pass");
}
