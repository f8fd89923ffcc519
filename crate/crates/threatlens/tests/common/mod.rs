//! Synthetic corpora and trained fixtures shared by the integration
//! suites.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use threatlens::classifier::{ClassifierConfig, EmbeddingInit};
use threatlens::ner::{Label, NerConfig};
use threatlens::tensor::seeded_rng;
use threatlens::textprep::{build_vocabulary, AccountSet, Tweet, Vocabulary};
use threatlens::trainer::{
    train_classifier, train_ner, ClassificationSplit, EarlyStopPolicy, LabeledTweet, NerSentence,
    NerSplit, Role, TrainedClassifier, TrainedNer,
};

/// Tokens whose presence makes a tweet relevant.
pub const TRIGGERS: [&str; 6] = [
    "exploit",
    "vulnerability",
    "malware",
    "0day",
    "backdoor",
    "ransomware",
];

const INFRA: [&str; 12] = [
    "linux", "kernel", "windows", "tomcat", "apache", "flash", "firefox", "microsoft", "adobe",
    "vmware", "broadcom", "openssl",
];

const CHATTER: [&str; 18] = [
    "coffee", "sunny", "meeting", "lunch", "travel", "music", "weekend", "birthday", "garden",
    "recipe", "movie", "football", "holiday", "morning", "puppy", "painting", "concert", "novel",
];

const TECH_FILLER: [&str; 10] = [
    "server", "cloud", "deploy", "release", "update", "config", "network", "cluster", "backup",
    "monitor",
];

fn make_tweet(id: usize, text: &str) -> Tweet {
    Tweet {
        id: id.to_string(),
        account: format!("account{}", id % 7),
        posted_at: Utc
            .with_ymd_and_hms(2017, 1, 1 + (id % 27) as u32, (id % 24) as u32, 0, 0)
            .unwrap(),
        text: text.to_owned(),
        account_set: if id % 5 == 0 {
            AccountSet::S2
        } else {
            AccountSet::S1
        },
    }
}

fn labeled(id: usize, text: &str, relevant: bool) -> LabeledTweet {
    let tweet = make_tweet(id, text);
    let tokens = threatlens::textprep::normalize(text).unwrap();
    LabeledTweet {
        tweet,
        tokens,
        relevant,
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &[&'a str]) -> &'a str {
    pool.choose(rng).expect("non-empty pool")
}

/// One synthetic tweet text plus its relevance. Relevant tweets always
/// carry at least one trigger token; irrelevant tweets never do.
pub fn synth_tweet_text(rng: &mut ChaCha8Rng, relevant: bool) -> String {
    let len = rng.gen_range(6..=12);
    let mut words: Vec<String> = Vec::with_capacity(len + 2);
    for _ in 0..len {
        let w = match rng.gen_range(0..3) {
            0 => pick(rng, &INFRA),
            1 => pick(rng, &TECH_FILLER),
            _ => pick(rng, &CHATTER),
        };
        words.push(w.to_owned());
    }
    if relevant {
        let count = 1 + usize::from(rng.gen_bool(0.3));
        for _ in 0..count {
            let at = rng.gen_range(0..=words.len());
            words.insert(at, pick(rng, &TRIGGERS).to_owned());
        }
        // A versioned token now and then, so ids stay in-distribution.
        if rng.gen_bool(0.4) {
            let at = rng.gen_range(0..=words.len());
            words.insert(at, format!("cve-2017-{:04}", rng.gen_range(0..10000)));
        }
    }
    words.join(" ")
}

/// `n` tweets, half relevant, deterministic under `seed`.
pub fn classifier_corpus(name: &str, n: usize, seed: u64, id_offset: usize) -> ClassificationSplit {
    let mut rng = seeded_rng(seed);
    let examples = (0..n)
        .map(|i| {
            let relevant = i % 2 == 0;
            labeled(id_offset + i, &synth_tweet_text(&mut rng, relevant), relevant)
        })
        .collect();
    ClassificationSplit::from_examples(name, Role::Train, examples)
}

/// Serialize a split back to the tweet CSV replay format.
pub fn split_to_csv(split: &ClassificationSplit, with_label: bool) -> String {
    let mut out = String::from("id,account,posted_at,account_set,text");
    if with_label {
        out.push_str(",label");
    }
    out.push('\n');
    for ex in &split.examples {
        let set = match ex.tweet.account_set {
            AccountSet::S1 => "S1",
            AccountSet::S2 => "S2",
        };
        assert!(!ex.tweet.text.contains([',', '"', '\n']));
        out.push_str(&format!(
            "{},{},{},{},{}",
            ex.tweet.id,
            ex.tweet.account,
            ex.tweet.posted_at.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            set,
            ex.tweet.text
        ));
        if with_label {
            out.push_str(if ex.relevant { ",1" } else { ",0" });
        }
        out.push('\n');
    }
    out
}

const PRODUCTS: [&[&str]; 8] = [
    &["linux", "kernel"],
    &["apache", "tomcat"],
    &["adobe", "flash", "player"],
    &["windows"],
    &["firefox"],
    &["vmware", "player"],
    &["red", "hat"],
    &["broadcom"],
];

const ORGS: [&[&str]; 3] = [&["microsoft"], &["mozilla"], &["google"]];

const VULNS: [&[&str]; 7] = [
    &["local", "denial", "of", "service", "vulnerability"],
    &["memory", "corruption", "vulnerability"],
    &["security", "bypass", "vulnerability"],
    &["privilege", "escalation", "vulnerability"],
    &["stack-based", "buffer", "overflow", "vulnerability"],
    &["type", "confusion", "remote", "code", "execution", "vulnerability"],
    &["multiple", "security", "vulnerabilities"],
];

const VERSIONS: [&str; 5] = ["12.x", "8.5.1", "2.4.25", "10.0", "52.0.2"];

const TRAILERS: [&str; 4] = ["bugtraq", "advisory", "patch", "report"];

/// Identifiers seen in the wild; a few fixed ones keep the well-known
/// examples in-distribution, the rest are generated.
fn synth_id(rng: &mut ChaCha8Rng) -> String {
    match rng.gen_range(0..5) {
        0 => "cve-2017-5546".to_owned(),
        1 if rng.gen_bool(0.5) => "cve-2017-0016".to_owned(),
        1 => "zdi-17-109".to_owned(),
        2 => "cve-2016-6816".to_owned(),
        3 => format!("cve-201{}-{:04}", rng.gen_range(6..8), rng.gen_range(0..10000)),
        _ => format!("zdi-17-{:03}", rng.gen_range(0..1000)),
    }
}

fn push_all(tokens: &mut Vec<String>, labels: &mut Vec<Label>, words: &[&str], label: Label) {
    for w in words {
        tokens.push((*w).to_owned());
        labels.push(label);
    }
}

/// One templated vulnerability announcement, mirroring the observed tweet
/// shapes: `vuln: <PRO> <ID> <VUL…>`, `<ID> : <PRO…> <VUL…>`, with
/// optional ORG, VER, and trailing noise tokens.
pub fn synth_ner_sentence(rng: &mut ChaCha8Rng) -> NerSentence {
    let mut tokens = Vec::new();
    let mut labels = Vec::new();
    let template = rng.gen_range(0..4);
    match template {
        0 => {
            push_all(&mut tokens, &mut labels, &["vuln:"], Label::O);
            push_all(&mut tokens, &mut labels, pick_slice(rng, &PRODUCTS), Label::Pro);
            let id = synth_id(rng);
            tokens.push(id);
            labels.push(Label::Id);
            push_all(&mut tokens, &mut labels, pick_slice(rng, &VULNS), Label::Vul);
        }
        1 => {
            let id = synth_id(rng);
            tokens.push(id);
            labels.push(Label::Id);
            push_all(&mut tokens, &mut labels, &[":"], Label::O);
            push_all(&mut tokens, &mut labels, pick_slice(rng, &PRODUCTS), Label::Pro);
            push_all(&mut tokens, &mut labels, pick_slice(rng, &VULNS), Label::Vul);
        }
        2 => {
            push_all(&mut tokens, &mut labels, &["vuln:"], Label::O);
            push_all(&mut tokens, &mut labels, pick_slice(rng, &ORGS), Label::Org);
            push_all(&mut tokens, &mut labels, pick_slice(rng, &PRODUCTS), Label::Pro);
            let id = synth_id(rng);
            tokens.push(id);
            labels.push(Label::Id);
            push_all(&mut tokens, &mut labels, pick_slice(rng, &VULNS), Label::Vul);
        }
        _ => {
            push_all(&mut tokens, &mut labels, &["vuln:"], Label::O);
            push_all(&mut tokens, &mut labels, pick_slice(rng, &PRODUCTS), Label::Pro);
            tokens.push(pick(rng, &VERSIONS).to_owned());
            labels.push(Label::Ver);
            push_all(&mut tokens, &mut labels, pick_slice(rng, &VULNS), Label::Vul);
        }
    }
    if rng.gen_bool(0.4) {
        push_all(&mut tokens, &mut labels, &[pick(rng, &TRAILERS)], Label::O);
    }
    NerSentence { tokens, labels }
}

fn pick_slice<'a>(rng: &mut ChaCha8Rng, pool: &[&'a [&'a str]]) -> &'a [&'a str] {
    pool.choose(rng).expect("non-empty pool")
}

pub fn ner_corpus(name: &str, n: usize, seed: u64) -> NerSplit {
    let mut rng = seeded_rng(seed);
    let sentences = (0..n).map(|_| synth_ner_sentence(&mut rng)).collect();
    NerSplit::from_sentences(name, Role::Train, sentences)
}

/// Write a CoNLL file for a split.
pub fn split_to_conll(split: &NerSplit) -> String {
    let mut out = String::new();
    for s in &split.sentences {
        for (t, l) in s.tokens.iter().zip(&s.labels) {
            out.push_str(t);
            out.push('\t');
            out.push_str(l.as_str());
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

/// Small trained pipeline over a shared vocabulary, checkpointed into a
/// directory: classifier, tagger, keyword file, and a replay CSV.
pub struct PipelineFixture {
    pub dir: tempfile::TempDir,
    pub classifier_ckpt: PathBuf,
    pub ner_ckpt: PathBuf,
    pub keyword_file: PathBuf,
    pub vocab: Vocabulary,
    pub classifier: TrainedClassifier,
    pub ner: TrainedNer,
}

pub fn small_classifier_config() -> ClassifierConfig {
    ClassifierConfig {
        embedding_dim: 32,
        embedding_init: EmbeddingInit::Random,
        kernel_heights: vec![2, 3, 4],
        filters_per_kernel: 16,
        dropout_p: 0.3,
        max_len: 40,
    }
}

pub fn small_ner_config() -> NerConfig {
    NerConfig {
        word_dim: 32,
        char_dim: 12,
        char_hidden: 16,
        word_hidden: 16,
        dropout_after_char: false,
        dropout_after_word: false,
        embedding_init: EmbeddingInit::Random,
        max_len: 40,
    }
}

/// Train both stages over one shared vocabulary and write everything a
/// pipeline run needs into a temp directory.
pub fn build_pipeline_fixture(seed: u64) -> PipelineFixture {
    let clf_train = classifier_corpus("clf-train", 240, seed, 0);
    let clf_val = classifier_corpus("clf-val", 60, seed + 1, 10_000);
    let ner_train = ner_corpus("ner-train", 96, seed + 2);
    let ner_val = ner_corpus("ner-val", 32, seed + 3);

    // Shared vocabulary across both models; the pipeline requires
    // matching hashes.
    let union: Vec<&[String]> = clf_train
        .examples
        .iter()
        .map(|e| e.tokens.as_slice())
        .chain(ner_train.sentences.iter().map(|s| s.tokens.as_slice()))
        .collect();
    let vocab = build_vocabulary(union, 1).unwrap();

    let clf_policy = EarlyStopPolicy {
        max_epochs: 20,
        batch_size: 32,
        patience: 5,
    };
    let classifier = train_classifier(
        &small_classifier_config(),
        &clf_train,
        &clf_val,
        &clf_policy,
        seed,
        None,
        Some(vocab.clone()),
    )
    .unwrap();

    let ner_policy = EarlyStopPolicy {
        max_epochs: 30,
        batch_size: 16,
        patience: 6,
    };
    let ner = train_ner(
        &small_ner_config(),
        &ner_train,
        &ner_val,
        &ner_policy,
        seed + 7,
        None,
        Some(vocab.clone()),
    )
    .unwrap();

    let dir = tempfile::tempdir().unwrap();
    let classifier_ckpt = dir.path().join("classifier.ckpt");
    let ner_ckpt = dir.path().join("ner.ckpt");
    threatlens::checkpoint::save_classifier(&classifier_ckpt, &classifier.model, &vocab).unwrap();
    threatlens::checkpoint::save_ner(&ner_ckpt, &ner.model, &vocab).unwrap();

    let keyword_file = dir.path().join("assets.txt");
    fs::write(
        &keyword_file,
        "# monitored assets\nlinux\nkernel\nwindows\ntomcat\napache\nflash\nfirefox\nmicrosoft\nadobe\nvmware\nbroadcom\nopenssl\n",
    )
    .unwrap();

    PipelineFixture {
        dir,
        classifier_ckpt,
        ner_ckpt,
        keyword_file,
        vocab,
        classifier,
        ner,
    }
}

pub fn write_file(path: &Path, contents: &str) {
    fs::write(path, contents).unwrap();
}
