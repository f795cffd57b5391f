use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

fn run(args: &[&str], stdin: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_pronspace"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(stdin.as_bytes())
        .unwrap();
    child.wait_with_output().unwrap()
}

fn ok(args: &[&str], stdin: &str) -> String {
    let out = run(args, stdin);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn zh_lex() -> String {
    fixture("table1_zh.tsv").display().to_string()
}

fn en_lex() -> String {
    fixture("table1_en.dict").display().to_string()
}

#[test]
fn convert_reproduces_examples() {
    let zh = ok(
        &["convert", "--lang", "zh", "--lexicon", &zh_lex()],
        &fs::read_to_string(fixture("table1.zh")).unwrap(),
    );
    assert_eq!(
        zh,
        "er_4-ling_2-ling_2-wu_3 nian_2 yi_1 yue_4 san_1-shi_2-yi_1 ri_4\n\
         wan_3-can_1 xiang_3 chi_1 niu_2-rou_4 ji_1-rou_4 huo_4-shi_4 yu_2\n"
    );
    let en = ok(
        &["convert", "--lang", "en", "--lexicon", &en_lex()],
        &fs::read_to_string(fixture("table1.en")).unwrap(),
    );
    assert_eq!(
        en,
        "th-er-d-iy-w-ah-n jh-ae-n-y-uw-eh-r-iy t-uw-th-aw-z-ah-n-d-ah-n-d-f-ay-v\n\
         w-ih-ch w-uh-d y-uw l-ay-k f-ao-r d-ih-n-er b-iy-f ch-ih-k-ah-n ao-r f-ih-sh\n"
    );
}

#[test]
fn rejected_lines_go_to_sink() {
    let dir = tempfile::tempdir().unwrap();
    let rejects = dir.path().join("rejects.tsv");
    let out = ok(
        &[
            "convert",
            "--lang",
            "en",
            "--lexicon",
            &en_lex(),
            "--g2p",
            "none",
            "--rejects",
            p(&rejects),
        ],
        "you like fish\nyou like zzyzx\n",
    );
    assert_eq!(out, "y-uw l-ay-k f-ih-sh\n");
    assert_eq!(
        fs::read_to_string(&rejects).unwrap(),
        "2\tno-pronunciation\tzzyzx\tyou like zzyzx\n"
    );
}

#[test]
fn usage_errors_exit_one() {
    let out = run(&["convert", "--lang", "en"], "");
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--lexicon"));

    let out = run(&["frobnicate"], "");
    assert_eq!(out.status.code(), Some(1));

    let out = run(
        &[
            "convert",
            "--lang",
            "en",
            "--lexicon",
            "/no/such/lexicon.dict",
        ],
        "",
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/lexicon.dict"));

    let out = run(
        &[
            "convert",
            "--lang",
            "en",
            "--lexicon",
            &en_lex(),
            "--pron-policy",
            "random",
        ],
        "",
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
}

#[test]
fn version_lists_data_files() {
    let out = ok(&["--version"], "");
    assert!(out.starts_with("pronspace "));
    assert!(out.contains("zh-numerals v1"));
    assert!(out.contains("subword-model v1"));
}

#[test]
fn jobs_do_not_change_output() {
    let input: String = (0..300).map(|i| format!("you like {i} fish\n")).collect();
    let one = ok(
        &[
            "--jobs",
            "1",
            "convert",
            "--lang",
            "en",
            "--lexicon",
            &en_lex(),
        ],
        &input,
    );
    let four = ok(
        &[
            "--jobs",
            "4",
            "convert",
            "--lang",
            "en",
            "--lexicon",
            &en_lex(),
        ],
        &input,
    );
    assert_eq!(one, four);
    assert_eq!(one.lines().count(), 300);
}

#[test]
fn subword_pipeline_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let en = ok(
        &["convert", "--lang", "en", "--lexicon", &en_lex()],
        "which would you like for dinner\nyou like fish\nbeef or chicken or fish\n",
    );
    let corpus = dir.path().join("corpus.txt");
    fs::write(&corpus, &en).unwrap();

    for (cmd, extra) in [
        ("learn-bpe", vec!["--lang", "en", "--merges", "12"]),
        ("learn-syllables", vec!["--merges", "12"]),
    ] {
        let model = dir.path().join(format!("{cmd}.model"));
        let mut args = vec![cmd, "--input", p(&corpus), "--model", p(&model)];
        args.extend(extra);
        ok(&args, "");
        let encoded = ok(&["apply-bpe", "--model", p(&model), "--strict"], &en);
        assert!(encoded.lines().all(|l| l.starts_with('▁')));
        assert_ne!(encoded, en);
        let decoded = ok(&["decode-bpe", "--model", p(&model), "--strict"], &encoded);
        assert_eq!(decoded, en);
    }
}

#[test]
fn learn_bpe_default_budget_and_chinese() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("zh.model");
    let zh = "ni_3-hao_3 shi_4-jie_4\nni_3-hao_3\n";
    ok(&["learn-bpe", "--lang", "zh", "--model", p(&model)], zh);
    let text = fs::read_to_string(&model).unwrap();
    assert!(text.lines().nth(1).unwrap().contains("m=16000"));
    let encoded = ok(&["apply-bpe", "--model", p(&model)], zh);
    assert_eq!(encoded.lines().next().unwrap(), "▁ni_3-hao_3 ▁shi_4-jie_4");
    assert_eq!(ok(&["decode-bpe", "--model", p(&model)], &encoded), zh);
}

#[test]
fn decode_rejects_unknown_symbols_when_strict() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m");
    ok(
        &[
            "learn-bpe",
            "--lang",
            "en",
            "--model",
            p(&model),
            "--merges",
            "0",
        ],
        "l-ay-k\n",
    );
    let out = run(&["decode-bpe", "--model", p(&model), "--strict"], "▁zh\n");
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["apply-bpe", "--model", p(&model)], "not_a_phoneme\n");
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("<stdin>:1"));
}

#[test]
fn corrupt_model_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m");
    fs::write(&model, "pronspace-subword v9\n").unwrap();
    let out = run(&["apply-bpe", "--model", p(&model)], "l-ay\n");
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("version"));
}

#[test]
fn build_dataset_counts_rejections() {
    let dir = tempfile::tempdir().unwrap();
    let zh = dir.path().join("in.zh");
    let en = dir.path().join("in.en");
    fs::copy(fixture("table1.zh"), &zh).unwrap();
    fs::write(
        &en,
        "31 January 2005\nwhich would you like for qqdinnerx ?\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    ok(
        &[
            "build-dataset",
            "--zh",
            p(&zh),
            "--en",
            p(&en),
            "--out",
            p(&out),
            "--zh-lexicon",
            &zh_lex(),
            "--en-lexicon",
            &en_lex(),
            "--en-g2p",
            "none",
            "--jsonl",
        ],
        "",
    );
    assert_eq!(
        fs::read_to_string(out.join("dataset.tsv"))
            .unwrap()
            .lines()
            .count(),
        1
    );
    assert_eq!(
        fs::read_to_string(out.join("dataset.jsonl"))
            .unwrap()
            .lines()
            .count(),
        1
    );
    assert_eq!(
        fs::read_to_string(out.join("rejects.tsv")).unwrap(),
        "2\ten\tno-pronunciation\tqqdinnerx\n"
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["counters"]["kept"], 1);
    assert_eq!(manifest["counters"]["rejected_en"], 1);
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["inputs"].as_object().unwrap().len(), 4);
}

#[test]
fn build_dataset_line_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let zh = dir.path().join("in.zh");
    let en = dir.path().join("in.en");
    fs::write(&zh, "想\n想\n想\n").unwrap();
    fs::write(&en, "you\nyou\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = run(
        &[
            "build-dataset",
            "--zh",
            p(&zh),
            "--en",
            p(&en),
            "--out",
            p(&out_dir),
            "--zh-lexicon",
            &zh_lex(),
            "--en-lexicon",
            &en_lex(),
        ],
        "",
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("3 line(s)") && err.contains("has 2"), "{err}");
    let manifest = fs::read_to_string(out_dir.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"status\": \"failed\""));
}

fn synthetic_dataset(path: &Path, n: usize) {
    let mut text = String::new();
    for i in 0..n {
        text.push_str(&format!("想 {i}\tyou {i}\txiang_3 yi_1\ty-uw w-ah-n\n"));
    }
    fs::write(path, text).unwrap();
}

#[test]
fn split_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.tsv");
    synthetic_dataset(&data, 10);
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        ok(
            &[
                "split",
                p(&data),
                "--out",
                p(&out),
                "--dev",
                "2",
                "--test",
                "2",
                "--seed",
                "42",
            ],
            "",
        );
        let files: Vec<String> = ["train", "dev", "test"]
            .iter()
            .map(|s| fs::read_to_string(out.join(format!("{s}.tsv"))).unwrap())
            .collect();
        let mut manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
        manifest.as_object_mut().unwrap().remove("timing");
        manifest.as_object_mut().unwrap().remove("args");
        runs.push((files, manifest));
    }
    assert_eq!(runs[0], runs[1]);
    let sizes: Vec<usize> = runs[0].0.iter().map(|f| f.lines().count()).collect();
    assert_eq!(sizes, [6, 2, 2]);

    let too_big = run(
        &[
            "split",
            p(&data),
            "--out",
            p(&dir.path().join("c")),
            "--dev",
            "8",
            "--test",
            "8",
            "--seed",
            "1",
        ],
        "",
    );
    assert_eq!(too_big.status.code(), Some(1));
}

#[test]
fn stats_prints_json() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.tsv");
    synthetic_dataset(&data, 3);
    let out = ok(&["stats", p(&data)], "");
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["entries"], 3);
    assert_eq!(v["distinct_pinyins"], 2);
}

#[test]
fn bleu_prints_human_and_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let hyp = dir.path().join("hyp");
    let reference = dir.path().join("ref");
    fs::write(&hyp, "A b c d\n").unwrap();
    fs::write(&reference, "a b c d e\n").unwrap();
    let out = ok(&["bleu", "--hyp", p(&hyp), "--ref", p(&reference)], "");
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("BLEU = 77.88,"));
    let v: serde_json::Value = serde_json::from_str(lines[1]).unwrap();
    assert!((v["bleu"].as_f64().unwrap() - 77.88).abs() < 0.01);

    let cased = ok(
        &[
            "bleu",
            "--hyp",
            p(&hyp),
            "--ref",
            p(&reference),
            "--no-lowercase",
        ],
        "",
    );
    assert!(cased.starts_with("BLEU = 0.00"));
}

#[test]
fn bleu_in_pronunciation_space() {
    let dir = tempfile::tempdir().unwrap();
    let hyp = dir.path().join("hyp");
    let reference = dir.path().join("ref");
    fs::write(&hyp, "w-uh-d y-uw l-ay-k\n").unwrap();
    fs::write(&reference, "w-uh-d y-uw l-ay-k\n").unwrap();
    let out = ok(
        &[
            "bleu",
            "--hyp",
            p(&hyp),
            "--ref",
            p(&reference),
            "--space",
            "pron",
        ],
        "",
    );
    assert!(out.starts_with("BLEU = 100.00"));

    // Text converted on the fly scores the same as its pronunciation.
    let text = dir.path().join("text");
    fs::write(&text, "would you like\n").unwrap();
    let out = ok(
        &[
            "bleu",
            "--hyp",
            p(&text),
            "--ref",
            p(&text),
            "--space",
            "pron",
            "--lexicon",
            &en_lex(),
        ],
        "",
    );
    let v: serde_json::Value = serde_json::from_str(out.lines().nth(1).unwrap()).unwrap();
    assert_eq!(v["hyp_length"], 8);
    assert_eq!(v["bleu"], 100.0);

    let short = dir.path().join("short");
    fs::write(&short, "a\nb\n").unwrap();
    let out = run(&["bleu", "--hyp", p(&short), "--ref", p(&hyp)], "");
    assert_eq!(out.status.code(), Some(1));
}
