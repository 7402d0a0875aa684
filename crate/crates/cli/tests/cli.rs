use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn miscale(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_miscale"))
        .args(args)
        .env("MISCALE_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn key(report: &str, name: &str) -> String {
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{name}=")))
        .unwrap_or_else(|| panic!("missing {name} in\n{report}"))
        .to_string()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn copula_defaults_write_full_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("copula.txt");
    let res = miscale(&["generate-copula", "--seed", "7", "--out", path_str(&out)]);
    assert!(res.status.success(), "{}", stderr(&res));
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("#vocab=2"));
    let body: Vec<&str> = lines.collect();
    assert_eq!(body.len(), 10000);
    assert!(body.iter().all(|l| {
        let toks: Vec<&str> = l.split(' ').collect();
        toks.len() == 512 && toks.iter().all(|t| *t == "0" || *t == "1")
    }));
}

#[test]
fn generators_are_deterministic() {
    let run = |seed: &str| {
        stdout(&miscale(&[
            "generate-copula",
            "--length",
            "64",
            "--sequences",
            "20",
            "--seed",
            seed,
        ]))
    };
    assert_eq!(run("11"), run("11"));
    assert_ne!(run("11"), run("12"));
    let ising = |seed: &str| {
        stdout(&miscale(&[
            "generate-ising",
            "--beta-j",
            "-0.5",
            "--length",
            "500",
            "--seed",
            seed,
        ]))
    };
    assert_eq!(ising("3"), ising("3"));
}

#[test]
fn seed_is_required() {
    let res = miscale(&["generate-copula"]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn repetitive_p_one_alternates() {
    let res = miscale(&[
        "generate-repetitive",
        "--p",
        "1",
        "--length",
        "1000",
        "--seed",
        "5",
    ]);
    assert!(res.status.success());
    let text = stdout(&res);
    let body = text.lines().nth(1).unwrap();
    let syms: Vec<&str> = body.split(' ').collect();
    assert_eq!(syms.len(), 1000);
    for pair in syms.chunks(2) {
        assert!(pair == ["0", "1"] || pair == ["1", "0"]);
    }
    assert!(syms.windows(2).all(|w| w[0] != w[1]));
}

#[test]
fn estimate_and_fit_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("ising.txt");
    let curve = dir.path().join("curve.csv");
    let se = dir.path().join("se.csv");
    assert!(miscale(&[
        "generate-ising",
        "--beta-j",
        "-1.0",
        "--length",
        "200000",
        "--seed",
        "1",
        "--out",
        path_str(&corpus)
    ])
    .status
    .success());
    let res = miscale(&[
        "estimate-mi",
        "--input",
        path_str(&corpus),
        "--lags",
        "1-8",
        "--jackknife-blocks",
        "20",
        "--se-out",
        path_str(&se),
        "--out",
        path_str(&curve),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let csv = fs::read_to_string(&curve).unwrap();
    assert_eq!(csv.lines().count(), 9);
    assert_eq!(
        fs::read_to_string(&se).unwrap().lines().next(),
        Some("tau,se")
    );

    let res = miscale(&["fit", "--input", path_str(&curve), "--model", "exponential"]);
    assert!(res.status.success(), "{}", stderr(&res));
    let report = stdout(&res);
    assert_eq!(key(&report, "model"), "exponential");
    // MI correlation length of the chain is 1 / (2 ln(1 / tanh 1)).
    let xi: f64 = key(&report, "xi").parse().unwrap();
    let expected = 1.0 / (2.0 * (1.0 / 1f64.tanh()).ln());
    assert!(
        (xi - expected).abs() < 0.1 * expected,
        "xi = {xi}, expected {expected}"
    );

    let res = miscale(&["fit", "--input", path_str(&curve)]);
    assert_eq!(key(&stdout(&res), "choice"), "exponential");
}

#[test]
fn missing_input_is_a_data_error() {
    let res = miscale(&[
        "estimate-mi",
        "--input",
        "/nonexistent/corpus.txt",
        "--lags",
        "1",
    ]);
    assert_eq!(res.status.code(), Some(3));
    assert!(stderr(&res).contains("/nonexistent/corpus.txt"));
}

#[test]
fn malformed_corpus_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("bad.txt");
    fs::write(&corpus, "#vocab=2\n0 1 x\n").unwrap();
    let res = miscale(&["estimate-mi", "--input", path_str(&corpus), "--lags", "1"]);
    assert_eq!(res.status.code(), Some(3), "{}", stderr(&res));
}

#[test]
fn empty_gamma_list_is_a_usage_error() {
    let res = miscale(&["benchmark-estimator", "--gammas", "", "--seed", "1"]);
    assert_eq!(res.status.code(), Some(2));
    let res = miscale(&["benchmark-estimator", "--gammas", "2.5", "--seed", "1"]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn linrnn_scalar_example() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("scalar.txt");
    fs::write(
        &params,
        "m = 1\nd = 1\nu_h = 0.5\nw_h = 1\nu_o = 0.2\nsigma2 = 1\nsigma0 = 0 0\n  0 1\n",
    )
    .unwrap();
    let curve = dir.path().join("curve.csv");
    let res = miscale(&[
        "linrnn-analyze",
        "--params",
        path_str(&params),
        "--curve-out",
        path_str(&curve),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let report = stdout(&res);
    assert_eq!(key(&report, "stability"), "decaying");
    let z: f64 = key(&report, "z_min.modulus").parse().unwrap();
    assert!((z - 1.531129).abs() < 1e-6);
    assert_eq!(fs::read_to_string(&curve).unwrap().lines().count(), 201);

    let res = miscale(&[
        "linrnn-sample",
        "--params",
        path_str(&params),
        "--sequences",
        "3",
        "--t-max",
        "5",
        "--seed",
        "2",
    ]);
    assert!(res.status.success());
    let text = stdout(&res);
    assert_eq!(text.lines().next(), Some("seq,t,x0"));
    assert_eq!(text.lines().count(), 1 + 3 * 6);
}

#[test]
fn linrnn_growing_hidden_state_is_memorizing() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("grow.txt");
    fs::write(
        &params,
        "m = 1\nd = 1\nu_h = 2\nw_h = 1\nu_o = 0.2\nsigma2 = 1\nsigma0 = 0 0 0 1\n",
    )
    .unwrap();
    let res = miscale(&[
        "linrnn-analyze",
        "--params",
        path_str(&params),
        "--t-max",
        "20",
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    assert_eq!(key(&stdout(&res), "stability"), "memorizing");
}

#[test]
fn linrnn_bad_dimensions_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("bad.txt");
    fs::write(&params, "m = 2\nd = 1\nu_h = 0.5 0 0\nw_h = 1 1\nu_o = 0.2 0.1\nsigma2 = 1\nsigma0 = 1 0 0 0 1 0 0 0 1\n").unwrap();
    let res = miscale(&["linrnn-analyze", "--params", path_str(&params)]);
    assert_ne!(res.status.code(), Some(0));
    assert!(stderr(&res).contains("u_h"), "{}", stderr(&res));
}

#[test]
fn audit_writes_report_and_curves() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.txt");
    let valid = dir.path().join("valid.txt");
    let text: String = (0..400)
        .map(|i| if i % 7 == 0 { "ab\n" } else { "héllo wörld " })
        .collect();
    fs::write(&train, &text).unwrap();
    fs::write(&valid, &text).unwrap();
    let out_dir = dir.path().join("audit");
    let res = miscale(&[
        "audit-dataset",
        "--train",
        path_str(&train),
        "--valid",
        path_str(&valid),
        "--lags",
        "1-20",
        "--out-dir",
        path_str(&out_dir),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let report = fs::read_to_string(out_dir.join("report.txt")).unwrap();
    assert_eq!(key(&report, "flag"), "false");
    assert!(out_dir.join("train_mi.csv").exists());
    assert!(out_dir.join("valid_mi.csv").exists());
}

#[test]
fn audit_rejects_invalid_utf8() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.txt");
    let valid = dir.path().join("valid.txt");
    fs::write(&train, b"abc\xffdef").unwrap();
    fs::write(&valid, b"abcdef").unwrap();
    let res = miscale(&[
        "audit-dataset",
        "--train",
        path_str(&train),
        "--valid",
        path_str(&valid),
        "--out-dir",
        path_str(&dir.path().join("o")),
    ]);
    assert_eq!(res.status.code(), Some(3));
}
