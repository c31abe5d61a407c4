mod common;

use common::*;
use mixturepfn_core::matrix::euclidean;
use mixturepfn_core::micp::{self, ClusterMode, MicpConfig};
use mpfn::commands;
use mpfn::config::RunConfig;
use mpfn::synth;

#[test]
fn reference_predictor_separates_two_blobs() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = synth::split_head(&synth::two_blobs(2500, 1), 2000);
    let tr = write_csv(dir.path(), "train.csv", &train);
    let te = write_csv(dir.path(), "test.csv", &test);
    let out = dir.path().join("out");
    let o = mpfn(&[
        "--out",
        s(&out),
        "predict",
        "--train",
        s(&tr),
        "--test",
        s(&te),
        "--budget",
        "500",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = read_json(&out.join("metrics.json"));
    assert!(m["accuracy"].as_f64().unwrap() >= 0.99, "{m}");
    assert_eq!(m["k"], 4);
    assert_eq!(m["max_context_size"], 500);
    let preds = std::fs::read_to_string(out.join("predictions.csv")).unwrap();
    let mut lines = preds.lines();
    assert_eq!(lines.next(), Some("row_id,predicted,p_0,p_1"));
    for (i, l) in lines.enumerate() {
        assert!(l.starts_with(&format!("{i},")));
    }
    let cfg = read_json(&out.join("resolved_config.json"));
    assert_eq!(cfg["budget"], 500);
    assert_eq!(cfg["n_ensemble"], 16);
}

#[test]
fn prompter_count_follows_the_ceiling_formula() {
    let dir = tempfile::tempdir().unwrap();
    let small = write_csv(dir.path(), "small.csv", &synth::two_blobs(100, 2));
    let out = dir.path().join("o1");
    let o = mpfn(&["--out", s(&out), "fit", "--train", s(&small)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(read_json(&out.join("fit_report.json"))["k"], 1);
    assert!(out.join("model.micp").exists() && out.join("model.json").exists());

    let big = write_csv(
        dir.path(),
        "big.csv",
        &synth::gaussian_mixture(9000, 3, 5, 4.0, 3),
    );
    let out = dir.path().join("o2");
    let o = mpfn(&[
        "--out",
        s(&out),
        "fit",
        "--train",
        s(&big),
        "--kmeans-iters",
        "20",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = read_json(&out.join("fit_report.json"));
    assert_eq!(r["k"], 3);
    assert_eq!(
        r["cluster_sizes"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_u64().unwrap())
            .sum::<u64>(),
        9000
    );
}

#[test]
fn sweep_reports_k_per_gamma() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = synth::split_head(&synth::gaussian_mixture(9100, 2, 4, 4.0, 4), 9000);
    let tr = write_csv(dir.path(), "train.csv", &train);
    let te = write_csv(dir.path(), "test.csv", &test);
    let out = dir.path().join("out");
    let o = mpfn(&[
        "--out",
        s(&out),
        "sweep-gamma",
        "--train",
        s(&tr),
        "--test",
        s(&te),
        "--gammas",
        "1,3,5",
        "--n-ensemble",
        "1",
        "--kmeans-iters",
        "10",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let ks: Vec<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(ks, ["3", "9", "15"]);
    assert!(csv.starts_with("gamma,k,accuracy,mean_ll,mean_prompt_size\n"));

    let o = mpfn(&[
        "--out",
        s(&out),
        "sweep-gamma",
        "--train",
        s(&tr),
        "--test",
        s(&te),
        "--gammas",
        "1",
    ]);
    assert_eq!(code(&o), 3);
}

#[test]
fn error_surface_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let missing = dir.path().join("nope.csv");
    let o = mpfn(&["--out", s(&out), "fit", "--train", s(&missing)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("nope.csv"), "{}", stderr(&o));

    let ragged = dir.path().join("ragged.csv");
    std::fs::write(&ragged, "a,label\n1,x\n2\n").unwrap();
    assert_eq!(
        code(&mpfn(&["--out", s(&out), "fit", "--train", s(&ragged)])),
        2
    );

    let tr = write_csv(dir.path(), "train.csv", &synth::two_blobs(200, 5));
    let o = mpfn(&["--out", s(&out), "fit", "--train", s(&tr), "--gamma", "0"]);
    assert_eq!(code(&o), 3);
    let o = mpfn(&[
        "--out",
        s(&out),
        "fit",
        "--train",
        s(&tr),
        "--mode",
        "spectral",
    ]);
    assert_eq!(code(&o), 3);
    let o = mpfn(&["--out", s(&out), "fit", "--train", s(&tr), "--preset", "9"]);
    assert_eq!(code(&o), 3);
    assert_eq!(code(&mpfn(&["--out", s(&out), "fitt"])), 3);

    // model fitted on 2 features, data with 3
    assert_eq!(
        code(&mpfn(&["--out", s(&out), "fit", "--train", s(&tr)])),
        0
    );
    let wide = synth::gaussian_mixture(200, 3, 2, 3.0, 6);
    let wtr = write_csv(dir.path(), "wide_train.csv", &wide);
    let wte = write_csv(dir.path(), "wide_test.csv", &wide);
    let o = mpfn(&[
        "--out",
        s(&out),
        "predict",
        "--train",
        s(&wtr),
        "--test",
        s(&wte),
        "--model",
        s(&out.join("model.micp")),
    ]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("features"));

    let o = mpfn(&[
        "--out",
        s(&out),
        "predict",
        "--train",
        s(&tr),
        "--test",
        s(&tr),
        "--predictor",
        "external:/definitely/not/a/bridge",
    ]);
    assert_eq!(code(&o), 4);
}

#[test]
fn exit_code_map() {
    use commands::CliError::*;
    let codes: Vec<i32> = [
        Io(String::new()),
        Data(String::new()),
        Config(String::new()),
        Predictor(String::new()),
        Theorem(String::new()),
    ]
    .iter()
    .map(|e| e.exit_code())
    .collect();
    assert_eq!(codes, [1, 2, 3, 4, 5]);
}

#[test]
fn theorem_audit_plain_fraction_matches_exhaustive_recount() {
    let dir = tempfile::tempdir().unwrap();
    let tr = write_csv(
        dir.path(),
        "train.csv",
        &synth::elongated_clusters(1200, 2, 6, 8),
    );
    let out = dir.path().join("out");
    let o = mpfn(&[
        "--out",
        s(&out),
        "--seed",
        "3",
        "theorem-audit",
        "--train",
        s(&tr),
        "--budget",
        "60",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = read_json(&out.join("theorem_audit.json"));
    assert_eq!(report["constrained"]["fraction"], 1.0);
    assert_eq!(report["guarantee_holds"], true);
    assert!(stdout(&o).contains("constrained: 1200/1200"));

    // recount on the same preprocessed rows with brute-force neighbours
    let cfg = RunConfig {
        train: Some(tr.clone()),
        budget: 60,
        seed: 3,
        ..RunConfig::default()
    };
    let train = commands::load(&cfg, false).unwrap().train;
    let model = micp::fit(
        &train.features,
        &MicpConfig {
            mode: ClusterMode::Plain,
            self_routing: false,
            ..cfg.micp_config().unwrap()
        },
    )
    .unwrap();
    let x = &train.features;
    let mut nonzero = 0;
    for i in 0..x.rows() {
        let q = x.row(i);
        let route = (0..model.k())
            .min_by(|&a, &b| {
                euclidean(model.centers().row(a), q)
                    .total_cmp(&euclidean(model.centers().row(b), q))
                    .then(a.cmp(&b))
            })
            .unwrap();
        let mut all: Vec<(f64, usize)> = x.iter_rows().map(|p| euclidean(p, q)).zip(0..).collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let support = &model.prompt_supports()[route];
        if all[..60].iter().any(|p| support.contains(&p.1)) {
            nonzero += 1;
        }
    }
    assert_eq!(report["plain"]["nonzero"], nonzero);
    let f = report["plain"]["fraction"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&f));
    assert_eq!(f, nonzero as f64 / 1200.0);
}

fn write_records(dir: &std::path::Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(
        &p,
        format!("algorithm,dataset,fold,accuracy,mean_ll,status\n{body}"),
    )
    .unwrap();
    p
}

#[test]
fn report_prints_winner_or_paradox() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let mut body = String::new();
    for d in 0..4 {
        body += &format!(
            "best,d{d},0,0.95,-0.1,ok\nmid,d{d},0,0.8,-0.3,ok\nlow,d{d},0,0.{},-0.5,ok\n",
            6 + d % 2
        );
    }
    body += "low,d9,0,,,failed\n";
    let p = write_records(dir.path(), "r.csv", &body);
    let o = mpfn(&["--out", s(&out), "report", "--results", s(&p)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "Condorcet winner: best");
    let condorcet = std::fs::read_to_string(out.join("condorcet.csv")).unwrap();
    assert_eq!(
        condorcet,
        "algorithm,votes,wins,ties,losses\nbest,8,2,0,0\nmid,4,1,0,1\nlow,0,0,0,2\n"
    );
    let ranks = std::fs::read_to_string(out.join("mean_rank.csv")).unwrap();
    assert!(ranks.contains("best,1.0,0.0,1.0,1.0,1.0,4"), "{ranks}");
    assert!(out.join("pairwise.csv").exists() && out.join("wilcoxon.csv").exists());

    let cyc = "a,d1,0,0.9,-0.1,ok\nb,d1,0,0.8,-0.1,ok\nc,d1,0,0.7,-0.1,ok\n\
               b,d2,0,0.9,-0.1,ok\nc,d2,0,0.8,-0.1,ok\na,d2,0,0.7,-0.1,ok\n\
               c,d3,0,0.9,-0.1,ok\na,d3,0,0.8,-0.1,ok\nb,d3,0,0.7,-0.1,ok\n";
    let p = write_records(dir.path(), "cycle.csv", cyc);
    let o = mpfn(&["--out", s(&out), "report", "--results", s(&p)]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).trim(), "no Condorcet winner");

    let bad = write_records(
        dir.path(),
        "bad.csv",
        "a,d1,0,0.9,-0.1,ok\na,d2,0,1.5,-0.1,ok\n",
    );
    let o = mpfn(&["--out", s(&out), "report", "--results", s(&bad)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn finetune_writes_adapters_and_curve() {
    let dir = tempfile::tempdir().unwrap();
    let tr = write_csv(dir.path(), "train.csv", &synth::two_blobs(300, 9));
    let out = dir.path().join("out");
    let curve = dir.path().join("curve.csv");
    let o = mpfn(&[
        "--out",
        s(&out),
        "finetune",
        "--train",
        s(&tr),
        "--curve",
        s(&curve),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let a = read_json(&out.join("adapters.json"));
    assert_eq!(a["bandwidth"].as_f64().unwrap(), 2f64.sqrt());
    assert_eq!(a["bias"].as_array().unwrap().len(), 2);
    assert_eq!(a["bootstrap_mode"], "small");
    let text = std::fs::read_to_string(&curve).unwrap();
    assert_eq!(text.lines().count(), 129);
    assert!(text.starts_with("iter,loss\n0,"));

    // the adapters feed back into predict
    let o = mpfn(&[
        "--out",
        s(&out),
        "predict",
        "--train",
        s(&tr),
        "--test",
        s(&tr),
        "--adapters",
        s(&out.join("adapters.json")),
        "--n-ensemble",
        "1",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let o = mpfn(&[
        "--out",
        s(&out),
        "finetune",
        "--train",
        s(&tr),
        "--learning-rate",
        "0",
    ]);
    assert_eq!(code(&o), 0);
    let a = read_json(&out.join("adapters.json"));
    assert_eq!(
        (a["temperature"].as_f64(), a["bias"][0].as_f64()),
        (Some(1.0), Some(0.0))
    );
}

#[test]
fn preprocess_presets_shape_the_features() {
    let dir = tempfile::tempdir().unwrap();
    let wide = synth::gaussian_mixture(120, 60, 2, 1.0, 10);
    let tr = write_csv(dir.path(), "wide.csv", &wide);
    let out = dir.path().join("out");
    let o = mpfn(&[
        "--out",
        s(&out),
        "preprocess",
        "--train",
        s(&tr),
        "--preset",
        "3",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = read_json(&out.join("preprocess_report.json"));
    assert_eq!(r["n_features"], 50);
    let header = std::fs::read_to_string(out.join("train.csv")).unwrap();
    assert_eq!(header.lines().next().unwrap().split(',').count(), 51);

    let cat = dir.path().join("cat.csv");
    std::fs::write(&cat, "color,x,label\nred,1,a\nred,2,b\nblue,3,a\nred,4,b\n").unwrap();
    let o = mpfn(&[
        "--out",
        s(&out),
        "preprocess",
        "--train",
        s(&cat),
        "--preset",
        "4",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let cfg = read_json(&out.join("resolved_config.json"));
    assert_eq!(cfg["categorical_encoding"], "frequency");
    assert_eq!(
        read_json(&out.join("preprocess_report.json"))["columns"][0]["kind"],
        "categorical"
    );
}

#[test]
fn resolved_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = synth::split_head(&synth::quarter_circle(700, 11), 600);
    let tr = write_csv(dir.path(), "train.csv", &train);
    let te = write_csv(dir.path(), "test.csv", &test);
    let a = dir.path().join("a");
    let o = mpfn(&[
        "--out",
        s(&a),
        "--seed",
        "4",
        "predict",
        "--train",
        s(&tr),
        "--test",
        s(&te),
        "--budget",
        "100",
        "--gamma",
        "2",
        "--n-ensemble",
        "4",
        "--context",
        "micp",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let b = dir.path().join("b");
    let o = mpfn(&[
        "--out",
        s(&b),
        "--config",
        s(&a.join("resolved_config.json")),
        "predict",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(snapshot(&a), snapshot(&b));
}

#[test]
fn context_strategies_respect_the_budget() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = synth::split_head(&synth::two_blobs(700, 12), 600);
    let tr = write_csv(dir.path(), "train.csv", &train);
    let te = write_csv(dir.path(), "test.csv", &test);
    for ctx in ["micp", "knn-batched", "knn-single", "random"] {
        let out = dir.path().join(ctx);
        let o = mpfn(&[
            "--out",
            s(&out),
            "predict",
            "--train",
            s(&tr),
            "--test",
            s(&te),
            "--budget",
            "50",
            "--n-batch",
            "16",
            "--context",
            ctx,
            "--n-ensemble",
            "1",
        ]);
        assert_eq!(code(&o), 0, "{ctx}: {}", stderr(&o));
        let m = read_json(&out.join("metrics.json"));
        let max = m["max_context_size"].as_u64().unwrap();
        // the batched union holds floor(B / n_batch) rows per query and may fall short of B
        if ctx == "knn-batched" {
            assert!((1..=50).contains(&max), "{max}");
        } else {
            assert_eq!(max, 50, "{ctx}");
        }
        assert!(m["accuracy"].as_f64().unwrap() > 0.95, "{ctx}: {m}");
    }
}
