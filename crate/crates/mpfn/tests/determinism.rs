mod common;

use std::path::Path;

use common::*;
use mpfn::synth;

fn all_commands(dir: &Path, out: &Path, jobs: &str) {
    let (train, test) = synth::split_head(&synth::quarter_circle(900, 21), 700);
    let tr = write_csv(dir, "train.csv", &train);
    let te = write_csv(dir, "test.csv", &test);
    let rec = dir.join("records.csv");
    std::fs::write(
        &rec,
        "algorithm,dataset,fold,accuracy,mean_ll,status\n\
         a,d1,0,0.9,-0.2,ok\nb,d1,0,0.8,-0.3,ok\na,d2,0,0.7,-0.5,ok\nb,d2,0,0.75,-0.4,ok\n",
    )
    .unwrap();
    let base = ["--out", s(out), "--seed", "13", "--jobs", jobs];
    let runs: Vec<Vec<&str>> = vec![
        vec!["preprocess", "--train", s(&tr), "--test", s(&te)],
        vec![
            "fit",
            "--train",
            s(&tr),
            "--budget",
            "150",
            "--mode",
            "constrained",
        ],
        vec![
            "predict",
            "--train",
            s(&tr),
            "--test",
            s(&te),
            "--budget",
            "150",
            "--n-ensemble",
            "4",
        ],
        vec![
            "finetune",
            "--train",
            s(&tr),
            "--bootstrap",
            "large",
            "--budget",
            "150",
            "--iterations",
            "40",
        ],
        vec![
            "sweep-gamma",
            "--train",
            s(&tr),
            "--test",
            s(&te),
            "--budget",
            "150",
            "--gammas",
            "1,2",
            "--n-ensemble",
            "2",
        ],
        vec!["theorem-audit", "--train", s(&tr), "--budget", "150"],
        vec!["report", "--results", s(&rec)],
    ];
    for r in runs {
        let args: Vec<&str> = base.iter().copied().chain(r.iter().copied()).collect();
        let o = mpfn(&args);
        assert_eq!(code(&o), 0, "{r:?}: {}", stderr(&o));
    }
}

#[test]
fn every_command_is_byte_identical_across_reruns_and_pool_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    all_commands(dir.path(), &a, "1");
    all_commands(dir.path(), &b, "4");
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    assert!(sa.len() >= 15, "{:?}", sa.keys().collect::<Vec<_>>());
    assert_eq!(sa.keys().collect::<Vec<_>>(), sb.keys().collect::<Vec<_>>());
    for (k, v) in &sa {
        assert!(sb[k] == *v, "{} differs", k.display());
    }
    assert!(a.join("timing.log").exists());
}
