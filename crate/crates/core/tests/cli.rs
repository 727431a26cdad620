use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dstream(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dstream"))
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_writes_balanced_labeled_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("nested/rings.csv");
    assert_eq!(
        code(&dstream(&[
            "gen",
            "--shape",
            "rings",
            "--n",
            "5000",
            "--seed",
            "3",
            "--out",
            s(&out)
        ])),
        0
    );
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("tick,x,y,label"));
    let labels: Vec<&str> = lines.map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(labels.len(), 5000);
    assert_eq!(labels.iter().filter(|l| **l == "0").count(), 2500);
}

#[test]
fn gen_zero_records_is_header_only() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("empty.csv");
    assert_eq!(
        code(&dstream(&[
            "gen",
            "--shape",
            "moons",
            "--n",
            "0",
            "--out",
            s(&out)
        ])),
        0
    );
    assert_eq!(fs::read_to_string(&out).unwrap(), "tick,x,y,label\n");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&dstream(&[])), 1);
    assert_eq!(code(&dstream(&["nope"])), 1);
    assert_eq!(
        code(&dstream(&[
            "gen", "--shape", "spiral", "--n", "3", "--out", "x.csv"
        ])),
        1
    );
    assert_eq!(code(&dstream(&["dstream", "--input", "x.csv"])), 1);
    assert_eq!(code(&dstream(&["--help"])), 0);
}

#[test]
fn data_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let missing = tmp.path().join("missing.csv");
    assert_eq!(
        code(&dstream(&[
            "dstream",
            "--input",
            s(&missing),
            "--out",
            s(&out)
        ])),
        2
    );

    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "a,b\n1,2\n3,x\n").unwrap();
    let o = dstream(&["kmeans", "--input", s(&bad), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 2"));

    let flat = tmp.path().join("flat.csv");
    fs::write(&flat, "a\n1\n1\n").unwrap();
    assert_eq!(
        code(&dstream(&["kmeans", "--input", s(&flat), "--out", s(&out)])),
        2
    );

    let unlabeled = tmp.path().join("u.csv");
    fs::write(&unlabeled, "a,b\n1,2\n3,4\n").unwrap();
    assert_eq!(
        code(&dstream(&[
            "compare",
            "--input",
            s(&unlabeled),
            "--out",
            s(&out)
        ])),
        2
    );
}

#[test]
fn invalid_parameters_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("g.csv");
    dstream(&[
        "gen",
        "--shape",
        "gaussians",
        "--n",
        "50",
        "--out",
        s(&input),
    ]);
    let out = tmp.path().join("o");
    assert_eq!(
        code(&dstream(&[
            "dstream",
            "--input",
            s(&input),
            "--lambda",
            "1.5",
            "--out",
            s(&out)
        ])),
        1
    );
    assert_eq!(
        code(&dstream(&[
            "dstream",
            "--input",
            s(&input),
            "--partitions",
            "3,4,5",
            "--out",
            s(&out)
        ])),
        1
    );
}

#[test]
fn dstream_writes_assignments_events_and_model() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("g.csv");
    dstream(&[
        "gen",
        "--shape",
        "gaussians",
        "--n",
        "4000",
        "--seed",
        "5",
        "--out",
        s(&input),
    ]);
    let out = tmp.path().join("ds");
    let o = dstream(&[
        "dstream",
        "--input",
        s(&input),
        "--lambda",
        "0.99",
        "--partitions",
        "10",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let assignments = fs::read_to_string(out.join("assignments.csv")).unwrap();
    assert!(assignments.starts_with("tick,grid_0,grid_1,cluster\n"));
    assert_eq!(assignments.lines().count(), 4001);

    let events = fs::read_to_string(out.join("events.log")).unwrap();
    let first = events.lines().next().unwrap();
    let fields: Vec<&str> = first.split('\t').collect();
    assert_eq!(fields.len(), 3);
    // default gap for lambda 0.99 is floor(log(0.8/3)/log(0.99)) = 131
    assert_eq!(fields[0], "131");
    assert_eq!(fields[1], "initial");

    let model = fs::read_to_string(out.join("model.txt")).unwrap();
    assert!(model.starts_with("kind=dstream\nfeatures=x,y\n"));
    assert!(model.contains("partitions=10,10\n"));
    assert!(model.contains("status_rule=majority\n"));
    assert!(model.contains("status.1="));
}

#[test]
fn config_values_are_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("g.csv");
    dstream(&[
        "gen",
        "--shape",
        "gaussians",
        "--n",
        "500",
        "--out",
        s(&input),
    ]);
    let conf = tmp.path().join("c.conf");
    fs::write(&conf, "# test\npartitions = 4\nlambda = 0.9\n").unwrap();
    let out = tmp.path().join("ds");
    let o = dstream(&[
        "dstream",
        "--input",
        s(&input),
        "--config",
        s(&conf),
        "--partitions",
        "6,7",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0);
    let model = fs::read_to_string(out.join("model.txt")).unwrap();
    assert!(model.contains("partitions=6,7\n"));
    assert!(String::from_utf8_lossy(&o.stdout).contains("gap=12"));
}

#[test]
fn kmeans_then_classify() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("g.csv");
    dstream(&[
        "gen",
        "--shape",
        "gaussians",
        "--n",
        "1000",
        "--seed",
        "8",
        "--out",
        s(&input),
    ]);
    let model = tmp.path().join("km");
    let o = dstream(&[
        "kmeans",
        "--input",
        s(&input),
        "--k",
        "2",
        "--seed",
        "4",
        "--max-iter",
        "50",
        "--tol",
        "1e-12",
        "--out",
        s(&model),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let centroids = fs::read_to_string(model.join("centroids.csv")).unwrap();
    assert_eq!(centroids.lines().count(), 3);
    assert!(centroids.starts_with("cluster,x,y\n"));

    let out = tmp.path().join("cls");
    assert_eq!(
        code(&dstream(&[
            "classify",
            "--input",
            s(&input),
            "--model",
            s(&model),
            "--out",
            s(&out)
        ])),
        0
    );
    let status = fs::read_to_string(out.join("status.csv")).unwrap();
    let truth = fs::read_to_string(&input).unwrap();
    // well separated blobs: labels 0/1 map to FIT/UNFIT exactly
    for (st, row) in status.lines().skip(1).zip(truth.lines().skip(1)) {
        let expected = if row.ends_with(",0") { "FIT" } else { "UNFIT" };
        assert!(st.ends_with(expected), "{st} vs {row}");
    }
}

#[test]
fn classify_needs_model_features() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("g.csv");
    dstream(&[
        "gen",
        "--shape",
        "gaussians",
        "--n",
        "200",
        "--out",
        s(&input),
    ]);
    let model = tmp.path().join("m");
    dstream(&["kmeans", "--input", s(&input), "--out", s(&model)]);
    let other = tmp.path().join("o.csv");
    fs::write(&other, "p,q\n1,2\n").unwrap();
    let out = tmp.path().join("c");
    assert_eq!(
        code(&dstream(&[
            "classify",
            "--input",
            s(&other),
            "--model",
            s(&model),
            "--out",
            s(&out)
        ])),
        2
    );
    assert_eq!(
        code(&dstream(&[
            "classify",
            "--input",
            s(&input),
            "--model",
            s(&out),
            "--out",
            s(&out)
        ])),
        2
    );
}

#[test]
fn features_for_configured_signals() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("v.csv");
    let mut text = String::from("tick,SpO2,HR,age\n");
    for t in 0..10 {
        text.push_str(&format!("{t},97,{},40\n", 70 + 5 * t));
    }
    fs::write(&input, text).unwrap();
    let conf = tmp.path().join("c.conf");
    fs::write(
        &conf,
        "range.SpO2 = 95,100\nrange.HR = 60,100\nignore = age\n",
    )
    .unwrap();
    let out = tmp.path().join("f");
    let o = dstream(&[
        "features",
        "--input",
        s(&input),
        "--config",
        s(&conf),
        "--window",
        "4",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("features.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), 1 + 12 + 1);
    assert_eq!(header[1], "SpO2.offset");
    assert_eq!(header[13], "global_risk");
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 10);
    // constant in-range SpO2 contributes nothing
    assert!(rows.iter().all(|r| r[1..7].iter().all(|&v| v == 0.0)));
    // HR climbs 5 per tick: slope 5 once the window holds two samples
    assert_eq!(rows[3][8], 5.0);
    // HR leaves its range at tick 7 (value 105)
    assert_eq!(rows[7][9], 5.0);

    let none = tmp.path().join("n.conf");
    fs::write(&none, "window = 4\n").unwrap();
    assert_eq!(
        code(&dstream(&[
            "features",
            "--input",
            s(&input),
            "--config",
            s(&none),
            "--out",
            s(&out)
        ])),
        2
    );
}

#[test]
fn compare_writes_table_and_kv() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("r.csv");
    dstream(&[
        "gen",
        "--shape",
        "rings",
        "--n",
        "5000",
        "--seed",
        "2024",
        "--out",
        s(&input),
    ]);
    let out = tmp.path().join("cmp");
    let o = dstream(&["compare", "--input", s(&input), "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    let table = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(table.starts_with("Cluster Algorithm | Correctly Classified Instance"));
    assert_eq!(String::from_utf8_lossy(&o.stdout), table);
    let kv = fs::read_to_string(out.join("report.kv")).unwrap();
    let get = |k: &str| {
        kv.lines()
            .find_map(|l| l.strip_prefix(&format!("{k}=")))
            .unwrap()
            .to_string()
    };
    let correct: u64 = get("dstream.correct").parse().unwrap();
    let incorrect: u64 = get("dstream.incorrect").parse().unwrap();
    assert_eq!(correct + incorrect, 5000);
    assert!(get("dstream.purity").parse::<f64>().unwrap() >= 0.95);
}

#[test]
fn oracle_check_passes_on_generated_stream() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("m.csv");
    dstream(&[
        "gen",
        "--shape",
        "moons",
        "--n",
        "3000",
        "--seed",
        "1",
        "--out",
        s(&input),
    ]);
    let conf = tmp.path().join("c.conf");
    fs::write(&conf, "lambda = 0.9\npartitions = 8\n").unwrap();
    let o = dstream(&["oracle-check", "--input", s(&input), "--config", s(&conf)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).lines().last() == Some("PASS"));
}

#[test]
fn oracle_check_rejects_time_reversal() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("t.csv");
    fs::write(&input, "tick,a\n0,0.1\n5,0.2\n3,0.9\n").unwrap();
    assert_eq!(code(&dstream(&["oracle-check", "--input", s(&input)])), 2);
}
