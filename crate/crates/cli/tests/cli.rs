use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn spacdc(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spacdc"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], out: &Path) -> String {
    let o = spacdc(args, out);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Data lines of a CSV file: everything after the comment header.
fn body(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

fn max_error(dir: &Path) -> f64 {
    body(&read(&dir.join("errors.csv")))[1..]
        .iter()
        .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap())
        .fold(0.0, f64::max)
}

#[test]
fn scenario_four_uses_twenty_three_results() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&["run", "--scenario", "s4"], dir.path());
    assert!(stdout.contains("returned=23"), "{stdout}");
    let report = read(&dir.path().join("report.csv"));
    assert!(report.starts_with("# spacdc run\n# config_hash="));
    let rows = body(&report);
    assert_eq!(rows[0], "index,elapsed_ms,returned,straggler,colluder");
    assert_eq!(rows.len(), 32);
    for (i, row) in rows[1..31].iter().enumerate() {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f.len(), 5);
        assert_eq!(f[0].parse::<usize>().unwrap(), i);
        assert!(f[1].parse::<f64>().unwrap() > 0.0);
        assert!(f[2..].iter().all(|v| *v == "0" || *v == "1"));
    }
    let summary: Vec<&str> = rows[31].split(',').collect();
    assert_eq!(&summary[0..1], &["summary"]);
    assert_eq!(&summary[2..], &["23", "7", "3"]);
    assert_eq!(body(&read(&dir.path().join("errors.csv"))).len(), 5);
    for j in 0..4 {
        assert!(dir.path().join(format!("result_{j}.txt")).exists());
    }
}

#[test]
fn stragglers_cost_accuracy_not_completion() {
    let mut full = Vec::new();
    let mut dropped = Vec::new();
    for seed in 1..=5 {
        let seed = seed.to_string();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        ok(&["run", "--scenario", "s1", "--seed", &seed], a.path());
        ok(&["run", "--scenario", "s4", "--seed", &seed], b.path());
        full.push(max_error(a.path()));
        dropped.push(max_error(b.path()));
    }
    let med = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    assert!(med(&mut full) <= med(&mut dropped), "{full:?} vs {dropped:?}");
}

#[test]
fn encode_is_deterministic_and_round_trips() {
    let work = tempfile::tempdir().unwrap();
    let fixture = work.path().join("x.txt");
    fs::write(&fixture, "# 4x3 fixture\n4 3\n1 2 3\n-4 5 -6\n0.5 0.25 -0.125\n7 -8 9\n").unwrap();
    let fixture = fixture.to_str().unwrap().to_string();
    let input = format!("input.matrix={fixture}");
    let cfg = ["--set", "codec.n=4", "--set", "codec.k=2", "--set", "codec.t=1", "--set", &input];

    let a = work.path().join("a");
    let b = work.path().join("b");
    ok(&[&["encode"][..], &cfg].concat(), &a);
    ok(&[&["encode"][..], &cfg].concat(), &b);
    let mut names: Vec<String> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["manifest.txt", "share_0.hex", "share_1.hex", "share_2.hex", "share_3.hex"]);
    for name in &names {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let manifest = read(&a.join("manifest.txt"));
    let beta = manifest.lines().find_map(|l| l.strip_prefix("beta=")).unwrap();
    assert_eq!(beta.split(',').count(), 3);
    assert!(manifest.lines().any(|l| l == "input_shape=4x3"));

    // Decoding the stored shares gives exactly what a fresh run gives.
    let all = ["--set", "cluster.wait_policy=all"];
    let from = work.path().join("from");
    let direct = work.path().join("direct");
    ok(&[&["run", "--from-shares", a.to_str().unwrap()][..], &cfg, &all].concat(), &from);
    ok(&[&["run"][..], &cfg, &all].concat(), &direct);
    for name in ["result_0.txt", "result_1.txt", "errors.csv", "report.csv"] {
        assert_eq!(read(&from.join(name)), read(&direct.join(name)), "{name}");
    }

    // Shares are tied to the seed and input they were made for.
    let o = spacdc(&[&["run", "--seed", "2", "--from-shares", a.to_str().unwrap()][..], &cfg].concat(), &from);
    assert_eq!(o.status.code(), Some(2));
    let o = spacdc(&["run", "--from-shares", work.path().join("missing").to_str().unwrap()], &from);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn headers_pin_config_and_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(&["run", "--set", "cluster.stragglers=2"], a.path());
    ok(&["run", "--set", "cluster.stragglers=2"], b.path());
    for name in ["report.csv", "errors.csv", "result_0.txt"] {
        assert_eq!(read(&a.path().join(name)), read(&b.path().join(name)), "{name}");
    }
    let header = read(&a.path().join("report.csv"));
    assert!(header.contains("seed=1\n"));
    assert!(header.contains("# cluster.stragglers=2\n"));

    let c = tempfile::tempdir().unwrap();
    ok(&["run", "--set", "cluster.stragglers=2", "--seed", "9"], c.path());
    let other = read(&c.path().join("report.csv"));
    let hash = |t: &str| t.lines().nth(1).unwrap().to_string();
    assert_ne!(hash(&header), hash(&other));
}

#[test]
fn config_file_and_precedence() {
    let work = tempfile::tempdir().unwrap();
    let file = work.path().join("exp.cfg");
    fs::write(&file, "# experiment\ncluster.n = 10\ncodec.k=2\ncluster.stragglers=1,3\n").unwrap();
    let file = file.to_str().unwrap();
    let stdout = ok(&["run", "--config", file], &work.path().join("a"));
    assert!(stdout.contains("returned=8"), "{stdout}");
    let stdout = ok(&["run", "--config", file, "--set", "cluster.wait_policy=first_r(5)"], &work.path().join("b"));
    assert!(stdout.contains("returned=5"), "{stdout}");
    let stdout = ok(&["run", "--config", file, "--set", "cluster.stragglers=", "--scenario", "s2"], &work.path().join("c"));
    assert!(stdout.contains("returned=27"), "{stdout}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| spacdc(args, dir.path()).status.code();
    assert_eq!(code(&["run", "--set", "codec.bogus=1"]), Some(2));
    assert_eq!(code(&["run", "--set", "codec.k=x"]), Some(2));
    assert_eq!(code(&["run", "--scenario", "s9"]), Some(2));
    assert_eq!(code(&["run", "--seed", "minus-one"]), Some(2));
    assert_eq!(code(&["run", "--set", "cluster.stragglers=8"]), Some(2));
    assert_eq!(code(&["run", "--config", "/definitely/not/here.cfg"]), Some(4));
    assert_eq!(code(&["run", "--set", "input.matrix=/definitely/not/here.txt"]), Some(4));
    assert_eq!(code(&["run", "--set", "cluster.wait_policy=deadline(0.5)"]), Some(3));
    assert_eq!(code(&["run"]), Some(0));
}

#[test]
fn audit_rows_per_colluder_count() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["audit", "--set", "audit.trials=2000", "--set", "codec.t=2", "--set", "codec.n=10"];
    ok(&args, a.path());
    ok(&args, b.path());
    let text = read(&a.path().join("audit.csv"));
    assert_eq!(text, read(&b.path().join("audit.csv")));
    let rows = body(&text);
    assert_eq!(rows[0], "colluder_count,colluders,t,bound_exceeded,max_statistic,min_p_value,pass");
    assert_eq!(rows.len(), 4);
    let last: Vec<&str> = rows[3].split(',').collect();
    assert_eq!((last[0], last[3], last[6]), ("3", "true", "false"));
    assert_eq!(last[1].split(';').count(), 3);
    for row in &rows[1..3] {
        assert_eq!(row.split(',').nth(3), Some("false"));
    }
}

#[test]
fn train_both_algorithms() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&["train", "--scenario", "s2", "--algo", "both"], dir.path());
    assert_eq!(stdout.lines().count(), 2, "{stdout}");
    let parse = |name: &str| -> Vec<Vec<f64>> {
        let text = read(&dir.path().join(name));
        assert!(text.starts_with("# spacdc train\n"));
        let rows = body(&text);
        assert_eq!(rows[0], "epoch,loss,accuracy,epoch_ms");
        rows[1..].iter().map(|r| r.split(',').map(|v| v.parse().unwrap()).collect()).collect()
    };
    let coded = parse("trace_spacdc.csv");
    let conv = parse("trace_conv.csv");
    assert_eq!(coded.len(), 30);
    assert_eq!(coded.len(), conv.len());
    assert!(coded.last().unwrap()[2] > 0.9);
    for (a, b) in coded.iter().zip(&conv) {
        assert!(a[3] < b[3], "epoch {}: {} vs {}", a[0], a[3], b[3]);
    }
}

#[test]
fn bench_writes_fits() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["bench", "--set", "bench.repeats=3", "--set", "bench.encode_sizes=4,8"], dir.path());
    let decode = read(&dir.path().join("bench_decode.csv"));
    assert_eq!(body(&decode).len(), 8);
    let fit = read(&dir.path().join("bench_fit.csv"));
    assert_eq!(body(&fit)[1..].iter().map(|l| l.split(',').next().unwrap()).collect::<Vec<_>>(), ["decode", "encode"]);
}
