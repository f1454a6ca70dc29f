use std::path::PathBuf;
use std::process::{Command, Output};

fn rislink(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rislink")).args(args).output().unwrap()
}

fn tmp(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name)
}

fn rows(out: &Output) -> Vec<Vec<String>> {
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    text.lines().map(|l| l.split(',').map(str::to_owned).collect()).collect()
}

#[test]
fn outage_sweep() {
    let out = rislink(&["outage", "--preset", "fig7b"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = rows(&out);
    assert_eq!(rows[0], ["sweep", "metric", "method", "value", "stderr"]);
    assert_eq!(rows.len(), 12);
    let values: Vec<f64> = rows[1..].iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
    assert!(values.windows(2).all(|w| w[1] <= w[0]), "{values:?}");
    assert!(rows[1..].iter().all(|r| r[2] == "exact" && r[4].is_empty()));
}

#[test]
fn methods_and_output_file() {
    let path = tmp("methods.csv");
    let out = rislink(&[
        "outage",
        "--preset",
        "fig7b",
        "--method",
        "all",
        "--samples",
        "20000",
        "--seed",
        "3",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&path).unwrap();
    let methods: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(2).unwrap()).collect();
    assert_eq!(methods.len(), 33);
    for m in ["exact", "asymptotic", "mc"] {
        assert_eq!(methods.iter().filter(|x| **x == m).count(), 11, "{m}");
    }
    let mc = text.lines().find(|l| l.contains(",mc,")).unwrap();
    assert!(!mc.ends_with(','), "{mc}");
}

#[test]
fn config_errors_exit_one() {
    let unknown = tmp("unknown.toml");
    let base = include_str!("../presets/st.toml");
    std::fs::write(&unknown, format!("{base}extra = 1\n")).unwrap();
    let bad = tmp("bad.toml");
    std::fs::write(&bad, base.replace("hops = 3", "hops = 0")).unwrap();
    let out = rislink(&["outage", "--config", unknown.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("extra"), "{}", String::from_utf8_lossy(&out.stderr));
    for args in [
        vec!["outage", "--config", unknown.to_str().unwrap()],
        vec!["outage", "--config", bad.to_str().unwrap()],
        vec!["outage", "--config", tmp("missing.toml").to_str().unwrap()],
        vec!["outage", "--preset", "nope"],
        vec!["outage"],
        vec!["ber", "--preset", "st", "--samples", "0", "--method", "mc"],
    ] {
        let out = rislink(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(!out.stderr.is_empty(), "{args:?}");
    }
    assert_eq!(rislink(&["--help"]).status.code(), Some(0));
}

#[test]
fn config_file_matches_preset() {
    let path = tmp("st.toml");
    std::fs::write(&path, include_str!("../presets/st.toml")).unwrap();
    let a = rislink(&["outage", "--config", path.to_str().unwrap()]);
    let b = rislink(&["outage", "--preset", "st"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn validate_is_reproducible() {
    let path = tmp("short.toml");
    let config = include_str!("../presets/st.toml").replace("stop = 70.0", "stop = 20.0");
    std::fs::write(&path, config).unwrap();
    let run = |workers: &str| {
        let out = rislink(&[
            "validate",
            "--config",
            path.to_str().unwrap(),
            "--samples",
            "20000",
            "--seed",
            "42",
            "--workers",
            workers,
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        out.stdout
    };
    let first = run("1");
    assert_eq!(first, run("1"));
    assert_eq!(first, run("4"));
    let text = String::from_utf8(first).unwrap();
    assert!(text.lines().any(|l| l.contains(",zscore,")) && text.lines().any(|l| l.contains(",pass,")));
}
