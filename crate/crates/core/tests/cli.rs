use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn shieldrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shieldrl")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap().flatten() {
            let path = e.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(dir).unwrap().display().to_string(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_then_verify_the_tank() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tank");
    let o = shieldrl(&["synth", "--env", "tank", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("synth_report.json")).unwrap()).unwrap();
    assert_eq!(report["merged_game_states"], 602);
    assert_eq!(report["realizable"], true);

    let shield = out.join("shield.json");
    let o = shieldrl(&["verify", "--shield", p(&shield), "--env", "tank"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["violation_count"], 0);

    // a tank shield checked against the grid automata
    let o = shieldrl(&["verify", "--shield", p(&shield), "--env", "grid9x9"]);
    assert_eq!(code(&o), 1);

    let o = shieldrl(&["report", "--out", p(&out)]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("602"));
}

#[test]
fn invalid_input_lists_every_problem() {
    let o = shieldrl(&["train", "--env", "tank", "--placement", "sideways", "--algorithm", "td"]);
    assert_eq!(code(&o), 1);
    let e = stderr(&o);
    for key in ["placement", "algorithm", "out"] {
        assert!(e.contains(key), "{key} missing from {e}");
    }
    assert_eq!(code(&shieldrl(&["train", "--no-such-flag"])), 1);
    assert_eq!(code(&shieldrl(&["verify", "--shield", "/nonexistent.json", "--env", "tank"])), 1);
    assert_eq!(code(&shieldrl(&["--help"])), 0);
}

#[test]
fn unrealizable_specification_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("boxed.txt");
    fs::write(&map, "#####\n#BRB1\n#####\n").unwrap();
    let o = shieldrl(&["synth", "--env", "grid", "--map", p(&map), "--out", p(&dir.path().join("s"))]);
    // the robot is boxed in, but two bomb steps are allowed: realizable
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    fs::write(&map, "###\n#R#\n###\n.1.\n").unwrap();
    let o = shieldrl(&["synth", "--env", "grid", "--map", p(&map), "--out", p(&dir.path().join("t"))]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("unrealizable"));
}

#[test]
fn io_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain");
    fs::write(&file, "x").unwrap();
    let o = shieldrl(&["synth", "--env", "tank", "--out", p(&file.join("below"))]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn zero_episodes_write_header_only_logs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs");
    let o = shieldrl(&[
        "train",
        "--env",
        "grid9x9",
        "--placement",
        "none,postposed",
        "--episodes",
        "0",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for v in ["none-q", "postposed-q"] {
        let log = fs::read_to_string(out.join(v).join("run_seed0.csv")).unwrap();
        assert_eq!(log.lines().count(), 1, "{log}");
        assert!(log.starts_with("episode,"));
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = shieldrl(&[
            "train",
            "--env",
            "tank",
            "--placement",
            "none,preemptive,postposed",
            "--algorithm",
            "q,sarsa",
            "--seeds",
            "1,2,3",
            "--episodes",
            "20",
            "--out",
            p(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        read_tree(&out)
    };
    let a = run("a");
    assert_eq!(a.len(), 6 * 4);
    assert_eq!(a, run("b"));
}

#[test]
fn shipped_tank_config_runs_all_four_curves() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("four");
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/tank_four_curves.toml");
    let o = shieldrl(&["train", "--config", cfg, "--episodes", "50", "--seeds", "0", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for v in ["none-q", "none-sarsa", "preemptive-q", "preemptive-sarsa"] {
        assert!(out.join(v).join("aggregate.csv").is_file(), "{v}");
    }
    let o = shieldrl(&["report", "--out", p(&out)]);
    assert_eq!(code(&o), 0);
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);
    for row in summary.lines().filter(|l| l.starts_with("preemptive")) {
        assert_eq!(row.split(',').nth(4), Some("0"), "{row}");
    }

    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/grid9x9.toml");
    let o = shieldrl(&[
        "train",
        "--config",
        cfg,
        "--episodes",
        "20",
        "--seeds",
        "0",
        "--out",
        p(&dir.path().join("g")),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}
