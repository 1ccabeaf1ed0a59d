use std::path::Path;
use std::process::{Command, Output};

fn calconf(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_calconf"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn calconf")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Small dataset: 3 users x 20 rounds.
fn small_data(dir: &Path) {
    let o = calconf(dir, &["generate", "--users", "3", "-n", "20", "--seed", "9", "--out", "data"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(code(&calconf(d, &["frobnicate"])), 1);
    assert_eq!(code(&calconf(d, &["generate", "--out", "x", "-n", "200"])), 1);
    assert_eq!(code(&calconf(d, &["generate", "--out", "x", "--schema", "no-such-schema"])), 1);
    assert_eq!(code(&calconf(d, &["generate"])), 1, "missing --out");
    assert_eq!(code(&calconf(d, &["--help"])), 0);

    small_data(d);
    assert_eq!(code(&calconf(d, &["run", "--data", "data", "--out", "run", "--agent", "psychic"])), 1);
    assert_eq!(code(&calconf(d, &["run", "--data", "data", "--out", "run", "-n", "21"])), 1);
}

#[test]
fn resume_reruns_only_missing_episodes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_data(d);
    let run = ["run", "--data", "data", "--out", "run", "--agent", "random", "--rollouts", "2"];
    let first = calconf(d, &run);
    assert_eq!(code(&first), 0, "{}", stderr(&first));
    assert!(stdout(&first).starts_with("6 episodes completed, 0 already complete"));

    let traces = d.join("run/traces");
    let mut names: Vec<_> = std::fs::read_dir(&traces).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    let victim = &names[2];
    let before = std::fs::read(victim).unwrap();
    std::fs::remove_file(victim).unwrap();

    let second = calconf(d, &run);
    assert_eq!(code(&second), 0, "{}", stderr(&second));
    assert!(stdout(&second).starts_with("1 episodes completed, 5 already complete"), "{}", stdout(&second));
    assert_eq!(std::fs::read(victim).unwrap(), before);
}

#[test]
fn worker_count_does_not_change_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_data(d);
    for (out, jobs) in [("a", "1"), ("b", "4")] {
        let o = calconf(d, &["run", "--data", "data", "--out", out, "--agent", "random", "--rollouts", "3", "--jobs", jobs]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for entry in std::fs::read_dir(d.join("a/traces")).unwrap() {
        let p = entry.unwrap().path();
        let other = d.join("b/traces").join(p.file_name().unwrap());
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(other).unwrap(), "{}", p.display());
    }
    assert_eq!(std::fs::read(d.join("a/manifest.json")).unwrap(), std::fs::read(d.join("b/manifest.json")).unwrap());
}

#[test]
fn tampered_truth_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_data(d);
    assert_eq!(code(&calconf(d, &["run", "--data", "data", "--out", "run"])), 0);
    let ok = calconf(d, &["score", "--traces", "run", "--data", "data", "--out", "score"]);
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));
    assert!(stdout(&ok).contains("oracle: 3 instances, AER 0.000, avg ORD 1.000, ERR 0.000"));

    let truth_dir = d.join("data/truth");
    let victim = std::fs::read_dir(&truth_dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap() != "profiles.json")
        .unwrap();
    let text = std::fs::read_to_string(&victim).unwrap();
    std::fs::write(&victim, text.replacen("\"e1\"", "\"e2\"", 1)).unwrap();
    let o = calconf(d, &["score", "--traces", "run", "--data", "data", "--out", "score2"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("does not match manifest digest"));
}

#[test]
fn traces_from_other_data_are_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_data(d);
    let other = calconf(d, &["generate", "--users", "3", "-n", "20", "--seed", "10", "--out", "other"]);
    assert_eq!(code(&other), 0);
    assert_eq!(code(&calconf(d, &["run", "--data", "data", "--out", "run"])), 0);
    let o = calconf(d, &["score", "--traces", "run", "--data", "other", "--out", "score"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("was produced on dataset"), "{}", stderr(&o));
}

#[test]
fn advantages_need_a_group() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_data(d);
    assert_eq!(code(&calconf(d, &["run", "--data", "data", "--out", "one", "--agent", "random"])), 0);
    let o = calconf(d, &["rewards", "--traces", "one", "--data", "data", "--out", "rw", "--advantages"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("group size must be >= 2, got 1"));

    assert_eq!(code(&calconf(d, &["run", "--data", "data", "--out", "two", "--agent", "random", "--rollouts", "2"])), 0);
    let o = calconf(d, &["rewards", "--traces", "two", "--data", "data", "--out", "rw2", "--advantages"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(d.join("rw2/rewards.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 2 * 20);
}

#[test]
fn replay_detects_edited_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_data(d);
    assert_eq!(code(&calconf(d, &["run", "--data", "data", "--out", "run", "--agent", "heuristic:most-attendees"])), 0);
    let o = calconf(d, &["replay", "--traces", "run", "--data", "data"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("3 traces replayed identically"));

    let trace = std::fs::read_dir(d.join("run/traces")).unwrap().next().unwrap().unwrap().path();
    let text = std::fs::read_to_string(&trace).unwrap();
    std::fs::write(&trace, text.replacen("\"valid\":true", "\"valid\":false", 1)).unwrap();
    assert_eq!(code(&calconf(d, &["replay", "--traces", "run", "--data", "data"])), 2);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("gen.toml"), "users = 2\nrounds = 12\nseed = 4\nm = 3\nout = \"data\"\n").unwrap();
    let o = calconf(d, &["generate", "--config", "gen.toml", "-n", "8"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).starts_with("generated 2 datasets (16 rounds)"), "{}", stdout(&o));

    std::fs::write(d.join("bad.toml"), "users = 2\nbogus = 1\n").unwrap();
    assert_eq!(code(&calconf(d, &["generate", "--config", "bad.toml", "--out", "x"])), 1);
}
