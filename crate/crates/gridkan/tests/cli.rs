use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "schema_version = 1\nseed = 3\n\n[data]\nn_train = 30\nn_test = 15\n\n\
                    [model]\nwidths = [4, 3, 5]\n\n[train]\nsteps = 20\neval_every = 10\n";

fn gridkan(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridkan"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn full_run_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), TINY).unwrap();
    for cmd in [
        "gen-data",
        "train",
        "compare",
        "export-activations",
        "symbolic",
        "prune",
    ] {
        let out = gridkan(dir.path(), &["--config", "c.toml", "--out", "run", cmd]);
        assert_eq!(code(&out), 0, "{cmd}: {}", stderr(&out));
    }
    assert!(dir.path().join("run/model.pruned.json").exists());
    assert!(dir.path().join("run/compare/report.json").exists());
}

#[test]
fn configuration_problems_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = gridkan(dir.path(), &["gen-data"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    std::fs::write(dir.path().join("bad.toml"), format!("{TINY}[data]\n")).unwrap();
    let out = gridkan(dir.path(), &["--config", "bad.toml", "gen-data"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("bad.toml:"), "{}", stderr(&out));
    std::fs::write(dir.path().join("bad.toml"), TINY.replace("n_test = 15", "n_test = 0")).unwrap();
    let out = gridkan(dir.path(), &["--config", "bad.toml", "gen-data"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("data.n_test"), "{}", stderr(&out));
}

#[test]
fn missing_files_exit_with_4() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), TINY).unwrap();
    let out = gridkan(dir.path(), &["--config", "c.toml", "compare", "--model", "none.json"]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
    assert!(stderr(&out).contains("none.json"));
}

#[test]
fn unsolvable_scenarios_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let src = format!(
        "{TINY}\n[uncertainty]\nnames = [\"a\", \"b\", \"c\", \"solar\"]\nmarginals = [\n\
         {{ kind = \"uniform\", lo = 20.0, hi = 30.0 }},\n{{ kind = \"uniform\", lo = 20.0, hi = 30.0 }},\n\
         {{ kind = \"uniform\", lo = 20.0, hi = 30.0 }},\n{{ kind = \"uniform\", lo = 0.0, hi = 0.1 }},\n]\n"
    );
    std::fs::write(dir.path().join("c.toml"), src).unwrap();
    let out = gridkan(dir.path(), &["--config", "c.toml", "gen-data"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}
