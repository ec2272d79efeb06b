//! Helpers for driving the `pqbackbone` binary.

#![allow(dead_code)]

use std::path::Path;
use std::process::Command;

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pqbackbone"));
    for var in ["CONFIG", "SEED", "TRIALS", "JOBS", "OUT", "FORMAT"] {
        c.env_remove(format!("PQBACKBONE_{var}"));
    }
    c
}

pub fn run_cmd(mut c: Command) -> Run {
    let out = c.output().expect("binary runs");
    Run {
        code: out.status.code().expect("exit code"),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

pub fn run(args: &[&str]) -> Run {
    let mut c = bin();
    c.args(args);
    run_cmd(c)
}

/// Writes `text` as a config file in `dir` and returns its path.
pub fn config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

pub fn json(s: &str) -> serde_json::Value {
    serde_json::from_str(s).expect("valid JSON report")
}

pub fn golden_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub const COMPARE_CONFIG: &str = "\
# classical vs quantum rows at f = 0.03
f = 0.03
p = 1e-6
eps = 0.1
n = 100
t = 30
q = 1
Q = 8
s = 1000
N = 1000
ks = 10, 40, 100
";
