#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_heatconv");

/// Runs the binary with `cwd` as working directory.
pub fn run_in(cwd: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn heatconv")
}

pub fn run_ok(cwd: &Path, args: &[&str]) -> Output {
    let out = run_in(cwd, args);
    assert!(
        out.status.success(),
        "heatconv {args:?} failed\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn read(path: impl AsRef<Path>) -> String {
    let path = path.as_ref();
    fs::read_to_string(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

/// Value of a `key<TAB>value` line.
pub fn field(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(key)?.strip_prefix('\t'))
        .unwrap_or_else(|| panic!("no {key} line in\n{text}"))
        .to_string()
}

/// Leading number of a `key<TAB>value` line, e.g. `accuracy<TAB>0.95 ± 0.02`.
pub fn number(text: &str, key: &str) -> f64 {
    let v = field(text, key);
    v.split_whitespace().next().unwrap().parse().unwrap()
}

/// Non-comment rows of a TSV artifact, split into fields.
pub fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| l.split('\t').map(str::to_string).collect())
        .collect()
}

/// Writes the default SBM (2 × 100 nodes) into `dir/name`.
pub fn gen_sbm(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let mut args = vec!["generate", "sbm", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run_ok(dir, &args);
    out
}

/// Writes the default two-class population into `dir/name`.
pub fn gen_population(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let mut args = vec!["generate", "population", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run_ok(dir, &args);
    out
}

/// Scale column of an `export-scales` table.
pub fn exported_scales(text: &str) -> Vec<(usize, f64)> {
    rows(text)
        .iter()
        .map(|r| (r[1].parse().unwrap(), r.last().unwrap().parse().unwrap()))
        .collect()
}
