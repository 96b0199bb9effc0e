#![allow(dead_code)]

use std::path::{Path, PathBuf};

pub fn mtom(args: &[&str]) -> i32 {
    mtom_cli::run(std::iter::once("mtom").chain(args.iter().copied()))
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

/// Generates a small corpus and returns its root.
pub fn corpus(dir: &Path, name: &str, sets: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let mut args = vec!["generate", "--out", p(&out), "--set", "frame_size=20"];
    for s in sets {
        args.extend(["--set", s]);
    }
    assert_eq!(mtom(&args), 0, "generate {sets:?}");
    out
}

/// Every file under `root`, relative path and bytes, sorted.
pub fn snapshot(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((
                    path.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&path).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

pub fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    mtom_cli::files::read_csv(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}
