#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use navfuse::cli;

pub fn run(args: &[&str]) -> navfuse::Result<String> {
    let mut out = Vec::new();
    let mut full = vec!["navfuse"];
    full.extend_from_slice(args);
    cli::run(full, &mut out)?;
    Ok(String::from_utf8(out).unwrap())
}

pub fn binary(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_navfuse")).args(args).output().unwrap()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Three small worlds and twelve episodes: 8 train, 2 val_seen, 2 val_unseen.
pub fn tiny_world(dir: &Path, seed: u64) -> PathBuf {
    let path = dir.join(format!("world{seed}.json"));
    run(&[
        "generate-world",
        "--seed",
        &seed.to_string(),
        "--nodes",
        "6",
        "--episodes",
        "12",
        "--seen-worlds",
        "2",
        "--unseen-worlds",
        "1",
        "--out",
        p(&path),
    ])
    .unwrap();
    path
}

pub fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

pub const FAST: &str = "epochs = 2\nwarmup_epochs = 1\neval_every = 0\nlang_hidden = 32\n";
