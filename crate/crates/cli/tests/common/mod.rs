#![allow(dead_code)]

use std::collections::BTreeMap;
use std::ffi::{OsStr, OsString};
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn golden_config() -> PathBuf {
    fixtures().join("golden/config.toml")
}

/// Runs the CLI in-process and returns its exit code.
pub fn dallm<S: AsRef<OsStr>>(args: &[S]) -> i32 {
    let mut argv = vec![OsString::from("dallm")];
    argv.extend(args.iter().map(|a| a.as_ref().to_owned()));
    dallm::run(argv)
}

/// `run --ablation` of the golden fixture into `out`.
pub fn golden_run<S: AsRef<OsStr>>(out: &Path, extra: &[S]) -> i32 {
    let mut args: Vec<OsString> = vec!["run".into(), "--ablation".into(), "--config".into()];
    args.push(golden_config().into());
    args.push("--output-dir".into());
    args.push(out.into());
    args.extend(extra.iter().map(|a| a.as_ref().to_owned()));
    dallm(&args)
}

/// sha256 of every file under `root`, keyed by `/`-separated relative path.
pub fn hash_tree(root: &Path) -> BTreeMap<String, String> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) {
        let mut entries: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap();
                let key = rel
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy())
                    .collect::<Vec<_>>()
                    .join("/");
                out.insert(key, hex::encode(Sha256::digest(fs::read(&p).unwrap())));
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

pub fn without<'a>(
    hashes: &'a BTreeMap<String, String>,
    skip: impl Fn(&str) -> bool + 'a,
) -> BTreeMap<&'a str, &'a str> {
    hashes
        .iter()
        .filter(|(k, _)| !skip(k))
        .map(|(k, v)| (k.as_str(), v.as_str()))
        .collect()
}

pub fn is_manifest(name: &str) -> bool {
    name.ends_with(".manifest.json")
}

pub fn is_cache(name: &str) -> bool {
    name.starts_with("cache/")
}
