// SPDX-License-Identifier: Apache-2.0

//! Golden curated programs on disk: `<dir>/programs/<op>[_unsigned]_n<n>.uprog`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::curated::curated_program;
use crate::oplib::{Op, OpError, OpOptions};
use crate::uprogram::{MicroProgram, ProgramError};

pub const CORPUS_WIDTHS: [u32; 5] = [2, 4, 8, 16, 32];
pub const CORPUS_ENV: &str = "SIMDRAM_CORPUS";

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{0}: no corpus entry")]
    Missing(PathBuf),
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("{0}: {1}")]
    Parse(PathBuf, ProgramError),
    #[error(transparent)]
    Op(#[from] OpError),
}

/// `$SIMDRAM_CORPUS`, else the in-repo `corpus/v1`.
pub fn corpus_dir() -> PathBuf {
    match std::env::var_os(CORPUS_ENV) {
        Some(p) => PathBuf::from(p),
        None => Path::new(env!("CARGO_MANIFEST_DIR")).ancestors().nth(2).unwrap_or(Path::new(".")).join("corpus/v1"),
    }
}

/// File name for one entry; only options that change the schedule appear in it.
pub fn program_file(op: Op, n: u32, opts: &OpOptions) -> String {
    let variant = if op.signed(opts) != op.signed(&OpOptions::default()) { "_unsigned" } else { "" };
    format!("{}{variant}_n{n}.uprog", op.name())
}

/// Every (op, n, options) the corpus holds.
pub fn corpus_entries() -> Vec<(Op, u32, OpOptions)> {
    let mut v = Vec::new();
    for op in Op::ALL {
        for n in CORPUS_WIDTHS {
            v.push((op, n, OpOptions::default()));
            let u = OpOptions { unsigned: true, ..Default::default() };
            if op.signed(&u) != op.signed(&OpOptions::default()) {
                v.push((op, n, u));
            }
        }
    }
    v
}

fn path_of(dir: &Path, op: Op, n: u32, opts: &OpOptions) -> PathBuf {
    dir.join("programs").join(program_file(op, n, opts))
}

/// Regenerate every entry under `dir`.
pub fn write_corpus(dir: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    let pdir = dir.join("programs");
    fs::create_dir_all(&pdir).map_err(|e| CorpusError::Io(pdir.clone(), e))?;
    let mut out = Vec::new();
    for (op, n, o) in corpus_entries() {
        let path = path_of(dir, op, n, &o);
        let text = curated_program(op, n, &o)?.encode();
        fs::write(&path, text).map_err(|e| CorpusError::Io(path.clone(), e))?;
        out.push(path);
    }
    Ok(out)
}

pub fn read_program_text(dir: &Path, op: Op, n: u32, opts: &OpOptions) -> Result<String, CorpusError> {
    let path = path_of(dir, op, n, opts);
    if !path.exists() {
        return Err(CorpusError::Missing(path));
    }
    fs::read_to_string(&path).map_err(|e| CorpusError::Io(path, e))
}

pub fn load_program(dir: &Path, op: Op, n: u32, opts: &OpOptions) -> Result<MicroProgram, CorpusError> {
    let text = read_program_text(dir, op, n, opts)?;
    MicroProgram::decode(&text).map_err(|e| CorpusError::Parse(path_of(dir, op, n, opts), e))
}

/// Entries whose stored bytes differ from a fresh curated build.
pub fn diff_corpus(dir: &Path) -> Result<Vec<String>, CorpusError> {
    let mut bad = Vec::new();
    for (op, n, o) in corpus_entries() {
        let want = curated_program(op, n, &o)?.encode();
        match read_program_text(dir, op, n, &o) {
            Ok(got) if got == want => {}
            Ok(_) => bad.push(format!("{} differs", program_file(op, n, &o))),
            Err(e) => bad.push(e.to_string()),
        }
    }
    Ok(bad)
}
