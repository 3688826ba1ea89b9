//! Plain-text frame stacks and run manifests.
//!
//! Frame-stack files ("FSTK", version 1) are line-oriented:
//!
//! ```text
//! FSTK 1
//! <rows> <cols> <frames> <dtype>
//! <cols values> ... one line per row, frames concatenated ...
//! ```
//!
//! `dtype` is `f64` (17 significant digits, lossless round trip), `u32`
//! (counts), or `u1` (binary).  Values are space-separated, lines end with
//! LF, and there are no blank lines or trailing spaces.  Writes go to a
//! temporary file in the same directory followed by a rename, so readers
//! never observe a half-written stack.
//!
//! Manifests are flat `key=value` lines recording enough to rerun a command:
//! tool version, full configuration, input digests, seed, timings, and the
//! outputs with their digests.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write as _};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::{Dims, FrameStack};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Dtype {
    F64,
    U32,
    U1,
}

impl Dtype {
    pub fn token(&self) -> &'static str {
        match self {
            Dtype::F64 => "f64",
            Dtype::U32 => "u32",
            Dtype::U1 => "u1",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "f64" => Ok(Dtype::F64),
            "u32" => Ok(Dtype::U32),
            "u1" => Ok(Dtype::U1),
            other => Err(Error::Format(format!("unknown dtype '{other}' (expected f64, u32, or u1)"))),
        }
    }
}

// Writes through a temporary sibling file, then renames into place.
fn write_atomic(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let tmp: PathBuf = dir.join(format!(".{}.tmp.{}", name.to_string_lossy(), std::process::id()));
    let mut w = BufWriter::new(File::create(&tmp)?);
    let written = body(&mut w).and_then(|()| w.flush().map_err(Error::from));
    match written {
        Ok(()) => {
            drop(w);
            std::fs::rename(&tmp, path)?;
            Ok(())
        }
        Err(e) => {
            drop(w);
            let _ = std::fs::remove_file(&tmp);
            Err(e)
        }
    }
}

/// Formats with 17 significant digits, enough to reproduce any f64 exactly.
fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a frame stack.  `u32` and `u1` stacks are validated first.
pub fn write_fstk(path: &Path, stack: &FrameStack, dtype: Dtype) -> Result<()> {
    let d = stack.dims();
    match dtype {
        Dtype::U1 => stack.validate_binary("stack")?,
        Dtype::U32 => {
            stack.validate_counts("stack")?;
            if let Some(&v) = stack.data().iter().find(|&&v| v > u32::MAX as f64) {
                return Err(Error::DataValidation(format!("count {v} does not fit in u32")));
            }
        }
        Dtype::F64 => {
            if let Some(&v) = stack.data().iter().find(|v| !v.is_finite()) {
                return Err(Error::DataValidation(format!("non-finite value {v} cannot be stored")));
            }
        }
    }
    write_atomic(path, |w| {
        writeln!(w, "FSTK 1")?;
        writeln!(w, "{} {} {} {}", d.rows, d.cols, d.frames, dtype.token())?;
        let mut line = String::new();
        for t in 0..d.frames {
            for i in 0..d.rows {
                line.clear();
                for j in 0..d.cols {
                    if j > 0 {
                        line.push(' ');
                    }
                    let v = stack.get(i, j, t);
                    match dtype {
                        Dtype::F64 => {
                            let _ = write!(line, "{}", fmt_f64(v));
                        }
                        Dtype::U32 | Dtype::U1 => {
                            let _ = write!(line, "{}", v as u64);
                        }
                    }
                }
                writeln!(w, "{line}")?;
            }
        }
        Ok(())
    })
}

/// Reads a frame stack, returning the data and its declared dtype.
pub fn read_fstk(path: &Path) -> Result<(FrameStack, Dtype)> {
    let file = File::open(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let mut next_line = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((n, Ok(l))) => Ok((n + 1, l)),
            Some((n, Err(e))) => Err(Error::Format(format!("{}:{}: {e}", path.display(), n + 1))),
            None => {
                Err(Error::Format(format!("{}: unexpected end of file, expected {what}", path.display())))
            }
        }
    };

    let (n, magic) = next_line("header")?;
    if magic.trim_end() != "FSTK 1" {
        return Err(Error::Format(format!("{}:{n}: expected 'FSTK 1', got '{magic}'", path.display())));
    }
    let (n, shape) = next_line("dimensions")?;
    let toks: Vec<&str> = shape.split_whitespace().collect();
    if toks.len() != 4 {
        return Err(Error::Format(format!(
            "{}:{n}: expected 'rows cols frames dtype', got '{shape}'",
            path.display()
        )));
    }
    let parse_dim = |s: &str, what: &str| -> Result<usize> {
        s.parse::<usize>().map_err(|_| Error::Format(format!("{}:{n}: invalid {what} '{s}'", path.display())))
    };
    let rows = parse_dim(toks[0], "row count")?;
    let cols = parse_dim(toks[1], "column count")?;
    let frames = parse_dim(toks[2], "frame count")?;
    let dtype = Dtype::parse(toks[3])?;
    let dims = Dims::new(rows, cols, frames)?;

    let mut data = Vec::with_capacity(dims.len());
    for _ in 0..frames {
        for _ in 0..rows {
            let (n, line) = next_line("a data row")?;
            let mut count = 0usize;
            for tok in line.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| Error::Format(format!("{}:{n}: invalid value '{tok}'", path.display())))?;
                match dtype {
                    Dtype::U1 if v != 0.0 && v != 1.0 => {
                        return Err(Error::Format(format!(
                            "{}:{n}: binary stack holds '{tok}'",
                            path.display()
                        )));
                    }
                    Dtype::U32 if v < 0.0 || v.fract() != 0.0 => {
                        return Err(Error::Format(format!(
                            "{}:{n}: count stack holds '{tok}'",
                            path.display()
                        )));
                    }
                    _ => {}
                }
                data.push(v);
                count += 1;
            }
            if count != cols {
                return Err(Error::Format(format!(
                    "{}:{n}: expected {cols} values, found {count}",
                    path.display()
                )));
            }
        }
    }
    if let Some((n, Ok(extra))) = lines.next() {
        if !extra.trim().is_empty() {
            return Err(Error::Format(format!("{}:{}: trailing content '{extra}'", path.display(), n + 1)));
        }
    }
    Ok((FrameStack::new(dims, data)?, dtype))
}

/// SHA-256 of a file, lowercase hex.
pub fn sha256_hex(path: &Path) -> Result<String> {
    let mut f = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 65536];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for b in digest {
        let _ = write!(hex, "{b:02x}");
    }
    Ok(hex)
}

/// Ordered `key=value` pairs describing one run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pairs: Vec<(String, String)>,
}

impl Manifest {
    pub fn new() -> Self {
        Manifest::default()
    }

    pub fn push(&mut self, key: &str, value: impl std::fmt::Display) {
        debug_assert!(!key.contains('=') && !key.contains('\n'));
        self.pairs.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, |w| {
            for (k, v) in &self.pairs {
                writeln!(w, "{k}={v}")?;
            }
            Ok(())
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let mut pairs = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), n + 1)))?;
            if line.trim().is_empty() {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => pairs.push((k.to_string(), v.to_string())),
                None => {
                    return Err(Error::Format(format!(
                        "{}:{}: expected key=value, got '{line}'",
                        path.display(),
                        n + 1
                    )));
                }
            }
        }
        Ok(Manifest { pairs })
    }
}

/// Writes a small comma-separated table with a header row.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "{}", header.join(","))?;
        for row in rows {
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    })
}
