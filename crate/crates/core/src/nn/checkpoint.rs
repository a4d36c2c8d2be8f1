use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &str = "dlpa-checkpoint";
const VERSION: u32 = 1;

/// Named tensors plus string metadata, serialized as text.
///
/// Values are stored as hexadecimal IEEE-754 bit patterns so a round trip is
/// exact, including signed zeros.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, usize, usize, Vec<f64>)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.push((key.to_string(), value.to_string()));
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Checkpoint(format!("missing metadata `{key}`")))
    }

    pub fn push(&mut self, name: impl Into<String>, rows: usize, cols: usize, data: &[f64]) {
        debug_assert_eq!(rows * cols, data.len());
        self.tensors.push((name.into(), rows, cols, data.to_vec()));
    }

    /// Looks up a tensor and checks its shape.
    pub fn tensor(&self, name: &str, rows: usize, cols: usize) -> Result<&[f64]> {
        let (_, r, c, data) = self
            .tensors
            .iter()
            .find(|(n, ..)| n == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
        if (*r, *c) != (rows, cols) {
            return Err(Error::Checkpoint(format!(
                "tensor `{name}` is {r}x{c}, expected {rows}x{cols}"
            )));
        }
        Ok(data)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC} {VERSION}\n");
        for (k, v) in &self.meta {
            let _ = writeln!(out, "meta {k} {v}");
        }
        for (name, rows, cols, data) in &self.tensors {
            let _ = writeln!(out, "tensor {name} {rows} {cols}");
            for chunk in data.chunks(8) {
                let line: Vec<String> = chunk
                    .iter()
                    .map(|v| format!("{:016x}", v.to_bits()))
                    .collect();
                let _ = writeln!(out, "{}", line.join(" "));
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Checkpoint(msg);
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty checkpoint".into()))?;
        let mut hp = header.split_whitespace();
        if hp.next() != Some(MAGIC) {
            return Err(bad("not a checkpoint file".into()));
        }
        let version: u32 = hp
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("missing version".into()))?;
        if version != VERSION {
            return Err(bad(format!("unsupported checkpoint version {version}")));
        }

        let mut ck = Checkpoint::new();
        let mut ended = false;
        while let Some(line) = lines.next() {
            if line == "end" {
                ended = true;
                break;
            }
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                ck.meta.push((k.to_string(), v.to_string()));
            } else if let Some(rest) = line.strip_prefix("tensor ") {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(bad(format!("malformed tensor header `{line}`")));
                }
                let rows: usize = parts[1]
                    .parse()
                    .map_err(|_| bad(format!("bad rows in `{line}`")))?;
                let cols: usize = parts[2]
                    .parse()
                    .map_err(|_| bad(format!("bad cols in `{line}`")))?;
                let n = rows * cols;
                let mut data = Vec::with_capacity(n);
                while data.len() < n {
                    let row = lines
                        .next()
                        .ok_or_else(|| bad(format!("tensor `{}` truncated", parts[0])))?;
                    for tok in row.split_whitespace() {
                        let bits = u64::from_str_radix(tok, 16)
                            .map_err(|_| bad(format!("bad value `{tok}`")))?;
                        data.push(f64::from_bits(bits));
                    }
                }
                if data.len() != n {
                    return Err(bad(format!("tensor `{}` has extra values", parts[0])));
                }
                ck.tensors.push((parts[0].to_string(), rows, cols, data));
            } else if !line.trim().is_empty() {
                return Err(bad(format!("unexpected line `{line}`")));
            }
        }
        if !ended {
            return Err(bad("checkpoint truncated".into()));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}
