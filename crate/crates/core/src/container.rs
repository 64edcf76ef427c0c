//! Binary model container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes   "XLCRFMDL"
//! version    u32       FORMAT_VERSION
//! kind       str       e.g. "loglinear", "neural"
//! count      u32       number of entries
//! entries    count x { name: str, type: u8, payload }
//! checksum   u64       FNV-1a 64 over every preceding byte
//! ```
//!
//! `str` is a `u32` byte length followed by UTF-8 bytes. Payloads by type:
//! `0` tensor (`u32` rank, rank x `u64` dims, then `f64` values in row-major
//! order), `1` string table (`u64` count, then count x `str`), `2` text.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"XLCRFMDL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Entry {
    Tensor { shape: Vec<usize>, data: Vec<f64> },
    Strings(Vec<String>),
    Text(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: String,
    pub entries: Vec<(String, Entry)>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self, v: u64) -> Result<usize> {
        let n = usize::try_from(v).map_err(|_| Error::Format("length overflow".into()))?;
        if n > self.bytes.len() {
            return Err(Error::Format(format!("implausible length {n}")));
        }
        Ok(n)
    }

    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as u64;
        let n = self.len(n)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Format(e.to_string()))
    }
}

impl Container {
    pub fn new(kind: impl Into<String>) -> Self {
        Container {
            kind: kind.into(),
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, entry: Entry) {
        self.entries.push((name.into(), entry));
    }

    pub fn push_tensor(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.push(name, Entry::Tensor { shape, data });
    }

    pub fn get(&self, name: &str) -> Result<&Entry> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, e)| e)
            .ok_or_else(|| Error::Format(format!("missing entry `{name}`")))
    }

    pub fn tensor(&self, name: &str) -> Result<(&[usize], &[f64])> {
        match self.get(name)? {
            Entry::Tensor { shape, data } => Ok((shape, data)),
            _ => Err(Error::Format(format!("entry `{name}` is not a tensor"))),
        }
    }

    pub fn strings(&self, name: &str) -> Result<&[String]> {
        match self.get(name)? {
            Entry::Strings(s) => Ok(s),
            _ => Err(Error::Format(format!("entry `{name}` is not a string table"))),
        }
    }

    pub fn text(&self, name: &str) -> Result<&str> {
        match self.get(name)? {
            Entry::Text(s) => Ok(s),
            _ => Err(Error::Format(format!("entry `{name}` is not text"))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        put_str(&mut out, &self.kind);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, entry) in &self.entries {
            put_str(&mut out, name);
            match entry {
                Entry::Tensor { shape, data } => {
                    out.push(0);
                    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
                    for &d in shape {
                        out.extend_from_slice(&(d as u64).to_le_bytes());
                    }
                    for v in data {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
                Entry::Strings(strings) => {
                    out.push(1);
                    out.extend_from_slice(&(strings.len() as u64).to_le_bytes());
                    for s in strings {
                        put_str(&mut out, s);
                    }
                }
                Entry::Text(s) => {
                    out.push(2);
                    put_str(&mut out, s);
                }
            }
        }
        let sum = fnv1a(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 12 || &bytes[..8] != MAGIC {
            return Err(Error::Format("not a model file (bad magic)".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().unwrap());
        if stored != fnv1a(body) {
            return Err(Error::Format("checksum mismatch".into()));
        }
        let mut r = Reader { bytes: body, pos: 8 };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format version {version}")));
        }
        let kind = r.str()?;
        let count = r.u32()?;
        let mut entries = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let name = r.str()?;
            let entry = match r.u8()? {
                0 => {
                    let rank = r.u32()? as usize;
                    let mut shape = Vec::with_capacity(rank);
                    for _ in 0..rank {
                        let d = r.u64()?;
                        shape.push(r.len(d)?);
                    }
                    let n: usize = shape.iter().product();
                    let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
                    let data = raw
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect();
                    Entry::Tensor { shape, data }
                }
                1 => {
                    let n = r.u64()?;
                    let n = r.len(n)?;
                    let mut strings = Vec::with_capacity(n);
                    for _ in 0..n {
                        strings.push(r.str()?);
                    }
                    Entry::Strings(strings)
                }
                2 => Entry::Text(r.str()?),
                t => return Err(Error::Format(format!("unknown entry type {t}"))),
            };
            entries.push((name, entry));
        }
        if r.pos != body.len() {
            return Err(Error::Format("trailing bytes".into()));
        }
        Ok(Container { kind, entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Container::from_bytes(&fs::read(path)?)
    }
}

/// Writes via a sibling temporary file and a rename, so readers never see a
/// partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("invalid output path {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}
