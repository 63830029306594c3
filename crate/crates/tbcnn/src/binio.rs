//! Small binary container: a JSON header describing named sections followed
//! by raw little-endian payloads. Round-trips tensors bit-exactly, which
//! text formats cannot guarantee.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAGIC: &[u8; 4] = b"TBCN";
const VERSION: u32 = 1;

pub struct Section {
    pub name: String,
    pub dtype: String,
    pub bytes: Vec<u8>,
}

impl Section {
    pub fn from_u32(name: &str, values: &[u32]) -> Section {
        let mut bytes = Vec::with_capacity(values.len() * 4);
        for v in values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        Section { name: name.to_string(), dtype: "u32".into(), bytes }
    }

    pub fn from_scalars<T: Scalar>(name: &str, values: &[T]) -> Section {
        let mut bytes = Vec::with_capacity(values.len() * T::BYTES);
        for v in values {
            bytes.extend_from_slice(&v.to_le_bytes()[..T::BYTES]);
        }
        Section { name: name.to_string(), dtype: T::TAG.into(), bytes }
    }
}

pub struct Container {
    pub meta: serde_json::Value,
    sections: HashMap<String, (String, Vec<u8>)>,
}

impl Container {
    fn section(&self, name: &str, dtype: &str) -> Result<&[u8]> {
        match self.sections.get(name) {
            Some((d, bytes)) if d == dtype => Ok(bytes),
            Some((d, _)) => Err(Error::Config(format!(
                "section {name}: expected dtype {dtype}, found {d}"
            ))),
            None => Err(Error::Config(format!("missing section {name}"))),
        }
    }

    pub fn section_u32(&self, name: &str) -> Result<Vec<u32>> {
        let bytes = self.section(name, "u32")?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("chunk of 4")))
            .collect())
    }

    pub fn section_scalars<T: Scalar>(&self, name: &str) -> Result<Vec<T>> {
        let bytes = self.section(name, T::TAG)?;
        if bytes.len() % T::BYTES != 0 {
            return Err(Error::Config(format!("section {name}: truncated payload")));
        }
        Ok(bytes.chunks_exact(T::BYTES).map(T::from_le_slice).collect())
    }
}

pub fn write_container(path: &Path, meta: &serde_json::Value, sections: &[Section]) -> Result<()> {
    let header = serde_json::json!({
        "meta": meta,
        "sections": sections
            .iter()
            .map(|s| serde_json::json!({"name": s.name, "dtype": s.dtype, "len": s.bytes.len()}))
            .collect::<Vec<_>>(),
    });
    let header_bytes = serde_json::to_vec(&header)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(header_bytes.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&header_bytes).map_err(io)?;
    for s in sections {
        w.write_all(&s.bytes).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_container(path: &Path) -> Result<Container> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = std::io::BufReader::new(file);
    let bad = |message: &str| Error::ModelFormat {
        path: path.display().to_string(),
        message: message.to_string(),
    };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if &magic != MAGIC {
        return Err(bad("not a TBCN container"));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word).map_err(|e| Error::io(path, e))?;
    if u32::from_le_bytes(word) != VERSION {
        return Err(bad("unsupported container version"));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len).map_err(|e| Error::io(path, e))?;
    let header_len = u64::from_le_bytes(len) as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes).map_err(|e| Error::io(path, e))?;
    let header: serde_json::Value = serde_json::from_slice(&header_bytes)?;
    let meta = header["meta"].clone();
    let listed = header["sections"].as_array().ok_or_else(|| bad("header lists no sections"))?;
    let mut sections = HashMap::new();
    for entry in listed {
        let name = entry["name"].as_str().ok_or_else(|| bad("section without name"))?;
        let dtype = entry["dtype"].as_str().ok_or_else(|| bad("section without dtype"))?;
        let len = entry["len"].as_u64().ok_or_else(|| bad("section without len"))? as usize;
        let mut bytes = vec![0u8; len];
        r.read_exact(&mut bytes).map_err(|e| Error::io(path, e))?;
        sections.insert(name.to_string(), (dtype.to_string(), bytes));
    }
    Ok(Container { meta, sections })
}
