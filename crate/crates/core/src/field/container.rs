//! Binary container: 8-byte magic, u64 LE header length, JSON header, then
//! little-endian f64 payload.

use super::FieldSample;
use crate::error::{Error, Result};
use serde_json::{json, Value};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"GFF4DBIN";

pub fn write_container(w: &mut impl Write, header: &Value, payload: &[f64]) -> Result<()> {
    let text = serde_json::to_vec(header).map_err(|e| Error::Io(e.to_string()))?;
    w.write_all(MAGIC)?;
    w.write_all(&(text.len() as u64).to_le_bytes())?;
    w.write_all(&text)?;
    let mut buf = Vec::with_capacity(payload.len() * 8);
    for v in payload {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_container(r: &mut impl Read) -> Result<(Value, Vec<f64>)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Io("not a gff4d container".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    let mut text = vec![0u8; len];
    r.read_exact(&mut text)?;
    let header: Value = serde_json::from_slice(&text).map_err(|e| Error::Io(format!("bad header: {e}")))?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if rest.len() % 8 != 0 {
        return Err(Error::Io("payload is not a whole number of f64".into()));
    }
    let payload = rest.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((header, payload))
}

impl FieldSample {
    pub fn header(&self) -> Value {
        json!({
            "kind": "field_sample",
            "grid": self.grid,
            "ladder": self.ladder,
            "seed": self.seed,
            "replica": self.replica,
            "backend": self.backend.name(),
            "provenance": self.provenance,
        })
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        write_container(w, &self.header(), &self.values)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let (h, values) = read_container(r)?;
        if h["kind"] != "field_sample" {
            return Err(Error::Io("container does not hold a field sample".into()));
        }
        let bad = |e: serde_json::Error| Error::Io(format!("bad header: {e}"));
        let backend = match h["backend"].as_str() {
            Some("dense") => super::Backend::Dense,
            Some("circulant") => super::Backend::Circulant,
            _ => return Err(Error::Io("unknown backend in header".into())),
        };
        let s = FieldSample {
            grid: serde_json::from_value(h["grid"].clone()).map_err(bad)?,
            ladder: serde_json::from_value(h["ladder"].clone()).map_err(bad)?,
            values,
            seed: h["seed"].as_u64().ok_or_else(|| Error::Io("missing seed".into()))?,
            replica: h["replica"].as_u64().ok_or_else(|| Error::Io("missing replica".into()))?,
            backend,
            provenance: serde_json::from_value(h["provenance"].clone()).map_err(bad)?,
        };
        if s.values.len() != s.grid.len() * s.ladder.depth {
            return Err(Error::Io("payload length does not match grid and ladder".into()));
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut f)
    }
}
