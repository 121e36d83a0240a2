//! Binary adjacency dump, for auditing a built network.
//!
//! Layout (integers are unsigned LEB128 varints, floats little-endian):
//!
//! ```text
//! magic      8 bytes   "MCADJv1\n"
//! dt_ms      f64
//! n_neurons  varint
//! repeated n_neurons times, source ids ascending:
//!     count      varint
//!     repeated count times:
//!         target       varint
//!         weight_pa    f32
//!         delay_steps  varint
//! ```

use std::io::{Read, Write};

use super::{NetworkInstance, Synapse};
use crate::error::{Error, Result};

pub const ADJACENCY_MAGIC: &[u8; 8] = b"MCADJv1\n";

fn wrap(e: std::io::Error) -> Error {
    Error::io("<adjacency dump>", e)
}

pub fn write_adjacency_dump<W: Write>(net: &NetworkInstance, mut w: W) -> Result<()> {
    w.write_all(ADJACENCY_MAGIC).map_err(wrap)?;
    w.write_all(&net.dt_ms.to_le_bytes()).map_err(wrap)?;
    let n = net.n_neurons();
    leb128::write::unsigned(&mut w, n as u64).map_err(wrap)?;
    let mut buf: Vec<Synapse> = Vec::new();
    for src in 0..n as u32 {
        buf.clear();
        buf.extend(net.synapses.outgoing(src));
        leb128::write::unsigned(&mut w, buf.len() as u64).map_err(wrap)?;
        for s in &buf {
            leb128::write::unsigned(&mut w, s.target as u64).map_err(wrap)?;
            w.write_all(&s.weight_pa.to_le_bytes()).map_err(wrap)?;
            leb128::write::unsigned(&mut w, s.delay_steps as u64).map_err(wrap)?;
        }
    }
    w.flush().map_err(wrap)
}

/// Parsed dump: outgoing synapse lists indexed by source id.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjacencyDump {
    pub dt_ms: f64,
    pub outgoing: Vec<Vec<Synapse>>,
}

fn read_varint<R: Read>(r: &mut R) -> Result<u64> {
    leb128::read::unsigned(r).map_err(|e| Error::Parse(format!("adjacency dump varint: {e}")))
}

pub fn read_adjacency_dump<R: Read>(mut r: R) -> Result<AdjacencyDump> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(wrap)?;
    if &magic != ADJACENCY_MAGIC {
        return Err(Error::Parse("not an adjacency dump (bad magic)".into()));
    }
    let mut f8 = [0u8; 8];
    r.read_exact(&mut f8).map_err(wrap)?;
    let dt_ms = f64::from_le_bytes(f8);
    let n = read_varint(&mut r)? as usize;
    let mut outgoing = Vec::with_capacity(n);
    for _ in 0..n {
        let count = read_varint(&mut r)? as usize;
        let mut list = Vec::with_capacity(count);
        for _ in 0..count {
            let target = read_varint(&mut r)? as u32;
            let mut f4 = [0u8; 4];
            r.read_exact(&mut f4).map_err(wrap)?;
            let delay = read_varint(&mut r)?;
            list.push(Synapse {
                target,
                weight_pa: f32::from_le_bytes(f4),
                delay_steps: u16::try_from(delay).map_err(|_| Error::Parse("delay exceeds u16".into()))?,
            });
        }
        outgoing.push(list);
    }
    Ok(AdjacencyDump { dt_ms, outgoing })
}
