//! Spike files and raster export.
//!
//! Text spikes: one `time_ms<TAB>neuron_id` line per event, in time order,
//! no header. The run metadata travels separately in the manifest.
//!
//! Binary spikes, little-endian:
//!
//! ```text
//! magic         8 bytes   "MCSPKv1\n"
//! dt_ms         f64
//! duration_ms   f64
//! transient_ms  f64
//! sizes         8 × u64   neurons per population
//! events        (step u32, neuron u32) until end of file
//! ```
//!
//! A binary event's time is `step·dt_ms`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{NUM_POPULATIONS, POPULATION_LABELS};
use crate::engine::{SpikeRecord, SpikeSink};
use crate::error::{Error, Result};
use crate::network::population_ranges;

pub const SPIKE_MAGIC: &[u8; 8] = b"MCSPKv1\n";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpikeFormat {
    Text,
    Binary,
}

impl SpikeFormat {
    /// `.bin` selects binary; everything else is text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => SpikeFormat::Binary,
            _ => SpikeFormat::Text,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            SpikeFormat::Text => "tsv",
            SpikeFormat::Binary => "bin",
        }
    }
}

impl std::str::FromStr for SpikeFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" | "tsv" => Ok(SpikeFormat::Text),
            "binary" | "bin" => Ok(SpikeFormat::Binary),
            _ => Err(Error::Parse(format!("unknown spike format {s:?}"))),
        }
    }
}

/// Everything a spike record holds besides its events.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub dt_ms: f64,
    pub duration_ms: f64,
    pub transient_ms: f64,
    pub sizes: [u64; NUM_POPULATIONS],
}

impl RecordMeta {
    pub fn of(record: &SpikeRecord) -> Self {
        RecordMeta {
            dt_ms: record.dt_ms,
            duration_ms: record.duration_ms,
            transient_ms: record.transient_ms,
            sizes: record.population_ranges.clone().map(|r| r.len() as u64),
        }
    }

    pub fn empty_record(&self) -> SpikeRecord {
        SpikeRecord::new(self.dt_ms, self.duration_ms, self.transient_ms, population_ranges(&self.sizes))
    }
}

/// Decimal places needed to print multiples of `dt` exactly.
fn time_decimals(dt_ms: f64) -> usize {
    (0..=9)
        .find(|&d| {
            let x = dt_ms * 10f64.powi(d as i32);
            (x - x.round()).abs() < 1e-9 * x.max(1.0)
        })
        .unwrap_or(9)
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

pub struct TextSpikeWriter<W: Write> {
    out: W,
    dt_ms: f64,
    decimals: usize,
}

impl<W: Write> TextSpikeWriter<W> {
    pub fn new(out: W, dt_ms: f64) -> Self {
        TextSpikeWriter { out, dt_ms, decimals: time_decimals(dt_ms) }
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush().map_err(|e| Error::io("<spikes>", e))?;
        Ok(self.out)
    }
}

impl<W: Write> SpikeSink for TextSpikeWriter<W> {
    fn record(&mut self, step: u32, neurons: &[u32]) -> Result<()> {
        let t = step as f64 * self.dt_ms;
        for id in neurons {
            writeln!(self.out, "{t:.prec$}\t{id}", prec = self.decimals).map_err(|e| Error::io("<spikes>", e))?;
        }
        Ok(())
    }
}

pub struct BinarySpikeWriter<W: Write> {
    out: W,
}

impl<W: Write> BinarySpikeWriter<W> {
    pub fn new(mut out: W, meta: &RecordMeta) -> Result<Self> {
        let wrap = |e| Error::io("<spikes>", e);
        out.write_all(SPIKE_MAGIC).map_err(wrap)?;
        for x in [meta.dt_ms, meta.duration_ms, meta.transient_ms] {
            out.write_all(&x.to_le_bytes()).map_err(wrap)?;
        }
        for s in meta.sizes {
            out.write_all(&s.to_le_bytes()).map_err(wrap)?;
        }
        Ok(BinarySpikeWriter { out })
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush().map_err(|e| Error::io("<spikes>", e))?;
        Ok(self.out)
    }
}

impl<W: Write> SpikeSink for BinarySpikeWriter<W> {
    fn record(&mut self, step: u32, neurons: &[u32]) -> Result<()> {
        let mut buf = Vec::with_capacity(8 * neurons.len());
        for id in neurons {
            buf.extend_from_slice(&step.to_le_bytes());
            buf.extend_from_slice(&id.to_le_bytes());
        }
        self.out.write_all(&buf).map_err(|e| Error::io("<spikes>", e))
    }
}

/// Replays a record into a sink, one call per distinct step.
pub fn replay<S: SpikeSink + ?Sized>(record: &SpikeRecord, sink: &mut S) -> Result<()> {
    let mut i = 0;
    while i < record.len() {
        let step = record.steps[i];
        let j = i + record.steps[i..].partition_point(|&s| s == step);
        sink.record(step, &record.neurons[i..j])?;
        i = j;
    }
    Ok(())
}

pub fn write_spikes(record: &SpikeRecord, path: &Path, format: SpikeFormat) -> Result<()> {
    let file = BufWriter::new(File::create(path).map_err(io_err(path))?);
    match format {
        SpikeFormat::Text => {
            let mut w = TextSpikeWriter::new(file, record.dt_ms);
            replay(record, &mut w)?;
            w.finish()?;
        }
        SpikeFormat::Binary => {
            let mut w = BinarySpikeWriter::new(file, &RecordMeta::of(record))?;
            replay(record, &mut w)?;
            w.finish()?;
        }
    }
    Ok(())
}

fn check_event(rec: &SpikeRecord, step: u32, id: u32, line: usize) -> Result<()> {
    if (id as usize) >= rec.n_neurons() {
        return Err(Error::Parse(format!("event {line}: neuron {id} outside the network")));
    }
    if rec.steps.last().is_some_and(|&s| s > step) {
        return Err(Error::Parse(format!("event {line}: times are not sorted")));
    }
    Ok(())
}

/// Parses text spikes; the metadata must come from the run's manifest.
pub fn read_spikes_text<R: BufRead>(reader: R, meta: &RecordMeta) -> Result<SpikeRecord> {
    let mut rec = meta.empty_record();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<spikes>", e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (t, id) = line
            .split_once('\t')
            .ok_or_else(|| Error::Parse(format!("line {}: expected time<TAB>id", n + 1)))?;
        let t: f64 = t.trim().parse().map_err(|_| Error::Parse(format!("line {}: bad time {t:?}", n + 1)))?;
        let id: u32 = id.trim().parse().map_err(|_| Error::Parse(format!("line {}: bad id {id:?}", n + 1)))?;
        let step = (t / meta.dt_ms).round();
        if !(step >= 0.0 && step <= u32::MAX as f64) {
            return Err(Error::Parse(format!("line {}: time {t} out of range", n + 1)));
        }
        check_event(&rec, step as u32, id, n + 1)?;
        rec.push(step as u32, id);
    }
    Ok(rec)
}

pub fn read_spikes_binary<R: Read>(mut reader: R) -> Result<SpikeRecord> {
    let wrap = |e| Error::io("<spikes>", e);
    let mut magic = [0u8; 8];
    reader.read_exact(&mut magic).map_err(wrap)?;
    if &magic != SPIKE_MAGIC {
        return Err(Error::Parse("not a binary spike file (bad magic)".into()));
    }
    let mut b8 = [0u8; 8];
    let mut f = [0f64; 3];
    for x in &mut f {
        reader.read_exact(&mut b8).map_err(wrap)?;
        *x = f64::from_le_bytes(b8);
    }
    let mut sizes = [0u64; NUM_POPULATIONS];
    for s in &mut sizes {
        reader.read_exact(&mut b8).map_err(wrap)?;
        *s = u64::from_le_bytes(b8);
    }
    let meta = RecordMeta { dt_ms: f[0], duration_ms: f[1], transient_ms: f[2], sizes };
    let mut rec = meta.empty_record();
    let mut body = Vec::new();
    reader.read_to_end(&mut body).map_err(wrap)?;
    if body.len() % 8 != 0 {
        return Err(Error::Parse("binary spike file truncated".into()));
    }
    for (n, ev) in body.chunks_exact(8).enumerate() {
        let step = u32::from_le_bytes(ev[..4].try_into().unwrap());
        let id = u32::from_le_bytes(ev[4..].try_into().unwrap());
        check_event(&rec, step, id, n + 1)?;
        rec.push(step, id);
    }
    Ok(rec)
}

/// Reads a spike file. Text files need `meta`; binary files carry their own.
pub fn read_spikes(path: &Path, meta: Option<&RecordMeta>) -> Result<SpikeRecord> {
    let file = BufReader::new(File::open(path).map_err(io_err(path))?);
    match SpikeFormat::from_path(path) {
        SpikeFormat::Binary => read_spikes_binary(file),
        SpikeFormat::Text => {
            let meta = meta.ok_or_else(|| Error::invalid("spikes", "text spike files need the run metadata"))?;
            read_spikes_text(file, meta)
        }
    }
}

/// Raster CSV `time_ms,neuron_id,population` for the given neuron sets.
pub fn write_raster<W: Write>(record: &SpikeRecord, ids: &[Vec<u32>; NUM_POPULATIONS], out: W) -> Result<()> {
    let n = record.n_neurons();
    let mut pop = vec![u8::MAX; n];
    for (p, set) in ids.iter().enumerate() {
        for &i in set {
            pop[i as usize] = p as u8;
        }
    }
    let mut w = csv::Writer::from_writer(out);
    let wrap = |e: csv::Error| Error::Parse(format!("raster: {e}"));
    w.write_record(["time_ms", "neuron_id", "population"]).map_err(wrap)?;
    let prec = time_decimals(record.dt_ms);
    for (s, id) in record.events() {
        let p = pop[id as usize];
        if p != u8::MAX {
            let t = format!("{:.prec$}", s as f64 * record.dt_ms);
            w.write_record([t, id.to_string(), POPULATION_LABELS[p as usize].to_string()]).map_err(wrap)?;
        }
    }
    w.flush().map_err(|e| Error::io("<raster>", e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SpikeRecord {
        let mut r = SpikeRecord::new(0.1, 500.0, 100.0, population_ranges(&[3, 2, 2, 2, 2, 2, 2, 2]));
        r.push(3, 0);
        r.push(3, 7);
        r.push(10, 1);
        r.push(4999, 16);
        r
    }

    #[test]
    fn text_format() {
        let r = sample();
        let mut w = TextSpikeWriter::new(Vec::new(), r.dt_ms);
        replay(&r, &mut w).unwrap();
        let text = String::from_utf8(w.finish().unwrap()).unwrap();
        assert_eq!(text, "0.3\t0\n0.3\t7\n1.0\t1\n499.9\t16\n");
        let back = read_spikes_text(text.as_bytes(), &RecordMeta::of(&r)).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn binary_round_trip() {
        let r = sample();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.bin");
        write_spikes(&r, &p, SpikeFormat::Binary).unwrap();
        assert_eq!(read_spikes(&p, None).unwrap(), r);
        let p = dir.path().join("s.tsv");
        write_spikes(&r, &p, SpikeFormat::Text).unwrap();
        assert!(read_spikes(&p, None).is_err());
        assert_eq!(read_spikes(&p, Some(&RecordMeta::of(&r))).unwrap(), r);
    }

    #[test]
    fn rejects_bad_input() {
        let meta = RecordMeta::of(&sample());
        assert!(read_spikes_text("1.0\t99\n".as_bytes(), &meta).is_err());
        assert!(read_spikes_text("2.0\t1\n1.0\t1\n".as_bytes(), &meta).is_err());
        assert!(read_spikes_text("1.0 1\n".as_bytes(), &meta).is_err());
        assert!(read_spikes_binary(&b"MCSPKv2\n"[..]).is_err());
    }

    #[test]
    fn decimals() {
        assert_eq!(time_decimals(0.1), 1);
        assert_eq!(time_decimals(0.025), 3);
        assert_eq!(time_decimals(1.0), 0);
    }

    #[test]
    fn raster_filters_ids() {
        let r = sample();
        let mut ids: [Vec<u32>; 8] = Default::default();
        ids[0] = vec![0];
        ids[7] = vec![16];
        let mut out = Vec::new();
        write_raster(&r, &ids, &mut out).unwrap();
        let s = String::from_utf8(out).unwrap();
        assert_eq!(s, "time_ms,neuron_id,population\n0.3,0,L2e\n499.9,16,L6i\n");
    }
}
