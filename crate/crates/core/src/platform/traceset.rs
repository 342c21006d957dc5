//! In-memory trace sets and the `PSCT` container.
//!
//! Layout (little-endian): magic `PSCT`, version u16, N u32, S u16,
//! tap_count u16, window start u16, window end u16, sensor id u8,
//! polarity u8 (1 = negate before correlating), scenario digest [u8; 32],
//! N*S f32 samples, N plaintexts, N ciphertexts. An empty window
//! (start == end) means no window was recorded.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::aes::{Block, BLOCK_LEN, ROUNDS};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PSCT";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 2 + 2 + 2 + 2 + 1 + 1 + 32;

#[derive(Clone, Debug, PartialEq)]
pub struct TraceSet {
    samples: Vec<f32>,
    samples_per_trace: usize,
    pub tap_count: u16,
    pub plaintexts: Vec<Block>,
    pub ciphertexts: Vec<Block>,
    /// Half-open range of samples covering the tenth round.
    pub window: Option<(u16, u16)>,
    pub sensor_id: u8,
    /// Samples fall as switching rises, so the attack negates them.
    pub negate: bool,
    pub scenario_digest: [u8; 32],
}

impl TraceSet {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        samples: Vec<f32>,
        samples_per_trace: usize,
        tap_count: u16,
        plaintexts: Vec<Block>,
        ciphertexts: Vec<Block>,
        window: Option<(u16, u16)>,
        sensor_id: u8,
        negate: bool,
        scenario_digest: [u8; 32],
    ) -> Result<Self> {
        if samples_per_trace < ROUNDS + 1 || samples_per_trace > u16::MAX as usize {
            return Err(Error::Format(format!(
                "{samples_per_trace} samples per trace; need at least {}",
                ROUNDS + 1
            )));
        }
        let n = plaintexts.len();
        if ciphertexts.len() != n || samples.len() != n * samples_per_trace {
            return Err(Error::Format("sample, plaintext and ciphertext counts disagree".into()));
        }
        if n > u32::MAX as usize {
            return Err(Error::Format("too many traces".into()));
        }
        if let Some((a, b)) = window {
            if a >= b || b as usize > samples_per_trace {
                return Err(Error::Format(format!("window {a}..{b} outside {samples_per_trace} samples")));
            }
        }
        Ok(TraceSet {
            samples,
            samples_per_trace,
            tap_count,
            plaintexts,
            ciphertexts,
            window,
            sensor_id,
            negate,
            scenario_digest,
        })
    }

    pub fn len(&self) -> usize {
        self.plaintexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plaintexts.is_empty()
    }

    pub fn samples_per_trace(&self) -> usize {
        self.samples_per_trace
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn trace(&self, i: usize) -> &[f32] {
        &self.samples[i * self.samples_per_trace..(i + 1) * self.samples_per_trace]
    }

    /// The first `n` traces.
    pub fn prefix(&self, n: usize) -> TraceSet {
        let n = n.min(self.len());
        TraceSet {
            samples: self.samples[..n * self.samples_per_trace].to_vec(),
            plaintexts: self.plaintexts[..n].to_vec(),
            ciphertexts: self.ciphertexts[..n].to_vec(),
            ..self.clone_header()
        }
    }

    /// Reorders traces so that row `i` of the result is row `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Result<TraceSet> {
        let mut seen = vec![false; self.len()];
        if order.len() != self.len() || !order.iter().all(|&i| i < seen.len() && !std::mem::replace(&mut seen[i], true)) {
            return Err(Error::InvalidArgument("not a permutation of the trace rows".into()));
        }
        let mut samples = Vec::with_capacity(self.samples.len());
        for &i in order {
            samples.extend_from_slice(self.trace(i));
        }
        Ok(TraceSet {
            samples,
            plaintexts: order.iter().map(|&i| self.plaintexts[i]).collect(),
            ciphertexts: order.iter().map(|&i| self.ciphertexts[i]).collect(),
            ..self.clone_header()
        })
    }

    /// Replaces every sample with `f(sample)`.
    pub fn map_samples(&self, f: impl Fn(f32) -> f32) -> TraceSet {
        TraceSet {
            samples: self.samples.iter().map(|&s| f(s)).collect(),
            plaintexts: self.plaintexts.clone(),
            ciphertexts: self.ciphertexts.clone(),
            ..self.clone_header()
        }
    }

    fn clone_header(&self) -> TraceSet {
        TraceSet {
            samples: Vec::new(),
            samples_per_trace: self.samples_per_trace,
            tap_count: self.tap_count,
            plaintexts: Vec::new(),
            ciphertexts: Vec::new(),
            window: self.window,
            sensor_id: self.sensor_id,
            negate: self.negate,
            scenario_digest: self.scenario_digest,
        }
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let (ws, we) = self.window.unwrap_or((0, 0));
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.len() as u32).to_le_bytes())?;
        w.write_all(&(self.samples_per_trace as u16).to_le_bytes())?;
        w.write_all(&self.tap_count.to_le_bytes())?;
        w.write_all(&ws.to_le_bytes())?;
        w.write_all(&we.to_le_bytes())?;
        w.write_all(&[self.sensor_id, self.negate as u8])?;
        w.write_all(&self.scenario_digest)?;
        let mut buf = Vec::with_capacity(self.samples.len() * 4);
        for s in &self.samples {
            buf.extend_from_slice(&s.to_le_bytes());
        }
        w.write_all(&buf)?;
        for b in self.plaintexts.iter().chain(&self.ciphertexts) {
            w.write_all(b.as_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<TraceSet> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<TraceSet> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!("truncated header ({} bytes)", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Format("bad magic, not a PSCT trace file".into()));
        }
        let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
        let version = u16_at(4);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format version {version}")));
        }
        let n = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let s = u16_at(10) as usize;
        let tap_count = u16_at(12);
        let (ws, we) = (u16_at(14), u16_at(16));
        let sensor_id = bytes[18];
        let negate = match bytes[19] {
            0 => false,
            1 => true,
            other => return Err(Error::Format(format!("bad polarity flag {other}"))),
        };
        let digest: [u8; 32] = bytes[20..52].try_into().unwrap();
        let body = n
            .checked_mul(s * 4 + 2 * BLOCK_LEN)
            .ok_or_else(|| Error::Format("trace count overflows".into()))?;
        let rest = &bytes[HEADER_LEN..];
        if rest.len() < body {
            return Err(Error::Format(format!("truncated body: {} of {body} bytes", rest.len())));
        }
        if rest.len() > body {
            return Err(Error::Format(format!("{} trailing bytes", rest.len() - body)));
        }
        let (sample_bytes, blocks) = rest.split_at(n * s * 4);
        let samples = sample_bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut all = blocks
            .chunks_exact(BLOCK_LEN)
            .map(|c| Block(c.try_into().unwrap()));
        let plaintexts: Vec<Block> = all.by_ref().take(n).collect();
        let ciphertexts: Vec<Block> = all.collect();
        let window = (ws != we).then_some((ws, we));
        TraceSet::new(samples, s, tap_count, plaintexts, ciphertexts, window, sensor_id, negate, digest)
    }

    pub fn load(path: &Path) -> Result<TraceSet> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }

    /// Writes the file; refuses to replace an existing one unless `force`.
    pub fn save(&self, path: &Path, force: bool) -> Result<()> {
        let file = create_output(path, force)?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

/// Opens an output file, write-once unless `force` is set.
pub fn create_output(path: &Path, force: bool) -> Result<File> {
    if force {
        Ok(File::create(path)?)
    } else {
        File::options().write(true).create_new(true).open(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::AlreadyExists {
                Error::Precondition(format!("{} exists; pass --force to overwrite", path.display()))
            } else {
                e.into()
            }
        })
    }
}
