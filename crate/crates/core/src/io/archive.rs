//! Binary container for posterior draws.
//!
//! Layout (little endian): the 8-byte magic, a `u32` format version, a `u64`
//! header length and that many bytes of JSON metadata, then a `u64` draw count
//! followed by the draws. Each draw stores its own `K`, so archives from
//! variable-K runs are ragged.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{config_hash, RunConfig};
use super::write_atomic;
use crate::error::{Error, Result};
use crate::model::{Component, MixtureState, SeasonalityConfig, SpatialPoint, StudyRegion, Sym2, WeightMatrix};
use crate::priors::CarState;
use crate::sampler::{Acceptance, PosteriorDraw};

pub const ARCHIVE_MAGIC: &[u8; 8] = b"STMXDRAW";
pub const ARCHIVE_VERSION: u32 = 1;

/// Run metadata stored in the archive header.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveMeta {
    pub seed: u64,
    pub config_hash: String,
    pub config: Option<RunConfig>,
    pub season: SeasonalityConfig,
    pub region: StudyRegion<f64>,
    /// Draws per chain, in storage order.
    pub chain_lengths: Vec<usize>,
    /// Post burn-in acceptance counts per chain.
    pub acceptance: Vec<Acceptance>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrawArchive {
    pub meta: ArchiveMeta,
    pub draws: Vec<PosteriorDraw>,
}

impl DrawArchive {
    /// Draws of each chain.
    pub fn chains(&self) -> Vec<&[PosteriorDraw]> {
        let mut out = Vec::new();
        let mut at = 0;
        for &n in &self.meta.chain_lengths {
            out.push(&self.draws[at..at + n]);
            at += n;
        }
        out
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
}

fn encode_draw(w: &mut Writer, d: &PosteriorDraw) {
    let m = &d.mixture;
    w.u64(d.iteration as u64);
    w.u32(m.k() as u32);
    w.u32(m.weights.rows() as u32);
    for c in &m.components {
        w.f64s(&[c.mu.x, c.mu.y, c.sigma.xx, c.sigma.xy, c.sigma.yy]);
    }
    w.f64s(m.weights.as_slice());
    w.u32(d.car.cols as u32);
    w.f64s(&d.car.pi);
    w.f64s(&d.car.c);
    w.f64s(&d.car.rho);
    w.f64s(&d.car.nu2);
    w.f64s(&[d.beta.xx, d.beta.xy, d.beta.yy]);
    w.u32(d.normalizers.len() as u32);
    w.f64s(&d.normalizers);
    match &d.labels {
        None => w.u8(0),
        Some(l) => {
            w.u8(1);
            w.u64(l.len() as u64);
            for &z in l {
                w.u32(z as u32);
            }
        }
    }
}

pub fn encode_archive(a: &DrawArchive) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&a.meta).map_err(|e| Error::Input(format!("archive header: {e}")))?;
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(ARCHIVE_MAGIC);
    w.u32(ARCHIVE_VERSION);
    w.u64(header.len() as u64);
    w.0.extend_from_slice(&header);
    w.u64(a.draws.len() as u64);
    for d in &a.draws {
        encode_draw(&mut w, d);
    }
    Ok(w.0)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Decode { offset: self.pos as u64, msg: msg.into() }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.err(format!("truncated while reading {what}: need {n} bytes, {} left", self.buf.len() - self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn len(&mut self, what: &str, width: usize) -> Result<usize> {
        let n = self.u64(what)?;
        if n.saturating_mul(width as u64) > (self.buf.len() - self.pos) as u64 {
            return Err(self.err(format!("truncated: {what} {n} exceeds the remaining {} bytes", self.buf.len() - self.pos)));
        }
        Ok(n as usize)
    }
    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| self.err("length overflow"))?, what)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

fn decode_draw(r: &mut Reader, season: &SeasonalityConfig) -> Result<PosteriorDraw> {
    let start = r.pos;
    let iteration = r.u64("iteration")? as usize;
    let k = r.u32("component count")? as usize;
    let rows = r.u32("block count")? as usize;
    if k == 0 || rows != season.block {
        return Err(Error::Decode { offset: start as u64, msg: format!("draw has K = {k} and {rows} blocks") });
    }
    let comps = r.f64s(5 * k, "components")?;
    let components = comps
        .chunks_exact(5)
        .map(|c| Component::new(SpatialPoint::new(c[0], c[1]), Sym2::new(c[2], c[3], c[4])))
        .collect();
    let weights = r.f64s(rows * k, "weights")?;
    let cols = r.u32("CAR column count")? as usize;
    let pi = r.f64s(rows * cols, "transformed weights")?;
    let c = r.f64s(cols, "CAR means")?;
    let rho = r.f64s(cols, "CAR rho")?;
    let nu2 = r.f64s(cols, "CAR nu2")?;
    let b = r.f64s(3, "beta")?;
    let nn = r.u32("normalizer count")? as usize;
    let normalizers = r.f64s(nn, "normalizers")?;
    let labels = match r.u8("label flag")? {
        0 => None,
        1 => {
            let n = r.len("label count", 4)?;
            let mut l = Vec::with_capacity(n);
            for _ in 0..n {
                l.push(r.u32("label")? as usize);
            }
            Some(l)
        }
        f => return Err(r.err(format!("invalid label flag {f}"))),
    };
    let invalid = |e: Error| Error::Decode { offset: start as u64, msg: format!("invalid draw: {e}") };
    let weights = WeightMatrix::new(rows, k, weights).map_err(invalid)?;
    let mixture = MixtureState::new(components, weights, *season).map_err(invalid)?;
    mixture.kernels().map_err(invalid)?;
    let car = CarState::new(rows, pi, c, rho, nu2).map_err(invalid)?;
    if car.cols + 1 != k || nn != rows {
        return Err(Error::Decode { offset: start as u64, msg: "draw dimensions disagree".into() });
    }
    Ok(PosteriorDraw { iteration, mixture, car, beta: Sym2::new(b[0], b[1], b[2]), normalizers, labels })
}

/// Decodes an archive, checking the version, every draw and the config hash.
pub fn decode_archive(buf: &[u8]) -> Result<DrawArchive> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8, "magic")? != ARCHIVE_MAGIC {
        return Err(Error::Decode { offset: 0, msg: "not a draw archive".into() });
    }
    let version = r.u32("version")?;
    if version != ARCHIVE_VERSION {
        return Err(Error::Decode {
            offset: 8,
            msg: format!("unsupported archive version {version} (this build reads {ARCHIVE_VERSION})"),
        });
    }
    let n = r.len("header length", 1)?;
    let at = r.pos;
    let meta: ArchiveMeta = serde_json::from_slice(r.take(n, "header")?)
        .map_err(|e| Error::Decode { offset: at as u64, msg: format!("header: {e}") })?;
    if let Some(cfg) = &meta.config {
        if config_hash(cfg)? != meta.config_hash {
            return Err(Error::Decode { offset: at as u64, msg: "config hash does not match the stored config".into() });
        }
    }
    let count = r.len("draw count", 1)?;
    if meta.chain_lengths.iter().sum::<usize>() != count {
        return Err(r.err(format!("chain lengths {:?} do not sum to {count} draws", meta.chain_lengths)));
    }
    let mut draws = Vec::with_capacity(count);
    for _ in 0..count {
        draws.push(decode_draw(&mut r, &meta.season)?);
    }
    if r.pos != buf.len() {
        return Err(r.err(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    Ok(DrawArchive { meta, draws })
}

pub fn write_draws(archive: &DrawArchive, path: &Path) -> Result<()> {
    write_atomic(path, &encode_archive(archive)?)
}

pub fn read_draws(path: &Path) -> Result<DrawArchive> {
    let buf = std::fs::read(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    decode_archive(&buf)
}
