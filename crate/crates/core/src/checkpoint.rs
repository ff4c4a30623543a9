//! Self-describing binary checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic        4 bytes  "CCM1"
//! version      u32      FORMAT_VERSION
//! activation   u8       0 = tanh, 1 = silu
//! time_feat    u32      time-embedding width
//! n_layers     u32
//! dims         u32 × (n_layers + 1)   input width first
//! flags        u8       bit0 optimizer, bit1 student EMA, bit2 target network
//! seed         u64
//! iteration    u64
//! config_hash  u64
//! n_params     u64      must equal the count implied by dims
//! params       f32 × n_params         per layer: row-major weights, then biases
//! [optimizer]  step u64, lr f64, beta1 f64, beta2 f64, eps f64, m f32 × n, v f32 × n
//! [ema]        decay f64, params f32 × n
//! [target]     decay f64, params f32 × n
//! digest       32 bytes SHA-256 of everything above
//! ```
//!
//! In-memory checkpoints hold parameters already rounded to `f32`, so a
//! checkpoint and its reloaded copy are identical.

use std::path::Path;

use ndarray::{Array1, Array2};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nnet::{Activation, Adam, Layer, Mlp};

pub const MAGIC: &[u8; 4] = b"CCM1";
pub const FORMAT_VERSION: u32 = 1;

const FLAG_OPTIMIZER: u8 = 1;
const FLAG_EMA: u8 = 2;
const FLAG_TARGET: u8 = 4;

/// A network snapshot plus the decay it is tracked with.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedParams {
    pub decay: f64,
    pub model: Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub iteration: u64,
    pub config_hash: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Mlp,
    pub optimizer: Option<Adam>,
    /// Long-run average of the trained parameters.
    pub ema: Option<TrackedParams>,
    /// Target network supplying distillation targets.
    pub target: Option<TrackedParams>,
    pub meta: CheckpointMeta,
}

/// First eight bytes (little-endian) of the SHA-256 of a canonical config text.
pub fn config_hash(canonical: &str) -> u64 {
    let d = Sha256::digest(canonical.as_bytes());
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

fn round_vec(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| *x as f32 as f64).collect()
}

impl Checkpoint {
    /// Snapshots training state, rounding every stored value to `f32`.
    pub fn capture(
        model: &Mlp,
        optimizer: Option<&Adam>,
        ema: Option<(&Mlp, f64)>,
        target: Option<(&Mlp, f64)>,
        meta: CheckpointMeta,
    ) -> Self {
        let rounded = |m: &Mlp| {
            let mut m = m.clone();
            m.round_to_f32();
            m
        };
        Self {
            model: rounded(model),
            optimizer: optimizer.map(|o| Adam {
                m: round_vec(&o.m),
                v: round_vec(&o.v),
                ..o.clone()
            }),
            ema: ema.map(|(m, decay)| TrackedParams {
                decay,
                model: rounded(m),
            }),
            target: target.map(|(m, decay)| TrackedParams {
                decay,
                model: rounded(m),
            }),
            meta,
        }
    }

    /// Network used for generation: the long-run average when present.
    pub fn sampling_model(&self) -> &Mlp {
        self.ema.as_ref().map_or(&self.model, |e| &e.model)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let arch = self.model.architecture();
        let dims = arch.dims();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(arch.activation.id());
        out.extend_from_slice(&(arch.time_features as u32).to_le_bytes());
        out.extend_from_slice(&((dims.len() - 1) as u32).to_le_bytes());
        for d in &dims {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        let mut flags = 0;
        if self.optimizer.is_some() {
            flags |= FLAG_OPTIMIZER;
        }
        if self.ema.is_some() {
            flags |= FLAG_EMA;
        }
        if self.target.is_some() {
            flags |= FLAG_TARGET;
        }
        out.push(flags);
        out.extend_from_slice(&self.meta.seed.to_le_bytes());
        out.extend_from_slice(&self.meta.iteration.to_le_bytes());
        out.extend_from_slice(&self.meta.config_hash.to_le_bytes());
        out.extend_from_slice(&(self.model.param_count() as u64).to_le_bytes());
        let put_params = |out: &mut Vec<u8>, vals: &mut dyn Iterator<Item = &f64>| {
            for v in vals {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        };
        put_params(&mut out, &mut self.model.params());
        if let Some(o) = &self.optimizer {
            out.extend_from_slice(&o.step.to_le_bytes());
            for h in [o.lr, o.beta1, o.beta2, o.eps] {
                out.extend_from_slice(&h.to_le_bytes());
            }
            put_params(&mut out, &mut o.m.iter());
            put_params(&mut out, &mut o.v.iter());
        }
        for tracked in [&self.ema, &self.target].into_iter().flatten() {
            out.extend_from_slice(&tracked.decay.to_le_bytes());
            put_params(&mut out, &mut tracked.model.params());
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..4] != MAGIC {
            return Err(Error::Format("bad magic bytes".into()));
        }
        if bytes.len() < 4 + 32 {
            return Err(Error::Format("truncated checkpoint".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Format("digest mismatch (corrupted checkpoint)".into()));
        }
        let mut r = Reader { buf: body, pos: 4 };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format version {version}")));
        }
        let activation = Activation::from_id(r.u8()?)
            .ok_or_else(|| Error::Format("unknown activation id".into()))?;
        let time_features = r.u32()? as usize;
        let n_layers = r.u32()? as usize;
        if n_layers == 0 || n_layers > 1024 {
            return Err(Error::Format(format!("implausible layer count {n_layers}")));
        }
        let dims: Vec<usize> = (0..=n_layers).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;
        if dims[0] <= time_features || dims.contains(&0) {
            return Err(Error::Format("inconsistent topology".into()));
        }
        let flags = r.u8()?;
        if flags & !(FLAG_OPTIMIZER | FLAG_EMA | FLAG_TARGET) != 0 {
            return Err(Error::Format(format!("unknown section flags {flags:#x}")));
        }
        let meta = CheckpointMeta {
            seed: r.u64()?,
            iteration: r.u64()?,
            config_hash: r.u64()?,
        };
        let implied: usize = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        let n_params = r.u64()? as usize;
        if n_params != implied {
            return Err(Error::Format(format!(
                "payload holds {n_params} parameters, topology implies {implied}"
            )));
        }
        let data_dim = dims[0] - time_features;
        let read_model = |r: &mut Reader<'_>| -> Result<Mlp> {
            let mut layers = Vec::with_capacity(n_layers);
            for w in dims.windows(2) {
                let weight = Array2::from_shape_vec((w[1], w[0]), r.f32s(w[0] * w[1])?)
                    .map_err(|e| Error::Format(e.to_string()))?;
                let bias = Array1::from(r.f32s(w[1])?);
                layers.push(Layer { weight, bias });
            }
            Mlp::from_layers(layers, activation, time_features, data_dim)
                .map_err(|e| Error::Format(e.to_string()))
        };
        let model = read_model(&mut r)?;
        let optimizer = if flags & FLAG_OPTIMIZER != 0 {
            let step = r.u64()?;
            let (lr, beta1, beta2, eps) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
            let m = r.f32s(n_params)?;
            let v = r.f32s(n_params)?;
            Some(Adam {
                lr,
                beta1,
                beta2,
                eps,
                step,
                m,
                v,
            })
        } else {
            None
        };
        let tracked = |present: bool, r: &mut Reader<'_>| -> Result<Option<TrackedParams>> {
            if !present {
                return Ok(None);
            }
            let decay = r.f64()?;
            Ok(Some(TrackedParams {
                decay,
                model: read_model(r)?,
            }))
        };
        let ema = tracked(flags & FLAG_EMA != 0, &mut r)?;
        let target = tracked(flags & FLAG_TARGET != 0, &mut r)?;
        if r.pos != body.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after payload",
                body.len() - r.pos
            )));
        }
        Ok(Self {
            model,
            optimizer,
            ema,
            target,
            meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
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

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::Format("overflow".into()))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }
}
