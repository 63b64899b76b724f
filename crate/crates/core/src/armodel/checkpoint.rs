//! Binary checkpoint: magic, version, config block, parameters as
//! little-endian f64 in declaration order, trailing CRC32.

use super::{DiffusionSchedule, GuidanceConfig, Model, ModelConfig, ModelError, ModelParams};
use crate::georope::GeoRopeConfig;
use crate::molio::Vec3;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"IAR1";
pub const CHECKPOINT_VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], ModelError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| ModelError::Corrupt("truncated".into()))?;
        let out = &self.buf[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn usize(&mut self) -> Result<usize, ModelError> {
        self.u32().map(|v| v as usize)
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn save_checkpoint(model: &Model) -> Vec<u8> {
    let cfg = &model.cfg;
    let mut w = Writer(CHECKPOINT_MAGIC.to_vec());
    w.u32(CHECKPOINT_VERSION as usize);
    w.u32(cfg.geo.d_type);
    w.f64(cfg.geo.rope_base);
    w.f64(cfg.geo.rbf_sigma);
    w.f64(cfg.geo.chol_jitter);
    w.u32(cfg.geo.anchors.len());
    for a in &cfg.geo.anchors {
        a.iter().for_each(|&v| w.f64(v));
    }
    w.u32(cfg.elements.len());
    w.0.extend_from_slice(&cfg.elements);
    for v in [
        cfg.n_classes,
        cfg.n_layers,
        cfg.d_ff,
        cfg.denoiser_hidden,
        cfg.denoiser_embed,
        cfg.sigma_features,
    ] {
        w.u32(v);
    }
    w.f64(cfg.sigma_data);
    w.f64(cfg.schedule.sigma_min);
    w.f64(cfg.schedule.sigma_max);
    w.u32(cfg.schedule.n_steps);
    w.f64(cfg.guidance.scale);
    w.f64(cfg.guidance.p_drop);
    let flat = model.params.flatten();
    w.0.extend_from_slice(&(flat.len() as u64).to_le_bytes());
    flat.iter().for_each(|&v| w.f64(v));
    let crc = crc32fast::hash(&w.0);
    w.0.extend_from_slice(&crc.to_le_bytes());
    w.0
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<Model, ModelError> {
    if bytes.len() < 4 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(ModelError::BadMagic);
    }
    if bytes.len() < 12 {
        return Err(ModelError::Corrupt("truncated".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::Version(version));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(tail.try_into().expect("4 bytes")) {
        return Err(ModelError::Corrupt("checksum mismatch".into()));
    }
    let mut r = Reader { buf: body, at: 8 };
    let d_type = r.usize()?;
    let rope_base = r.f64()?;
    let rbf_sigma = r.f64()?;
    let chol_jitter = r.f64()?;
    let m = r.usize()?;
    let mut anchors = Vec::with_capacity(m.min(1 << 16));
    for _ in 0..m {
        anchors.push(Vec3::new(r.f64()?, r.f64()?, r.f64()?));
    }
    let n_el = r.usize()?;
    let elements = r.take(n_el)?.to_vec();
    let geo = GeoRopeConfig {
        d_type,
        rope_base,
        anchors,
        rbf_sigma,
        chol_jitter,
    };
    let cfg = ModelConfig {
        geo,
        elements,
        n_classes: r.usize()?,
        n_layers: r.usize()?,
        d_ff: r.usize()?,
        denoiser_hidden: r.usize()?,
        denoiser_embed: r.usize()?,
        sigma_features: r.usize()?,
        sigma_data: r.f64()?,
        schedule: DiffusionSchedule {
            sigma_min: r.f64()?,
            sigma_max: r.f64()?,
            n_steps: r.usize()?,
        },
        guidance: GuidanceConfig {
            scale: r.f64()?,
            p_drop: r.f64()?,
        },
    };
    cfg.validate()?;
    let n_params = r.u64()? as usize;
    let mut params = ModelParams::init(&cfg, 0);
    if n_params != params.len() {
        return Err(ModelError::Corrupt(format!(
            "{} parameters stored, config implies {}",
            n_params,
            params.len()
        )));
    }
    let values = (0..n_params).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
    if r.at != body.len() {
        return Err(ModelError::Corrupt("trailing bytes".into()));
    }
    params.assign_flat(&values);
    Model::from_params(cfg, params)
}
