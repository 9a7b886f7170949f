//! Model checkpoints: fixed magic, version, length-prefixed config text,
//! then named little-endian f32 arrays with explicit shapes. Roundtrips
//! are byte-exact because parameter iteration and config rendering are
//! both sorted.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::config::{model_config_from_flat, model_config_to_flat};
use crate::error::{Error, Result};
use crate::param::ParamStore;
use crate::scalar::Scalar;
use crate::separator::SeparatorModel;
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"MPRN";
const VERSION: u32 = 1;

pub fn save_checkpoint<S: Scalar>(model: &SeparatorModel<S>, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());

    let config_text = model_config_to_flat(&model.config).render();
    out.extend_from_slice(&(config_text.len() as u64).to_le_bytes());
    out.extend_from_slice(config_text.as_bytes());

    out.extend_from_slice(&(model.params.len() as u64).to_le_bytes());
    for (name, p) in model.params.iter() {
        out.extend_from_slice(&(name.len() as u64).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(p.value.shape().len() as u32).to_le_bytes());
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in p.value.data() {
            out.extend_from_slice(&(v.to_f64_lossless() as f32).to_le_bytes());
        }
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: String,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{}: truncated (needed {n} bytes at offset {})",
                self.path, self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn load_checkpoint<S: Scalar>(path: &Path) -> Result<SeparatorModel<S>> {
    let bytes = fs::read(path)?;
    let mut r = Reader { bytes: &bytes, pos: 0, path: path.display().to_string() };

    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint(format!("{}: bad magic", path.display())));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "{}: version {version} unsupported (expected {VERSION})",
            path.display()
        )));
    }
    let config_len = r.u64()? as usize;
    let config_text = std::str::from_utf8(r.take(config_len)?)
        .map_err(|_| Error::Checkpoint(format!("{}: config is not UTF-8", path.display())))?;
    let flat = crate::config::FlatConfig::parse(config_text)?;
    let config = model_config_from_flat(&flat)?;

    // A zero-seeded skeleton provides the expected parameter names/shapes.
    let skeleton = SeparatorModel::<S>::init(config.clone(), 0)?;
    let mut params = ParamStore::new();
    let count = r.u64()? as usize;
    for _ in 0..count {
        let name_len = r.u64()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Checkpoint(format!("{}: parameter name not UTF-8", path.display())))?
            .to_string();
        if !skeleton.params.contains(&name) {
            return Err(Error::Checkpoint(format!(
                "{}: unknown parameter name '{name}' for this config",
                path.display()
            )));
        }
        let ndim = r.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u64()? as usize);
        }
        let expected = skeleton.params.value(&name).shape();
        if expected != shape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "{}: parameter '{name}' has shape {shape:?}, expected {expected:?}",
                path.display()
            )));
        }
        let numel: usize = shape.iter().product();
        let raw = r.take(numel * 4)?;
        let data: Vec<S> = raw
            .chunks_exact(4)
            .map(|b| S::from_f64_lossy(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
            .collect();
        params.insert(name, Tensor::from_vec(shape, data));
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{}: {} trailing bytes after parameters",
            path.display(),
            bytes.len() - r.pos
        )));
    }
    if params.len() != skeleton.params.len() {
        return Err(Error::Checkpoint(format!(
            "{}: expected {} parameters, found {}",
            path.display(),
            skeleton.params.len(),
            params.len()
        )));
    }
    Ok(SeparatorModel { config, params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::separator::ModelConfig;

    fn tiny_model() -> SeparatorModel<f32> {
        let mut config = ModelConfig::mprnn_defaults();
        config.feature_dim = 6;
        config.hidden = 4;
        config.blocks = 1;
        config.seg = crate::segment::SegConfig::new(vec![6, 4], vec![3, 2]).unwrap();
        SeparatorModel::init(config, 11).unwrap()
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        let model = tiny_model();
        save_checkpoint(&model, &p1).unwrap();
        let loaded = load_checkpoint::<f32>(&p1).unwrap();
        save_checkpoint(&loaded, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        // Every parameter survives bit-exactly.
        for (name, p) in model.params.iter() {
            assert_eq!(p.value.data(), loaded.params.value(name).data(), "{name}");
        }
    }

    #[test]
    fn truncated_file_is_a_structured_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ckpt");
        let model = tiny_model();
        save_checkpoint(&model, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_checkpoint::<f32>(&path), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ckpt");
        std::fs::write(&path, b"WHAT????????").unwrap();
        assert!(matches!(load_checkpoint::<f32>(&path), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn loaded_param_total_matches_closed_form() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ckpt");
        let model = tiny_model();
        save_checkpoint(&model, &path).unwrap();
        let loaded = load_checkpoint::<f32>(&path).unwrap();
        assert_eq!(loaded.params.total_params(), loaded.config.param_count());
    }
}
