use std::path::Path;

use super::{MToMnet, MToMnetConfig};
use crate::binfmt::{self, ArrayData, NamedArray};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

const MAGIC: &[u8; 5] = b"MTOM1";

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub epoch: usize,
    /// Selection metric at `epoch`.
    pub metric: f64,
    /// FNV-1a over the config's `key=value` lines, as 16 hex digits.
    pub config_hash: String,
}

pub fn config_hash(config: &MToMnetConfig) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for (k, v) in config.to_pairs() {
        for b in k
            .bytes()
            .chain(std::iter::once(b'='))
            .chain(v.bytes())
            .chain(std::iter::once(b'\n'))
        {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

/// A model with its parameters and selection metadata.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub net: MToMnet,
    pub params: ParamStore<f32>,
    pub meta: CheckpointMeta,
}

pub fn save_checkpoint(path: &Path, net: &MToMnet, params: &ParamStore<f32>, meta: &CheckpointMeta) -> Result<()> {
    let mut manifest = vec![("format".to_string(), "mtom-checkpoint".to_string())];
    manifest.extend(net.config.to_pairs());
    manifest.extend([
        ("seed".to_string(), meta.seed.to_string()),
        ("epoch".to_string(), meta.epoch.to_string()),
        ("metric".to_string(), format!("{:?}", meta.metric)),
        ("config_hash".to_string(), config_hash(&net.config)),
        ("parameters".to_string(), params.numel().to_string()),
    ]);
    let arrays: Vec<NamedArray> = params
        .iter()
        .map(|(_, name, t)| NamedArray::f32(name, t.shape().to_vec(), t.data().to_vec()))
        .collect();
    binfmt::write_file(path, &binfmt::encode(MAGIC, &manifest, &arrays))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let c = binfmt::decode(&binfmt::read_file(path)?, MAGIC, path)?;
    let corrupt = |reason: String| Error::Corrupt {
        path: path.to_path_buf(),
        reason,
    };
    let config = MToMnetConfig::from_pairs(c.manifest.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
    let field = |k: &str| c.get(k).ok_or_else(|| corrupt(format!("manifest lacks `{k}`")));
    let num = |k: &str| -> Result<f64> { field(k)?.parse().map_err(|_| corrupt(format!("bad `{k}`"))) };
    let seed: u64 = field("seed")?.parse().map_err(|_| corrupt("bad `seed`".into()))?;
    let meta = CheckpointMeta {
        seed,
        epoch: field("epoch")?.parse().map_err(|_| corrupt("bad `epoch`".into()))?,
        metric: num("metric")?,
        config_hash: field("config_hash")?.to_string(),
    };
    if meta.config_hash != config_hash(&config) {
        return Err(corrupt("config hash does not match manifest".into()));
    }
    let (net, mut params) = MToMnet::build::<f32>(&config, seed)?;
    if c.arrays.len() != params.len() {
        return Err(Error::Incompatible(format!(
            "checkpoint holds {} arrays, architecture needs {}",
            c.arrays.len(),
            params.len()
        )));
    }
    for (a, id) in c.arrays.iter().zip(params.ids().collect::<Vec<_>>()) {
        if a.name != params.name(id) || a.shape != params.get(id).shape() {
            return Err(Error::Incompatible(format!(
                "array {} {:?} does not match parameter {} {:?}",
                a.name,
                a.shape,
                params.name(id),
                params.get(id).shape()
            )));
        }
        let ArrayData::F32(data) = &a.data else {
            return Err(corrupt(format!("array {} is not f32", a.name)));
        };
        *params.get_mut(id) = Tensor::new(a.shape.clone(), data.clone())?;
    }
    Ok(Checkpoint { net, params, meta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Aggregation, Mode, Variant};

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let cfg = MToMnetConfig::new(Variant::Cg, Aggregation::Attention, Mode::FiveMinds);
        let (net, mut params) = MToMnet::build::<f32>(&cfg, 3).unwrap();
        // make values differ from a fresh init so loading really overwrites
        let id = params.ids().next().unwrap();
        params.get_mut(id).data_mut()[0] = f32::from_bits(0x3f80_0001);
        let meta = CheckpointMeta {
            seed: 3,
            epoch: 12,
            metric: 0.1 + 0.2,
            config_hash: config_hash(&cfg),
        };
        save_checkpoint(&path, &net, &params, &meta).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.meta, meta);
        assert_eq!(back.net.config, cfg);
        for (a, b) in params.tensors().iter().zip(back.params.tensors()) {
            let ba: Vec<u32> = a.data().iter().map(|x| x.to_bits()).collect();
            let bb: Vec<u32> = b.data().iter().map(|x| x.to_bits()).collect();
            assert_eq!(ba, bb);
        }
        let first = std::fs::read(&path).unwrap();
        save_checkpoint(&path, &back.net, &back.params, &back.meta).unwrap();
        assert_eq!(first, std::fs::read(&path).unwrap());
    }

    #[test]
    fn truncated_checkpoint_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let cfg = MToMnetConfig::default();
        let (net, params) = MToMnet::build::<f32>(&cfg, 1).unwrap();
        let meta = CheckpointMeta {
            seed: 1,
            epoch: 0,
            metric: 0.0,
            config_hash: config_hash(&cfg),
        };
        save_checkpoint(&path, &net, &params, &meta).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Corrupt { .. })));
    }
}
