//! Binary weight container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "CHANQNET" | u32 version
//! u8 family (0 = gcn, 1 = mlp)
//! u32 n_aps | u32 n_channels | u32 gcn_layers | u32 gcn_width | u32 dense_width | u32 stream_width
//! u32 tensor_count
//! tensor_count x { u32 name_len | name (utf-8) | u32 ndim | ndim x u64 dim }
//! parameter blocks as f64, in descriptor order
//! ```

use super::{ModelFamily, NnConfig, QNetwork, TensorInfo};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CHANQNET";
pub const FORMAT_VERSION: u32 = 1;

pub fn save_network(net: &QNetwork) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(match net.family() {
        ModelFamily::Gcn => 0,
        ModelFamily::Mlp => 1,
    });
    let cfg = net.config();
    for v in [
        net.n_aps(),
        net.n_channels(),
        cfg.gcn_layers,
        cfg.gcn_width,
        cfg.dense_width,
        cfg.stream_width,
    ] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    let infos = net.tensor_infos();
    out.extend_from_slice(&(infos.len() as u32).to_le_bytes());
    for info in &infos {
        out.extend_from_slice(&(info.name.len() as u32).to_le_bytes());
        out.extend_from_slice(info.name.as_bytes());
        out.extend_from_slice(&(info.shape.len() as u32).to_le_bytes());
        for &d in &info.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
    }
    for block in net.params() {
        for x in block {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::MalformedCheckpoint(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Parses a container, rebuilding the architecture from its header and
/// rejecting descriptors that do not match it.
pub fn load_network(bytes: &[u8]) -> Result<QNetwork> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::MalformedCheckpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::MalformedCheckpoint(format!(
            "unsupported format version {version}"
        )));
    }
    let family = match r.u8()? {
        0 => ModelFamily::Gcn,
        1 => ModelFamily::Mlp,
        x => return Err(Error::MalformedCheckpoint(format!("unknown model family {x}"))),
    };
    let mut dims = [0usize; 6];
    for d in &mut dims {
        *d = r.u32()? as usize;
    }
    let [n_aps, n_channels, gcn_layers, gcn_width, dense_width, stream_width] = dims;
    let config = NnConfig {
        gcn_layers,
        gcn_width,
        dense_width,
        stream_width,
    };
    config.validate()?;
    if n_aps == 0 || n_channels == 0 {
        return Err(Error::MalformedCheckpoint("empty action space".into()));
    }
    let mut net = QNetwork::new(family, n_aps, n_channels, &config, 0);

    let count = r.u32()? as usize;
    let mut stored = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::MalformedCheckpoint("tensor name is not utf-8".into()))?
            .to_string();
        let ndim = r.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim.min(8));
        for _ in 0..ndim {
            shape.push(r.u64()? as usize);
        }
        stored.push(TensorInfo { name, shape });
    }
    let expected = net.tensor_infos();
    if stored != expected {
        return Err(Error::ArchitectureMismatch(format!(
            "checkpoint tensors {:?} do not match header architecture {:?}",
            stored
                .iter()
                .map(|t| format!("{}{:?}", t.name, t.shape))
                .collect::<Vec<_>>(),
            expected
                .iter()
                .map(|t| format!("{}{:?}", t.name, t.shape))
                .collect::<Vec<_>>()
        )));
    }
    for block in net.params_mut() {
        for x in block.iter_mut() {
            *x = r.f64()?;
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::MalformedCheckpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let net = QNetwork::new(ModelFamily::Gcn, 3, 2, &NnConfig::default(), 0);
        let bytes = save_network(&net);
        assert_eq!(&bytes[..8], b"CHANQNET");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(bytes[12], 0);
        assert_eq!(u32::from_le_bytes(bytes[13..17].try_into().unwrap()), 3);
    }

    #[test]
    fn rejects_corruption() {
        let net = QNetwork::new(ModelFamily::Mlp, 3, 2, &NnConfig::default(), 0);
        let bytes = save_network(&net);
        assert!(matches!(
            load_network(&bytes[..bytes.len() - 1]),
            Err(Error::MalformedCheckpoint(_))
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(load_network(&bad).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(load_network(&extra).is_err());
    }

    #[test]
    fn rejects_shape_mismatch() {
        let net = QNetwork::new(ModelFamily::Gcn, 3, 2, &NnConfig::default(), 0);
        let mut bytes = save_network(&net);
        // header claims 4 APs while descriptors describe 3
        bytes[13..17].copy_from_slice(&4u32.to_le_bytes());
        assert!(matches!(load_network(&bytes), Err(Error::ArchitectureMismatch(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn round_trip(seed in any::<u64>(), n in 1usize..6, m in 1usize..4, mlp in any::<bool>()) {
            let family = if mlp { ModelFamily::Mlp } else { ModelFamily::Gcn };
            let cfg = NnConfig { gcn_layers: 2, gcn_width: 3, dense_width: 5, stream_width: 4 };
            let net = QNetwork::new(family, n, m, &cfg, seed);
            let back = load_network(&save_network(&net)).unwrap();
            prop_assert_eq!(back, net);
        }
    }
}
