//! Checkpoint files.
//!
//! Layout (little-endian): 8 magic bytes, `u32` format version, `u64` byte
//! length followed by the architecture text, `u32` tensor count, then the
//! weight and bias tensor of every trainable layer in declaration order.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{LayerParams, Network, NetworkSpec, Params};
use crate::error::{Error, Result};
use crate::tensor::io::{read_tensor_at, OffsetReader};
use crate::tensor::write_tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"LEAFCNN\0";
pub const CHECKPOINT_VERSION: u32 = 1;

const MAX_ARCH_BYTES: u64 = 1 << 20;

pub fn write_checkpoint<W: Write>(w: &mut W, net: &Network) -> std::io::Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    let arch = net.spec.to_string();
    w.write_all(&(arch.len() as u64).to_le_bytes())?;
    w.write_all(arch.as_bytes())?;
    let count = net.params.tensors().count() as u32;
    w.write_all(&count.to_le_bytes())?;
    for t in net.params.tensors() {
        write_tensor(w, t)?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<Network> {
    let mut r = OffsetReader::new(r);
    let magic = r.bytes(8, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint {
            offset: 0,
            message: "bad magic bytes; not a checkpoint".into(),
        });
    }
    let version_at = r.offset();
    let version = r.u32("format version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint {
            offset: version_at,
            message: format!("format version {version}, expected {CHECKPOINT_VERSION}"),
        });
    }
    let len = r.u64("architecture length")?;
    if len > MAX_ARCH_BYTES {
        return Err(r.fail(format!("architecture length {len} is implausible")));
    }
    let arch_at = r.offset();
    let arch = r.bytes(len as usize, "architecture")?;
    let spec: NetworkSpec = std::str::from_utf8(&arch)
        .map_err(|e| Error::Checkpoint {
            offset: arch_at,
            message: format!("architecture is not UTF-8: {e}"),
        })?
        .parse()
        .map_err(|e: Error| Error::Checkpoint {
            offset: arch_at,
            message: e.to_string(),
        })?;
    let count_at = r.offset();
    let count = r.u32("tensor count")?;
    let template = Params::zeros_shapes_only(&spec)?;
    let expected = template.iter().filter(|s| s.is_some()).count() * 2;
    if count as usize != expected {
        return Err(Error::Checkpoint {
            offset: count_at,
            message: format!("{count} tensors stored, architecture needs {expected}"),
        });
    }
    let mut layers = Vec::with_capacity(template.len());
    for shapes in template {
        let Some((w_shape, b_len)) = shapes else {
            layers.push(None);
            continue;
        };
        let at = r.offset();
        let weights = read_tensor_at(&mut r)?;
        let bias_at = r.offset();
        let bias = read_tensor_at(&mut r)?;
        if weights.shape() != w_shape.as_slice() {
            return Err(Error::Checkpoint {
                offset: at,
                message: format!("weights {:?}, architecture needs {w_shape:?}", weights.shape()),
            });
        }
        if bias.shape() != [b_len] {
            return Err(Error::Checkpoint {
                offset: bias_at,
                message: format!("bias {:?}, architecture needs [{b_len}]", bias.shape()),
            });
        }
        layers.push(Some(LayerParams { weights, bias }));
    }
    let end = r.offset();
    if !r.at_end() {
        return Err(Error::Checkpoint {
            offset: end,
            message: "trailing bytes after last tensor".into(),
        });
    }
    Network::new(spec, Params { layers })
}

/// Writes through a temporary sibling file so a failed save never leaves a
/// partial checkpoint under `path`.
pub fn save_checkpoint(net: &Network, path: &Path) -> Result<()> {
    let tmp = path.with_extension("partial");
    let file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let mut w = BufWriter::new(file);
    write_checkpoint(&mut w, net)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&tmp, e))?;
    drop(w);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Network> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(file))
}

/// Weight shape and bias length of a trainable layer.
type ParamShape = (Vec<usize>, usize);

impl Params {
    fn zeros_shapes_only(spec: &NetworkSpec) -> Result<Vec<Option<ParamShape>>> {
        let shapes = spec.output_shapes()?;
        Ok(spec
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| super::spec::param_shapes(l, &spec.input_shape_of(i, &shapes)))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::build_desk_network;

    fn bytes(net: &Network) -> Vec<u8> {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, net).unwrap();
        buf
    }

    #[test]
    fn roundtrip_desk() {
        let net = Network::init(build_desk_network(6), 17).unwrap();
        let back = read_checkpoint(bytes(&net).as_slice()).unwrap();
        assert_eq!(back.spec, net.spec);
        let same = back
            .params
            .tensors()
            .zip(net.params.tensors())
            .all(|(a, b)| a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(same);
    }

    #[test]
    fn corrupted_magic_and_version() {
        let net = Network::init(build_desk_network(3), 1).unwrap();
        let mut b = bytes(&net);
        b[0] = b'X';
        let err = read_checkpoint(b.as_slice()).unwrap_err();
        assert!(err.to_string().contains("offset 0"), "{err}");
        let mut b = bytes(&net);
        b[8] = 7;
        let err = read_checkpoint(b.as_slice()).unwrap_err();
        assert!(err.to_string().contains("offset 8"), "{err}");
    }

    #[test]
    fn corrupted_architecture_names_offset() {
        let net = Network::init(build_desk_network(3), 1).unwrap();
        let mut b = bytes(&net);
        // First byte of the architecture text.
        b[20] = b'#';
        let err = read_checkpoint(b.as_slice()).unwrap_err();
        assert!(err.to_string().contains("offset 20"), "{err}");
    }

    #[test]
    fn truncated_and_trailing_rejected() {
        let net = Network::init(build_desk_network(3), 1).unwrap();
        let b = bytes(&net);
        for cut in [4, 30, b.len() / 2, b.len() - 1] {
            assert!(read_checkpoint(&b[..cut]).is_err(), "cut at {cut}");
        }
        let mut extra = b.clone();
        extra.push(0);
        assert!(read_checkpoint(extra.as_slice()).is_err());
    }
}
