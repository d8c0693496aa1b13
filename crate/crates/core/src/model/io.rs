//! Binary model files: magic, version, length-prefixed JSON header with the
//! architecture, little-endian `f64` parameters, trailing CRC-32.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::arch::ArchitectureSpec;
use super::{ClassifierModel, ModelError};

pub const MODEL_MAGIC: &[u8; 8] = b"ROADQMDL";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    arch: ArchitectureSpec,
    num_parameters: usize,
    trained_epochs: usize,
    seed: u64,
    #[serde(default)]
    provenance: serde_json::Value,
}

pub fn write_model<W: Write>(model: &ClassifierModel, mut w: W) -> Result<(), ModelError> {
    let header = Header {
        arch: model.arch.clone(),
        num_parameters: model.parameters().len(),
        trained_epochs: model.trained_epochs,
        seed: model.seed,
        provenance: model.provenance.clone(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut buf = Vec::with_capacity(20 + json.len() + 8 * model.parameters().len());
    buf.extend_from_slice(MODEL_MAGIC);
    buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for p in model.parameters() {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_model<R: Read>(mut r: R) -> Result<ClassifierModel, ModelError> {
    let corrupt = |m: &str| ModelError::CorruptModelFile(m.to_string());
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    if buf.len() < 20 || &buf[..8] != MODEL_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let (body, tail) = buf.split_at(buf.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(tail.try_into().unwrap()) {
        return Err(corrupt("checksum mismatch (truncated or altered)"));
    }
    let version = u32::from_le_bytes(body[8..12].try_into().unwrap());
    if version != MODEL_VERSION {
        return Err(ModelError::CorruptModelFile(format!(
            "unsupported version {version}"
        )));
    }
    let hlen = u32::from_le_bytes(body[12..16].try_into().unwrap()) as usize;
    let json = body
        .get(16..16 + hlen)
        .ok_or_else(|| corrupt("header runs past end of file"))?;
    let header: Header =
        serde_json::from_slice(json).map_err(|e| ModelError::CorruptModelFile(format!("header: {e}")))?;
    let block = &body[16 + hlen..];
    if block.len() % 8 != 0 || block.len() / 8 != header.num_parameters {
        return Err(ModelError::CorruptModelFile(format!(
            "header declares {} parameters, file holds {} bytes",
            header.num_parameters,
            block.len()
        )));
    }
    let params: Vec<f64> = block
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut model = ClassifierModel::new(header.arch, params, header.trained_epochs, header.seed)
        .map_err(|e| ModelError::CorruptModelFile(e.to_string()))?;
    model.provenance = header.provenance;
    Ok(model)
}

pub fn save_model(model: &ClassifierModel, path: &Path) -> Result<(), ModelError> {
    let mut buf = Vec::new();
    write_model(model, &mut buf)?;
    crate::fsio::write_atomic(path, &buf)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ClassifierModel, ModelError> {
    read_model(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_model;

    fn bytes(m: &ClassifierModel) -> Vec<u8> {
        let mut b = Vec::new();
        write_model(m, &mut b).unwrap();
        b
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let mut m = init_model(&ArchitectureSpec::native_cnn(16, 5), 11).unwrap();
        m.provenance = serde_json::json!({"seed": 11});
        let back = read_model(&bytes(&m)[..]).unwrap();
        assert_eq!(back, m);
        assert!(back
            .parameters()
            .iter()
            .zip(m.parameters())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn damaged_files_are_rejected() {
        let m = init_model(&ArchitectureSpec::dense_head(4, 2, 3, 2), 1).unwrap();
        let b = bytes(&m);
        let truncated = &b[..b.len() - 9];
        assert!(matches!(
            read_model(truncated),
            Err(ModelError::CorruptModelFile(_))
        ));
        let mut flipped = b.clone();
        flipped[30] ^= 1;
        assert!(matches!(
            read_model(&flipped[..]),
            Err(ModelError::CorruptModelFile(_))
        ));
        assert!(matches!(
            read_model(&b"NOTAMODEL..........."[..]),
            Err(ModelError::CorruptModelFile(_))
        ));
    }

    #[test]
    fn parameter_count_must_match_header() {
        let m = init_model(&ArchitectureSpec::dense_head(4, 1, 0, 2), 1).unwrap();
        let mut b = bytes(&m);
        // drop one parameter and re-seal the checksum
        b.truncate(b.len() - 12);
        let crc = crc32fast::hash(&b);
        b.extend_from_slice(&crc.to_le_bytes());
        let err = read_model(&b[..]).unwrap_err();
        assert!(err.to_string().contains("declares"), "{err}");
    }
}
