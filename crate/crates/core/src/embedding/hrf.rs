//! HRF: binary container for one frame-embedding matrix.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "HRF1"
//! 4       2     version (u16) = 1
//! 6       2     flags (u16) = 0
//! 8       4     T, frame count (u32)
//! 12      4     D, embedding width (u32)
//! 16      4·T·D payload, IEEE-754 f32, row-major
//! ```

use std::fs;
use std::path::Path;

use super::{EmbeddingError, FrameEmbeddingMatrix};
use crate::matrix::Matrix;

pub const MAGIC: &[u8; 4] = b"HRF1";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 16;

pub fn encode_hrf(m: &FrameEmbeddingMatrix) -> Vec<u8> {
    let data = m.as_matrix();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * data.as_slice().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(data.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(data.cols() as u32).to_le_bytes());
    for v in data.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_hrf(bytes: &[u8]) -> Result<FrameEmbeddingMatrix, EmbeddingError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(EmbeddingError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(EmbeddingError::Truncated);
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let u32_at = |o: usize| u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]);
    let version = u16_at(4);
    if version != VERSION {
        return Err(EmbeddingError::UnsupportedVersion(version));
    }
    let flags = u16_at(6);
    if flags != 0 {
        return Err(EmbeddingError::UnsupportedFlags(flags));
    }
    let frames = u32_at(8) as usize;
    let width = u32_at(12) as usize;
    let payload = &bytes[HEADER_LEN..];
    let declared = frames.checked_mul(width).and_then(|n| n.checked_mul(4));
    if declared != Some(payload.len()) {
        return Err(EmbeddingError::DimensionMismatch {
            frames,
            width,
            payload_floats: payload.len() as f64 / 4.0,
        });
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(EmbeddingError::NonFinitePayload);
    }
    let m = Matrix::from_vec(frames, width, values).expect("length checked above");
    FrameEmbeddingMatrix::new(m)
}

pub fn read_hrf(path: impl AsRef<Path>) -> Result<FrameEmbeddingMatrix, EmbeddingError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| EmbeddingError::io(path, e))?;
    decode_hrf(&bytes)
}

pub fn write_hrf(m: &FrameEmbeddingMatrix, path: impl AsRef<Path>) -> Result<(), EmbeddingError> {
    let path = path.as_ref();
    fs::write(path, encode_hrf(m)).map_err(|e| EmbeddingError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn sample(rows: usize, cols: usize, seed: u64) -> FrameEmbeddingMatrix {
        let mut rng = crate::seed::rng(seed);
        FrameEmbeddingMatrix::new(Matrix::from_fn(rows, cols, |_, _| rng.random_range(-5.0f32..5.0)))
            .unwrap()
    }

    #[test]
    fn header_layout_is_fixed() {
        let m = FrameEmbeddingMatrix::new(Matrix::from_rows(&[[1.0f32, -2.0]]).unwrap()).unwrap();
        let b = encode_hrf(&m);
        assert_eq!(
            b,
            [
                b"HRF1".as_slice(),
                &[1, 0, 0, 0],
                &[1, 0, 0, 0],
                &[2, 0, 0, 0],
                &1.0f32.to_le_bytes(),
                &(-2.0f32).to_le_bytes()
            ]
            .concat()
        );
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.hrf");
        let m = sample(7, 16, 1);
        write_hrf(&m, &p).unwrap();
        let back = read_hrf(&p).unwrap();
        let bits = |m: &FrameEmbeddingMatrix| -> Vec<u32> {
            m.as_matrix().as_slice().iter().map(|v| v.to_bits()).collect()
        };
        assert_eq!(bits(&back), bits(&m));
        assert_eq!(back.frames(), 7);
        assert_eq!(back.width(), 16);
    }

    #[test]
    fn bad_magic() {
        let mut b = encode_hrf(&sample(1, 1, 2));
        b[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode_hrf(&b), Err(EmbeddingError::BadMagic)));
    }

    #[test]
    fn short_payload_is_dimension_mismatch() {
        let mut b = Vec::new();
        b.extend_from_slice(b"HRF1");
        b.extend_from_slice(&1u16.to_le_bytes());
        b.extend_from_slice(&0u16.to_le_bytes());
        b.extend_from_slice(&2u32.to_le_bytes());
        b.extend_from_slice(&3u32.to_le_bytes());
        for i in 0..5 {
            b.extend_from_slice(&(i as f32).to_le_bytes());
        }
        assert!(matches!(
            decode_hrf(&b),
            Err(EmbeddingError::DimensionMismatch { frames: 2, width: 3, .. })
        ));
    }

    #[test]
    fn non_finite_payload() {
        let mut b = encode_hrf(&sample(2, 2, 3));
        let at = HEADER_LEN + 4;
        b[at..at + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode_hrf(&b), Err(EmbeddingError::NonFinitePayload)));
    }

    #[test]
    fn zero_frames_rejected() {
        let mut b = encode_hrf(&sample(1, 2, 4));
        b[8..12].copy_from_slice(&0u32.to_le_bytes());
        b.truncate(HEADER_LEN);
        assert!(matches!(decode_hrf(&b), Err(EmbeddingError::EmptyMatrix { .. })));
    }

    #[test]
    fn version_and_flags_checked() {
        let mut b = encode_hrf(&sample(1, 1, 5));
        b[4] = 2;
        assert!(matches!(decode_hrf(&b), Err(EmbeddingError::UnsupportedVersion(2))));
        let mut b = encode_hrf(&sample(1, 1, 5));
        b[6] = 1;
        assert!(matches!(decode_hrf(&b), Err(EmbeddingError::UnsupportedFlags(1))));
        assert!(matches!(decode_hrf(b"HRF1\x01"), Err(EmbeddingError::Truncated)));
    }
}
