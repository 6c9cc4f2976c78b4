//! `TCTD` sample files.
//!
//! ```text
//! "TCTD" | version u32 | H u32 | W u32 | n_oar u32 | planes as f32 LE
//! ```
//!
//! Planes follow in the order CT, PTV, OAR_1..OAR_n, dose. A file whose
//! `n_oar` is [`DOSE_ONLY`] carries a single dose plane (a prediction).

use super::Sample;
use crate::plane::{Mask, Plane, PlaneError};

pub const TCTD_MAGIC: &[u8; 4] = b"TCTD";
pub const TCTD_VERSION: u32 = 1;
/// `n_oar` marker of a prediction file holding only a dose plane.
pub const DOSE_ONLY: u32 = u32::MAX;

const HEADER: usize = 20;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TctdError {
    #[error("not a TCTD file: bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported TCTD version {0}")]
    UnsupportedVersion(u32),
    #[error("TCTD file truncated: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("TCTD file has {extra} unexpected trailing bytes")]
    TrailingBytes { extra: usize },
    #[error("TCTD plane size {height}x{width} is invalid")]
    BadSize { height: u32, width: u32 },
    #[error("{plane} plane is not binary: {source}")]
    NotBinary { plane: String, source: PlaneError },
}

#[derive(Debug, Clone, PartialEq)]
pub enum TctdContent {
    Sample(Sample),
    Dose(Plane),
}

fn header(out: &mut Vec<u8>, h: usize, w: usize, n_oar: u32) {
    out.extend_from_slice(TCTD_MAGIC);
    for v in [TCTD_VERSION, h as u32, w as u32, n_oar] {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn put(out: &mut Vec<u8>, values: impl Iterator<Item = f32>) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn mask_values(m: &Mask) -> impl Iterator<Item = f32> + '_ {
    m.bits().iter().map(|&b| if b { 1.0 } else { 0.0 })
}

pub fn encode_sample(s: &Sample) -> Vec<u8> {
    let (h, w) = s.dims();
    let mut out = Vec::with_capacity(HEADER + (3 + s.oars.len()) * h * w * 4);
    header(&mut out, h, w, s.oars.len() as u32);
    put(&mut out, s.ct.data().iter().copied());
    put(&mut out, mask_values(&s.ptv));
    for m in &s.oars {
        put(&mut out, mask_values(m));
    }
    put(&mut out, s.dose.data().iter().copied());
    out
}

pub fn encode_dose(dose: &Plane) -> Vec<u8> {
    let (h, w) = dose.dims();
    let mut out = Vec::with_capacity(HEADER + h * w * 4);
    header(&mut out, h, w, DOSE_ONLY);
    put(&mut out, dose.data().iter().copied());
    out
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

pub fn decode_tctd(bytes: &[u8]) -> Result<TctdContent, TctdError> {
    if bytes.len() < HEADER {
        if bytes.len() >= 4 && &bytes[..4] != TCTD_MAGIC {
            return Err(TctdError::BadMagic(bytes[..4].try_into().expect("4 bytes")));
        }
        return Err(TctdError::Truncated {
            expected: HEADER,
            actual: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if &magic != TCTD_MAGIC {
        return Err(TctdError::BadMagic(magic));
    }
    let version = u32_at(bytes, 4);
    if version != TCTD_VERSION {
        return Err(TctdError::UnsupportedVersion(version));
    }
    let (h32, w32, n_oar) = (u32_at(bytes, 8), u32_at(bytes, 12), u32_at(bytes, 16));
    if h32 == 0 || w32 == 0 {
        return Err(TctdError::BadSize { height: h32, width: w32 });
    }
    let (h, w) = (h32 as usize, w32 as usize);
    let planes = if n_oar == DOSE_ONLY { 1 } else { 3 + n_oar as u64 };
    let expected = (h as u64)
        .checked_mul(w as u64)
        .and_then(|n| n.checked_mul(4 * planes))
        .and_then(|n| n.checked_add(HEADER as u64))
        .filter(|&n| n <= usize::MAX as u64)
        .ok_or(TctdError::BadSize { height: h32, width: w32 })? as usize;
    if bytes.len() < expected {
        return Err(TctdError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(TctdError::TrailingBytes {
            extra: bytes.len() - expected,
        });
    }
    let n = h * w;
    let plane = |i: usize| -> Plane {
        let start = HEADER + i * n * 4;
        let data = bytes[start..start + n * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Plane::new(h, w, data).expect("size checked")
    };
    if n_oar == DOSE_ONLY {
        return Ok(TctdContent::Dose(plane(0)));
    }
    let mask = |i: usize, name: String| {
        Mask::from_plane(&plane(i)).map_err(|source| TctdError::NotBinary { plane: name, source })
    };
    let n_oar = n_oar as usize;
    let ptv = mask(1, "PTV".into())?;
    let oars = (0..n_oar)
        .map(|k| mask(2 + k, super::oar_name(k, n_oar)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TctdContent::Sample(Sample {
        ct: plane(0),
        ptv,
        oars,
        dose: plane(2 + n_oar),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate_sample, PhantomSpec};

    #[test]
    fn sample_round_trip_is_bit_exact() {
        let s = generate_sample(&PhantomSpec::desk(32, 32), 4).unwrap();
        let bytes = encode_sample(&s);
        assert_eq!(bytes.len(), 20 + 8 * 32 * 32 * 4);
        let TctdContent::Sample(back) = decode_tctd(&bytes).unwrap() else {
            panic!("expected a sample")
        };
        assert_eq!(encode_sample(&back), bytes);
        let ct_bits: Vec<u32> = s.ct.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(ct_bits, back.ct.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn dose_only_round_trip() {
        let p = Plane::from_fn(3, 5, |r, c| (r * 5 + c) as f32 * 0.1 - 0.3);
        let bytes = encode_dose(&p);
        assert_eq!(decode_tctd(&bytes).unwrap(), TctdContent::Dose(p));
    }

    #[test]
    fn typed_errors() {
        let s = generate_sample(&PhantomSpec::desk(32, 32), 0).unwrap();
        let bytes = encode_sample(&s);
        assert!(matches!(decode_tctd(&bytes[..bytes.len() - 1]), Err(TctdError::Truncated { .. })));
        assert!(matches!(decode_tctd(&bytes[..10]), Err(TctdError::Truncated { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_tctd(&bad), Err(TctdError::BadMagic(_))));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert_eq!(decode_tctd(&bad), Err(TctdError::UnsupportedVersion(9)));
        let mut bad = bytes.clone();
        bad.push(0);
        assert_eq!(decode_tctd(&bad), Err(TctdError::TrailingBytes { extra: 1 }));
        let mut bad = bytes.clone();
        let ptv_start = 20 + 32 * 32 * 4;
        bad[ptv_start..ptv_start + 4].copy_from_slice(&0.5f32.to_le_bytes());
        assert!(matches!(decode_tctd(&bad), Err(TctdError::NotBinary { .. })));
    }
}
