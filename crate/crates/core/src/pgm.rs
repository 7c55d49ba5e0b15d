//! Greyscale PGM images: binary `P5` (8 or 16 bit) and plain `P2`.

use std::path::Path;

use crate::error::{Error, Result};

/// A decoded image with values scaled linearly to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    /// Row-major.
    pub values: Vec<f64>,
}

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: usize,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 || bytes[0] != b'P' || !(bytes[1] == b'5' || bytes[1] == b'2') {
        return Err(Error::Format("not a P2 or P5 PGM file".into()));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for f in fields.iter_mut() {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        *f = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("bad number in PGM header".into()))?;
    }
    // exactly one whitespace byte separates the header from binary data
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Format("truncated PGM header".into()));
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("bad PGM dimensions {width}x{height} maxval {maxval}")));
    }
    Ok(Header {
        magic: [bytes[0], bytes[1]],
        width,
        height,
        maxval,
        data_start: pos + 1,
    })
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Pgm> {
    let h = parse_header(bytes)?;
    let n = h.width * h.height;
    let scale = 1.0 / h.maxval as f64;
    let raw: Vec<usize> = if h.magic[1] == b'5' {
        let bpp = if h.maxval < 256 { 1 } else { 2 };
        let data = &bytes[h.data_start..];
        if data.len() < n * bpp {
            return Err(Error::Format(format!("expected {} bytes of pixel data, found {}", n * bpp, data.len())));
        }
        if bpp == 1 {
            data[..n].iter().map(|&b| b as usize).collect()
        } else {
            data[..2 * n]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]) as usize)
                .collect()
        }
    } else {
        let text = std::str::from_utf8(&bytes[h.data_start..]).map_err(|_| Error::Format("P2 data is not text".into()))?;
        let vals = text
            .split_ascii_whitespace()
            .take(n)
            .map(|t| t.parse::<usize>().map_err(|_| Error::Format(format!("bad P2 sample {t:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() < n {
            return Err(Error::Format(format!("expected {n} samples, found {}", vals.len())));
        }
        vals
    };
    if let Some(v) = raw.iter().find(|&&v| v > h.maxval) {
        return Err(Error::Format(format!("sample {v} exceeds maxval {}", h.maxval)));
    }
    Ok(Pgm {
        width: h.width,
        height: h.height,
        values: raw.into_iter().map(|v| v as f64 * scale).collect(),
    })
}

pub fn read_pgm(path: &Path) -> Result<Pgm> {
    decode_pgm(&std::fs::read(path)?)
}

/// `P5` with maxval 255; values are clamped to `[0, 1]` and rounded.
pub fn encode_pgm(width: usize, height: usize, values: &[f64]) -> Result<Vec<u8>> {
    if values.len() != width * height {
        return Err(Error::DimensionMismatch {
            context: "encode_pgm",
            expected: width * height,
            given: values.len(),
        });
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    Ok(out)
}

pub fn write_pgm(path: &Path, width: usize, height: usize, values: &[f64]) -> Result<()> {
    std::fs::write(path, encode_pgm(width, height, values)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p5_roundtrip() {
        let vals = [0.0, 1.0, 128.0 / 255.0, 3.0 / 255.0, 1.0, 0.0];
        let bytes = encode_pgm(3, 2, &vals).unwrap();
        let img = decode_pgm(&bytes).unwrap();
        assert_eq!((img.width, img.height), (3, 2));
        assert_eq!(img.values, vals);
    }

    #[test]
    fn p2_with_comments() {
        let text = b"P2\n# a comment\n2 2\n# another\n4\n0 1\n2 4\n";
        let img = decode_pgm(text).unwrap();
        assert_eq!(img.values, vec![0.0, 0.25, 0.5, 1.0]);
    }

    #[test]
    fn sixteen_bit() {
        let mut bytes = b"P5 2 1 1000\n".to_vec();
        bytes.extend_from_slice(&500u16.to_be_bytes());
        bytes.extend_from_slice(&1000u16.to_be_bytes());
        assert_eq!(decode_pgm(&bytes).unwrap().values, vec![0.5, 1.0]);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(decode_pgm(b"P6\n1 1\n255\n\0\0\0").is_err());
        assert!(decode_pgm(b"P5\n2 2\n255\n\0").is_err());
        assert!(decode_pgm(b"P2\n1 1\n3\n9\n").is_err());
    }
}
