//! Binary PGM (P5, maxval 255) encoding of panels.

use crate::error::{Error, Result};
use crate::model::RasterImage;

pub fn encode_pgm(img: &RasterImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

/// Parses a P5 file. Header comments (`#` to end of line) are skipped.
pub fn decode_pgm(data: &[u8]) -> Result<RasterImage> {
    let mut pos = 0;
    let next_token = |pos: &mut usize| -> Result<String> {
        loop {
            while *pos < data.len() && data[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < data.len() && data[*pos] == b'#' {
                while *pos < data.len() && data[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < data.len() && !data[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err(Error::Data("truncated PGM header".into()));
        }
        Ok(String::from_utf8_lossy(&data[start..*pos]).into_owned())
    };
    let magic = next_token(&mut pos)?;
    if magic != "P5" {
        return Err(Error::Data(format!("unsupported PGM magic {magic:?}")));
    }
    let number = |pos: &mut usize, what: &str| -> Result<u32> {
        let t = next_token(pos)?;
        t.parse::<u32>()
            .map_err(|_| Error::Data(format!("bad PGM {what} {t:?}")))
    };
    let width = number(&mut pos, "width")?;
    let height = number(&mut pos, "height")?;
    let maxval = number(&mut pos, "maxval")?;
    if maxval != 255 {
        return Err(Error::Data(format!("PGM maxval {maxval} (expected 255)")));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= data.len() || !data[pos].is_ascii_whitespace() {
        return Err(Error::Data("missing PGM raster separator".into()));
    }
    pos += 1;
    let n = width as usize * height as usize;
    if data.len() - pos != n {
        return Err(Error::Data(format!(
            "PGM raster has {} bytes, expected {n}",
            data.len() - pos
        )));
    }
    RasterImage::new(width, height, data[pos..].to_vec()).map_err(|e| Error::Data(format!("PGM: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let img = RasterImage::blank(3, 2);
        let bytes = encode_pgm(&img);
        assert_eq!(&bytes[..11], b"P5\n3 2\n255\n");
        assert_eq!(bytes.len(), 11 + 6);
    }

    #[test]
    fn comments_accepted() {
        let mut data = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        data.extend([0, 200]);
        let img = decode_pgm(&data).unwrap();
        assert_eq!(img.pixels(), &[0, 200]);
    }

    #[test]
    fn corrupt_inputs() {
        assert!(decode_pgm(b"P2\n1 1\n255\n\x00").is_err());
        assert!(decode_pgm(b"P5\n2 2\n255\n\x00").is_err());
        assert!(decode_pgm(b"P5\n1 1\n65535\n\x00\x00").is_err());
        assert!(decode_pgm(b"P5\n1").is_err());
    }

    proptest! {
        #[test]
        fn roundtrip(w in 1u32..20, h in 1u32..20, seed in any::<u8>()) {
            let px: Vec<u8> = (0..w * h).map(|i| (i as u8).wrapping_mul(31).wrapping_add(seed)).collect();
            let img = RasterImage::new(w, h, px).unwrap();
            prop_assert_eq!(decode_pgm(&encode_pgm(&img)).unwrap(), img);
        }
    }
}
