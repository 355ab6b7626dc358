//! PGM (P5) images and PFM (Pf) float maps.
//!
//! PFM rows are stored bottom-to-top; a negative scale marks little-endian
//! payloads, which is what we write. 16-bit PGM samples are big-endian as
//! the format requires.

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scalar::Real;

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self, what: &str) -> Result<&'a str> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse(start, format!("expected {what}, found end of data")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::parse(start, format!("{what} is not ASCII")))
    }

    fn number<T: std::str::FromStr>(&mut self, what: &str) -> Result<T> {
        let start = {
            self.skip_space_and_comments();
            self.pos
        };
        let tok = self.token(what)?;
        tok.parse()
            .map_err(|_| Error::parse(start, format!("invalid {what} `{tok}`")))
    }

    /// Consumes the single whitespace byte separating header and payload.
    fn end_of_header(&mut self) -> Result<usize> {
        match self.bytes.get(self.pos) {
            Some(c) if c.is_ascii_whitespace() => Ok(self.pos + 1),
            _ => Err(Error::parse(self.pos, "missing whitespace after header")),
        }
    }
}

pub fn encode_pfm(map: &Grid<f32>) -> Vec<u8> {
    let mut out = format!("Pf\n{} {}\n-1.0\n", map.width(), map.height()).into_bytes();
    out.reserve(map.len() * 4);
    for v in (0..map.height()).rev() {
        for &x in map.row(v) {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(bytes: &[u8]) -> Result<Grid<f32>> {
    let mut hr = HeaderReader::new(bytes);
    let magic_at = hr.pos;
    let magic = hr.token("PFM magic")?;
    if magic != "Pf" {
        return Err(Error::parse(magic_at, format!("expected `Pf`, got `{magic}`")));
    }
    let width: usize = hr.number("width")?;
    let height: usize = hr.number("height")?;
    let scale_at = hr.pos;
    let scale: f32 = hr.number("scale")?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::parse(scale_at, "scale must be finite and nonzero"));
    }
    let little = scale < 0.0;
    let start = hr.end_of_header()?;
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::parse(start, "dimensions overflow"))?;
    if bytes.len() < start + need {
        return Err(Error::parse(
            bytes.len(),
            format!("truncated payload: need {need} bytes, have {}", bytes.len() - start),
        ));
    }
    let mut data = vec![0f32; width * height];
    for (i, chunk) in bytes[start..start + need].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let x = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (row, col) = (i / width, i % width);
        data[(height - 1 - row) * width + col] = x;
    }
    Grid::from_vec(width, height, data)
}

/// Binary 16-bit grayscale (maxval 65535).
pub fn encode_pgm16(img: &Grid<u16>) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", img.width(), img.height()).into_bytes();
    out.reserve(img.len() * 2);
    for &x in img.as_slice() {
        out.extend_from_slice(&x.to_be_bytes());
    }
    out
}

/// Binary 8-bit grayscale (maxval 255).
pub fn encode_pgm8(img: &Grid<u8>) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.as_slice());
    out
}

/// Decodes 8- or 16-bit binary PGM. Returns samples and maxval.
pub fn decode_pgm(bytes: &[u8]) -> Result<(Grid<u16>, u16)> {
    let mut hr = HeaderReader::new(bytes);
    let magic = hr.token("PGM magic")?;
    if magic != "P5" {
        return Err(Error::parse(0, format!("expected `P5`, got `{magic}`")));
    }
    let width: usize = hr.number("width")?;
    let height: usize = hr.number("height")?;
    let max_at = hr.pos;
    let maxval: u32 = hr.number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::parse(max_at, format!("maxval {maxval} out of range")));
    }
    let start = hr.end_of_header()?;
    let bps = if maxval < 256 { 1 } else { 2 };
    let need = width * height * bps;
    if bytes.len() < start + need {
        return Err(Error::parse(
            bytes.len(),
            format!("truncated payload: need {need} bytes, have {}", bytes.len() - start),
        ));
    }
    let payload = &bytes[start..start + need];
    let data = if bps == 1 {
        payload.iter().map(|&b| b as u16).collect()
    } else {
        payload
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    Ok((Grid::from_vec(width, height, data)?, maxval as u16))
}

/// Quantises an image with values in `[0, 1]` to 16-bit samples.
pub fn quantize16<T: Real>(img: &Grid<T>) -> Grid<u16> {
    img.map(|x| {
        let x = x.to_f64_lossy().clamp(0.0, 1.0);
        (x * 65535.0).round() as u16
    })
}

pub fn dequantize16<T: Real>(img: &Grid<u16>, maxval: u16) -> Grid<T> {
    let m = maxval as f64;
    img.map(|x| T::lit(x as f64 / m))
}

pub(crate) fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)
                .map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn save_pfm<T: Real>(path: &Path, map: &Grid<T>) -> Result<()> {
    write_bytes(path, &encode_pfm(&map.cast::<f32>()))
}

pub fn load_pfm(path: &Path) -> Result<Grid<f32>> {
    decode_pfm(&read(path)?)
}

/// Writes a stack of equally sized maps as one tall PFM (slice `k` occupies
/// rows `k*h .. (k+1)*h`).
pub fn save_pfm_stack<T: Real>(path: &Path, slices: &[Grid<T>]) -> Result<()> {
    let Some(first) = slices.first() else {
        return Err(Error::Shape("empty PFM stack".into()));
    };
    let (w, h) = (first.width(), first.height());
    let mut data = Vec::with_capacity(w * h * slices.len());
    for s in slices {
        first.check_shape(s, "PFM stack slice")?;
        data.extend(s.as_slice().iter().map(|x| x.to_f64_lossy() as f32));
    }
    write_bytes(path, &encode_pfm(&Grid::from_vec(w, h * slices.len(), data)?))
}

pub fn save_image<T: Real>(path: &Path, img: &Grid<T>) -> Result<()> {
    write_bytes(path, &encode_pgm16(&quantize16(img)))
}

pub fn load_image<T: Real>(path: &Path) -> Result<Grid<T>> {
    let (raw, maxval) = decode_pgm(&read(path)?)?;
    Ok(dequantize16(&raw, maxval))
}

pub fn save_pgm8(path: &Path, img: &Grid<u8>) -> Result<()> {
    write_bytes(path, &encode_pgm8(img))
}

pub fn load_pgm8(path: &Path) -> Result<Grid<u8>> {
    let (raw, maxval) = decode_pgm(&read(path)?)?;
    if maxval > 255 {
        return Err(Error::parse(0, format!("expected 8-bit PGM, maxval {maxval}")));
    }
    Ok(raw.map(|x| x as u8))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_encoded_pfm_fixture() {
        // 2x2 map, little endian; file rows go bottom-up.
        let mut bytes = b"Pf\n2 2\n-1.0\n".to_vec();
        for x in [3.0f32, 4.0, 1.0, 2.0] {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        let map = decode_pfm(&bytes).unwrap();
        assert_eq!(map.as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(encode_pfm(&map), bytes);
    }

    #[test]
    fn big_endian_pfm_is_accepted() {
        let mut bytes = b"Pf\n1 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&2.5f32.to_be_bytes());
        assert_eq!(decode_pfm(&bytes).unwrap().as_slice(), &[2.5]);
    }

    #[test]
    fn malformed_inputs_report_offsets() {
        assert!(matches!(decode_pfm(b""), Err(Error::Parse { offset: 0, .. })));
        assert!(matches!(decode_pfm(b"PF\n1 1\n-1\n"), Err(Error::Parse { offset: 0, .. })));
        match decode_pfm(b"Pf\n2 2\n-1.0\n\0\0\0\0") {
            Err(Error::Parse { offset, message }) => {
                assert_eq!(offset, 16);
                assert!(message.contains("truncated"));
            }
            other => panic!("unexpected {other:?}"),
        }
        match decode_pgm(b"P5\n2 x\n255\n") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("unexpected {other:?}"),
        }
        assert!(decode_pgm(b"").is_err());
    }

    #[test]
    fn pgm_comments_and_8bit() {
        let bytes = b"P5\n# made by hand\n3 1\n255\n\x00\x40\xff";
        let (img, maxval) = decode_pgm(bytes).unwrap();
        assert_eq!(maxval, 255);
        assert_eq!(img.as_slice(), &[0, 64, 255]);
    }

    #[test]
    fn nan_survives_pfm() {
        let map = Grid::from_vec(2, 1, vec![f32::NAN, 1.5]).unwrap();
        let back = decode_pfm(&encode_pfm(&map)).unwrap();
        assert!(back.get(0, 0).is_nan());
        assert_eq!(back.get(1, 0), 1.5);
    }

    proptest! {
        #[test]
        fn pfm_round_trip_is_bit_exact(w in 1usize..9, h in 1usize..9, bits in proptest::collection::vec(any::<u32>(), 81)) {
            let data: Vec<f32> = bits[..w * h].iter().map(|&b| f32::from_bits(b)).collect();
            let map = Grid::from_vec(w, h, data).unwrap();
            let back = decode_pfm(&encode_pfm(&map)).unwrap();
            let a: Vec<u32> = map.as_slice().iter().map(|x| x.to_bits()).collect();
            let b: Vec<u32> = back.as_slice().iter().map(|x| x.to_bits()).collect();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn pgm16_round_trip_is_value_exact(w in 1usize..9, h in 1usize..9, vals in proptest::collection::vec(any::<u16>(), 81)) {
            let img = Grid::from_vec(w, h, vals[..w * h].to_vec()).unwrap();
            let (back, maxval) = decode_pgm(&encode_pgm16(&img)).unwrap();
            prop_assert_eq!(maxval, 65535);
            prop_assert_eq!(back, img);
        }
    }
}
