use crate::error::{Error, Result};
use crate::image::ImageTensor;
use std::path::Path;

/// Binary P6 encoding with maxval 255; values are stored as `round(255·v)`.
pub fn encode_ppm(image: &ImageTensor) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(&image.to_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| Error::parse(start, format!("{what} is out of range")))
    }
}

/// Decodes a binary P6 image with maxval 255.
pub fn decode_ppm(bytes: &[u8]) -> Result<ImageTensor> {
    if !bytes.starts_with(b"P6") {
        return Err(Error::parse(0, "missing P6 magic number"));
    }
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(Error::parse(maxval_at, format!("unsupported maxval {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(Error::parse(3, "image has zero size"));
    }
    if !bytes.get(cur.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::parse(cur.pos, "expected a single whitespace after maxval"));
    }
    let start = cur.pos + 1;
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| Error::parse(3, "image dimensions overflow"))?;
    let have = bytes.len() - start;
    if have < need {
        return Err(Error::parse(
            bytes.len(),
            format!("pixel data truncated: {have} of {need} bytes"),
        ));
    }
    if have > need {
        return Err(Error::parse(start + need, "trailing bytes after pixel data"));
    }
    let data = bytes[start..].iter().map(|&b| b as f64 / 255.0).collect();
    ImageTensor::from_data(width, height, data)
}

pub fn write_ppm(image: &ImageTensor, path: &Path) -> Result<()> {
    std::fs::write(path, encode_ppm(image)).map_err(|e| Error::io(path, e))
}

pub fn read_ppm(path: &Path) -> Result<ImageTensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::RngStream;

    #[test]
    fn white_pixel_bytes() {
        let img = ImageTensor::filled(1, 1, [1.0; 3]);
        let mut expect = b"P6\n1 1\n255\n".to_vec();
        expect.extend_from_slice(&[0xFF; 3]);
        assert_eq!(encode_ppm(&img), expect);
    }

    #[test]
    fn round_trip_within_quantization() {
        let mut rng = RngStream::new(1, 0);
        let img = ImageTensor::from_data(5, 3, (0..45).map(|_| rng.next_f64()).collect()).unwrap();
        let back = decode_ppm(&encode_ppm(&img)).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 1.0 / 510.0 + 1e-15);
        }
    }

    #[test]
    fn malformed_files() {
        let mut bytes = encode_ppm(&ImageTensor::zeros(2, 2));
        bytes.truncate(bytes.len() - 1);
        assert!(matches!(decode_ppm(&bytes), Err(Error::Parse { offset: 22, .. })));
        assert!(matches!(decode_ppm(b"P3\n1 1\n255\n"), Err(Error::Parse { offset: 0, .. })));
        assert!(matches!(decode_ppm(b"P6\n1 x\n255\n"), Err(Error::Parse { offset: 5, .. })));
        assert!(matches!(decode_ppm(b"P6\n1 1\n65535\n\0\0\0"), Err(Error::Parse { .. })));
        let commented = b"P6\n# note\n1 1\n255\n\x10\x20\x30";
        assert_eq!(decode_ppm(commented).unwrap().pixel(0, 0)[1], 32.0 / 255.0);
    }
}
