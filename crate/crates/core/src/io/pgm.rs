//! 8-bit binary PGM (P5) for masks and grayscale images.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::losses::Image;

/// A raw 8-bit grayscale raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gray8 {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Gray8 {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::invalid(format!(
                "{width}x{height} raster cannot hold {} bytes",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Intensities scaled to `[0, 1]`.
    pub fn to_image(&self) -> Result<Image> {
        Image::new(
            self.width,
            self.height,
            1,
            self.data.iter().map(|&b| f64::from(b) / 255.0).collect(),
        )
    }

    /// Quantize a single-channel image.
    pub fn from_image(img: &Image) -> Result<Self> {
        if img.channels() != 1 {
            return Err(Error::invalid("PGM holds single-channel images only"));
        }
        let data = img
            .data()
            .iter()
            .map(|x| (x * 255.0).round() as u8)
            .collect();
        Self::new(img.width(), img.height(), data)
    }
}

fn token<R: BufRead>(r: &mut R) -> Result<String> {
    let mut tok = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            return Err(Error::Parse {
                line: 1,
                msg: "truncated PGM header".into(),
            });
        }
        match byte[0] {
            b'#' if tok.is_empty() => {
                let mut skip = Vec::new();
                r.read_until(b'\n', &mut skip)?;
            }
            c if c.is_ascii_whitespace() => {
                if !tok.is_empty() {
                    break;
                }
            }
            c => tok.push(c),
        }
    }
    Ok(String::from_utf8_lossy(&tok).into_owned())
}

pub fn read_pgm<R: Read>(reader: R) -> Result<Gray8> {
    let mut r = BufReader::new(reader);
    let magic = token(&mut r)?;
    if magic != "P5" {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected binary PGM ('P5'), found '{magic}'"),
        });
    }
    let mut field = |what: &str| -> Result<usize> {
        token(&mut r)?.parse().map_err(|_| Error::Parse {
            line: 1,
            msg: format!("bad {what}"),
        })
    };
    let (w, h, maxval) = (field("width")?, field("height")?, field("maxval")?);
    if maxval != 255 {
        return Err(Error::Parse {
            line: 1,
            msg: format!("only 8-bit PGM is supported (maxval {maxval})"),
        });
    }
    let mut data = vec![0u8; w * h];
    r.read_exact(&mut data).map_err(|_| Error::Parse {
        line: 1,
        msg: format!("expected {} bytes of pixels", w * h),
    })?;
    Gray8::new(w, h, data)
}

pub fn write_pgm<W: Write>(mut writer: W, img: &Gray8) -> Result<()> {
    write!(writer, "P5\n{} {}\n255\n", img.width, img.height)?;
    writer.write_all(&img.data)?;
    Ok(())
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<Gray8> {
    let path = path.as_ref();
    File::open(path)
        .map_err(Error::from)
        .and_then(read_pgm)
        .map_err(|e| e.at_path(path))
}

pub fn save_pgm(path: impl AsRef<Path>, img: &Gray8) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::from(e).at_path(path))?);
    write_pgm(&mut w, img)?;
    w.flush().map_err(|e| Error::from(e).at_path(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_comment() {
        let g = Gray8::new(3, 2, vec![0, 1, 2, 253, 254, 255]).unwrap();
        let mut buf = Vec::new();
        write_pgm(&mut buf, &g).unwrap();
        assert_eq!(read_pgm(buf.as_slice()).unwrap(), g);
        let mut commented = b"P5\n# made by hand\n3 2\n255\n".to_vec();
        commented.extend_from_slice(&g.data);
        assert_eq!(read_pgm(commented.as_slice()).unwrap(), g);
    }

    #[test]
    fn rejects_other_variants() {
        assert!(read_pgm(&b"P2\n1 1\n255\n0"[..]).is_err());
        assert!(read_pgm(&b"P5\n1 1\n65535\n\0\0"[..]).is_err());
        assert!(read_pgm(&b"P5\n2 2\n255\n\0"[..]).is_err());
    }

    #[test]
    fn image_quantization() {
        let img = Image::new(2, 1, 1, vec![0.0, 1.0]).unwrap();
        let g = Gray8::from_image(&img).unwrap();
        assert_eq!(g.data, vec![0, 255]);
        assert_eq!(g.to_image().unwrap(), img);
    }
}
