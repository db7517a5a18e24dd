//! Grayscale PFM depth maps.
//!
//! Written little-endian (negative scale) with rows stored bottom to top, as the
//! format requires. Reading also accepts big-endian files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::DepthMap;

fn header_token<R: BufRead>(r: &mut R, line: &mut usize) -> Result<String> {
    let mut tok = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            return Err(Error::Parse {
                line: *line,
                msg: "truncated PFM header".into(),
            });
        }
        match byte[0] {
            b'\n' if tok.is_empty() => *line += 1,
            c if c.is_ascii_whitespace() => {
                if !tok.is_empty() {
                    if c == b'\n' {
                        *line += 1;
                    }
                    break;
                }
            }
            c => tok.push(c),
        }
    }
    String::from_utf8(tok).map_err(|_| Error::Parse {
        line: *line,
        msg: "non-ASCII PFM header".into(),
    })
}

pub fn read_pfm<R: Read>(reader: R) -> Result<DepthMap> {
    let mut r = BufReader::new(reader);
    let mut line = 1;
    let magic = header_token(&mut r, &mut line)?;
    if magic != "Pf" {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected grayscale PFM ('Pf'), found '{magic}'"),
        });
    }
    let mut num = |what: &str, r: &mut BufReader<R>| -> Result<String> {
        let tok = header_token(r, &mut line)?;
        if tok.is_empty() {
            return Err(Error::Parse {
                line,
                msg: format!("missing {what}"),
            });
        }
        Ok(tok)
    };
    let w: usize = num("width", &mut r)?.parse().map_err(|_| Error::Parse {
        line: 2,
        msg: "bad width".into(),
    })?;
    let h: usize = num("height", &mut r)?.parse().map_err(|_| Error::Parse {
        line: 2,
        msg: "bad height".into(),
    })?;
    let scale: f64 = num("scale", &mut r)?.parse().map_err(|_| Error::Parse {
        line: 3,
        msg: "bad scale".into(),
    })?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Parse {
            line: 3,
            msg: "scale must be nonzero".into(),
        });
    }
    let little = scale < 0.0;
    let mut buf = vec![0u8; w * h * 4];
    r.read_exact(&mut buf).map_err(|_| Error::Parse {
        line: 4,
        msg: format!("expected {} bytes of samples", w * h * 4),
    })?;
    let mut values = vec![0.0; w * h];
    for (k, chunk) in buf.chunks_exact(4).enumerate() {
        let bytes = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let x = if little {
            f32::from_le_bytes(bytes)
        } else {
            f32::from_be_bytes(bytes)
        };
        let (row_from_bottom, u) = (k / w, k % w);
        values[(h - 1 - row_from_bottom) * w + u] = f64::from(x);
    }
    DepthMap::new(w, h, values)
}

/// Write as 32-bit floats; values are rounded to `f32`.
pub fn write_pfm<W: Write>(mut writer: W, depth: &DepthMap) -> Result<()> {
    let (w, h) = depth.dims();
    write!(writer, "Pf\n{w} {h}\n-1.0\n")?;
    let mut buf = Vec::with_capacity(w * h * 4);
    for v in (0..h).rev() {
        for u in 0..w {
            buf.extend_from_slice(&(depth.raw(u, v) as f32).to_le_bytes());
        }
    }
    writer.write_all(&buf)?;
    Ok(())
}

pub fn load_pfm(path: impl AsRef<Path>) -> Result<DepthMap> {
    let path = path.as_ref();
    File::open(path)
        .map_err(Error::from)
        .and_then(read_pfm)
        .map_err(|e| e.at_path(path))
}

pub fn save_pfm(path: impl AsRef<Path>, depth: &DepthMap) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::from(e).at_path(path))?);
    write_pfm(&mut w, depth)?;
    w.flush().map_err(|e| Error::from(e).at_path(path))
}
