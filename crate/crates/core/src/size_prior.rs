//! Object height priors: a single fixed height or a per-instance dimension table
//! filled in by an external size estimator.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::masks::ObjectInstance;

/// Fixed car height prior in meters.
pub const DEFAULT_CAR_HEIGHT: f64 = 1.59;

/// Heights at or above this bound are rejected as corrupt.
pub const MAX_PRIOR_HEIGHT: f64 = 10.0;

pub const TABLE_HEADER: [&str; 4] = ["id", "height_m", "width_m", "length_m"];

/// Object dimensions in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dimensions {
    pub height: f64,
    pub width: f64,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PriorSource {
    FixedHeight(f64),
    DimensionTable {
        table: BTreeMap<u32, Dimensions>,
        fallback: Option<f64>,
    },
}

fn check_height(h: f64) -> Result<()> {
    if !(h > 0.0 && h < MAX_PRIOR_HEIGHT) {
        return Err(Error::Validation(format!(
            "prior height {h} outside (0, {MAX_PRIOR_HEIGHT})"
        )));
    }
    Ok(())
}

impl Default for PriorSource {
    fn default() -> Self {
        PriorSource::FixedHeight(DEFAULT_CAR_HEIGHT)
    }
}

impl PriorSource {
    pub fn fixed(height: f64) -> Result<Self> {
        check_height(height)?;
        Ok(PriorSource::FixedHeight(height))
    }

    pub fn table(table: BTreeMap<u32, Dimensions>, fallback: Option<f64>) -> Result<Self> {
        for dims in table.values() {
            check_height(dims.height)?;
        }
        if let Some(f) = fallback {
            check_height(f)?;
        }
        Ok(PriorSource::DimensionTable { table, fallback })
    }

    /// Replace (or set) the fallback height of a table source; no-op for a fixed source.
    pub fn with_fallback(self, fallback: Option<f64>) -> Result<Self> {
        match self {
            PriorSource::DimensionTable { table, .. } => Self::table(table, fallback),
            fixed => Ok(fixed),
        }
    }

    pub fn prior_height(&self, instance: &ObjectInstance) -> Result<f64> {
        match self {
            PriorSource::FixedHeight(h) => Ok(*h),
            PriorSource::DimensionTable { table, fallback } => table
                .get(&instance.id)
                .map(|d| d.height)
                .or(*fallback)
                .ok_or(Error::MissingPrior { id: instance.id }),
        }
    }

    /// Parse a dimension table (`id,height_m,width_m,length_m`) with no fallback.
    pub fn read_dimension_table<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let mut table = BTreeMap::new();
        let mut seen_header = false;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
                Error::Parse {
                    line,
                    msg: e.to_string(),
                }
            })?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            if !seen_header {
                if rec.iter().ne(TABLE_HEADER) {
                    return Err(Error::Parse {
                        line,
                        msg: format!("expected header `{}`", TABLE_HEADER.join(",")),
                    });
                }
                seen_header = true;
                continue;
            }
            if rec.len() != 4 {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected 4 fields, got {}", rec.len()),
                });
            }
            let id: u32 = rec[0].parse().map_err(|_| Error::Parse {
                line,
                msg: format!("bad id `{}`", &rec[0]),
            })?;
            let mut nums = [0.0; 3];
            for (slot, (field, name)) in nums
                .iter_mut()
                .zip(rec.iter().skip(1).zip(&TABLE_HEADER[1..]))
            {
                *slot = field.parse().map_err(|_| Error::Parse {
                    line,
                    msg: format!("bad {name} `{field}`"),
                })?;
            }
            let [height, width, length] = nums;
            check_height(height).map_err(|e| Error::Validation(format!("line {line}: {e}")))?;
            if !(width > 0.0 && width.is_finite() && length > 0.0 && length.is_finite()) {
                return Err(Error::Validation(format!(
                    "line {line}: nonpositive width or length"
                )));
            }
            if table
                .insert(
                    id,
                    Dimensions {
                        height,
                        width,
                        length,
                    },
                )
                .is_some()
            {
                return Err(Error::Parse {
                    line,
                    msg: format!("duplicate id {id}"),
                });
            }
        }
        if !seen_header {
            return Err(Error::Parse {
                line: 1,
                msg: "missing header".into(),
            });
        }
        Ok(PriorSource::DimensionTable {
            table,
            fallback: None,
        })
    }

    pub fn load_dimension_table(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::from(e).at_path(path))?;
        Self::read_dimension_table(file).map_err(|e| e.at_path(path))
    }
}

pub fn write_dimension_table<W: Write>(writer: W, table: &BTreeMap<u32, Dimensions>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    wtr.write_record(TABLE_HEADER).map_err(csv_err)?;
    for (id, d) in table {
        wtr.write_record([
            id.to_string(),
            d.height.to_string(),
            d.width.to_string(),
            d.length.to_string(),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}
