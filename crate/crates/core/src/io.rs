//! CSV and JSON export.
//!
//! CSV tables are UTF-8, comma separated, with a header row. Floats are
//! written in shortest round-trip form, so re-reading a table reproduces the
//! values bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::sites::FieldSample;
use crate::synthesis::SurfaceRow;
use crate::transport::ConcentrationField;

/// One row of a concentration time series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub t_index: usize,
    pub x: f64,
    pub y: f64,
    pub value: f64,
}

/// `(x, y, value)` rows of a sample, in site order.
pub fn sample_rows(sample: &FieldSample) -> Vec<SurfaceRow> {
    sample
        .sites()
        .points()
        .iter()
        .zip(sample.values())
        .map(|(p, &value)| SurfaceRow { x: p.x, y: p.y, value })
        .collect()
}

/// Long-format rows of a concentration time series.
pub fn series_rows(fields: &[ConcentrationField]) -> Vec<SeriesRow> {
    fields
        .iter()
        .flat_map(|f| {
            f.sites
                .points()
                .iter()
                .zip(&f.concentrations)
                .map(move |(p, &value)| SeriesRow { t_index: f.time_index, x: p.x, y: p.y, value })
        })
        .collect()
}

pub fn write_csv_to<W: Write, T: Serialize>(writer: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv_from<R: Read, T: DeserializeOwned>(reader: R) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(reader);
    let rows = r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?;
    Ok(rows)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_csv_to(BufWriter::new(File::create(path)?), rows)
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    read_csv_from(BufReader::new(File::open(path)?))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}
