//! Series CSV files: header `t,var_0,...,var_{V-1}`, one row per time step.

use std::io::{Read, Write};

use crate::error::{shape_err, Error, Result};
use crate::series::SeriesTensor;

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidParameter(format!("csv: {e}"))
}

/// A univariate-per-cell series together with its time stamps.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesTable {
    pub times: Vec<i64>,
    pub values: SeriesTensor,
}

pub fn read_series<R: Read>(reader: R) -> Result<SeriesTable> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers().map_err(csv_err)?.clone();
    let variates = header.len().saturating_sub(1);
    if header.get(0) != Some("t") || variates == 0 {
        return Err(shape_err("header must be t,var_0,..."));
    }
    for (v, name) in header.iter().skip(1).enumerate() {
        if name != format!("var_{v}") {
            return Err(shape_err(format!("column {} is {name:?}, expected var_{v}", v + 1)));
        }
    }
    let mut times = Vec::new();
    let mut columns = vec![Vec::new(); variates];
    for (row, record) in r.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let parse_err = |field: &str| Error::InvalidParameter(format!("row {}: bad number {field:?}", row + 1));
        times.push(record[0].trim().parse::<i64>().map_err(|_| parse_err(&record[0]))?);
        for (v, col) in columns.iter_mut().enumerate() {
            let field = &record[v + 1];
            col.push(field.trim().parse::<f64>().map_err(|_| parse_err(field))?);
        }
    }
    if times.is_empty() {
        return Err(Error::Empty("series CSV"));
    }
    let values = SeriesTensor::from_rows(&columns)?;
    values.ensure_finite()?;
    Ok(SeriesTable { times, values })
}

pub fn read_series_file(path: &std::path::Path) -> Result<SeriesTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
    read_series(file)
}

/// Writes channel 0 of every cell.
pub fn write_series<W: Write>(writer: W, table: &SeriesTable) -> Result<()> {
    let (nv, nt, _) = table.values.shape();
    if table.times.len() != nt {
        return Err(shape_err(format!("{} time stamps for {nt} steps", table.times.len())));
    }
    let mut w = csv::Writer::from_writer(writer);
    let header: Vec<String> = std::iter::once("t".to_string()).chain((0..nv).map(|v| format!("var_{v}"))).collect();
    w.write_record(&header).map_err(csv_err)?;
    for (t, stamp) in table.times.iter().enumerate() {
        let row: Vec<String> =
            std::iter::once(stamp.to_string()).chain((0..nv).map(|v| table.values.get(v, t, 0).to_string())).collect();
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::InvalidParameter(format!("csv: {e}")))?;
    Ok(())
}
