//! Plain numeric CSV tables with a header row.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct NumericTable<T> {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<T>>,
}

impl<T> NumericTable<T> {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }
}

pub fn read_numeric_table<T: Real, R: Read>(reader: R) -> Result<NumericTable<T>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .map(|field| {
                field.parse::<f64>().map(T::lit).map_err(|_| Error::Parse {
                    context: "CSV".into(),
                    message: format!("row {}: `{field}` is not a number", line + 1),
                })
            })
            .collect::<Result<Vec<T>>>()?;
        rows.push(row);
    }
    Ok(NumericTable { headers, rows })
}

pub fn write_numeric_table<T: Real, W: Write, I>(writer: W, headers: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<T>>,
{
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(headers)?;
    for row in rows {
        wtr.write_record(row.iter().map(|v| v.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}
