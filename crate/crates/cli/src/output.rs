use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use root_oram::sim::write_csv;
use root_oram::Result;
use serde::Serialize;

use crate::Format;

pub fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(io::stdout().lock()),
    })
}

/// Rows as CSV (default) or a JSON array.
pub fn table<T: Serialize>(out: Option<&Path>, format: Option<Format>, rows: &[T]) -> Result<()> {
    let mut w = sink(out)?;
    match format {
        Some(Format::Json) => {
            serde_json::to_writer_pretty(&mut w, rows)?;
            writeln!(w)?;
        }
        _ => write_csv(&mut w, rows)?,
    }
    w.flush()?;
    Ok(())
}

/// Named scalar results: `key=value` lines, a `quantity,value` table or a
/// JSON object.
pub fn pairs(out: Option<&Path>, format: Option<Format>, items: &[(String, String)]) -> Result<()> {
    let mut w = sink(out)?;
    match format {
        None => {
            for (k, v) in items {
                writeln!(w, "{k}={v}")?;
            }
        }
        Some(Format::Csv) => {
            writeln!(w, "quantity,value")?;
            for (k, v) in items {
                writeln!(w, "{k},{v}")?;
            }
        }
        Some(Format::Json) => {
            let map: serde_json::Map<String, serde_json::Value> = items
                .iter()
                .map(|(k, v)| {
                    let value = v.parse::<f64>().ok().and_then(serde_json::Number::from_f64).map_or_else(
                        || serde_json::Value::String(v.clone()),
                        serde_json::Value::Number,
                    );
                    (k.clone(), value)
                })
                .collect();
            serde_json::to_writer_pretty(&mut w, &map)?;
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}
