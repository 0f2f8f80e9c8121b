//! Continuous recordings as plain CSV: one column per channel (header row of
//! names, one row per sample) plus a `sample,label` events table.

use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::{Event, Recording};

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Reader::from_reader(file))
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

pub fn read_raw_csv(data: impl AsRef<Path>, events: impl AsRef<Path>, fs: f64) -> Result<Recording> {
    let mut rdr = reader(data.as_ref())?;
    let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = vec![Vec::new(); names.len()];
    for record in rdr.records() {
        let record = record?;
        for (row, field) in rows.iter_mut().zip(&record) {
            let v = field.trim().parse::<f64>().map_err(|e| Error::Config {
                path: data.as_ref().display().to_string(),
                detail: format!("line {}: {field:?}: {e}", record.position().map_or(0, |p| p.line())),
            })?;
            row.push(v);
        }
    }
    let mut evs = Vec::new();
    for e in reader(events.as_ref())?.deserialize() {
        let (sample, label): (usize, usize) = e?;
        evs.push(Event { sample, label });
    }
    Recording::new(fs, names, rows, evs)
}

pub fn write_raw_csv(rec: &Recording, data: impl AsRef<Path>, events: impl AsRef<Path>) -> Result<()> {
    let mut w = writer(data.as_ref())?;
    w.write_record(&rec.channel_names)?;
    let mut line = Vec::with_capacity(rec.data.len());
    for t in 0..rec.n_samples() {
        line.clear();
        line.extend(rec.data.iter().map(|row| row[t].to_string()));
        w.write_record(&line)?;
    }
    w.flush().map_err(|e| Error::io(data.as_ref(), e))?;

    let mut w = writer(events.as_ref())?;
    w.write_record(["sample", "label"])?;
    for e in &rec.events {
        w.serialize((e.sample, e.label))?;
    }
    w.flush().map_err(|e| Error::io(events.as_ref(), e))
}
