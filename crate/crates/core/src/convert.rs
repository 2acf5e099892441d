//! CSV <-> `CFOD` conversion.
//!
//! CSV rows are `f1,...,fD,label` with no header line.

use std::fs::File;
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use crate::dataset::{FeatureDataset, DATASET_MAGIC};
use crate::error::{Error, Result};

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(r)
}

/// Parses one record into `out`, returning the label.
fn parse_record(rec: &csv::StringRecord, dim: Option<usize>, out: &mut Vec<f32>) -> Result<usize> {
    let line = rec.position().map_or(0, |p| p.line());
    let bad = |message: String| Error::Csv { line, message };
    if rec.len() < 2 {
        return Err(bad(format!("expected at least one feature and a label, got {} fields", rec.len())));
    }
    let d = rec.len() - 1;
    if let Some(dim) = dim {
        if d != dim {
            return Err(bad(format!("expected {dim} features, found {d}")));
        }
    }
    for field in rec.iter().take(d) {
        out.push(field.parse::<f32>().map_err(|e| bad(format!("feature {field:?}: {e}")))?);
    }
    let label = &rec[d];
    label
        .parse::<usize>()
        .map_err(|e| bad(format!("label {label:?}: {e}")))
}

fn resolve_classes(max_label: usize, classes: Option<usize>) -> Result<usize> {
    match classes {
        Some(c) if max_label >= c => Err(Error::LabelOutOfRange {
            row: 0,
            label: max_label as i64,
            classes: c,
        }),
        Some(c) => Ok(c),
        None => Ok((max_label + 1).max(2)),
    }
}

/// Reads a whole CSV into memory. `classes` defaults to `max(label) + 1`.
pub fn dataset_from_csv<R: Read>(reader: R, classes: Option<usize>) -> Result<FeatureDataset> {
    let mut rdr = csv_reader(reader);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut dim = None;
    let mut rec = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut rec) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                return Err(Error::Csv {
                    line: e.position().map_or(0, |p| p.line()),
                    message: e.to_string(),
                })
            }
        }
        let label = parse_record(&rec, dim, &mut features)?;
        dim.get_or_insert(rec.len() - 1);
        labels.push(label);
    }
    let dim = dim.ok_or_else(|| Error::Invalid("csv input has no rows".into()))?;
    let max = labels.iter().copied().max().unwrap_or(0);
    let classes = resolve_classes(max, classes)?;
    FeatureDataset::new(features, dim, labels, classes, None, None)
}

pub fn write_csv<W: Write>(ds: &FeatureDataset, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    let mut line = String::new();
    for i in 0..ds.rows() {
        line.clear();
        for v in ds.row(i) {
            // `Display` for f32 is the shortest string that round-trips.
            line.push_str(&v.to_string());
            line.push(',');
        }
        line.push_str(&ds.label(i).to_string());
        line.push('\n');
        w.write_all(line.as_bytes())
            .map_err(|e| Error::io("<csv output>", e))?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))
}

/// Streams a CSV file into a `CFOD` binary without holding the feature
/// matrix in memory. The header's row and class counts are patched in once
/// the input is exhausted.
pub fn csv_to_cfod_streaming(csv_path: &Path, out_path: &Path, classes: Option<usize>) -> Result<()> {
    let input = File::open(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let mut rdr = csv_reader(std::io::BufReader::new(input));
    let file = File::create(out_path).map_err(|e| Error::io(out_path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(out_path, e);

    out.write_all(&DATASET_MAGIC).map_err(io)?;
    out.write_all(&[0u8; 25]).map_err(io)?;

    let mut labels: Vec<usize> = Vec::new();
    let mut dim = None;
    let mut row = Vec::new();
    let mut rec = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut rec) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                return Err(Error::Csv {
                    line: e.position().map_or(0, |p| p.line()),
                    message: e.to_string(),
                })
            }
        }
        row.clear();
        let label = parse_record(&rec, dim, &mut row)?;
        dim.get_or_insert(row.len());
        for v in &row {
            out.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        labels.push(label);
    }
    let dim = dim.ok_or_else(|| Error::Invalid("csv input has no rows".into()))?;
    let max = labels.iter().copied().max().unwrap_or(0);
    let classes = resolve_classes(max, classes)?;
    if classes > i32::MAX as usize {
        return Err(Error::Invalid("class count does not fit in i32 labels".into()));
    }
    for &l in &labels {
        out.write_all(&(l as i32).to_le_bytes()).map_err(io)?;
    }
    let mut file = out.into_inner().map_err(|e| Error::io(out_path, e.into_error()))?;
    file.seek(SeekFrom::Start(4)).map_err(io)?;
    let mut header = Vec::with_capacity(25);
    header.extend_from_slice(&(labels.len() as u64).to_le_bytes());
    header.extend_from_slice(&(dim as u64).to_le_bytes());
    header.extend_from_slice(&(classes as u64).to_le_bytes());
    header.push(0);
    file.write_all(&header).map_err(io)?;
    file.flush().map_err(io)
}
