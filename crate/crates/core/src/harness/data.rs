//! The canonical dataset CSV: header `x,y,t,value,split`, split `train` or `test`.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::point::{ObservationSet, SpatioTemporalPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Deserialize, Serialize)]
struct Row {
    x: f64,
    y: f64,
    t: f64,
    value: f64,
    split: Split,
}

const HEADER: [&str; 5] = ["x", "y", "t", "value", "split"];

/// Reads a dataset and returns its `(train, test)` parts in file order.
pub fn load_csv(path: &Path) -> Result<(ObservationSet, ObservationSet)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, path)
}

/// [`load_csv`] over any reader; `path` only labels errors.
pub fn read_csv<R: std::io::Read>(
    reader: R,
    path: &Path,
) -> Result<(ObservationSet, ObservationSet)> {
    let parse = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| parse(1, e.to_string()))?.clone();
    if header.iter().ne(HEADER) {
        return Err(parse(
            1,
            format!("expected header {:?}, found {:?}", HEADER.join(","), header),
        ));
    }
    let mut parts: [(Vec<SpatioTemporalPoint>, Vec<f64>); 2] = Default::default();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let row: Row = rec
            .deserialize(Some(&header))
            .map_err(|e| parse(line, e.to_string()))?;
        if !row.value.is_finite() {
            return Err(parse(line, format!("non-finite value {}", row.value)));
        }
        let p = SpatioTemporalPoint::new(row.x, row.y, row.t)
            .map_err(|e| parse(line, e.to_string()))?;
        let key = (row.x.to_bits(), row.y.to_bits(), row.t.to_bits(), row.split);
        if !seen.insert(key) {
            return Err(parse(
                line,
                format!(
                    "duplicate ({}, {}, {}) in {:?} split",
                    row.x, row.y, row.t, row.split
                ),
            ));
        }
        let part = &mut parts[row.split as usize];
        part.0.push(p);
        part.1.push(row.value);
    }
    let [train, test] = parts;
    Ok((
        ObservationSet::new(train.0, train.1)?,
        ObservationSet::new(test.0, test.1)?,
    ))
}

/// Writes train rows then test rows in the canonical schema.
pub fn write_csv(path: &Path, train: &ObservationSet, test: &ObservationSet) -> Result<()> {
    let io = |e: csv::Error| Error::io(path, e.into());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for (set, split) in [(train, Split::Train), (test, Split::Test)] {
        for (p, &value) in set.points().iter().zip(set.values()) {
            w.serialize(Row {
                x: p.x(),
                y: p.y(),
                t: p.t(),
                value,
                split,
            })
            .map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
