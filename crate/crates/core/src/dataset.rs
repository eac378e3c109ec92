//! Dataset files: a few `#key=value` header lines followed by a CSV table
//! with columns `x1, …, xd, y`.
//!
//! ```text
//! #d=3
//! #n=2
//! #variant=linear
//! #spec={"variant":"linear","d":3,"w_star":[1.0,0.0,0.0],"beta":0.5}
//! x1,x2,x3,y
//! 0.7,-1.2,0.3,1
//! -1.1,0.4,2.0,-1
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::distributions::DataSpec;
use crate::error::{Error, Result};
use crate::net::Batch;

#[derive(Clone, Debug)]
pub struct Dataset {
    pub spec: Option<DataSpec>,
    pub batch: Batch,
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::InvalidConfig { path: path.display().to_string(), reason: reason.into() }
}

pub fn write_dataset(path: &Path, spec: Option<&DataSpec>, batch: &Batch) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "#d={}", batch.d())?;
    writeln!(out, "#n={}", batch.n())?;
    if let Some(spec) = spec {
        writeln!(out, "#variant={}", spec.variant_tag())?;
        writeln!(out, "#spec={}", serde_json::to_string(spec)?)?;
    }
    {
        let mut w = csv::Writer::from_writer(&mut out);
        let mut header: Vec<String> = (1..=batch.d()).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(batch.d() + 1);
        for (x, y) in batch.xs().rows().into_iter().zip(batch.ys()) {
            record.clear();
            record.extend(x.iter().map(|v| v.to_string()));
            record.push(y.to_string());
            w.write_record(&record)?;
        }
        w.flush()?;
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let mut d = None;
    let mut n = None;
    let mut variant = None;
    let mut spec = None;
    let mut body_start = 0;
    for line in text.split_inclusive('\n') {
        let Some(meta) = line.strip_prefix('#') else { break };
        body_start += line.len();
        let meta = meta.trim_end();
        let Some((key, value)) = meta.split_once('=') else {
            return Err(format_err(path, format!("malformed header line `#{meta}`")));
        };
        let parse_count = |v: &str| v.trim().parse::<usize>().map_err(|_| format_err(path, format!("bad {key} `{v}`")));
        match key.trim() {
            "d" => d = Some(parse_count(value)?),
            "n" => n = Some(parse_count(value)?),
            "variant" => variant = Some(value.trim().to_string()),
            "spec" => spec = Some(serde_json::from_str::<DataSpec>(value)?),
            other => return Err(format_err(path, format!("unknown header key `{other}`"))),
        }
    }
    let d = d.ok_or_else(|| format_err(path, "missing `#d=` header"))?;
    if let (Some(v), Some(s)) = (&variant, &spec) {
        if v != s.variant_tag() {
            return Err(format_err(path, format!("variant `{v}` disagrees with spec `{}`", s.variant_tag())));
        }
    }
    if let Some(s) = &spec {
        if s.d() != d {
            return Err(Error::DimensionMismatch { expected: s.d(), got: d });
        }
    }

    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text[body_start..].as_bytes());
    let columns = reader.headers()?.len();
    if columns != d + 1 {
        return Err(Error::DimensionMismatch { expected: d + 1, got: columns });
    }
    let mut values = Vec::new();
    let mut ys = Vec::new();
    for record in reader.records() {
        let record = record?;
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| format_err(path, format!("non-numeric field `{field}`")))?;
            if j < d {
                values.push(v);
            } else {
                ys.push(v);
            }
        }
    }
    let rows = ys.len();
    if let Some(n) = n {
        if n != rows {
            return Err(Error::DimensionMismatch { expected: n, got: rows });
        }
    }
    let xs = Array2::from_shape_vec((rows, d), values).map_err(|e| format_err(path, e.to_string()))?;
    let batch = Batch::new(xs, Array1::from(ys))?;
    batch.require_binary()?;
    Ok(Dataset { spec, batch })
}
