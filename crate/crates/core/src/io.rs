//! Dataset (JSON lines) and model checkpoint (JSON) files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{Dataset, LabeledSample, Split};
use crate::model::ModelState;

/// Header line of a dataset file, followed by one sample per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DatasetHeader {
    l: usize,
    order_parameter: Vec<(f64, f64)>,
}

pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &DatasetHeader { l: ds.l, order_parameter: ds.order_parameter.clone() })?;
    writeln!(w)?;
    for s in ds.train.iter().chain(&ds.test) {
        serde_json::to_writer(&mut w, s)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header: DatasetHeader = match lines.next() {
        Some(line) => serde_json::from_str(&line?)?,
        None => return Err(Error::Format(format!("{} is empty", path.display()))),
    };
    let mut ds = Dataset { l: header.l, train: Vec::new(), test: Vec::new(), order_parameter: header.order_parameter };
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: LabeledSample = serde_json::from_str(&line)?;
        match s.split {
            Split::Train => ds.train.push(s),
            Split::Test => ds.test.push(s),
        }
    }
    Ok(ds)
}

pub fn write_checkpoint(path: &Path, model: &ModelState) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, model)?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<ModelState> {
    let model: ModelState = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    model.config.validate()?;
    let m = model.config.param_count();
    if model.theta.len() != m {
        return Err(Error::ShapeMismatch { expected: m, actual: model.theta.len() });
    }
    if !model.is_finite() {
        return Err(Error::Format("checkpoint has non-finite parameters".into()));
    }
    Ok(model)
}
