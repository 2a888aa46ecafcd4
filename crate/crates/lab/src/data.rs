//! Labeled datasets as CSV: a header row, then `label,x0,x1,…` per point.

use std::path::Path;

use plasticity_core::nn::LabeledDataset;

use crate::error::{LabError, Result};

/// Reads a dataset. The class count is one more than the largest label unless
/// `num_classes` is given.
pub fn read_dataset(path: &Path, num_classes: Option<usize>) -> Result<LabeledDataset<f32>> {
    if !path.is_file() {
        return Err(LabError::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::Reader::from_path(path).map_err(LabError::csv(path))?;
    let dim = reader.headers().map_err(LabError::csv(path))?.len().saturating_sub(1);
    if dim == 0 {
        return Err(LabError::Config(format!("{}: need a label column and at least one feature column", path.display())));
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(LabError::csv(path))?;
        let bad = |what: &str| LabError::Config(format!("{}: row {}: {what}", path.display(), line + 2));
        let mut fields = record.iter();
        let label: u16 = fields.next().unwrap_or("").trim().parse().map_err(|_| bad("label is not a small non-negative integer"))?;
        labels.push(label);
        for field in fields {
            features.push(field.trim().parse::<f32>().map_err(|_| bad("feature is not a number"))?);
        }
    }
    let classes = num_classes.unwrap_or_else(|| labels.iter().max().map_or(2, |&m| (m as usize + 1).max(2)));
    Ok(LabeledDataset::new(dim, classes, features, labels)?)
}

/// Writes a dataset. Values use the shortest representation that reads back
/// to the same `f32`.
pub fn write_dataset(path: &Path, data: &LabeledDataset<f32>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(LabError::csv(path))?;
    let mut header = vec!["label".to_string()];
    header.extend((0..data.dim()).map(|i| format!("x{i}")));
    writer.write_record(&header).map_err(LabError::csv(path))?;
    let mut record = Vec::with_capacity(data.dim() + 1);
    for i in 0..data.len() {
        record.clear();
        record.push(data.label(i).to_string());
        record.extend(data.row(i).iter().map(|x| x.to_string()));
        writer.write_record(&record).map_err(LabError::csv(path))?;
    }
    writer.flush().map_err(LabError::io(path))?;
    Ok(())
}
