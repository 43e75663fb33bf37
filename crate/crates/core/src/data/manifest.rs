use std::collections::BTreeSet;
use std::path::Path;

use crate::data::{pnm, tns, Dataset};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn load_image(path: &Path) -> Result<Tensor<f32>> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(b"TNS1") {
        let map = tns::decode_tns(&bytes)?;
        let t = map
            .get("image")
            .or_else(|| map.values().next())
            .ok_or_else(|| Error::parse("image", format!("{} holds no tensors", path.display())))?;
        if t.ndim() != 3 {
            return Err(Error::parse(
                "image",
                format!("{} has shape {:?}, expected [C, H, W]", path.display(), t.shape()),
            ));
        }
        Ok(t.clone())
    } else {
        pnm::parse_pnm(&bytes)
    }
}

/// Load a CSV manifest with header `path,label`. Paths are relative to the
/// manifest's directory and point at PNM or single-image TNS files.
///
/// Labels are class names. If every label is a non-negative integer, classes
/// are ordered numerically, otherwise lexicographically.
pub fn load_manifest(path: &Path) -> Result<Dataset> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse("manifest", e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::parse("manifest header", e.to_string()))?
        .clone();
    if headers.len() != 2 || &headers[0] != "path" || &headers[1] != "label" {
        return Err(Error::parse("manifest header", "expected \"path,label\""));
    }
    let mut rows = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(format!("manifest row {}", line + 2), e.to_string()))?;
        rows.push((rec[0].to_string(), rec[1].to_string()));
    }
    if rows.is_empty() {
        return Err(Error::parse("manifest", "no rows"));
    }
    let names: BTreeSet<&str> = rows.iter().map(|r| r.1.as_str()).collect();
    let mut names: Vec<String> = names.into_iter().map(String::from).collect();
    if names.iter().all(|n| n.parse::<u64>().is_ok()) {
        names.sort_by_key(|n| n.parse::<u64>().unwrap());
    }
    let mut images = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for (p, l) in &rows {
        let img = load_image(&base.join(p))?;
        if let Some(first) = images.first() {
            let first: &Tensor<f32> = first;
            if first.shape() != img.shape() {
                return Err(Error::dim(format!(
                    "{p} has shape {:?}, expected {:?}",
                    img.shape(),
                    first.shape()
                )));
            }
        }
        images.push(img);
        labels.push(names.iter().position(|n| n == l).unwrap());
    }
    let s = images[0].shape().to_vec();
    let refs: Vec<&Tensor<f32>> = images.iter().collect();
    let stacked = Tensor::cat_batch(&refs)?.reshape(&[rows.len(), s[0], s[1], s[2]])?;
    Dataset::new(stacked, labels, names)
}
