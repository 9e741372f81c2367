//! Plain CSV serialization of datasets: `feature_0,..,feature_{p-1},label`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};

pub fn write_csv(data: &Dataset, path: &Path) -> Result<()> {
    let p = data.num_features();
    let mut out = String::new();
    for j in 0..p {
        let _ = write!(out, "feature_{j},");
    }
    out.push_str("label\n");
    for i in 0..data.len() {
        for x in data.features(i) {
            // `{:?}` keeps the shortest round-tripping representation.
            let _ = write!(out, "{x:?},");
        }
        let _ = writeln!(out, "{}", data.label(i));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_csv(path: &Path, num_classes: usize) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let bad = |msg: String| Error::Format {
        path: path.to_path_buf(),
        msg,
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.last() != Some(&"label") {
        return Err(bad("last column must be `label`".into()));
    }
    let p = cols.len() - 1;
    for (j, c) in cols[..p].iter().enumerate() {
        if *c != format!("feature_{j}") {
            return Err(bad(format!("unexpected header column `{c}`")));
        }
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (ln, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != p + 1 {
            return Err(bad(format!("line {}: expected {} fields", ln + 2, p + 1)));
        }
        for f in &fields[..p] {
            features.push(
                f.parse::<f64>()
                    .map_err(|e| bad(format!("line {}: {e}", ln + 2)))?,
            );
        }
        labels.push(
            fields[p]
                .parse::<usize>()
                .map_err(|e| bad(format!("line {}: {e}", ln + 2)))?,
        );
    }
    Dataset::new(features, labels, p, num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_dataset;

    #[test]
    fn round_trips_exactly() {
        let ds = synth_dataset(3, 5, 17, 1.5, 4).unwrap();
        let path = std::env::temp_dir().join(format!("airfl-csv-{}.csv", std::process::id()));
        write_csv(&ds, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("feature_0,feature_1,feature_2,feature_3,feature_4,label\n"));
        assert_eq!(read_csv(&path, 3).unwrap(), ds);
        fs::remove_file(&path).ok();
    }
}
