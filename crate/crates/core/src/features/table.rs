use std::fs::File;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::SegmentId;
use crate::tensor::{write_tensor, Tensor};

/// One feature row per segment.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub ids: Vec<SegmentId>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureTable {
    pub fn new(ids: Vec<SegmentId>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if ids.len() != rows.len() {
            return Err(Error::contract(format!("{} segment ids for {} feature rows", ids.len(), rows.len())));
        }
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::dim("feature table", "rows differ in length"));
        }
        Ok(Self { ids, rows })
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// Columns `subject,trial,segment,f0,…`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |e: csv::Error| Error::io(path, std::io::Error::other(e.to_string()));
        let mut w = csv::Writer::from_writer(File::create(path).map_err(|e| Error::io(path, e))?);
        let mut header = vec!["subject".to_string(), "trial".into(), "segment".into()];
        header.extend((0..self.dim()).map(|k| format!("f{k}")));
        w.write_record(&header).map_err(io)?;
        for (id, row) in self.ids.iter().zip(&self.rows) {
            let mut rec = vec![id.subject.clone(), id.trial.clone(), id.index.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::Parse { path: path.into(), line, column: 1, msg: e.to_string() })?;
            let bad = |column: usize, msg: String| Error::Parse { path: path.into(), line, column, msg };
            if rec.len() < 3 {
                return Err(bad(1, "expected subject, trial and segment columns".into()));
            }
            let index = rec[2].parse().map_err(|_| bad(3, format!("segment index {:?} is not an integer", &rec[2])))?;
            ids.push(SegmentId { subject: rec[0].to_string(), trial: rec[1].to_string(), index });
            let row = rec
                .iter()
                .enumerate()
                .skip(3)
                .map(|(c, v)| v.parse::<f64>().map_err(|_| bad(c + 1, format!("{v:?} is not a number"))))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Self::new(ids, rows).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
    }

    /// The values as an `[N, d]` tensor blob.
    pub fn write_tensor(&self, path: &Path) -> Result<()> {
        let data = self.rows.iter().flatten().copied().collect();
        write_tensor(path, &Tensor::new(&[self.rows.len(), self.dim()], data)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        let ids = vec![
            SegmentId { subject: "s01".into(), trial: "t01".into(), index: 0 },
            SegmentId { subject: "s01".into(), trial: "t01".into(), index: 1 },
        ];
        let t = FeatureTable::new(ids, vec![vec![0.1, -2.5e-17], vec![1.0 / 3.0, 7.0]]).unwrap();
        t.write_csv(&p).unwrap();
        assert_eq!(FeatureTable::read_csv(&p).unwrap(), t);
        std::fs::write(&p, "subject,trial,segment,f0\na,b,0,x\n").unwrap();
        assert!(matches!(FeatureTable::read_csv(&p), Err(Error::Parse { line: 2, column: 4, .. })));
    }
}
