//! Embedding CSV emission and parsing: one row per example with its
//! embedding coordinates, class label, and originating task.

use std::io::{BufRead, Write};

use crate::data::TaskStream;
use crate::error::{Error, Result};
use crate::harness::curve::fmt_f64;
use crate::model::{EmbeddingBatch, NetworkParams};
use crate::nn::matrix::Matrix;
use crate::trainer::encode_batched;

pub const EMBED_SCHEMA: &str = "# embedding csv v1";

/// Writes groups of embeddings as `z_0,…,z_{f-1},label,task`. Floats use the
/// shortest round-tripping form, so reading the file back recovers the exact
/// values.
pub fn write_embeddings<W: Write>(mut w: W, groups: &[(usize, &EmbeddingBatch)]) -> Result<()> {
    let dim = match groups.first() {
        Some((_, b)) => b.dim(),
        None => return Err(Error::Data("nothing to dump: no embedding groups".to_string())),
    };
    for (task, batch) in groups {
        if batch.dim() != dim {
            return Err(Error::Data(format!(
                "task {task} embeddings are {}-dimensional, expected {dim}",
                batch.dim()
            )));
        }
    }
    writeln!(w, "{EMBED_SCHEMA}")?;
    let header: Vec<String> = (0..dim).map(|i| format!("z_{i}")).collect();
    writeln!(w, "{},label,task", header.join(","))?;
    for (task, batch) in groups {
        for i in 0..batch.len() {
            let coords: Vec<String> = batch.points.row(i).iter().map(|&v| fmt_f64(v)).collect();
            writeln!(w, "{},{},{}", coords.join(","), batch.labels[i], task)?;
        }
    }
    Ok(())
}

/// A parsed embedding CSV.
#[derive(Debug, Clone)]
pub struct EmbeddingDump {
    pub dim: usize,
    pub points: Matrix,
    pub labels: Vec<usize>,
    pub tasks: Vec<usize>,
}

impl EmbeddingDump {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// All rows originating from one task, as an embedding batch.
    pub fn batch_for_task(&self, task: usize) -> EmbeddingBatch {
        let idx: Vec<usize> =
            (0..self.len()).filter(|&i| self.tasks[i] == task).collect();
        let points = self.points.select_rows(&idx);
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        EmbeddingBatch::new(points, labels)
    }

    pub fn class_batch(&self, label: usize) -> EmbeddingBatch {
        let idx: Vec<usize> =
            (0..self.len()).filter(|&i| self.labels[i] == label).collect();
        let points = self.points.select_rows(&idx);
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        EmbeddingBatch::new(points, labels)
    }
}

pub fn read_embeddings<R: BufRead>(r: R) -> Result<EmbeddingDump> {
    let bad = |line: usize, detail: String| Error::Parse {
        source_name: "embedding csv".to_string(),
        offset: line as u64,
        detail,
    };
    let mut lines = r.lines().enumerate();
    let (_, schema) = lines
        .next()
        .ok_or_else(|| bad(0, "empty file".to_string()))?;
    let schema = schema?;
    if schema.trim() != EMBED_SCHEMA {
        return Err(bad(1, format!("expected schema line '{EMBED_SCHEMA}', found '{schema}'")));
    }
    let (_, header) = lines.next().ok_or_else(|| bad(2, "missing header".to_string()))?;
    let header = header?;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.len() < 3 || cols[cols.len() - 2] != "label" || cols[cols.len() - 1] != "task" {
        return Err(bad(2, format!("unexpected header '{header}'")));
    }
    let dim = cols.len() - 2;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut tasks = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 2 {
            return Err(bad(i + 1, format!("expected {} fields, found {}", dim + 2, fields.len())));
        }
        let mut coords = Vec::with_capacity(dim);
        for f in &fields[..dim] {
            coords.push(
                f.parse::<f64>()
                    .map_err(|e| bad(i + 1, format!("bad coordinate '{f}': {e}")))?,
            );
        }
        labels.push(
            fields[dim]
                .parse::<usize>()
                .map_err(|e| bad(i + 1, format!("bad label '{}': {e}", fields[dim])))?,
        );
        tasks.push(
            fields[dim + 1]
                .parse::<usize>()
                .map_err(|e| bad(i + 1, format!("bad task '{}': {e}", fields[dim + 1])))?,
        );
        rows.push(coords);
    }
    let points = Matrix::from_rows(&rows);
    Ok(EmbeddingDump { dim, points, labels, tasks })
}

/// Every task's test set embedded by the given (typically final) network.
pub fn embed_test_sets(params: &NetworkParams, stream: &TaskStream) -> Result<Vec<(usize, EmbeddingBatch)>> {
    let mut out = Vec::with_capacity(stream.tasks.len());
    for task in &stream.tasks {
        let z = encode_batched(params, &task.test.inputs)?;
        out.push((task.index, EmbeddingBatch::new(z, task.test.labels.clone())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_batch(offset: f64) -> EmbeddingBatch {
        let points = Matrix::from_rows(&[
            vec![0.1 + offset, -1.5, 2.0 / 3.0],
            vec![0.25 + offset, 3.25, -0.125],
        ]);
        EmbeddingBatch::new(points, vec![0, 1])
    }

    #[test]
    fn roundtrip_preserves_exact_values() {
        let b1 = sample_batch(0.0);
        let b2 = sample_batch(10.0);
        let mut buf = Vec::new();
        write_embeddings(&mut buf, &[(1, &b1), (2, &b2)]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# embedding csv v1\nz_0,z_1,z_2,label,task\n"));

        let dump = read_embeddings(buf.as_slice()).unwrap();
        assert_eq!(dump.dim, 3);
        assert_eq!(dump.len(), 4);
        assert_eq!(dump.points.get(0, 2), 2.0 / 3.0);
        assert_eq!(dump.tasks, vec![1, 1, 2, 2]);

        let t2 = dump.batch_for_task(2);
        assert_eq!(t2.len(), 2);
        assert_eq!(t2.points.get(0, 0), 10.1);
        let c1 = dump.class_batch(1);
        assert_eq!(c1.len(), 2);
        assert_eq!(c1.labels, vec![1, 1]);
    }

    #[test]
    fn rejects_wrong_schema_and_ragged_rows() {
        let err = read_embeddings("# other schema\nz_0,label,task\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));

        let text = "# embedding csv v1\nz_0,z_1,label,task\n0.5,1\n";
        let err = read_embeddings(text.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn rejects_mismatched_dims() {
        let b1 = sample_batch(0.0);
        let narrow = EmbeddingBatch::new(Matrix::from_rows(&[vec![1.0]]), vec![0]);
        let mut buf = Vec::new();
        let err = write_embeddings(&mut buf, &[(1, &b1), (2, &narrow)]).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }
}
