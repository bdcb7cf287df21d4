//! Learning curves and their CSV form.
//!
//! Curve files are deterministic: given the same config and seed they must
//! reproduce byte for byte, so wall-clock timings go to a separate sidecar
//! file rather than into the curve rows.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

pub const CURVE_SCHEMA: &str = "# curve csv v1";
pub const TIMING_SCHEMA: &str = "# timing csv v1";
pub const AGGREGATE_SCHEMA: &str = "# aggregate csv v1";

/// One evaluation point: end of `epoch` within `task` (both 1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub task: usize,
    pub epoch: usize,
    /// Accuracy over the union of test sets of tasks 1..=task, in [0,1].
    pub cumulative_accuracy: f64,
    /// Per-task test accuracy; None for tasks not yet seen.
    pub per_task: Vec<Option<f64>>,
    /// Seconds since the run started. Written to the timing sidecar only.
    pub wall_secs: f64,
}

#[derive(Debug, Clone, Default)]
pub struct LearningCurve {
    pub num_tasks: usize,
    pub rows: Vec<CurveRow>,
}

impl LearningCurve {
    pub fn new(num_tasks: usize) -> LearningCurve {
        LearningCurve { num_tasks, rows: Vec::new() }
    }

    /// Last row recorded for the given task (its end-of-task state).
    pub fn final_row_of_task(&self, task: usize) -> Option<&CurveRow> {
        self.rows.iter().rev().find(|r| r.task == task)
    }

    /// Accuracy of `task` measured at the end of `horizon` (both 1-based).
    pub fn accuracy_at(&self, task: usize, horizon: usize) -> Option<f64> {
        self.final_row_of_task(horizon).and_then(|r| r.per_task.get(task - 1).copied().flatten())
    }

    pub fn final_cumulative(&self) -> Option<f64> {
        self.rows.last().map(|r| r.cumulative_accuracy)
    }

    fn header(num_tasks: usize) -> String {
        let mut h = String::from("task,epoch,cumulative_accuracy");
        for t in 1..=num_tasks {
            h.push_str(&format!(",acc_task_{t}"));
        }
        h
    }

    /// Writes the deterministic curve CSV (schema comment, header, rows).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CURVE_SCHEMA}")?;
        writeln!(w, "{}", Self::header(self.num_tasks))?;
        for row in &self.rows {
            write!(w, "{},{},{}", row.task, row.epoch, fmt_f64(row.cumulative_accuracy))?;
            for t in 0..self.num_tasks {
                match row.per_task.get(t).copied().flatten() {
                    Some(v) => write!(w, ",{}", fmt_f64(v))?,
                    None => write!(w, ",")?,
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Writes the wall-clock sidecar for the same rows.
    pub fn write_timing_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{TIMING_SCHEMA}")?;
        writeln!(w, "task,epoch,wall_secs")?;
        for row in &self.rows {
            writeln!(w, "{},{},{:.3}", row.task, row.epoch, row.wall_secs)?;
        }
        Ok(())
    }

    /// Parses a curve CSV produced by [`write_csv`]. Timing information is
    /// not stored in curve files, so `wall_secs` comes back as zero.
    pub fn read_csv<R: BufRead>(r: R) -> Result<LearningCurve> {
        let mut lines = r.lines();
        let schema = lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::Data("empty curve file".to_string()))?;
        if schema.trim() != CURVE_SCHEMA {
            return Err(Error::Data(format!("unknown curve schema line '{schema}'")));
        }
        let header = lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::Data("curve file missing header".to_string()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 4 || cols[0] != "task" || cols[1] != "epoch" || cols[2] != "cumulative_accuracy" {
            return Err(Error::Data(format!("unexpected curve header '{header}'")));
        }
        let num_tasks = cols.len() - 3;
        let mut curve = LearningCurve::new(num_tasks);
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != num_tasks + 3 {
                return Err(Error::Data(format!(
                    "curve row {} has {} fields, expected {}",
                    lineno + 3,
                    fields.len(),
                    num_tasks + 3
                )));
            }
            let parse_usize = |s: &str| {
                s.parse::<usize>().map_err(|_| Error::Data(format!("bad integer '{s}' in curve row")))
            };
            let parse_f64 = |s: &str| {
                s.parse::<f64>().map_err(|_| Error::Data(format!("bad float '{s}' in curve row")))
            };
            let mut per_task = Vec::with_capacity(num_tasks);
            for &f in &fields[3..] {
                per_task.push(if f.is_empty() { None } else { Some(parse_f64(f)?) });
            }
            curve.rows.push(CurveRow {
                task: parse_usize(fields[0])?,
                epoch: parse_usize(fields[1])?,
                cumulative_accuracy: parse_f64(fields[2])?,
                per_task,
                wall_secs: 0.0,
            });
        }
        Ok(curve)
    }
}

/// Shortest decimal form that round-trips the exact f64 value.
pub fn fmt_f64(v: f64) -> String {
    let mut buf = ryu_like(v);
    if !buf.contains('.') && !buf.contains('e') && !buf.contains("inf") && !buf.contains("NaN") {
        buf.push_str(".0");
    }
    buf
}

fn ryu_like(v: f64) -> String {
    // Rust's Display for f64 is the shortest representation that round-trips.
    format!("{v}")
}

/// Per-(task, epoch) mean and sample standard deviation across seeds.
#[derive(Debug, Clone)]
pub struct Aggregate {
    pub num_tasks: usize,
    /// (task, epoch, mean_cum, std_cum, per-task mean/std pairs)
    pub rows: Vec<AggregateRow>,
}

#[derive(Debug, Clone)]
pub struct AggregateRow {
    pub task: usize,
    pub epoch: usize,
    pub mean_cumulative: f64,
    pub std_cumulative: f64,
    pub per_task: Vec<Option<(f64, f64)>>,
}

/// Combines aligned curves (same task/epoch grid) from multiple seeds.
pub fn aggregate(curves: &[LearningCurve]) -> Result<Aggregate> {
    let first = curves.first().ok_or_else(|| Error::Data("no curves to aggregate".to_string()))?;
    let num_tasks = first.num_tasks;
    for c in curves {
        if c.num_tasks != num_tasks || c.rows.len() != first.rows.len() {
            return Err(Error::Data("curves are not aligned across seeds".to_string()));
        }
    }
    let mut rows = Vec::with_capacity(first.rows.len());
    for i in 0..first.rows.len() {
        let template = &first.rows[i];
        for c in curves {
            if c.rows[i].task != template.task || c.rows[i].epoch != template.epoch {
                return Err(Error::Data("curves disagree on the task/epoch grid".to_string()));
            }
        }
        let cums: Vec<f64> = curves.iter().map(|c| c.rows[i].cumulative_accuracy).collect();
        let (mean_cumulative, std_cumulative) = mean_std(&cums);
        let mut per_task = Vec::with_capacity(num_tasks);
        for t in 0..num_tasks {
            let vals: Vec<f64> =
                curves.iter().filter_map(|c| c.rows[i].per_task.get(t).copied().flatten()).collect();
            if vals.is_empty() {
                per_task.push(None);
            } else if vals.len() != curves.len() {
                return Err(Error::Data("curves disagree on which tasks are evaluated".to_string()));
            } else {
                per_task.push(Some(mean_std(&vals)));
            }
        }
        rows.push(AggregateRow {
            task: template.task,
            epoch: template.epoch,
            mean_cumulative,
            std_cumulative,
            per_task,
        });
    }
    Ok(Aggregate { num_tasks, rows })
}

fn mean_std(vals: &[f64]) -> (f64, f64) {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    if vals.len() < 2 {
        return (mean, 0.0);
    }
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl Aggregate {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{AGGREGATE_SCHEMA}")?;
        let mut header = String::from("task,epoch,mean_cumulative,std_cumulative");
        for t in 1..=self.num_tasks {
            header.push_str(&format!(",mean_acc_task_{t},std_acc_task_{t}"));
        }
        writeln!(w, "{header}")?;
        for row in &self.rows {
            write!(
                w,
                "{},{},{},{}",
                row.task,
                row.epoch,
                fmt_f64(row.mean_cumulative),
                fmt_f64(row.std_cumulative)
            )?;
            for t in 0..self.num_tasks {
                match row.per_task.get(t).copied().flatten() {
                    Some((m, s)) => write!(w, ",{},{}", fmt_f64(m), fmt_f64(s))?,
                    None => write!(w, ",,")?,
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }
}
