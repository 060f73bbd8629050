use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::SimulationError;
use crate::impedance::ArmId;
use crate::serde_util;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: f64,
    #[serde(with = "serde_util::vec3")]
    pub x_ref: Vector3<f64>,
    #[serde(with = "serde_util::vec3")]
    pub x: Vector3<f64>,
    #[serde(with = "serde_util::vec3")]
    pub e: Vector3<f64>,
    #[serde(with = "serde_util::vec3")]
    pub e_dot: Vector3<f64>,
    #[serde(with = "serde_util::vec3")]
    pub f_virt: Vector3<f64>,
    #[serde(with = "serde_util::vec3")]
    pub f_env: Vector3<f64>,
    pub q: Vec<f64>,
}

impl TraceRecord {
    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && [self.x_ref, self.x, self.e, self.e_dot, self.f_virt, self.f_env]
                .iter()
                .all(|v| v.iter().all(|c| c.is_finite()))
            && self.q.iter().all(|c| c.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub task_id: String,
    pub arm: ArmId,
    pub dt: f64,
    pub records: Vec<TraceRecord>,
}

const VECTOR_COLUMNS: [&str; 6] = ["x_ref", "x", "e", "edot", "F_virt", "F_env"];

impl Trace {
    pub fn new(task_id: impl Into<String>, arm: ArmId, dt: f64) -> Self {
        Self {
            task_id: task_id.into(),
            arm,
            dt,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dof(&self) -> usize {
        self.records.first().map_or(0, |r| r.q.len())
    }

    pub fn csv_header(dof: usize) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        for name in VECTOR_COLUMNS {
            for axis in ["x", "y", "z"] {
                h.push(format!("{name}_{axis}"));
            }
        }
        h.extend((0..dof).map(|i| format!("q_{i}")));
        h
    }

    /// One row per record. Floats use the shortest representation that
    /// parses back to the same value, so a reloaded trace is bit-identical.
    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(Self::csv_header(self.dof())).expect("in-memory write");
        for r in &self.records {
            let mut row = vec![r.t.to_string()];
            for v in [r.x_ref, r.x, r.e, r.e_dot, r.f_virt, r.f_env] {
                row.extend(v.iter().map(f64::to_string));
            }
            row.extend(r.q.iter().map(f64::to_string));
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
    }

    /// Reads a trace written by [`Trace::to_csv_string`]. Task, arm and `dt`
    /// are not part of the CSV and are supplied by the caller.
    pub fn from_csv_str(
        text: &str,
        origin: &str,
        task_id: impl Into<String>,
        arm: ArmId,
        dt: f64,
    ) -> Result<Self, SimulationError> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| SimulationError::Parse {
                location: format!("{origin}:1"),
                message: e.to_string(),
            })?
            .clone();
        let fixed = 1 + 3 * VECTOR_COLUMNS.len();
        if header.len() < fixed {
            return Err(SimulationError::Parse {
                location: format!("{origin}:1"),
                message: format!("expected at least {fixed} columns, found {}", header.len()),
            });
        }
        let dof = header.len() - fixed;
        let expected = Self::csv_header(dof);
        if header.iter().ne(expected.iter().map(String::as_str)) {
            return Err(SimulationError::Parse {
                location: format!("{origin}:1"),
                message: "unexpected trace header".into(),
            });
        }
        let mut trace = Self::new(task_id, arm, dt);
        for (i, row) in reader.records().enumerate() {
            let location = format!("{origin}:{}", i + 2);
            let row = row.map_err(|e| SimulationError::Parse {
                location: location.clone(),
                message: e.to_string(),
            })?;
            let vals: Vec<f64> = row
                .iter()
                .map(str::parse::<f64>)
                .collect::<Result<_, _>>()
                .map_err(|e| SimulationError::Parse {
                    location,
                    message: e.to_string(),
                })?;
            let v = |k: usize| Vector3::new(vals[1 + 3 * k], vals[2 + 3 * k], vals[3 + 3 * k]);
            trace.records.push(TraceRecord {
                t: vals[0],
                x_ref: v(0),
                x: v(1),
                e: v(2),
                e_dot: v(3),
                f_virt: v(4),
                f_env: v(5),
                q: vals[fixed..].to_vec(),
            });
        }
        Ok(trace)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), SimulationError> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| SimulationError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub mean_abs_e_z: f64,
    pub max_abs_e_z: f64,
    #[serde(rename = "max_abs_F_virt_z")]
    pub max_abs_f_virt_z: f64,
}

pub fn compute_metrics(trace: &Trace) -> Result<TaskMetrics, SimulationError> {
    metrics_over(&trace.records)
}

/// Metrics over the records with `t ≥ t0`.
pub fn compute_metrics_after(trace: &Trace, t0: f64) -> Result<TaskMetrics, SimulationError> {
    let start = trace.records.partition_point(|r| r.t < t0);
    metrics_over(&trace.records[start..])
}

fn metrics_over(records: &[TraceRecord]) -> Result<TaskMetrics, SimulationError> {
    if records.is_empty() {
        return Err(SimulationError::EmptyTrace);
    }
    let sum: f64 = records.iter().map(|r| r.e.z.abs()).sum();
    Ok(TaskMetrics {
        mean_abs_e_z: sum / records.len() as f64,
        max_abs_e_z: records.iter().map(|r| r.e.z.abs()).fold(0.0, f64::max),
        max_abs_f_virt_z: records.iter().map(|r| r.f_virt.z.abs()).fold(0.0, f64::max),
    })
}
