//! Per-evaluation records of one optimizer run and their CSV form.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::objective::ClampCounts;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    DomainGuided,
    StandardBo,
    Turbo,
    Mobo,
    TransformOnly,
    AnnealingOnly,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 6] = [
        OptimizerKind::DomainGuided,
        OptimizerKind::StandardBo,
        OptimizerKind::Turbo,
        OptimizerKind::Mobo,
        OptimizerKind::TransformOnly,
        OptimizerKind::AnnealingOnly,
    ];

    pub const ABLATION: [OptimizerKind; 3] = [
        OptimizerKind::DomainGuided,
        OptimizerKind::TransformOnly,
        OptimizerKind::AnnealingOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::DomainGuided => "domain_guided",
            OptimizerKind::StandardBo => "standard_bo",
            OptimizerKind::Turbo => "turbo",
            OptimizerKind::Mobo => "mobo",
            OptimizerKind::TransformOnly => "transform_only",
            OptimizerKind::AnnealingOnly => "annealing_only",
        }
    }

    /// Whether the kind searches in transformed coordinates.
    pub fn uses_transform(self) -> bool {
        matches!(self, OptimizerKind::DomainGuided | OptimizerKind::TransformOnly)
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    Failed,
}

impl TrialStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TrialStatus::Ok => "ok",
            TrialStatus::Failed => "failed",
        }
    }
}

/// One evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    /// 1-based evaluation count.
    pub iter: usize,
    /// Native point that was evaluated.
    pub point: Vec<f64>,
    pub error: f64,
    pub intensity: f64,
    pub f: f64,
    pub run_min_error: f64,
    pub run_max_intensity: f64,
    pub run_min_f: f64,
    /// Exploration weight used to propose the point; `None` for the initial
    /// design and for acquisitions without one.
    pub beta: Option<f64>,
}

/// Optimizer-specific per-row diagnostics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RowExtras {
    pub trust_region_length: Option<f64>,
    pub front_size: Option<usize>,
    pub front_hypervolume: Option<f64>,
}

/// Running metrics that can be aggregated across trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    RunMinError,
    RunMaxIntensity,
    RunMinF,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::RunMinError, Metric::RunMaxIntensity, Metric::RunMinF];

    pub fn name(self) -> &'static str {
        match self {
            Metric::RunMinError => "run_min_E",
            Metric::RunMaxIntensity => "run_max_I",
            Metric::RunMinF => "run_min_f",
        }
    }

    pub fn of(self, row: &TraceRow) -> f64 {
        match self {
            Metric::RunMinError => row.run_min_error,
            Metric::RunMaxIntensity => row.run_max_intensity,
            Metric::RunMinF => row.run_min_f,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrialTrace {
    pub trial_id: usize,
    pub algorithm: OptimizerKind,
    pub seed: u64,
    pub rows: Vec<TraceRow>,
    pub extras: Vec<RowExtras>,
    pub status: TrialStatus,
    pub failure: Option<String>,
    pub clamp_counts: ClampCounts,
}

impl TrialTrace {
    pub fn new(trial_id: usize, algorithm: OptimizerKind, seed: u64) -> Self {
        TrialTrace {
            trial_id,
            algorithm,
            seed,
            rows: Vec::new(),
            extras: Vec::new(),
            status: TrialStatus::Ok,
            failure: None,
            clamp_counts: ClampCounts::default(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == TrialStatus::Ok
    }

    pub fn column(&self, metric: Metric) -> Vec<f64> {
        self.rows.iter().map(|r| metric.of(r)).collect()
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, |r| r.point.len())
    }

    pub fn csv_header(dim: usize) -> Vec<String> {
        let mut h: Vec<String> = ["iter", "algorithm", "trial", "seed"].iter().map(|s| s.to_string()).collect();
        h.extend((0..dim).map(|i| format!("x{i}")));
        h.extend(
            ["E_um", "I_au", "f", "run_min_E", "run_max_I", "run_min_f", "beta", "status"]
                .iter()
                .map(|s| s.to_string()),
        );
        h
    }

    pub fn write_csv<W: Write>(&self, dim: usize, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::csv_header(dim))?;
        let status = self.status.as_str();
        for r in &self.rows {
            let mut rec: Vec<String> = vec![
                r.iter.to_string(),
                self.algorithm.name().to_string(),
                self.trial_id.to_string(),
                self.seed.to_string(),
            ];
            rec.extend(r.point.iter().map(|v| v.to_string()));
            for v in [r.error, r.intensity, r.f, r.run_min_error, r.run_max_intensity, r.run_min_f] {
                rec.push(v.to_string());
            }
            rec.push(r.beta.map(|b| b.to_string()).unwrap_or_default());
            rec.push(status.to_string());
            w.write_record(rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Row content without the algorithm label, for cross-algorithm comparison.
    pub fn row_fingerprint(&self, row: &TraceRow) -> String {
        let mut s = String::new();
        let _ = write!(s, "{}|{}|{}|", row.iter, self.trial_id, self.seed);
        for v in &row.point {
            let _ = write!(s, "{v},");
        }
        let _ = write!(
            s,
            "|{}|{}|{}|{}|{}|{}|{:?}",
            row.error, row.intensity, row.f, row.run_min_error, row.run_max_intensity, row.run_min_f, row.beta
        );
        s
    }
}

/// Tracks running extrema while rows are appended.
#[derive(Debug, Clone)]
pub(crate) struct Recorder {
    pub trace: TrialTrace,
}

impl Recorder {
    pub fn new(trace: TrialTrace) -> Self {
        Recorder { trace }
    }

    pub fn push(&mut self, point: Vec<f64>, error: f64, intensity: f64, f: f64, beta: Option<f64>, extras: RowExtras) {
        let prev = self.trace.rows.last();
        let run_min_error = prev.map_or(error, |p| p.run_min_error.min(error));
        let run_max_intensity = prev.map_or(intensity, |p| p.run_max_intensity.max(intensity));
        let run_min_f = prev.map_or(f, |p| p.run_min_f.min(f));
        let iter = self.trace.rows.len() + 1;
        self.trace.rows.push(TraceRow {
            iter,
            point,
            error,
            intensity,
            f,
            run_min_error,
            run_max_intensity,
            run_min_f,
            beta,
        });
        self.trace.extras.push(extras);
    }

    pub fn len(&self) -> usize {
        self.trace.rows.len()
    }

    pub fn fail(&mut self, why: String) {
        self.trace.status = TrialStatus::Failed;
        self.trace.failure = Some(why);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn running_columns_are_monotone() {
        let mut r = Recorder::new(TrialTrace::new(0, OptimizerKind::StandardBo, 1));
        for (e, i, f) in [(5.0, 0.0, 0.3), (7.0, 2.0, 0.1), (3.0, 1.0, 0.4)] {
            r.push(vec![0.0], e, i, f, None, RowExtras::default());
        }
        let t = r.trace;
        assert_eq!(t.column(Metric::RunMinError), vec![5.0, 5.0, 3.0]);
        assert_eq!(t.column(Metric::RunMaxIntensity), vec![0.0, 2.0, 2.0]);
        assert_eq!(t.column(Metric::RunMinF), vec![0.3, 0.1, 0.1]);
        assert_eq!(t.rows.iter().map(|r| r.iter).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn csv_header_layout() {
        let h = TrialTrace::csv_header(3).join(",");
        assert_eq!(
            h,
            "iter,algorithm,trial,seed,x0,x1,x2,E_um,I_au,f,run_min_E,run_max_I,run_min_f,beta,status"
        );
    }

    #[test]
    fn csv_rows() {
        let mut r = Recorder::new(TrialTrace::new(2, OptimizerKind::Mobo, 9));
        r.push(vec![0.5, -1.0], 1.5, 0.25, 0.1, None, RowExtras::default());
        r.push(vec![0.0, 2.0], 1.0, 0.5, -0.2, Some(1.5), RowExtras::default());
        let mut buf = Vec::new();
        r.trace.write_csv(2, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "1,mobo,2,9,0.5,-1,1.5,0.25,0.1,1.5,0.25,0.1,,ok");
        assert_eq!(lines[2], "2,mobo,2,9,0,2,1,0.5,-0.2,1,0.5,-0.2,1.5,ok");
    }
}
