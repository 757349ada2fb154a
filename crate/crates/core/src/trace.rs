//! Run records: the fine-grid simulation trace, per-control-step
//! diagnostics, the run summary, and their file formats.
//!
//! A run writes three files into its output directory:
//! * `trace.csv` — one row per fine step: time, forecast, per-load demand,
//!   total demand, tracking error, battery power (= the error, positive
//!   while charging), and unclamped SOC.
//! * `steps.csv` — one row per control step: the applied switch vector and
//!   the chosen candidate's cost breakdown, candidate count, and wall time.
//! * `summary.json` — aggregate statistics for quick inspection.
//!
//! Floats are printed with Rust's shortest-roundtrip formatting, so reading
//! a file back reproduces the in-memory values bit for bit.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Scalar;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: unexpected header `{got}`")]
    BadHeader { path: String, got: String },
    #[error("{path}: malformed data row {row}: {reason}")]
    MalformedRow {
        path: String,
        row: usize,
        reason: String,
    },
    #[error("trace inconsistent at data row {row}: {what}")]
    Inconsistent { row: usize, what: String },
}

/// Fine-grid record of a whole run, stored column-wise.
#[derive(Clone, Debug, PartialEq)]
pub struct SimTrace<F> {
    pub dt_s: F,
    pub load_ids: Vec<u32>,
    pub time_s: Vec<F>,
    pub forecast_pu: Vec<F>,
    /// One column per load, indexed like `load_ids`.
    pub load_pu: Vec<Vec<F>>,
    pub total_pu: Vec<F>,
    pub e_pu: Vec<F>,
    /// Power absorbed (positive) or delivered by the battery; equals `e_pu`.
    pub battery_power_pu: Vec<F>,
    pub soc: Vec<F>,
}

impl<F: Scalar> SimTrace<F> {
    pub fn new(dt_s: F, load_ids: Vec<u32>) -> Self {
        let n = load_ids.len();
        Self {
            dt_s,
            load_ids,
            time_s: Vec::new(),
            forecast_pu: Vec::new(),
            load_pu: vec![Vec::new(); n],
            total_pu: Vec::new(),
            e_pu: Vec::new(),
            battery_power_pu: Vec::new(),
            soc: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.time_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time_s.is_empty()
    }

    /// Appends one fine step. The caller supplies every column; the
    /// derived-column identities are debug-checked.
    pub fn push_row(&mut self, t: F, forecast: F, loads: &[F], total: F, e: F, soc: F) {
        assert_eq!(loads.len(), self.load_pu.len());
        debug_assert!(e == forecast - total, "error column must be forecast - total");
        self.time_s.push(t);
        self.forecast_pu.push(forecast);
        for (col, &p) in self.load_pu.iter_mut().zip(loads) {
            col.push(p);
        }
        self.total_pu.push(total);
        self.e_pu.push(e);
        self.battery_power_pu.push(e);
        self.soc.push(soc);
    }
}

/// Diagnostics for one receding-horizon control step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepDiag<F> {
    pub step: usize,
    pub t_s: F,
    /// Switch vector applied at this step, one value per load.
    pub applied: Vec<bool>,
    pub candidate_count: usize,
    pub cost: F,
    pub tracking: F,
    pub barriers: [F; 4],
    pub predicted_soc_end: F,
    /// Toggles the chosen schedule performs over its whole horizon.
    pub transitions: usize,
    /// Whether the prediction window ran past the forecast and held its
    /// last value.
    pub padded: bool,
    pub wall_time_s: f64,
}

/// Aggregate run statistics, serialized to `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub control_steps: usize,
    pub fine_rows: usize,
    pub min_soc: f64,
    pub max_soc: f64,
    pub max_abs_e_pu: f64,
    /// Worst `p_norm * |e|` over the trace; below 1 means the battery power
    /// limit held everywhere.
    pub max_norm_power: f64,
    pub power_within_limit: bool,
    /// Control steps whose chosen candidate carried a nonzero penalty term.
    pub barrier_active_steps: BarrierCounts,
    pub candidates: CandidateStats,
    pub timing: TimingStats,
    pub padded_steps: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BarrierCounts {
    pub b1: usize,
    pub b2: usize,
    pub b3: usize,
    pub b4: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidateStats {
    pub min: usize,
    pub max: usize,
    pub total: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub total_wall_s: f64,
    pub median_step_s: f64,
    pub max_step_s: f64,
}

impl RunSummary {
    pub fn compute<F: Scalar>(trace: &SimTrace<F>, steps: &[StepDiag<F>], p_norm: f64) -> Self {
        let to = |v: F| v.to_f64().unwrap_or(f64::NAN);
        let fold_minmax = |col: &[F]| {
            col.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &v| {
                (lo.min(to(v)), hi.max(to(v)))
            })
        };
        let (min_soc, max_soc) = if trace.is_empty() {
            (0.0, 0.0)
        } else {
            fold_minmax(&trace.soc)
        };
        let max_abs_e = trace
            .e_pu
            .iter()
            .fold(0.0f64, |acc, &v| acc.max(to(v).abs()));
        let max_norm_power = p_norm * max_abs_e;

        let mut barrier_active_steps = BarrierCounts::default();
        for s in steps {
            let counts = [
                &mut barrier_active_steps.b1,
                &mut barrier_active_steps.b2,
                &mut barrier_active_steps.b3,
                &mut barrier_active_steps.b4,
            ];
            for (slot, &b) in counts.into_iter().zip(&s.barriers) {
                if b > F::zero() {
                    *slot += 1;
                }
            }
        }

        let candidates = if steps.is_empty() {
            CandidateStats::default()
        } else {
            CandidateStats {
                min: steps.iter().map(|s| s.candidate_count).min().unwrap(),
                max: steps.iter().map(|s| s.candidate_count).max().unwrap(),
                total: steps.iter().map(|s| s.candidate_count as u64).sum(),
            }
        };

        let mut wall: Vec<f64> = steps.iter().map(|s| s.wall_time_s).collect();
        wall.sort_by(f64::total_cmp);
        let timing = TimingStats {
            total_wall_s: wall.iter().sum(),
            median_step_s: if wall.is_empty() {
                0.0
            } else {
                wall[wall.len() / 2]
            },
            max_step_s: wall.last().copied().unwrap_or(0.0),
        };

        RunSummary {
            control_steps: steps.len(),
            fine_rows: trace.len(),
            min_soc,
            max_soc,
            max_abs_e_pu: max_abs_e,
            max_norm_power,
            power_within_limit: max_norm_power < 1.0,
            barrier_active_steps,
            candidates,
            timing,
            padded_steps: steps.iter().filter(|s| s.padded).count(),
        }
    }
}

/// Paths of the files a run writes.
#[derive(Clone, Debug)]
pub struct WrittenFiles {
    pub trace_csv: PathBuf,
    pub steps_csv: PathBuf,
    pub summary_json: PathBuf,
}

fn write_file(path: &Path, content: &str) -> Result<(), TraceError> {
    std::fs::write(path, content).map_err(|source| TraceError::Write {
        path: path.display().to_string(),
        source,
    })
}

pub fn trace_header(load_ids: &[u32]) -> String {
    let mut h = String::from("time_s,forecast_pu");
    for id in load_ids {
        write!(h, ",p_{id}").expect("string write");
    }
    h.push_str(",total_p_pu,e_pu,battery_power_pu,soc");
    h
}

pub fn write_trace_csv<F: Scalar>(trace: &SimTrace<F>, path: &Path) -> Result<(), TraceError> {
    let mut out = String::with_capacity(trace.len() * 64 + 64);
    out.push_str(&trace_header(&trace.load_ids));
    out.push('\n');
    for m in 0..trace.len() {
        write!(out, "{},{}", trace.time_s[m], trace.forecast_pu[m]).expect("string write");
        for col in &trace.load_pu {
            write!(out, ",{}", col[m]).expect("string write");
        }
        writeln!(
            out,
            ",{},{},{},{}",
            trace.total_pu[m], trace.e_pu[m], trace.battery_power_pu[m], trace.soc[m]
        )
        .expect("string write");
    }
    write_file(path, &out)
}

fn steps_header(load_ids: &[u32]) -> String {
    let mut h = String::from("step,t_s");
    for id in load_ids {
        write!(h, ",w_{id}").expect("string write");
    }
    h.push_str(
        ",candidate_count,cost,tracking,b1,b2,b3,b4,predicted_soc_end,transitions,padded,wall_time_s",
    );
    h
}

pub fn write_steps_csv<F: Scalar>(
    steps: &[StepDiag<F>],
    load_ids: &[u32],
    path: &Path,
) -> Result<(), TraceError> {
    let mut out = String::with_capacity(steps.len() * 96 + 128);
    out.push_str(&steps_header(load_ids));
    out.push('\n');
    for s in steps {
        write!(out, "{},{}", s.step, s.t_s).expect("string write");
        for &w in &s.applied {
            write!(out, ",{}", w as u8).expect("string write");
        }
        writeln!(
            out,
            ",{},{},{},{},{},{},{},{},{},{},{}",
            s.candidate_count,
            s.cost,
            s.tracking,
            s.barriers[0],
            s.barriers[1],
            s.barriers[2],
            s.barriers[3],
            s.predicted_soc_end,
            s.transitions,
            s.padded as u8,
            s.wall_time_s
        )
        .expect("string write");
    }
    write_file(path, &out)
}

/// Writes `trace.csv`, `steps.csv`, and `summary.json` into `dir`, creating
/// the directory if needed.
pub fn write_run_outputs<F: Scalar>(
    trace: &SimTrace<F>,
    steps: &[StepDiag<F>],
    summary: &RunSummary,
    dir: &Path,
) -> Result<WrittenFiles, TraceError> {
    std::fs::create_dir_all(dir).map_err(|source| TraceError::Write {
        path: dir.display().to_string(),
        source,
    })?;
    let files = WrittenFiles {
        trace_csv: dir.join("trace.csv"),
        steps_csv: dir.join("steps.csv"),
        summary_json: dir.join("summary.json"),
    };
    write_trace_csv(trace, &files.trace_csv)?;
    write_steps_csv(steps, &trace.load_ids, &files.steps_csv)?;
    let json = serde_json::to_string_pretty(summary).expect("summary serializes");
    write_file(&files.summary_json, &(json + "\n"))?;
    Ok(files)
}

fn read_lines(path: &Path) -> Result<Vec<String>, TraceError> {
    let text = std::fs::read_to_string(path).map_err(|source| TraceError::Read {
        path: path.display().to_string(),
        source,
    })?;
    Ok(text
        .lines()
        .map(|l| l.trim_end_matches('\r').to_string())
        .collect())
}

fn parse_field<T: std::str::FromStr>(
    field: &str,
    path: &Path,
    row: usize,
    what: &str,
) -> Result<T, TraceError>
where
    T::Err: std::fmt::Display,
{
    field.parse::<T>().map_err(|e| TraceError::MalformedRow {
        path: path.display().to_string(),
        row,
        reason: format!("bad {what} `{field}`: {e}"),
    })
}

/// Reads a `trace.csv` back; the sample spacing is inferred from the time
/// column (zero for traces shorter than two rows).
pub fn read_trace_csv(path: &Path) -> Result<SimTrace<f64>, TraceError> {
    let lines = read_lines(path)?;
    let header = lines.first().cloned().unwrap_or_default();
    let cols: Vec<&str> = header.split(',').collect();
    let bad_header = || TraceError::BadHeader {
        path: path.display().to_string(),
        got: header.clone(),
    };
    if cols.len() < 6
        || cols[0] != "time_s"
        || cols[1] != "forecast_pu"
        || cols[cols.len() - 4..] != ["total_p_pu", "e_pu", "battery_power_pu", "soc"]
    {
        return Err(bad_header());
    }
    let load_ids = cols[2..cols.len() - 4]
        .iter()
        .map(|c| c.strip_prefix("p_").and_then(|s| s.parse::<u32>().ok()))
        .collect::<Option<Vec<u32>>>()
        .ok_or_else(bad_header)?;

    let n_loads = load_ids.len();
    let mut trace = SimTrace::new(0.0, load_ids);
    for (i, line) in lines[1..].iter().enumerate() {
        let row = i + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(TraceError::MalformedRow {
                path: path.display().to_string(),
                row,
                reason: format!("expected {} fields, got {}", cols.len(), fields.len()),
            });
        }
        let f = |idx: usize, what: &str| parse_field::<f64>(fields[idx], path, row, what);
        trace.time_s.push(f(0, "time")?);
        trace.forecast_pu.push(f(1, "forecast")?);
        for (l, col) in trace.load_pu.iter_mut().enumerate() {
            col.push(parse_field::<f64>(fields[2 + l], path, row, "load power")?);
        }
        trace.total_pu.push(f(2 + n_loads, "total")?);
        trace.e_pu.push(f(3 + n_loads, "error")?);
        trace.battery_power_pu.push(f(4 + n_loads, "battery power")?);
        trace.soc.push(f(5 + n_loads, "soc")?);
    }
    if trace.len() >= 2 {
        trace.dt_s = trace.time_s[1] - trace.time_s[0];
    }
    Ok(trace)
}

/// Reads a `steps.csv` back.
pub fn read_steps_csv(path: &Path) -> Result<Vec<StepDiag<f64>>, TraceError> {
    let lines = read_lines(path)?;
    let header = lines.first().cloned().unwrap_or_default();
    let cols: Vec<&str> = header.split(',').collect();
    let n_loads = cols.iter().filter(|c| c.starts_with("w_")).count();
    if cols.len() != n_loads + 13 || cols[0] != "step" {
        return Err(TraceError::BadHeader {
            path: path.display().to_string(),
            got: header.clone(),
        });
    }
    let mut steps = Vec::new();
    for (i, line) in lines[1..].iter().enumerate() {
        let row = i + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(TraceError::MalformedRow {
                path: path.display().to_string(),
                row,
                reason: format!("expected {} fields, got {}", cols.len(), fields.len()),
            });
        }
        let f = |idx: usize, what: &str| parse_field::<f64>(fields[idx], path, row, what);
        let applied = (0..n_loads)
            .map(|l| Ok(parse_field::<u8>(fields[2 + l], path, row, "switch")? != 0))
            .collect::<Result<Vec<bool>, TraceError>>()?;
        let b = 2 + n_loads;
        steps.push(StepDiag {
            step: parse_field(fields[0], path, row, "step")?,
            t_s: f(1, "time")?,
            applied,
            candidate_count: parse_field(fields[b], path, row, "candidate count")?,
            cost: f(b + 1, "cost")?,
            tracking: f(b + 2, "tracking")?,
            barriers: [
                f(b + 3, "b1")?,
                f(b + 4, "b2")?,
                f(b + 5, "b3")?,
                f(b + 6, "b4")?,
            ],
            predicted_soc_end: f(b + 7, "predicted soc")?,
            transitions: parse_field(fields[b + 8], path, row, "transitions")?,
            padded: parse_field::<u8>(fields[b + 9], path, row, "padded")? != 0,
            wall_time_s: f(b + 10, "wall time")?,
        });
    }
    Ok(steps)
}

/// Independent column-consistency audit of a trace: per-load powers must sum
/// to the total, the error must be forecast minus total, battery power must
/// equal the error, times must be uniform, and SOC must follow the
/// `soc += s_norm * dt * e` recurrence from `soc_init`. Written against the
/// stored columns only, on purpose — it shares no code with the simulation.
pub fn validate_trace(
    trace: &SimTrace<f64>,
    s_norm: f64,
    soc_init: f64,
    tol: f64,
) -> Result<(), TraceError> {
    let err = |row: usize, what: String| TraceError::Inconsistent { row, what };
    let n = trace.len();
    for col in &trace.load_pu {
        assert_eq!(col.len(), n, "ragged trace columns");
    }
    let dt = trace.dt_s;
    for m in 0..n {
        let sum: f64 = trace.load_pu.iter().map(|c| c[m]).sum();
        if (sum - trace.total_pu[m]).abs() > tol {
            return Err(err(
                m + 1,
                format!("total {} != sum of loads {}", trace.total_pu[m], sum),
            ));
        }
        let e = trace.forecast_pu[m] - trace.total_pu[m];
        if (e - trace.e_pu[m]).abs() > tol {
            return Err(err(
                m + 1,
                format!("error {} != forecast - total {}", trace.e_pu[m], e),
            ));
        }
        if trace.battery_power_pu[m] != trace.e_pu[m] {
            return Err(err(m + 1, "battery power differs from error".into()));
        }
        let expect_soc = if m == 0 {
            soc_init
        } else {
            trace.soc[m - 1] + s_norm * dt * trace.e_pu[m]
        };
        if (trace.soc[m] - expect_soc).abs() > tol {
            return Err(err(
                m + 1,
                format!("soc {} != expected {}", trace.soc[m], expect_soc),
            ));
        }
        if m >= 1 {
            let gap = trace.time_s[m] - trace.time_s[m - 1];
            if (gap - dt).abs() > 1e-9 * dt.max(1.0) {
                return Err(err(m + 1, format!("time gap {gap} != dt {dt}")));
            }
        }
    }
    Ok(())
}
