//! Admissible switching trajectories over the control horizon.
//!
//! Switching decisions live on a coarse control grid (one opportunity every
//! control interval) while load dynamics run on a fine grid. A load may turn
//! on only if it has been off for at least its minimum off-time and the
//! minimum on-run still fits inside the horizon; it may turn off only if it
//! has been on for at least its minimum on-time. An off-run cut short by the
//! horizon end is allowed: the receding horizon re-checks dwell against
//! recorded history when later steps are actually applied.

use thiserror::Error;

use crate::loadmodel::LoadSpec;
use crate::num::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum SwitchSetError {
    #[error("horizon must have at least one control step")]
    EmptyHorizon,
    #[error("control interval must be positive and finite, got {got} s")]
    BadCtrlInterval { got: f64 },
    #[error("fine step must be positive and finite, got {got} s")]
    BadFineStep { got: f64 },
    #[error("control interval {ctrl_s} s is not an integer multiple of the fine step {fine_s} s")]
    CtrlNotMultipleOfFine { ctrl_s: f64, fine_s: f64 },
    #[error(
        "load {id}: minimum {which} time {t_s} s is not a positive integer multiple \
         of the control interval {ctrl_s} s"
    )]
    DwellNotMultiple {
        id: u32,
        which: &'static str,
        t_s: f64,
        ctrl_s: f64,
    },
    #[error(
        "load {id}: minimum {which} time {t_s} s exceeds the whole horizon of \
         {horizon_s} s, so the load could never be switched on"
    )]
    DwellExceedsHorizon {
        id: u32,
        which: &'static str,
        t_s: f64,
        horizon_s: f64,
    },
}

/// Returns `value / base` when it is a positive integer within a small
/// relative tolerance, to absorb decimal representation noise in configs.
fn as_positive_multiple<F: Scalar>(value: F, base: F) -> Option<u64> {
    if !(base > F::zero()) || !(value > F::zero()) {
        return None;
    }
    let k = (value / base).round();
    let reconstructed = k * base;
    let tol = crate::num::lit::<F>(1e-9) * value.max(base).max(F::one());
    if k >= F::one() && (reconstructed - value).abs() <= tol {
        k.to_u64()
    } else {
        None
    }
}

/// The two time grids of the controller: `n_steps` switching opportunities
/// spaced `ctrl_interval_s` apart, each expanded to `steps_per_ctrl` fine
/// simulation steps of `fine_dt_s`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HorizonConfig<F> {
    n_steps: usize,
    ctrl_interval_s: F,
    fine_dt_s: F,
    steps_per_ctrl: usize,
}

impl<F: Scalar> HorizonConfig<F> {
    pub fn new(n_steps: usize, ctrl_interval_s: F, fine_dt_s: F) -> Result<Self, SwitchSetError> {
        if n_steps == 0 {
            return Err(SwitchSetError::EmptyHorizon);
        }
        if !(ctrl_interval_s > F::zero()) || !ctrl_interval_s.is_finite() {
            return Err(SwitchSetError::BadCtrlInterval {
                got: ctrl_interval_s.to_f64().unwrap_or(f64::NAN),
            });
        }
        if !(fine_dt_s > F::zero()) || !fine_dt_s.is_finite() {
            return Err(SwitchSetError::BadFineStep {
                got: fine_dt_s.to_f64().unwrap_or(f64::NAN),
            });
        }
        let steps_per_ctrl = as_positive_multiple(ctrl_interval_s, fine_dt_s).ok_or(
            SwitchSetError::CtrlNotMultipleOfFine {
                ctrl_s: ctrl_interval_s.to_f64().unwrap_or(f64::NAN),
                fine_s: fine_dt_s.to_f64().unwrap_or(f64::NAN),
            },
        )? as usize;
        Ok(Self {
            n_steps,
            ctrl_interval_s,
            fine_dt_s,
            steps_per_ctrl,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn ctrl_interval_s(&self) -> F {
        self.ctrl_interval_s
    }

    pub fn fine_dt_s(&self) -> F {
        self.fine_dt_s
    }

    pub fn steps_per_ctrl(&self) -> usize {
        self.steps_per_ctrl
    }

    /// Fine steps covered by the whole horizon.
    pub fn fine_len(&self) -> usize {
        self.n_steps * self.steps_per_ctrl
    }

    pub fn horizon_s(&self) -> F {
        crate::num::lit::<F>(self.n_steps as f64) * self.ctrl_interval_s
    }
}

/// Switching history of one load on the control grid, with transition indices
/// relative to the start of the upcoming horizon (step 0 is the decision
/// about to be made; past transitions are negative). `None` means the load
/// has never switched, which leaves the first transition unrestricted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LoadSwitchState {
    pub load_id: u32,
    pub active: bool,
    pub last_on_idx: Option<i64>,
    pub last_off_idx: Option<i64>,
    pub n_on_min: usize,
    pub n_off_min: usize,
}

impl LoadSwitchState {
    /// History for a load that starts switched off and has never toggled,
    /// with dwell times converted to whole control steps.
    pub fn initial<F: Scalar>(
        spec: &LoadSpec<F>,
        horizon: &HorizonConfig<F>,
    ) -> Result<Self, SwitchSetError> {
        let mut steps = [0usize; 2];
        for (slot, (which, t)) in [("on", spec.t_on_min_s), ("off", spec.t_off_min_s)]
            .into_iter()
            .enumerate()
        {
            let n = as_positive_multiple(t, horizon.ctrl_interval_s()).ok_or(
                SwitchSetError::DwellNotMultiple {
                    id: spec.id,
                    which,
                    t_s: t.to_f64().unwrap_or(f64::NAN),
                    ctrl_s: horizon.ctrl_interval_s().to_f64().unwrap_or(f64::NAN),
                },
            )? as usize;
            // A minimum on-run longer than the whole horizon can never pass
            // the turn-on fit rule, so the load could never be switched on.
            // Off-dwells need no such bound: they are enforced across
            // horizons through the carried history.
            if which == "on" && n > horizon.n_steps() {
                return Err(SwitchSetError::DwellExceedsHorizon {
                    id: spec.id,
                    which,
                    t_s: t.to_f64().unwrap_or(f64::NAN),
                    horizon_s: horizon.horizon_s().to_f64().unwrap_or(f64::NAN),
                });
            }
            steps[slot] = n;
        }
        Ok(Self {
            load_id: spec.id,
            active: false,
            last_on_idx: None,
            last_off_idx: None,
            n_on_min: steps[0],
            n_off_min: steps[1],
        })
    }

    /// Whether switching on at relative control step `j` is allowed: the
    /// minimum off-time since the last turn-off has elapsed and the minimum
    /// on-run still fits before the horizon end (`n_steps`).
    pub fn can_turn_on(&self, j: usize, n_steps: usize) -> bool {
        let off_elapsed = self
            .last_off_idx
            .map_or(true, |last| j as i64 - last >= self.n_off_min as i64);
        off_elapsed && j + self.n_on_min <= n_steps
    }

    /// Whether switching off at relative control step `j` is allowed: the
    /// minimum on-time since the last turn-on has elapsed. Off-runs may be
    /// truncated by the horizon end, so there is no fit condition here.
    pub fn can_turn_off(&self, j: usize) -> bool {
        self.last_on_idx
            .map_or(true, |last| j as i64 - last >= self.n_on_min as i64)
    }

    /// Records the applied decision for step 0 and slides the origin one
    /// control step, so the state is expressed relative to the next horizon.
    pub fn apply_and_slide(&mut self, w: bool) {
        if w != self.active {
            self.active = w;
            if w {
                self.last_on_idx = Some(0);
            } else {
                self.last_off_idx = Some(0);
            }
        }
        self.last_on_idx = self.last_on_idx.map(|v| v - 1);
        self.last_off_idx = self.last_off_idx.map(|v| v - 1);
    }
}

/// All admissible length-`n_steps` binary trajectories reachable from
/// `state`, in lexicographic order (off before on at every branch). Holding
/// the current value is always admissible, so the result is never empty.
pub fn admissible_trajectories(state: &LoadSwitchState, n_steps: usize) -> Vec<Vec<bool>> {
    fn rec(
        st: LoadSwitchState,
        j: usize,
        n_steps: usize,
        buf: &mut Vec<bool>,
        out: &mut Vec<Vec<bool>>,
    ) {
        if j == n_steps {
            out.push(buf.clone());
            return;
        }
        for value in [false, true] {
            let next = if value == st.active {
                Some(st)
            } else if value {
                st.can_turn_on(j, n_steps).then(|| LoadSwitchState {
                    active: true,
                    last_on_idx: Some(j as i64),
                    ..st
                })
            } else {
                st.can_turn_off(j).then(|| LoadSwitchState {
                    active: false,
                    last_off_idx: Some(j as i64),
                    ..st
                })
            };
            if let Some(next) = next {
                buf.push(value);
                rec(next, j + 1, n_steps, buf, out);
                buf.pop();
            }
        }
    }

    let mut out = Vec::new();
    let mut buf = Vec::with_capacity(n_steps);
    rec(*state, 0, n_steps, &mut buf, &mut out);
    debug_assert!(!out.is_empty(), "holding the current value is always admissible");
    out
}

/// One candidate: a binary matrix with a row per load and a column per
/// control step of the horizon.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SwitchSchedule {
    rows: Vec<Vec<bool>>,
}

impl SwitchSchedule {
    pub fn from_rows(rows: Vec<Vec<bool>>) -> Self {
        if let Some(first) = rows.first() {
            let n = first.len();
            assert!(rows.iter().all(|r| r.len() == n), "ragged schedule rows");
        }
        Self { rows }
    }

    pub fn n_loads(&self) -> usize {
        self.rows.len()
    }

    pub fn n_steps(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn rows(&self) -> &[Vec<bool>] {
        &self.rows
    }

    pub fn row(&self, load: usize) -> &[bool] {
        &self.rows[load]
    }

    /// The decisions actually applied by a receding-horizon step.
    pub fn first_column(&self) -> Vec<bool> {
        self.rows.iter().map(|r| r[0]).collect()
    }

    /// Number of on/off toggles the schedule performs, counting a first
    /// column that differs from the load's current value as a toggle.
    pub fn num_transitions(&self, current: &[bool]) -> usize {
        assert_eq!(current.len(), self.rows.len());
        self.rows
            .iter()
            .zip(current)
            .map(|(row, &cur)| {
                let mut prev = cur;
                row.iter()
                    .filter(|&&w| {
                        let toggled = w != prev;
                        prev = w;
                        toggled
                    })
                    .count()
            })
            .sum()
    }
}

/// The cartesian product of per-load admissible trajectory lists, indexable
/// in a fixed order: the first load's trajectory varies slowest, so ascending
/// index order is lexicographic order of the row-major bit matrix.
#[derive(Clone, Debug)]
pub struct CombinationSet {
    per_load: Vec<Vec<Vec<bool>>>,
}

impl CombinationSet {
    pub fn new(per_load: Vec<Vec<Vec<bool>>>) -> Self {
        assert!(
            per_load.iter().all(|l| !l.is_empty()),
            "every load needs at least one admissible trajectory"
        );
        Self { per_load }
    }

    /// Builds the admissible set for all loads from their current histories.
    pub fn enumerate(states: &[LoadSwitchState], n_steps: usize) -> Self {
        Self::new(
            states
                .iter()
                .map(|s| admissible_trajectories(s, n_steps))
                .collect(),
        )
    }

    pub fn n_loads(&self) -> usize {
        self.per_load.len()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.per_load.iter().map(Vec::len).collect()
    }

    pub fn len(&self) -> usize {
        self.per_load
            .iter()
            .map(Vec::len)
            .try_fold(1usize, usize::checked_mul)
            .expect("candidate count overflows usize")
    }

    pub fn is_empty(&self) -> bool {
        self.per_load.is_empty()
    }

    /// Decodes a candidate index into one trajectory choice per load.
    pub fn digits_into(&self, mut index: usize, out: &mut [usize]) {
        assert_eq!(out.len(), self.per_load.len());
        for (slot, list) in out.iter_mut().zip(&self.per_load).rev() {
            *slot = index % list.len();
            index /= list.len();
        }
        assert_eq!(index, 0, "candidate index out of range");
    }

    pub fn trajectory(&self, load: usize, digit: usize) -> &[bool] {
        &self.per_load[load][digit]
    }

    pub fn schedule(&self, index: usize) -> SwitchSchedule {
        let mut digits = vec![0usize; self.per_load.len()];
        self.digits_into(index, &mut digits);
        SwitchSchedule::from_rows(
            digits
                .iter()
                .zip(&self.per_load)
                .map(|(&d, list)| list[d].clone())
                .collect(),
        )
    }

    pub fn schedules(&self) -> impl Iterator<Item = SwitchSchedule> + '_ {
        (0..self.len()).map(|i| self.schedule(i))
    }
}

/// Upper bound `(2^n)^(N-1)` on the candidate count, or `None` when it
/// exceeds `u128`.
pub fn cardinality_bound(n_loads: u32, n_steps: u32) -> Option<u128> {
    let exponent = n_loads.checked_mul(n_steps.checked_sub(1)?)?;
    if exponent >= 128 {
        None
    } else {
        Some(1u128 << exponent)
    }
}

/// Whether an enumerated candidate count stays strictly below the trivial
/// `(2^n)^(N-1)` growth. Degenerate horizons (N = 1) report `false`.
pub fn cardinality_bound_check(count: u128, n_loads: u32, n_steps: u32) -> bool {
    match cardinality_bound(n_loads, n_steps) {
        Some(bound) => count < bound,
        // Bound exceeds u128, so any representable count is below it.
        None => true,
    }
}

/// A dwell-time violation found by [`check_applied_dwell`].
#[derive(Debug, Error, PartialEq, Eq)]
#[error(
    "load index {load}: {} run of {run_len} control steps starting at step {start} \
     is shorter than the minimum {required}",
    if *.value { "on" } else { "off" }
)]
pub struct DwellViolation {
    pub load: usize,
    pub start: usize,
    pub value: bool,
    pub run_len: usize,
    pub required: usize,
}

/// Post-hoc audit of the switch signals actually applied over a whole run.
///
/// `applied_rows[i][k]` is load `i`'s value at control step `k`; `dwell[i]`
/// is its `(min_on, min_off)` in control steps. Loads start switched off with
/// unbounded prior history, so a leading off-run is unconstrained, as is the
/// final run of each load (truncated by the end of the run). Every other
/// maximal run must meet its minimum length. This checker is run-length
/// based, deliberately independent of the trajectory enumeration logic.
pub fn check_applied_dwell(
    applied_rows: &[Vec<bool>],
    dwell: &[(usize, usize)],
) -> Result<(), DwellViolation> {
    assert_eq!(applied_rows.len(), dwell.len());
    for (load, (row, &(min_on, min_off))) in applied_rows.iter().zip(dwell).enumerate() {
        let mut start = 0usize;
        let mut first_run = true;
        while start < row.len() {
            let value = row[start];
            let mut end = start + 1;
            while end < row.len() && row[end] == value {
                end += 1;
            }
            let truncated = end == row.len();
            let leading_off = first_run && !value;
            let required = if value { min_on } else { min_off };
            if !truncated && !leading_off && end - start < required {
                return Err(DwellViolation {
                    load,
                    start,
                    value,
                    run_len: end - start,
                    required,
                });
            }
            first_run = false;
            start = end;
        }
    }
    Ok(())
}
