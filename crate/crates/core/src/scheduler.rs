//! Receding-horizon optimization: evaluate every admissible switching
//! candidate against the forecast over the prediction window, apply the best
//! candidate's first control column, slide forward one control step, repeat.
//!
//! Candidate evaluation simulates the load transients on the fine grid, so
//! the cost sees realistic battery power between switching instants; the
//! tracking term itself samples the error at the control instants inside the
//! window, while the penalty terms watch every fine sample. Evaluations are
//! pure functions of the step snapshot, which makes them embarrassingly
//! parallel; the reduction that picks the winner is sequential and wholly
//! deterministic, so worker count never changes a result.
//!
//! Ties in cost are broken toward fewer switching transitions, then toward
//! the lexicographically smallest schedule (= smallest candidate index).
//! This keeps runs reproducible and avoids gratuitous toggling when several
//! schedules are equally good — e.g. a switch in the final window column
//! that no tracking sample can see yet.

use std::time::Instant;

use thiserror::Error;

use crate::battery::{barrier_terms, BatterySpec};
use crate::forecast::ForecastSeries;
use crate::loadmodel::{DiscreteLoadModel, LoadState};
use crate::num::{lit, Scalar};
use crate::switchset::{
    CombinationSet, HorizonConfig, LoadSwitchState, SwitchSchedule, SwitchSetError,
};
use crate::trace::{SimTrace, StepDiag};

#[derive(Debug, Error)]
pub enum SchedulerError {
    #[error("no loads to schedule")]
    NoLoads,
    #[error("load {id}: {source}")]
    Dwell { id: u32, source: SwitchSetError },
}

/// Per-sample tracking error: forecast minus total controlled demand.
pub fn tracking_error<F: Scalar>(forecast: &[F], total_power: &[F]) -> Vec<F> {
    assert_eq!(forecast.len(), total_power.len());
    forecast
        .iter()
        .zip(total_power)
        .map(|(&p, &d)| p - d)
        .collect()
}

/// A candidate's cost split into its ingredients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostBreakdown<F> {
    pub total: F,
    pub tracking: F,
    pub barriers: [F; 4],
}

/// Sum of squared tracking-error samples plus the battery penalty terms.
/// `tracking_e` holds the samples the tracking term scores; `e_window` and
/// `soc_window` cover the whole prediction window for the penalties.
pub fn cost<F: Scalar>(
    tracking_e: &[F],
    e_window: &[F],
    soc_window: &[F],
    spec: &BatterySpec<F>,
) -> Result<CostBreakdown<F>, crate::battery::BatteryError> {
    let tracking = tracking_e.iter().map(|&e| e * e).sum::<F>();
    let barriers = barrier_terms(spec, e_window, soc_window)?;
    Ok(CostBreakdown {
        total: tracking + barriers.iter().copied().sum::<F>(),
        tracking,
        barriers,
    })
}

/// Everything a single optimization step reads: the discretized loads with
/// their live fine-grid states and current switch values, the battery and
/// its SOC, and the forecast over the prediction window. `forecast_window`
/// starts one fine step ahead of now and spans `horizon.fine_len()` samples.
#[derive(Clone, Copy)]
pub struct StepContext<'a, F> {
    pub models: &'a [DiscreteLoadModel<F>],
    pub load_states: &'a [LoadState<F>],
    pub current_active: &'a [bool],
    pub soc: F,
    pub battery: &'a BatterySpec<F>,
    pub horizon: &'a HorizonConfig<F>,
    pub forecast_window: &'a [F],
}

/// The result of scoring one candidate schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateEvaluation<F> {
    pub index: usize,
    pub cost: F,
    pub tracking: F,
    pub barriers: [F; 4],
    pub predicted_soc_end: F,
    pub transitions: usize,
    pub schedule: SwitchSchedule,
}

/// Reusable per-worker buffers so candidate evaluation allocates nothing.
struct Scratch<F> {
    digits: Vec<usize>,
    w: Vec<bool>,
    states: Vec<LoadState<F>>,
    e: Vec<F>,
    soc: Vec<F>,
}

impl<F: Scalar> Scratch<F> {
    fn new(ctx: &StepContext<'_, F>) -> Self {
        let n = ctx.models.len();
        let len = ctx.horizon.fine_len();
        Scratch {
            digits: vec![0; n],
            w: vec![false; n],
            states: ctx.load_states.to_vec(),
            e: vec![F::zero(); len],
            soc: vec![F::zero(); len],
        }
    }
}

#[derive(Clone, Copy)]
struct EvalNumbers<F> {
    cost: F,
    tracking: F,
    barriers: [F; 4],
    soc_end: F,
    transitions: usize,
}

/// Simulates candidate `index` over the prediction window and scores it.
/// The fine-grid arithmetic here is kept step-for-step identical to the
/// loop that later realizes the applied column, so a candidate's first
/// control interval predicts the realized trace exactly.
fn evaluate_into<F: Scalar>(
    ctx: &StepContext<'_, F>,
    set: &CombinationSet,
    index: usize,
    sc: &mut Scratch<F>,
) -> EvalNumbers<F> {
    let spc = ctx.horizon.steps_per_ctrl();
    let n_ctrl = ctx.horizon.n_steps();
    let dt = ctx.horizon.fine_dt_s();
    debug_assert_eq!(ctx.forecast_window.len(), ctx.horizon.fine_len());

    set.digits_into(index, &mut sc.digits);
    sc.states.copy_from_slice(ctx.load_states);
    let mut soc = ctx.soc;
    let mut m = 0usize;
    for c in 0..n_ctrl {
        for (slot, (l, &d)) in sc.w.iter_mut().zip(sc.digits.iter().enumerate()) {
            *slot = set.trajectory(l, d)[c];
        }
        for _ in 0..spc {
            let mut total = F::zero();
            for ((model, state), &w) in ctx.models.iter().zip(&mut sc.states).zip(&sc.w) {
                model.step(state, w);
                total = total + model.power(state);
            }
            let e = ctx.forecast_window[m] - total;
            soc = ctx.battery.soc_step(soc, e, dt);
            sc.e[m] = e;
            sc.soc[m] = soc;
            m += 1;
        }
    }

    let mut tracking = F::zero();
    for c in 1..n_ctrl {
        let e = sc.e[c * spc - 1];
        tracking = tracking + e * e;
    }
    let barriers =
        barrier_terms(ctx.battery, &sc.e, &sc.soc).expect("window buffers share one length");

    let mut transitions = 0usize;
    for (l, &cur) in ctx.current_active.iter().enumerate() {
        let mut prev = cur;
        for &w in set.trajectory(l, sc.digits[l]) {
            if w != prev {
                transitions += 1;
                prev = w;
            }
        }
    }

    EvalNumbers {
        cost: tracking + barriers.iter().copied().sum::<F>(),
        tracking,
        barriers,
        soc_end: soc,
        transitions,
    }
}

/// Scores one candidate and returns the full evaluation record.
pub fn evaluate_candidate<F: Scalar>(
    ctx: &StepContext<'_, F>,
    set: &CombinationSet,
    index: usize,
) -> CandidateEvaluation<F> {
    let mut sc = Scratch::new(ctx);
    let ev = evaluate_into(ctx, set, index, &mut sc);
    CandidateEvaluation {
        index,
        cost: ev.cost,
        tracking: ev.tracking,
        barriers: ev.barriers,
        predicted_soc_end: ev.soc_end,
        transitions: ev.transitions,
        schedule: set.schedule(index),
    }
}

/// Evaluates the whole candidate set, possibly on several worker threads,
/// and picks the winner deterministically.
///
/// The set is statically chunked; each worker fills a disjoint slice of the
/// `(cost, transitions)` table. The reduction then scans the table in index
/// order: exact minimum cost first, then among candidates within a 1e-12
/// relative cost tolerance the fewest transitions, then the smallest index.
/// The outcome is bit-identical for any worker count.
pub fn optimize_step<F: Scalar>(
    ctx: &StepContext<'_, F>,
    set: &CombinationSet,
    workers: usize,
) -> CandidateEvaluation<F> {
    let n_cand = set.len();
    assert!(n_cand > 0, "candidate set is never empty: holding is admissible");
    let mut table: Vec<(F, usize)> = vec![(F::zero(), 0); n_cand];
    let workers = workers.clamp(1, n_cand);

    if workers == 1 {
        let mut sc = Scratch::new(ctx);
        for (i, slot) in table.iter_mut().enumerate() {
            let ev = evaluate_into(ctx, set, i, &mut sc);
            *slot = (ev.cost, ev.transitions);
        }
    } else {
        let chunk = (n_cand + workers - 1) / workers;
        std::thread::scope(|scope| {
            for (ci, slice) in table.chunks_mut(chunk).enumerate() {
                let base = ci * chunk;
                scope.spawn(move || {
                    let mut sc = Scratch::new(ctx);
                    for (i, slot) in slice.iter_mut().enumerate() {
                        let ev = evaluate_into(ctx, set, base + i, &mut sc);
                        *slot = (ev.cost, ev.transitions);
                    }
                });
            }
        });
    }

    let min_cost = table
        .iter()
        .map(|&(c, _)| c)
        .fold(F::infinity(), |a, b| a.min(b));
    let threshold = min_cost + min_cost * lit::<F>(1e-12);
    let mut best: Option<(usize, usize)> = None;
    for (i, &(c, tr)) in table.iter().enumerate() {
        if c <= threshold && best.map_or(true, |(bt, _)| tr < bt) {
            best = Some((tr, i));
        }
    }
    let (_, winner) = best.expect("a finite minimum always exists");
    evaluate_candidate(ctx, set, winner)
}

/// A full run: the fine-grid trace plus one diagnostic record per control
/// step.
#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleSolution<F> {
    pub trace: SimTrace<F>,
    pub steps: Vec<StepDiag<F>>,
}

impl<F: Scalar> ScheduleSolution<F> {
    /// The applied switch signals transposed per load, for post-hoc audits.
    pub fn applied_rows(&self) -> Vec<Vec<bool>> {
        let n_loads = self.trace.load_ids.len();
        (0..n_loads)
            .map(|l| self.steps.iter().map(|s| s.applied[l]).collect())
            .collect()
    }
}

/// Runs the closed loop over as many whole control steps as the forecast
/// covers. Each step enumerates the admissible candidates from the live
/// dwell histories, optimizes, applies the winning first column for one
/// control interval on the fine grid, and slides the histories forward.
/// Prediction windows that run past the end of the forecast hold its last
/// value and are flagged in the diagnostics.
pub fn receding_horizon_run<F: Scalar>(
    models: &[DiscreteLoadModel<F>],
    horizon: &HorizonConfig<F>,
    battery: &BatterySpec<F>,
    soc_init: F,
    forecast: &ForecastSeries<F>,
    workers: usize,
) -> Result<ScheduleSolution<F>, SchedulerError> {
    if models.is_empty() {
        return Err(SchedulerError::NoLoads);
    }
    let spc = horizon.steps_per_ctrl();
    let n_ctrl = horizon.n_steps();
    let dt = horizon.fine_dt_s();

    let mut switch_states = Vec::with_capacity(models.len());
    for model in models {
        switch_states.push(LoadSwitchState::initial(model.spec(), horizon).map_err(
            |source| SchedulerError::Dwell {
                id: model.spec().id,
                source,
            },
        )?);
    }

    let load_ids: Vec<u32> = models.iter().map(|m| m.spec().id).collect();
    let mut trace = SimTrace::new(dt, load_ids);
    let mut steps = Vec::new();
    if forecast.is_empty() {
        return Ok(ScheduleSolution { trace, steps });
    }

    let mut load_states: Vec<LoadState<F>> = models.iter().map(|m| m.initial_state()).collect();
    let mut powers = vec![F::zero(); models.len()];
    let mut soc = soc_init;

    // Row 0 is the initial condition: loads at rest, SOC as configured, the
    // whole forecast still uncovered.
    {
        let mut total = F::zero();
        for ((model, state), p) in models.iter().zip(&load_states).zip(&mut powers) {
            *p = model.power(state);
            total = total + *p;
        }
        let p0 = forecast.values()[0];
        trace.push_row(F::zero(), p0, &powers, total, p0 - total, soc);
    }

    let k_total = forecast.len() / spc;
    let mut window = vec![F::zero(); horizon.fine_len()];
    for k in 0..k_total {
        let started = Instant::now();
        let f0 = k * spc;
        let mut padded = false;
        for (i, slot) in window.iter_mut().enumerate() {
            let (v, pad) = forecast.sample_padded(f0 + 1 + i);
            *slot = v;
            padded |= pad;
        }

        let current_active: Vec<bool> = switch_states.iter().map(|s| s.active).collect();
        let set = CombinationSet::enumerate(&switch_states, n_ctrl);
        let ctx = StepContext {
            models,
            load_states: &load_states,
            current_active: &current_active,
            soc,
            battery,
            horizon,
            forecast_window: &window,
        };
        let eval = optimize_step(&ctx, &set, workers);
        let applied = eval.schedule.first_column();

        for s in 1..=spc {
            let m = f0 + s;
            let mut total = F::zero();
            for (((model, state), p), &w) in
                models.iter().zip(&mut load_states).zip(&mut powers).zip(&applied)
            {
                model.step(state, w);
                *p = model.power(state);
                total = total + *p;
            }
            let (pv, _) = forecast.sample_padded(m);
            let e = pv - total;
            soc = battery.soc_step(soc, e, dt);
            trace.push_row(lit::<F>(m as f64) * dt, pv, &powers, total, e, soc);
        }
        for (st, &w) in switch_states.iter_mut().zip(&applied) {
            st.apply_and_slide(w);
        }

        steps.push(StepDiag {
            step: k,
            t_s: lit::<F>(f0 as f64) * dt,
            applied,
            candidate_count: set.len(),
            cost: eval.cost,
            tracking: eval.tracking,
            barriers: eval.barriers,
            predicted_soc_end: eval.predicted_soc_end,
            transitions: eval.transitions,
            padded,
            wall_time_s: started.elapsed().as_secs_f64(),
        });
    }

    Ok(ScheduleSolution { trace, steps })
}
