//! On/off load dynamics.
//!
//! Each load is described by two stable all-pole transfer functions — one for
//! the powered-on transient, one for the powered-off decay — normalized to
//! unity DC gain and scaled by the load's steady-state size. The continuous
//! models are discretized exactly under a zero-order hold, and a switched
//! simulation propagates whichever model is active, handing the output across
//! switch instants so the demand curve has no jumps.

use num_complex::Complex;
use thiserror::Error;

use crate::linalg::{expm, Matrix};
use crate::num::{lit, Scalar};

/// Largest supported model order (number of poles per mode).
pub const MAX_ORDER: usize = 6;

#[derive(Debug, Error, PartialEq)]
pub enum LoadModelError {
    #[error("load {id}: size_pu must be positive and finite, got {got}")]
    BadSize { id: u32, got: f64 },
    #[error("load {id}: {which} pole list is empty")]
    EmptyPoles { id: u32, which: &'static str },
    #[error("load {id}: {which} pole {re}{im:+}j must have a negative real part")]
    UnstablePole {
        id: u32,
        which: &'static str,
        re: f64,
        im: f64,
    },
    #[error("load {id}: {which} pole {re}{im:+}j has no conjugate partner")]
    UnpairedPole {
        id: u32,
        which: &'static str,
        re: f64,
        im: f64,
    },
    #[error("load {id}: {which} model has {order} poles, more than the supported {MAX_ORDER}")]
    OrderTooHigh {
        id: u32,
        which: &'static str,
        order: usize,
    },
    #[error("load {id}: minimum {which} time must be positive and finite, got {got} s")]
    BadDwell {
        id: u32,
        which: &'static str,
        got: f64,
    },
    #[error("discretization step must be positive and finite, got {got} s")]
    BadTimeStep { got: f64 },
}

fn f_to_f64<F: Scalar>(x: F) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Static description of one switchable load.
#[derive(Clone, Debug)]
pub struct LoadSpec<F> {
    /// Small identifier used in file headers and diagnostics.
    pub id: u32,
    /// Steady-state demand when on, in per-unit power.
    pub size_pu: F,
    /// Poles of the powered-on transient model (rad/s).
    pub poles_on: Vec<Complex<F>>,
    /// Poles of the powered-off decay model (rad/s).
    pub poles_off: Vec<Complex<F>>,
    /// Minimum time the load must stay on after switching on, seconds.
    pub t_on_min_s: F,
    /// Minimum time the load must stay off after switching off, seconds.
    pub t_off_min_s: F,
}

impl<F: Scalar> LoadSpec<F> {
    pub fn validate(&self) -> Result<(), LoadModelError> {
        if !(self.size_pu > F::zero()) || !self.size_pu.is_finite() {
            return Err(LoadModelError::BadSize {
                id: self.id,
                got: f_to_f64(self.size_pu),
            });
        }
        validate_poles(self.id, "on", &self.poles_on)?;
        validate_poles(self.id, "off", &self.poles_off)?;
        for (which, t) in [("on", self.t_on_min_s), ("off", self.t_off_min_s)] {
            if !(t > F::zero()) || !t.is_finite() {
                return Err(LoadModelError::BadDwell {
                    id: self.id,
                    which,
                    got: f_to_f64(t),
                });
            }
        }
        Ok(())
    }

    /// Demand the load settles to when held on: its size.
    pub fn steady_state_power(&self) -> F {
        self.size_pu
    }
}

fn validate_poles<F: Scalar>(
    id: u32,
    which: &'static str,
    poles: &[Complex<F>],
) -> Result<(), LoadModelError> {
    if poles.is_empty() {
        return Err(LoadModelError::EmptyPoles { id, which });
    }
    if poles.len() > MAX_ORDER {
        return Err(LoadModelError::OrderTooHigh {
            id,
            which,
            order: poles.len(),
        });
    }
    for p in poles {
        if !(p.re < F::zero()) || !p.re.is_finite() || !p.im.is_finite() {
            return Err(LoadModelError::UnstablePole {
                id,
                which,
                re: f_to_f64(p.re),
                im: f_to_f64(p.im),
            });
        }
    }
    // Complex poles must come in conjugate pairs so the expanded denominator
    // is real. Match them up greedily; values are compared exactly because
    // pairs are expected to be written out as mirrored literals.
    let mut unmatched: Vec<Complex<F>> = poles.iter().filter(|p| p.im != F::zero()).copied().collect();
    while let Some(p) = unmatched.pop() {
        match unmatched.iter().position(|q| q.re == p.re && q.im == -p.im) {
            Some(i) => {
                unmatched.swap_remove(i);
            }
            None => {
                return Err(LoadModelError::UnpairedPole {
                    id,
                    which,
                    re: f_to_f64(p.re),
                    im: f_to_f64(p.im),
                });
            }
        }
    }
    Ok(())
}

/// Expands a conjugate-closed pole list into the real monic denominator
/// `prod (s - p_j)`, returned as ascending coefficients `[a0, a1, ..., 1]`.
fn denominator_coeffs<F: Scalar>(poles: &[Complex<F>]) -> Vec<F> {
    let mut coeffs = vec![F::one()];
    let mut used = vec![false; poles.len()];
    for (i, p) in poles.iter().enumerate() {
        if used[i] {
            continue;
        }
        used[i] = true;
        if p.im == F::zero() {
            // (s - p)
            coeffs = poly_mul(&coeffs, &[-p.re, F::one()]);
        } else {
            let j = poles
                .iter()
                .enumerate()
                .position(|(j, q)| !used[j] && j != i && q.re == p.re && q.im == -p.im)
                .expect("validated conjugate pair");
            used[j] = true;
            // (s - p)(s - conj p) = s^2 - 2 Re(p) s + |p|^2
            let two: F = lit(2.0);
            coeffs = poly_mul(&coeffs, &[p.norm_sqr(), -two * p.re, F::one()]);
        }
    }
    coeffs
}

fn poly_mul<F: Scalar>(a: &[F], b: &[F]) -> Vec<F> {
    let mut out = vec![F::zero(); a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] = out[i + j] + ai * bj;
        }
    }
    out
}

/// Continuous-time realization of `K / prod(s - p_j)` with `K` chosen so the
/// DC gain is exactly 1. Companion-form `A`, input vector `b`; the output is
/// the first state, so no separate output matrix is needed.
#[derive(Clone, Debug)]
pub struct ContinuousSs<F> {
    pub a: Matrix<F>,
    pub b: Vec<F>,
}

impl<F: Scalar> ContinuousSs<F> {
    pub fn order(&self) -> usize {
        self.a.rows()
    }

    /// Steady-state output for a unit input: solves `-A x = b` and reads the
    /// first state. Unity by construction, up to rounding.
    pub fn dc_gain(&self) -> F {
        let neg_a = self.a.scale(-F::one());
        let x = neg_a.solve(&self.b).expect("stable system is nonsingular");
        x[0]
    }
}

/// Builds the unity-DC-gain all-pole realization for a pole list.
pub fn build_continuous<F: Scalar>(poles: &[Complex<F>]) -> Result<ContinuousSs<F>, LoadModelError> {
    // Standalone entry point: enforce the pole preconditions here too, with a
    // placeholder id for callers outside a LoadSpec.
    validate_poles(0, "given", poles)?;
    let coeffs = denominator_coeffs(poles);
    let n = coeffs.len() - 1;
    let mut a = Matrix::zeros(n, n);
    for i in 0..n - 1 {
        a[(i, i + 1)] = F::one();
    }
    for j in 0..n {
        a[(n - 1, j)] = -coeffs[j];
    }
    // Numerator K = a0 makes the DC gain K / a0 = 1; driving it through the
    // input keeps the output equal to the first state.
    let mut b = vec![F::zero(); n];
    b[n - 1] = coeffs[0];
    Ok(ContinuousSs { a, b })
}

/// Discrete-time state update `x <- A x + b u` sampled at a fixed step, with
/// the output still the first state.
#[derive(Clone, Debug)]
pub struct DiscreteSs<F> {
    pub a: Matrix<F>,
    pub b: Vec<F>,
}

impl<F: Scalar> DiscreteSs<F> {
    pub fn order(&self) -> usize {
        self.a.rows()
    }

    /// Steady-state output for a unit input: solves `(I - A) x = b`.
    pub fn dc_gain(&self) -> F {
        let n = self.order();
        let mut m = Matrix::identity(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = m[(i, j)] - self.a[(i, j)];
            }
        }
        let x = m.solve(&self.b).expect("stable system is nonsingular");
        x[0]
    }
}

/// Exact zero-order-hold discretization via the exponential of the augmented
/// `[A b; 0 0]` block.
pub fn zoh_discretize<F: Scalar>(cont: &ContinuousSs<F>, dt_s: F) -> Result<DiscreteSs<F>, LoadModelError> {
    if !(dt_s > F::zero()) || !dt_s.is_finite() {
        return Err(LoadModelError::BadTimeStep { got: f_to_f64(dt_s) });
    }
    let n = cont.order();
    let mut aug = Matrix::zeros(n + 1, n + 1);
    for i in 0..n {
        for j in 0..n {
            aug[(i, j)] = cont.a[(i, j)] * dt_s;
        }
        aug[(i, n)] = cont.b[i] * dt_s;
    }
    let e = expm(&aug);
    let a = e.submatrix(0, 0, n, n);
    let b = (0..n).map(|i| e[(i, n)]).collect();
    Ok(DiscreteSs { a, b })
}

/// Live simulation state of one load: which model is active, the state vector
/// of that model, and fine-step bookkeeping of the most recent transitions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoadState<F> {
    active: bool,
    x: [F; MAX_ORDER],
    steps_taken: u64,
    last_on_step: Option<u64>,
    last_off_step: Option<u64>,
}

impl<F: Scalar> LoadState<F> {
    pub fn is_on(&self) -> bool {
        self.active
    }

    /// Normalized output (1 = fully on), before scaling by the load size.
    pub fn output(&self) -> F {
        self.x[0]
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps_taken
    }

    pub fn last_on_step(&self) -> Option<u64> {
        self.last_on_step
    }

    pub fn last_off_step(&self) -> Option<u64> {
        self.last_off_step
    }
}

/// ZOH realizations of both switch modes of one load plus its spec, ready to
/// advance a [`LoadState`] on the fine grid.
#[derive(Clone, Debug)]
pub struct DiscreteLoadModel<F> {
    spec: LoadSpec<F>,
    ss_on: DiscreteSs<F>,
    ss_off: DiscreteSs<F>,
    dt_s: F,
}

impl<F: Scalar> DiscreteLoadModel<F> {
    pub fn new(spec: LoadSpec<F>, dt_s: F) -> Result<Self, LoadModelError> {
        spec.validate()?;
        let ss_on = zoh_discretize(&build_continuous(&spec.poles_on)?, dt_s)?;
        let ss_off = zoh_discretize(&build_continuous(&spec.poles_off)?, dt_s)?;
        Ok(Self {
            spec,
            ss_on,
            ss_off,
            dt_s,
        })
    }

    pub fn spec(&self) -> &LoadSpec<F> {
        &self.spec
    }

    pub fn dt_s(&self) -> F {
        self.dt_s
    }

    pub fn ss_on(&self) -> &DiscreteSs<F> {
        &self.ss_on
    }

    pub fn ss_off(&self) -> &DiscreteSs<F> {
        &self.ss_off
    }

    fn mode(&self, on: bool) -> &DiscreteSs<F> {
        if on {
            &self.ss_on
        } else {
            &self.ss_off
        }
    }

    /// Everything starts switched off with a fully decayed state.
    pub fn initial_state(&self) -> LoadState<F> {
        LoadState {
            active: false,
            x: [F::zero(); MAX_ORDER],
            steps_taken: 0,
            last_on_step: None,
            last_off_step: None,
        }
    }

    /// Settled state of either mode (output 1 when on, 0 when off).
    pub fn steady_state(&self, on: bool) -> LoadState<F> {
        let mut x = [F::zero(); MAX_ORDER];
        if on {
            x[0] = F::one();
        }
        LoadState {
            active: on,
            x,
            steps_taken: 0,
            last_on_step: None,
            last_off_step: None,
        }
    }

    /// Hands the state over to the other mode's model without moving time
    /// forward. The incoming state reproduces the outgoing output exactly
    /// (first state = output, higher states zero), so demand is continuous
    /// across the switch.
    pub fn retarget(&self, state: &mut LoadState<F>, on: bool) {
        if state.active == on {
            return;
        }
        let y = state.output();
        state.x = [F::zero(); MAX_ORDER];
        state.x[0] = y;
        state.active = on;
        if on {
            state.last_on_step = Some(state.steps_taken);
        } else {
            state.last_off_step = Some(state.steps_taken);
        }
    }

    /// Advances one fine step with the switch held at `on`, switching modes
    /// first if needed.
    pub fn step(&self, state: &mut LoadState<F>, on: bool) {
        self.retarget(state, on);
        let ss = self.mode(state.active);
        let n = ss.order();
        let u = if state.active { F::one() } else { F::zero() };
        let mut next = [F::zero(); MAX_ORDER];
        for i in 0..n {
            let mut acc = ss.b[i] * u;
            for j in 0..n {
                acc = acc + ss.a[(i, j)] * state.x[j];
            }
            next[i] = acc;
        }
        state.x = next;
        state.steps_taken += 1;
    }

    /// Demand in PU for a given state: size times the normalized output.
    pub fn power(&self, state: &LoadState<F>) -> F {
        self.spec.size_pu * state.output()
    }

    /// Runs the switch sequence `w` from `state`, returning the demand after
    /// every fine step (same length as `w`). The state is left at the end of
    /// the sequence.
    pub fn simulate_switched(&self, state: &mut LoadState<F>, w: &[bool]) -> Vec<F> {
        let mut out = Vec::with_capacity(w.len());
        for &on in w {
            self.step(state, on);
            out.push(self.power(state));
        }
        out
    }
}
