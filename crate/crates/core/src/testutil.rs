//! Shared fixtures for unit tests.

use num_complex::Complex;

use crate::loadmodel::LoadSpec;

fn c(re: f64, im: f64) -> Complex<f64> {
    Complex::new(re, im)
}

/// The three demo loads shipped with the repo: a slow first-order heater, an
/// underdamped motor-style load, and a small fast load.
pub(crate) fn demo_specs() -> Vec<LoadSpec<f64>> {
    vec![
        LoadSpec {
            id: 1,
            size_pu: 0.60,
            poles_on: vec![c(-0.01, 0.0)],
            poles_off: vec![c(-0.04, 0.0)],
            t_on_min_s: 180.0,
            t_off_min_s: 180.0,
        },
        LoadSpec {
            id: 2,
            size_pu: 0.2586,
            poles_on: vec![c(-0.05, 0.06), c(-0.05, -0.06)],
            poles_off: vec![c(-0.05, 0.0)],
            t_on_min_s: 240.0,
            t_off_min_s: 240.0,
        },
        LoadSpec {
            id: 3,
            size_pu: 0.1222,
            poles_on: vec![c(-0.02, 0.0)],
            poles_off: vec![c(-0.02, 0.0)],
            t_on_min_s: 300.0,
            t_off_min_s: 300.0,
        },
    ]
}
