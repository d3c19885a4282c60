//! Adaptive Dormand-Prince 5(4) integrator for autonomous systems.
//!
//! Steps are shortened so that every requested output time is hit exactly,
//! so no interpolation is involved in the samples.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Largest step allowed.
    pub max_step: f64,
    /// Keep every coordinate nonnegative: small negative overshoots (below
    /// `abs_tol` in magnitude) are clamped to zero, larger ones cause the
    /// step to be rejected and halved.
    pub nonnegative: bool,
    /// Cap on attempted steps.
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_step: f64::INFINITY,
            nonnegative: false,
            max_steps: 50_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (h = {h}); the problem may be stiff")]
    StepUnderflow { t: f64, h: f64 },
    #[error("step limit of {steps} reached at t = {t}")]
    TooManySteps { t: f64, steps: usize },
    #[error("non-finite derivative at t = {t}")]
    NonFinite { t: f64 },
}

/// Step counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// fifth minus fourth order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// PI controller
const BETA: f64 = 0.04;
const EXPO: f64 = 0.2 - 0.75 * BETA;
const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

struct Work {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y_new: Vec<f64>,
}

/// Integrates `y' = f(y)` from `y0` at `t0` and calls `on_sample(t, y)` at
/// each time in `samples`, which must be increasing and not before `t0`.
/// A sample equal to `t0` reports the initial value.
///
/// On failure the samples already delivered remain valid.
pub fn integrate<F, S>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    samples: &[f64],
    opts: &OdeOptions,
    mut on_sample: S,
) -> Result<OdeStats, OdeError>
where
    F: FnMut(&[f64], &mut [f64]),
    S: FnMut(f64, &[f64]),
{
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut stats = OdeStats::default();
    let mut w = Work {
        k: std::array::from_fn(|_| vec![0.0; n]),
        tmp: vec![0.0; n],
        y_new: vec![0.0; n],
    };

    f(&y, &mut w.k[0]);
    stats.evaluations += 1;
    if w.k[0].iter().any(|v| !v.is_finite()) {
        return Err(OdeError::NonFinite { t });
    }

    let horizon = samples.last().map_or(0.0, |&s| s - t0);
    let mut h = initial_step(&mut f, &y, &w.k[0], opts, &mut stats).min(opts.max_step);
    if horizon > 0.0 {
        h = h.min(horizon);
    }
    let mut err_old = 1e-4f64;
    let mut last_rejected = false;
    let mut attempts = 0usize;

    for &ts in samples {
        while t < ts {
            attempts += 1;
            if attempts > opts.max_steps {
                return Err(OdeError::TooManySteps {
                    t,
                    steps: opts.max_steps,
                });
            }
            let remaining = ts - t;
            let landing = h >= remaining;
            let h_try = if landing { remaining } else { h };
            if h_try < 1e-14 * t.abs().max(1.0) && !landing {
                return Err(OdeError::StepUnderflow { t, h: h_try });
            }

            stage(&mut f, &y, h_try, &mut w);
            stats.evaluations += 6;
            let err = error_norm(&y, &w, h_try, opts);
            if !err.is_finite() {
                stats.rejected += 1;
                last_rejected = true;
                h = 0.5 * h_try;
                continue;
            }

            if err <= 1.0 {
                let mut negative = false;
                let mut clamped = false;
                if opts.nonnegative {
                    for v in w.y_new.iter_mut() {
                        if *v < 0.0 {
                            if -*v < opts.abs_tol {
                                *v = 0.0;
                                clamped = true;
                            } else {
                                negative = true;
                            }
                        }
                    }
                }
                if negative {
                    stats.rejected += 1;
                    last_rejected = true;
                    h = 0.5 * h_try;
                    if h < 1e-14 * t.abs().max(1.0) {
                        return Err(OdeError::StepUnderflow { t, h });
                    }
                    continue;
                }

                stats.accepted += 1;
                t = if landing { ts } else { t + h_try };
                std::mem::swap(&mut y, &mut w.y_new);
                // FSAL: the last stage is the derivative at the new point
                w.k.swap(0, 6);
                if clamped {
                    // keep the FSAL derivative consistent with the clamped point
                    f(&y, &mut w.k[0]);
                    stats.evaluations += 1;
                }
                if w.k[0].iter().any(|v| !v.is_finite()) {
                    return Err(OdeError::NonFinite { t });
                }

                let e = err.max(1e-10);
                let mut fac = SAFETY * e.powf(-EXPO) * err_old.powf(BETA);
                fac = fac.clamp(FAC_MIN, FAC_MAX);
                if last_rejected {
                    fac = fac.min(1.0);
                }
                let proposed = (h_try * fac).min(opts.max_step);
                // a step shortened to land on a sample says nothing about
                // the step the solution can afford
                h = if landing && fac >= 1.0 {
                    proposed.max(h)
                } else {
                    proposed
                };
                err_old = e;
                last_rejected = false;
            } else {
                stats.rejected += 1;
                last_rejected = true;
                let fac = (SAFETY * err.powf(-0.2)).max(FAC_MIN);
                h = h_try * fac;
                if h < 1e-14 * t.abs().max(1.0) {
                    return Err(OdeError::StepUnderflow { t, h });
                }
            }
        }
        on_sample(t, &y);
    }
    Ok(stats)
}

fn stage<F: FnMut(&[f64], &mut [f64])>(f: &mut F, y: &[f64], h: f64, w: &mut Work) {
    let n = y.len();
    let Work { k, tmp, y_new } = w;
    let (k1, rest) = k.split_at_mut(1);
    let k1 = &k1[0];
    let [k2, k3, k4, k5, k6, k7] = rest else { unreachable!() };

    for i in 0..n {
        tmp[i] = y[i] + h * A21 * k1[i];
    }
    f(tmp, k2);
    for i in 0..n {
        tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
    }
    f(tmp, k3);
    for i in 0..n {
        tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
    }
    f(tmp, k4);
    for i in 0..n {
        tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
    }
    f(tmp, k5);
    for i in 0..n {
        tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
    }
    f(tmp, k6);
    for i in 0..n {
        y_new[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
    }
    f(y_new, k7);
}

/// RMS of the scaled local error estimate.
fn error_norm(y: &[f64], w: &Work, h: f64, opts: &OdeOptions) -> f64 {
    let k = &w.k;
    let n = y.len();
    if n == 0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..n {
        let e = h * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
        let sc = opts.abs_tol + opts.rel_tol * y[i].abs().max(w.y_new[i].abs());
        sum += (e / sc) * (e / sc);
    }
    (sum / n as f64).sqrt()
}

/// Starting step from the size of the solution and its first two
/// derivatives.
fn initial_step<F: FnMut(&[f64], &mut [f64])>(
    f: &mut F,
    y: &[f64],
    f0: &[f64],
    opts: &OdeOptions,
    stats: &mut OdeStats,
) -> f64 {
    let n = y.len();
    if n == 0 {
        return 1.0;
    }
    let scale: Vec<f64> = y.iter().map(|v| opts.abs_tol + opts.rel_tol * v.abs()).collect();
    let rms = |v: &[f64]| (v.iter().zip(&scale).map(|(a, s)| (a / s) * (a / s)).sum::<f64>() / n as f64).sqrt();
    let d0 = rms(y);
    let d1 = rms(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; n];
    f(&y1, &mut f1);
    stats.evaluations += 1;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    if h1.is_finite() {
        (100.0 * h0).min(h1)
    } else {
        h0
    }
}
