//! Adaptive Dormand–Prince 5(4) integration with a post-step hook.

use super::Vector;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub(crate) struct DopriOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for DopriOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-11,
            max_steps: 200_000,
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
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
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Fifth minus fourth order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrate `y' = f(t, y)` from `t0` to `t1`. `post` runs on every accepted
/// state and may modify it (e.g. to re-project onto a constraint manifold).
pub(crate) fn integrate<F, P>(f: F, mut y: Vector, t0: f64, t1: f64, opts: DopriOptions, mut post: P) -> Result<Vector>
where
    F: Fn(f64, &Vector) -> Vector,
    P: FnMut(&mut Vector),
{
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(y);
    }
    let mut t = t0;
    let mut h = span * 0.1;
    let mut k1 = f(t, &y);
    let mut steps = 0usize;
    while (t1 - t) * span.signum() > 0.0 {
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::numeric("ODE integration exceeded step budget", (t1 - t).abs()));
        }
        if (t + h - t1) * span.signum() > 0.0 {
            h = t1 - t;
        }
        let k2 = f(t + C2 * h, &(&y + &k1 * (h * A21)));
        let k3 = f(t + C3 * h, &(&y + (&k1 * A31 + &k2 * A32) * h));
        let k4 = f(t + C4 * h, &(&y + (&k1 * A41 + &k2 * A42 + &k3 * A43) * h));
        let k5 = f(t + C5 * h, &(&y + (&k1 * A51 + &k2 * A52 + &k3 * A53 + &k4 * A54) * h));
        let k6 = f(
            t + h,
            &(&y + (&k1 * A61 + &k2 * A62 + &k3 * A63 + &k4 * A64 + &k5 * A65) * h),
        );
        let y_new = &y + (&k1 * B1 + &k3 * B3 + &k4 * B4 + &k5 * B5 + &k6 * B6) * h;
        let k7 = f(t + h, &y_new);
        let err_vec = (&k1 * E1 + &k3 * E3 + &k4 * E4 + &k5 * E5 + &k6 * E6 + &k7 * E7) * h;

        let mut acc = 0.0;
        for i in 0..y.len() {
            let scale = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            acc += (err_vec[i] / scale).powi(2);
        }
        let err = (acc / y.len().max(1) as f64).sqrt();
        if !err.is_finite() {
            h *= 0.1;
            continue;
        }
        if err <= 1.0 {
            t += h;
            y = y_new;
            post(&mut y);
            // FSAL is broken by `post`; re-evaluate at the corrected state.
            k1 = f(t, &y);
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
        if h.abs() < 1e-14 * span.abs() {
            return Err(Error::numeric("ODE step size underflow", err));
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_quarter_period() {
        let y0 = Vector::from_vec(vec![1.0, 0.0]);
        let tight = DopriOptions {
            rtol: 1e-12,
            atol: 1e-13,
            ..DopriOptions::default()
        };
        let f = |_t: f64, y: &Vector| Vector::from_vec(vec![y[1], -y[0]]);
        let y = integrate(f, y0, 0.0, std::f64::consts::FRAC_PI_2, tight, |_| {}).unwrap();
        assert!(y[0].abs() < 1e-11);
        assert!((y[1] + 1.0).abs() < 1e-11);
    }
}
