//! Dormand–Prince 5(4) with embedded error control, for small fixed-size
//! systems.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Dopri5 { rtol: 1e-10, atol: 1e-300, max_steps: 1_000_000 }
    }
}

/// Result of an integration: the state at every requested output time and
/// the largest accepted local error ratio.
#[derive(Clone, Debug)]
pub struct Solution<const N: usize> {
    pub states: Vec<[f64; N]>,
    pub steps: usize,
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
// 5th minus embedded 4th order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy<const N: usize>(y: &[f64; N], terms: &[(f64, &[f64; N])], h: f64) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] += h * acc;
    }
    out
}

impl Dopri5 {
    /// Integrate y' = f(t, y) from (t0, y0) through the increasing output
    /// times `t_out` (all ≥ t0), landing exactly on each.
    pub fn solve<const N: usize, F>(&self, mut f: F, t0: f64, y0: [f64; N], t_out: &[f64]) -> Result<Solution<N>>
    where
        F: FnMut(f64, &[f64; N]) -> [f64; N],
    {
        let mut states = Vec::with_capacity(t_out.len());
        let mut t = t0;
        let mut y = y0;
        let mut k1 = f(t, &y);
        let mut h = self.initial_step(t, &y, &k1, t_out.last().copied().unwrap_or(t0) - t0);
        let mut steps = 0usize;

        for &target in t_out {
            if target < t {
                return Err(Error::Numerical(format!("output time {target} precedes {t}")));
            }
            while t < target {
                if steps >= self.max_steps {
                    return Err(Error::Numerical(format!("exceeded {} steps at t = {t}", self.max_steps)));
                }
                let mut last = false;
                let mut hh = h;
                if t + hh >= target {
                    hh = target - t;
                    last = true;
                }
                let hmin = 1e-14 * t.abs().max(1e-300);
                if hh < hmin && !last {
                    return Err(Error::StepUnderflow { t, h: hh, y0: y[0] });
                }
                let k2 = f(t + C2 * hh, &axpy(&y, &[(A21, &k1)], hh));
                let k3 = f(t + C3 * hh, &axpy(&y, &[(A31, &k1), (A32, &k2)], hh));
                let k4 = f(t + C4 * hh, &axpy(&y, &[(A41, &k1), (A42, &k2), (A43, &k3)], hh));
                let k5 = f(t + C5 * hh, &axpy(&y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], hh));
                let k6 = f(t + hh, &axpy(&y, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], hh));
                let y_new = axpy(&y, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)], hh);
                let k7 = f(t + hh, &y_new);

                let mut err = 0.0;
                let mut finite = true;
                for i in 0..N {
                    let e = hh * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                    let sc = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
                    err += (e / sc).powi(2);
                    finite &= y_new[i].is_finite();
                }
                let err = if finite { (err / N as f64).sqrt() } else { f64::INFINITY };
                steps += 1;

                if err <= 1.0 {
                    t = if last { target } else { t + hh };
                    y = y_new;
                    k1 = k7;
                    let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                    // A step shortened to hit the target says nothing about h.
                    if !last || hh >= h {
                        h = hh * grow;
                    }
                } else {
                    let shrink = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.1 };
                    h = hh * shrink;
                    if h < 1e-14 * t.abs().max(1e-300) {
                        return Err(Error::StepUnderflow { t, h, y0: y[0] });
                    }
                }
            }
            states.push(y);
        }
        Ok(Solution { states, steps })
    }

    fn initial_step<const N: usize>(&self, _t: f64, y: &[f64; N], dy: &[f64; N], span: f64) -> f64 {
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..N {
            let sc = self.atol + self.rtol * y[i].abs();
            d0 += (y[i] / sc).powi(2);
            d1 += (dy[i] / sc).powi(2);
        }
        let h = if d0 < 1e-10 || d1 < 1e-10 { 1e-6 } else { 0.01 * (d0 / d1).sqrt() };
        if span > 0.0 {
            h.min(span).max(1e-12 * span)
        } else {
            h.max(1e-12)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let sol = Dopri5::default().solve(|_, y: &[f64; 1]| [-y[0]], 0.0, [1.0], &[0.5, 1.0, 10.0]).unwrap();
        for (s, &t) in sol.states.iter().zip(&[0.5f64, 1.0, 10.0]) {
            assert!((s[0] - (-t).exp()).abs() < 1e-9 * (-t).exp(), "t={t}: {}", s[0]);
        }
    }

    #[test]
    fn logistic_from_huge_initial_value() {
        // u' = u − u², u(0) = 1e12  →  u(t) = u0 e^t / (1 + u0 (e^t − 1))
        let u0 = 1e12f64;
        let sol = Dopri5::default().solve(|_, y: &[f64; 1]| [y[0] - y[0] * y[0]], 0.0, [u0], &[1.0]).unwrap();
        let e = 1f64.exp();
        let exact = u0 * e / (1.0 + u0 * (e - 1.0));
        assert!((sol.states[0][0] - exact).abs() < 1e-9 * exact);
    }

    #[test]
    fn two_dimensional_rotation() {
        let sol = Dopri5::default()
            .solve(|_, y: &[f64; 2]| [-y[1], y[0]], 0.0, [1.0, 0.0], &[std::f64::consts::PI])
            .unwrap();
        assert!((sol.states[0][0] + 1.0).abs() < 1e-8);
        assert!(sol.states[0][1].abs() < 1e-8);
    }
}
