//! Modified Bessel functions of the first kind and log-factorials.

use std::sync::OnceLock;

use crate::error::{input, Result};

/// Below this argument the table is returned as its `x → 0` limit.
const SMALL_ARG: f64 = 1e-8;

/// Rescaling threshold for the backward recurrence.
const BIG: f64 = 1e250;

/// `I_0(x) ..= I_{n_max}(x)` at a single argument.
#[derive(Debug, Clone, PartialEq)]
pub struct BesselTable {
    pub x: f64,
    pub values: Vec<f64>,
}

impl BesselTable {
    pub fn n_max(&self) -> usize {
        self.values.len() - 1
    }

    /// `I_n'(x)`, using `I_0' = I_1` and `I_n' = (I_{n-1} + I_{n+1}) / 2` when the
    /// table reaches `n + 1`, otherwise `I_{n-1} - (n/x) I_n`.
    pub fn derivative(&self, n: usize) -> f64 {
        let v = &self.values;
        match n {
            0 => v.get(1).copied().unwrap_or(0.0),
            _ if n < self.n_max() => 0.5 * (v[n - 1] + v[n + 1]),
            _ if self.x < SMALL_ARG => {
                if n == 1 {
                    0.5
                } else {
                    0.0
                }
            }
            _ => v[n - 1] - n as f64 / self.x * v[n],
        }
    }
}

/// Exponentially scaled values `e^{-x} I_n(x)` for `n = 0..=n_max`.
///
/// Miller's backward recurrence `f_{k-1} = (2k/x) f_k + f_{k+1}` is started at
/// `n_max + max(20, ceil(1.5 x)) + ceil(6 sqrt(x))` from
/// `(f_{start+1}, f_start) = (0, 1)` and normalized with
/// `e^x = I_0(x) + 2 Σ_{k≥1} I_k(x)`.
pub fn bessel_i_scaled_all(n_max: usize, x: f64) -> Result<Vec<f64>> {
    if !x.is_finite() || x < 0.0 {
        return input(format!("Bessel argument must be finite and >= 0, got {x}"));
    }
    let mut out = vec![0.0; n_max + 1];
    if x < SMALL_ARG {
        out[0] = 1.0;
        return Ok(out);
    }
    let start = n_max + 20.max((1.5 * x).ceil() as usize) + (6.0 * x.sqrt()).ceil() as usize;
    let mut above = 0.0_f64;
    let mut cur = 1.0_f64;
    // Running value of f_0 + 2 Σ_{k≥1} f_k over the orders visited so far.
    let mut norm = 0.0_f64;
    for k in (1..=start).rev() {
        if k <= n_max {
            out[k] = cur;
        }
        norm += 2.0 * cur;
        let below = (2.0 * k as f64 / x) * cur + above;
        above = cur;
        cur = below;
        if cur > BIG {
            above /= BIG;
            cur /= BIG;
            norm /= BIG;
            for v in out.iter_mut().skip(k) {
                *v /= BIG;
            }
        }
    }
    out[0] = cur;
    norm += cur;
    for v in &mut out {
        *v /= norm;
    }
    Ok(out)
}

/// `I_0(x) ..= I_{n_max}(x)`.
pub fn bessel_i_all(n_max: usize, x: f64) -> Result<BesselTable> {
    let scale = x.exp();
    let values = bessel_i_scaled_all(n_max, x)?
        .into_iter()
        .map(|v| v * scale)
        .collect();
    Ok(BesselTable { x, values })
}

const FACTORIAL_CACHE: usize = 1024;

fn log_factorial_cache() -> &'static [f64] {
    static CACHE: OnceLock<Vec<f64>> = OnceLock::new();
    CACHE.get_or_init(|| {
        let mut t = Vec::with_capacity(FACTORIAL_CACHE);
        let mut acc = 0.0_f64;
        t.push(0.0);
        for k in 1..FACTORIAL_CACHE {
            acc += (k as f64).ln();
            t.push(acc);
        }
        t
    })
}

/// `ln(n!)` as a cumulative sum of logarithms.
pub fn log_factorial(n: usize) -> f64 {
    let cache = log_factorial_cache();
    if n < cache.len() {
        return cache[n];
    }
    let mut acc = cache[cache.len() - 1];
    for k in cache.len()..=n {
        acc += (k as f64).ln();
    }
    acc
}
