//! Small numerical helpers shared across modules.

use std::f64::consts::LN_2;

/// `log(sum(exp(xs)))`, returning `-inf` for an empty slice or when every term is `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = xs.iter().map(|x| (x - max).exp()).sum();
    max + sum.ln()
}

/// `log(mean(exp(xs)))`.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    log_sum_exp(xs) - (xs.len() as f64).ln()
}

/// `log(exp(a) + exp(b))`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Log of the rising factorial `x (x+1) ... (x+n-1) = Γ(x+n)/Γ(x)`, with `x`
/// supplied through its logarithm so that tiny or huge bases stay representable.
pub fn ln_rising(ln_x: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let x = ln_x.exp();
    let mut acc = ln_x;
    for i in 1..n {
        let i = i as f64;
        acc += if x.is_finite() && x < i {
            // x + i = i (1 + x/i)
            i.ln() + (x / i).ln_1p()
        } else {
            // x + i = x (1 + i/x); also covers x = +inf where i/x = 0
            ln_x + (i / x).ln_1p()
        };
    }
    acc
}

/// `(T - 1) log 2`, the log of the number of orders of `T` points.
pub fn ln_num_orders(t: usize) -> f64 {
    (t.saturating_sub(1)) as f64 * LN_2
}

pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// Log of the binomial coefficient.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

pub fn ln_factorial(n: u64) -> f64 {
    statrs::function::factorial::ln_factorial(n)
}
