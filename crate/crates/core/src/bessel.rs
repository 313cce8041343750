//! Bessel functions of the first kind of orders zero and one.
//!
//! Power series on `|z| <= 8`, Hankel asymptotic expansion beyond. Only the
//! series branch is exercised by the unit disk (`|z| <= j_{0,1}`), where the
//! absolute error is below `1e-15`.

use std::f64::consts::{FRAC_PI_4, PI};
use std::sync::OnceLock;

const SERIES_LIMIT: f64 = 8.0;

pub fn j0(z: f64) -> f64 {
    let z = z.abs();
    if z <= SERIES_LIMIT {
        series(0, z)
    } else {
        asymptotic(0, z)
    }
}

pub fn j1(z: f64) -> f64 {
    let s = z.signum();
    let a = z.abs();
    if a <= SERIES_LIMIT {
        s * series(1, a)
    } else {
        s * asymptotic(1, a)
    }
}

/// First positive zero of `J_0`.
pub fn j0_first_zero() -> f64 {
    static ROOT: OnceLock<f64> = OnceLock::new();
    *ROOT.get_or_init(|| {
        let mut z = 2.4048;
        for _ in 0..50 {
            // J_0' = -J_1
            let step = j0(z) / j1(z);
            z += step;
            if step.abs() < 1e-16 * z {
                break;
            }
        }
        z
    })
}

/// `sum_k (-1)^k (z/2)^{2k+n} / (k! (k+n)!)`
fn series(order: u32, z: f64) -> f64 {
    let q = 0.25 * z * z;
    let mut term = if order == 0 { 1.0 } else { 0.5 * z };
    let mut sum = term;
    let n = order as f64;
    for k in 1..200 {
        let k = k as f64;
        term *= -q / (k * (k + n));
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

fn asymptotic(order: u32, z: f64) -> f64 {
    let mu = 4.0 * (order as f64).powi(2);
    let chi = z - (order as f64) * PI / 2.0 - FRAC_PI_4;
    // a_k = prod_{j=1..k} (mu - (2j-1)^2) / (k! 8^k)
    let mut p = 0.0;
    let mut q = 0.0;
    let mut a = 1.0;
    let mut last = f64::INFINITY;
    for k in 0..60 {
        let term = a / z.powi(k);
        if term.abs() > last {
            break;
        }
        last = term.abs();
        match k % 4 {
            0 => p += term,
            1 => q += term,
            2 => p -= term,
            _ => q -= term,
        }
        let kk = (k + 1) as f64;
        a *= (mu - (2.0 * kk - 1.0).powi(2)) / (kk * 8.0);
        if last < 1e-17 {
            break;
        }
    }
    (2.0 / (PI * z)).sqrt() * (p * chi.cos() - q * chi.sin())
}
