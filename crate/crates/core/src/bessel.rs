//! Bessel functions of the first kind, orders 0 through 2, for real
//! arguments.
//!
//! Power series near the origin, Miller's backward recurrence in the
//! intermediate range, and the Hankel asymptotic expansion for large
//! arguments. Absolute error is below 1e-14 over the range used by the
//! optics module.

use std::f64::consts::PI;

const SERIES_LIMIT: f64 = 1.0;
const ASYMPTOTIC_LIMIT: f64 = 30.0;

/// `[J0(z), J1(z), J2(z)]`.
pub fn bessel_j012(z: f64) -> [f64; 3] {
    let a = z.abs();
    let mut out = if a < SERIES_LIMIT {
        [series(0, a), series(1, a), series(2, a)]
    } else if a < ASYMPTOTIC_LIMIT {
        miller(a)
    } else {
        [hankel(0, a), hankel(1, a), hankel(2, a)]
    };
    // J1 is odd, J0 and J2 are even.
    if z < 0.0 {
        out[1] = -out[1];
    }
    out
}

pub fn j0(z: f64) -> f64 {
    bessel_j012(z)[0]
}

pub fn j1(z: f64) -> f64 {
    bessel_j012(z)[1]
}

pub fn j2(z: f64) -> f64 {
    bessel_j012(z)[2]
}

fn series(n: u32, z: f64) -> f64 {
    let half = 0.5 * z;
    let q = -half * half;
    let mut term = half.powi(n as i32) / (1..=n).map(f64::from).product::<f64>();
    let mut sum = term;
    for k in 1..60 {
        term *= q / (k as f64 * (k + n) as f64);
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

fn miller(z: f64) -> [f64; 3] {
    // Start well above the turning point so the seeded errors decay.
    let start = (z + 20.0 + (40.0 * z).sqrt()) as usize;
    let start = start + start % 2;
    let tox = 2.0 / z;
    let mut j_next = 0.0; // J_{k+1}
    let mut j_cur = 1e-30; // J_k
    let mut norm = 0.0;
    let mut vals = [0.0; 3];
    for k in (1..=start).rev() {
        let j_prev = k as f64 * tox * j_cur - j_next;
        j_next = j_cur;
        j_cur = j_prev;
        // Rescale to avoid overflow in the upward-growing direction.
        if j_cur.abs() > 1e250 {
            j_cur *= 1e-250;
            j_next *= 1e-250;
            norm *= 1e-250;
            for v in &mut vals {
                *v *= 1e-250;
            }
        }
        let order = k - 1;
        if order <= 2 {
            vals[order] = j_cur;
        }
        if order > 0 && order % 2 == 0 {
            norm += 2.0 * j_cur;
        }
    }
    norm += j_cur;
    [vals[0] / norm, vals[1] / norm, vals[2] / norm]
}

fn hankel(n: u32, z: f64) -> f64 {
    let mu = 4.0 * f64::from(n * n);
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..40 {
        let odd = (2 * k - 1) as f64;
        term *= (mu - odd * odd) / (k as f64 * 8.0 * z);
        if term.abs() > prev {
            break;
        }
        prev = term.abs();
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
        if term.abs() < 1e-17 {
            break;
        }
    }
    let chi = z - (f64::from(n) * 0.5 + 0.25) * PI;
    (2.0 / (PI * z)).sqrt() * (p * chi.cos() - q * chi.sin())
}
