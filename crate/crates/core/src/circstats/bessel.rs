//! Exponentially scaled modified Bessel functions of the first kind, orders
//! 0 and 1, for nonnegative real arguments.
//!
//! `i0e(x) = exp(-x) I0(x)` and `i1e(x) = exp(-x) I1(x)` stay finite for every
//! finite `x`, which lets von Mises densities with large concentrations be
//! evaluated without overflow.

/// Crossover between the power series and the large-argument expansion.
pub const SERIES_LIMIT: f64 = 15.0;

fn series(order: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let q = half * half;
    let mut term = if order == 0 { 1.0 } else { half };
    let mut sum = term;
    let mut k = 1.0;
    loop {
        term *= q / (k * (k + order as f64));
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
        k += 1.0;
    }
    sum
}

fn asymptotic_scaled(order: u32, x: f64) -> f64 {
    let mu = 4.0 * (order * order) as f64;
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    let mut k = 1.0_f64;
    loop {
        let odd = 2.0 * k - 1.0;
        let next = -term * (mu - odd * odd) / (k * 8.0 * x);
        if next.abs() >= term.abs() {
            // Divergent tail: stop at the smallest term.
            break;
        }
        term = next;
        sum += term;
        if term.abs() < sum.abs() * 1e-17 {
            break;
        }
        k += 1.0;
    }
    sum / (2.0 * std::f64::consts::PI * x).sqrt()
}

/// `exp(-x) I0(x)` for `x >= 0`.
pub fn i0e(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x <= SERIES_LIMIT {
        series(0, x) * (-x).exp()
    } else {
        asymptotic_scaled(0, x)
    }
}

/// `exp(-x) I1(x)` for `x >= 0`.
pub fn i1e(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x <= SERIES_LIMIT {
        series(1, x) * (-x).exp()
    } else {
        asymptotic_scaled(1, x)
    }
}

/// `I0(x)`; overflows to infinity beyond `x ≈ 713`.
pub fn i0(x: f64) -> f64 {
    if x <= SERIES_LIMIT {
        series(0, x)
    } else {
        asymptotic_scaled(0, x) * x.exp()
    }
}

/// `I1(x)`; overflows to infinity beyond `x ≈ 713`.
pub fn i1(x: f64) -> f64 {
    if x <= SERIES_LIMIT {
        series(1, x)
    } else {
        asymptotic_scaled(1, x) * x.exp()
    }
}

/// Mean resultant length of a von Mises distribution, `A(κ) = I1(κ)/I0(κ)`.
pub fn a1(kappa: f64) -> f64 {
    if kappa == 0.0 {
        return 0.0;
    }
    i1e(kappa) / i0e(kappa)
}
