//! Kummer's confluent hypergeometric function on the negative axis, and the
//! heat extension of pure power weights it yields.

use libm::tgamma;

/// `M(a, b, -x)` for `x ≥ 0`, `b > 0`, `b - a > 0`.
///
/// Small `x` uses Kummer's transformation `e^{-x} M(b-a, b, x)`, whose
/// series has positive terms; large `x` uses the asymptotic expansion, whose
/// neglected exponentially small part is below double precision there.
pub fn kummer_m_neg(a: f64, b: f64, x: f64) -> f64 {
    debug_assert!(x >= 0.0 && b > 0.0 && b - a > 0.0);
    if x < 50.0 {
        let c = b - a;
        let (mut term, mut sum) = (1.0_f64, 1.0_f64);
        let mut k = 0.0_f64;
        loop {
            term *= (c + k) / (b + k) * x / (k + 1.0);
            sum += term;
            k += 1.0;
            if k > x && term < 1e-17 * sum {
                break;
            }
        }
        (-x).exp() * sum
    } else {
        let lead = tgamma(b) / tgamma(b - a) * x.powf(-a);
        let (mut term, mut sum) = (1.0_f64, 1.0_f64);
        let mut k = 0.0_f64;
        loop {
            let next = term * (a + k) * (a - b + 1.0 + k) / ((k + 1.0) * x);
            if next.abs() >= term.abs() || next.abs() < 1e-17 * sum.abs() {
                sum += next;
                break;
            }
            term = next;
            sum += term;
            k += 1.0;
        }
        lead * sum
    }
}

/// Heat extension of `|x|^a` on `R^n`: returns `((w ∗ φ_r)(x), (w ∗ ψ_r)(x))`.
///
/// With `t = x/r`, `u = r^a c M(-a/2, n/2, -|t|²)` where
/// `c = Γ((n+a)/2)/Γ(n/2)`, and `w ∗ ψ_r = r^a c (2a/n) t M(1-a/2, n/2+1, -|t|²)`.
pub fn power_heat(n: usize, a: f64, x: [f64; 2], r: f64) -> (f64, [f64; 2]) {
    let nf = n as f64;
    let t = [x[0] / r, x[1] / r];
    let t2 = t[0] * t[0] + t[1] * t[1];
    let c = tgamma((nf + a) / 2.0) / tgamma(nf / 2.0);
    let scale = r.powf(a) * c;
    let u = scale * kummer_m_neg(-a / 2.0, nf / 2.0, t2);
    let g = scale * (2.0 * a / nf) * kummer_m_neg(1.0 - a / 2.0, nf / 2.0 + 1.0, t2);
    (u, [g * t[0], g * t[1]])
}
