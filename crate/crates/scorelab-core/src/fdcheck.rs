//! Finite-difference oracles. Test support: every derivative the library
//! computes analytically can be checked here against central differences of
//! a plain evaluation, with no shared code path beyond the function itself.

use alloc::vec::Vec;

/// Central-difference step. Large enough that cancellation stays near
/// 1e-12 of the value, small enough that curvature error is ~1e-8 |f'''|.
pub const FD_STEP: f64 = 1e-4;

/// `df/dx_i` of a scalar function by central differences.
pub fn fd_partial(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[i] += h;
    xm[i] -= h;
    (f(&xp) - f(&xm)) / (2.0 * h)
}

/// Full gradient by central differences.
pub fn fd_grad(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len()).map(|i| fd_partial(&mut f, x, i, h)).collect()
}

/// Second derivative along coordinate `i` by the three-point stencil.
pub fn fd_second(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[i] += h;
    xm[i] -= h;
    (f(&xp) - 2.0 * f(x) + f(&xm)) / (h * h)
}

/// True when `a` and `b` agree within `atol` absolute or `rtol` relative.
pub fn close(a: f64, b: f64, atol: f64, rtol: f64) -> bool {
    let diff = (a - b).abs();
    diff <= atol || diff <= rtol * a.abs().max(b.abs())
}

/// Panic with context unless every pair agrees within tolerance.
pub fn assert_all_close(got: &[f64], want: &[f64], atol: f64, rtol: f64, what: &str) {
    assert_eq!(got.len(), want.len(), "{what}: length mismatch");
    for (i, (g, w)) in got.iter().zip(want.iter()).enumerate() {
        assert!(
            close(*g, *w, atol, rtol),
            "{what}[{i}]: got {g}, want {w} (diff {})",
            (g - w).abs()
        );
    }
}

/// Composite trapezoid rule on a uniform grid, for normalization checks.
pub fn trapezoid(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let mut acc = 0.5 * (f(lo) + f(hi));
    for k in 1..n {
        acc += f(lo + h * k as f64);
    }
    acc * h
}
