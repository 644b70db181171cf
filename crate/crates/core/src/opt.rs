//! 1-D minimization helpers: bracket growth by doubling and golden-section
//! refinement on a certified bracket.
//!
//! The golden-section routines track the best evaluation seen, so the
//! returned value never exceeds any probed value even when the objective is
//! not perfectly unimodal (e.g. grid-induced kinks in an otherwise convex
//! dual objective).

use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct GoldenResult<R> {
    pub best_x: R,
    pub best_f: R,
    pub bracket: (R, R),
    pub evaluations: usize,
}

/// Golden-section minimization of `f` on `[a, b]` down to interval width
/// `tol` (or `max_iter` shrink steps). Endpoint values may be supplied to
/// seed the best-seen tracking without re-evaluation.
pub fn golden_min<R: Real, F: FnMut(R) -> R>(
    mut f: F,
    a: R,
    b: R,
    tol: R,
    max_iter: usize,
) -> GoldenResult<R> {
    let inv_phi = (R::of(5.0).sqrt() - R::one()).half();
    let mut lo = a;
    let mut hi = b;
    let mut evaluations = 0usize;
    let mut best_x = lo;
    let mut best_f = R::infinity();

    let track = |x: R, fx: R, best_x: &mut R, best_f: &mut R| {
        if fx < *best_f {
            *best_f = fx;
            *best_x = x;
        }
    };

    let mut x1 = hi - (hi - lo) * inv_phi;
    let mut x2 = lo + (hi - lo) * inv_phi;
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    evaluations += 2;
    track(x1, f1, &mut best_x, &mut best_f);
    track(x2, f2, &mut best_x, &mut best_f);

    let mut iter = 0usize;
    while (hi - lo) > tol && iter < max_iter {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - (hi - lo) * inv_phi;
            f1 = f(x1);
            track(x1, f1, &mut best_x, &mut best_f);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + (hi - lo) * inv_phi;
            f2 = f(x2);
            track(x2, f2, &mut best_x, &mut best_f);
        }
        evaluations += 1;
        iter += 1;
    }

    GoldenResult {
        best_x,
        best_f,
        bracket: (lo, hi),
        evaluations,
    }
}

/// Golden-section maximization; returns the best point and value directly.
pub fn golden_max<R: Real, F: FnMut(R) -> R>(
    mut f: F,
    a: R,
    b: R,
    tol: R,
    max_iter: usize,
) -> (R, R) {
    let res = golden_min(|x| -f(x), a, b, tol, max_iter);
    (res.best_x, -res.best_f)
}
