//! Shared numeric helpers: adaptive quadrature and grid construction.

use crate::error::{EcapError, Result};

/// `n` logarithmically spaced points from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// `n` linearly spaced points from `lo` to `hi` inclusive.
pub fn lin_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

#[derive(Clone, Copy)]
struct PairEstimate {
    a: f64,
    b: f64,
}

fn simpson_pair<F: Fn(f64) -> (f64, f64)>(
    f: &F,
    lo: f64,
    hi: f64,
    flo: (f64, f64),
    fmid: (f64, f64),
    fhi: (f64, f64),
) -> PairEstimate {
    let h = (hi - lo) / 6.0;
    let _ = f;
    PairEstimate {
        a: h * (flo.0 + 4.0 * fmid.0 + fhi.0),
        b: h * (flo.1 + 4.0 * fmid.1 + fhi.1),
    }
}

#[allow(clippy::too_many_arguments)]
fn adaptive_pair_rec<F: Fn(f64) -> (f64, f64)>(
    f: &F,
    lo: f64,
    hi: f64,
    flo: (f64, f64),
    fmid: (f64, f64),
    fhi: (f64, f64),
    whole: PairEstimate,
    tol: f64,
    depth: u32,
    converged: &mut bool,
) -> PairEstimate {
    let mid = 0.5 * (lo + hi);
    let fl = f(0.5 * (lo + mid));
    let fr = f(0.5 * (mid + hi));
    let left = simpson_pair(f, lo, mid, flo, fl, fmid);
    let right = simpson_pair(f, mid, hi, fmid, fr, fhi);
    let sum_a = left.a + right.a;
    let sum_b = left.b + right.b;
    let err_a = (sum_a - whole.a).abs();
    let err_b = (sum_b - whole.b).abs();
    // stop on the requested tolerance, or once the error estimate reaches the
    // rounding floor of the node values; integrands assembled from
    // exponentials of O(100)-sized logs carry up to ~1e-11 relative noise, so
    // pushing below that floor only recurses without gaining accuracy. The
    // floor references the largest sampled value rather than the integral
    // sums so that sign-cancelling integrands are covered too.
    let vmax_a = flo
        .0
        .abs()
        .max(fmid.0.abs())
        .max(fhi.0.abs())
        .max(fl.0.abs())
        .max(fr.0.abs());
    let vmax_b = flo
        .1
        .abs()
        .max(fmid.1.abs())
        .max(fhi.1.abs())
        .max(fl.1.abs())
        .max(fr.1.abs());
    let floor_a = 1e-11 * (hi - lo) * vmax_a;
    let floor_b = 1e-11 * (hi - lo) * vmax_b;
    if (err_a <= 15.0 * tol || err_a <= floor_a) && (err_b <= 15.0 * tol || err_b <= floor_b) {
        return PairEstimate {
            a: sum_a + (sum_a - whole.a) / 15.0,
            b: sum_b + (sum_b - whole.b) / 15.0,
        };
    }
    if depth == 0 || !*converged {
        *converged = false;
        return PairEstimate { a: sum_a, b: sum_b };
    }
    let l = adaptive_pair_rec(
        f,
        lo,
        mid,
        flo,
        fl,
        fmid,
        left,
        0.5 * tol,
        depth - 1,
        converged,
    );
    let r = adaptive_pair_rec(
        f,
        mid,
        hi,
        fmid,
        fr,
        fhi,
        right,
        0.5 * tol,
        depth - 1,
        converged,
    );
    PairEstimate {
        a: l.a + r.a,
        b: l.b + r.b,
    }
}

/// Adaptive Simpson quadrature of a pair of integrands over `[lo, hi]`,
/// subdividing at `breaks` first. Both components share the refinement so a
/// single pass integrates a density and its derivative together.
pub fn integrate_pair<F: Fn(f64) -> (f64, f64)>(
    f: F,
    lo: f64,
    hi: f64,
    breaks: &[f64],
    tol: f64,
) -> Result<(f64, f64)> {
    let mut edges: Vec<f64> = Vec::with_capacity(breaks.len() + 2);
    edges.push(lo);
    for &b in breaks {
        if b > lo && b < hi {
            edges.push(b);
        }
    }
    edges.push(hi);
    edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
    edges.dedup();

    let mut total = (0.0, 0.0);
    let mut converged = true;
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mid = 0.5 * (a + b);
        let (fa, fm, fb) = (f(a), f(mid), f(b));
        let whole = simpson_pair(&f, a, b, fa, fm, fb);
        let panel_tol = tol * (b - a).max(1e-3);
        let est = adaptive_pair_rec(&f, a, b, fa, fm, fb, whole, panel_tol, 28, &mut converged);
        total.0 += est.a;
        total.1 += est.b;
    }
    if !converged {
        return Err(EcapError::Numeric(
            "adaptive quadrature failed to converge".into(),
        ));
    }
    Ok(total)
}

/// Adaptive Simpson quadrature of a scalar integrand (used by test oracles as
/// well as production code, so it lives here rather than in test support).
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    breaks: &[f64],
    tol: f64,
) -> Result<f64> {
    integrate_pair(|x| (f(x), 0.0), lo, hi, breaks, tol).map(|(a, _)| a)
}
