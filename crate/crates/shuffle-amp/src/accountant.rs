//! The central privacy accountant.
//!
//! Given the clone-count distribution and the worst-case user's mixture
//! weight `w`, this module evaluates the amplified trade-off curve (a
//! binomial mixture indexed by a threshold parameter `t`), converts it to a
//! central `(epsilon, delta_s(epsilon))` statement via the threshold search
//! `t_epsilon`, cross-checks it with a direct dual-grid conversion, and
//! inverts it to `epsilon_s(delta)`.

use crate::clone_count::{binom_half_cdf, binom_half_pmf, CloneCountDistribution};
use crate::error::{Error, Result};
use crate::mechanisms::MechanismSpec;

/// Weights below this floor contribute nothing at double precision; the
/// accumulation loops skip them.
const WEIGHT_FLOOR: f64 = 1e-40;

/// Upper end of the threshold search range; beyond this the curve is flat
/// to machine precision.
const T_MAX: f64 = 1e12;

/// Everything the accountant needs about one shuffled batch.
#[derive(Debug, Clone)]
pub struct AmplificationInput {
    n: usize,
    w: f64,
    delta1: f64,
    counts: CloneCountDistribution,
}

impl AmplificationInput {
    /// Validates and assembles the input. `counts` must be the clone-count
    /// distribution over the `n - 1` non-worst-case users, so its support
    /// may not exceed `n - 1`.
    pub fn new(n: usize, w: f64, delta1: f64, counts: CloneCountDistribution) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("n must be at least 1".to_string()));
        }
        if !(w.is_finite() && (0.0..=0.5).contains(&w)) {
            return Err(Error::config(format!("w = {w} must lie in [0, 1/2]")));
        }
        if !(delta1.is_finite() && (0.0..1.0).contains(&delta1)) {
            return Err(Error::config(format!(
                "delta1 = {delta1} must lie in [0, 1)"
            )));
        }
        if counts.max_count() > n - 1 {
            return Err(Error::config(format!(
                "clone-count support reaches {} but only {} rest users exist",
                counts.max_count(),
                n - 1
            )));
        }
        Ok(AmplificationInput {
            n,
            w,
            delta1,
            counts,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn delta1(&self) -> f64 {
        self.delta1
    }

    pub fn counts(&self) -> &CloneCountDistribution {
        &self.counts
    }
}

/// One point of the amplified trade-off curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeoffPoint {
    pub t: f64,
    pub alpha: f64,
    pub f_value: f64,
}

/// A central `(epsilon, delta)` statement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBound {
    pub epsilon: f64,
    pub delta: f64,
}

/// Result of the threshold search: either the infimum threshold or the
/// sentinel saying the defining condition never holds on `[0, 1e12]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Finite(f64),
    NoFinite,
}

/// Result of inverting the bound at a delta target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonResult {
    pub epsilon: f64,
    /// False when even the local budget fails the target (no amplification
    /// could be certified).
    pub amplified: bool,
}

/// Type-I error of the threshold-`t` test:
/// `alpha(t) = sum_i w_i F_i(i - (i+1)/(t+1))`, nondecreasing in `t` with
/// `alpha(0) = 0`.
pub fn alpha_of_t(input: &AmplificationInput, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    let mut acc = 0.0;
    for (i, wi) in input.counts.iter() {
        if wi < WEIGHT_FLOOR {
            continue;
        }
        acc += wi * binom_half_cdf(i as u64, i as f64 - (i as f64 + 1.0) / (t + 1.0));
    }
    acc.clamp(0.0, 1.0)
}

/// Minimal type-II error of the threshold-`t` test, as a point on the
/// trade-off curve:
///
/// `f_s = (1 - d1) * (2w (1 - alpha) + (1 - 2w) sum_i w_i F_i(i+1 - (i+1)/(t+1)))
///        + d1 (1 - alpha)`.
pub fn f_s_at(input: &AmplificationInput, t: f64) -> TradeoffPoint {
    let alpha = alpha_of_t(input, t);
    let mut shifted = 0.0;
    for (i, wi) in input.counts.iter() {
        if wi < WEIGHT_FLOOR {
            continue;
        }
        shifted += wi * binom_half_cdf(i as u64, (i + 1) as f64 - (i as f64 + 1.0) / (t + 1.0));
    }
    let w = input.w;
    let d1 = input.delta1;
    let f_value =
        (1.0 - d1) * (2.0 * w * (1.0 - alpha) + (1.0 - 2.0 * w) * shifted) + d1 * (1.0 - alpha);
    TradeoffPoint { t, alpha, f_value }
}

/// Slope surrogate of the trade-off curve at threshold `t`:
///
/// `l(t) = - sum_i w_i f_i(floor(i+1 - (i+1)/(t+1)))
///         / sum_i w_i f_i(floor(i - (i+1)/(t+1)))`,
///
/// always `<= 0`. Returns `None` when the denominator vanishes, meaning `t`
/// is below the usable range (every count still has its whole pmf left of
/// the threshold); callers treat that as "condition not yet satisfiable"
/// and keep widening the search.
pub fn l_of_t(input: &AmplificationInput, t: f64) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, wi) in input.counts.iter() {
        if wi < WEIGHT_FLOOR {
            continue;
        }
        let shift = (i as f64 + 1.0) / (t + 1.0);
        num += wi * binom_half_pmf(i as u64, ((i + 1) as f64 - shift).floor() as i64);
        den += wi * binom_half_pmf(i as u64, (i as f64 - shift).floor() as i64);
    }
    if den > 0.0 {
        Some(-num / den)
    } else {
        None
    }
}

/// The threshold condition that defines `t_epsilon`:
/// `(1 - d1) * (-2w + (1 - 2w) l(t)) - d1 >= -e^eps`.
fn threshold_condition(input: &AmplificationInput, epsilon: f64, t: f64) -> bool {
    let w = input.w;
    let d1 = input.delta1;
    let lhs = if 1.0 - 2.0 * w == 0.0 {
        // The l(t) coefficient vanishes; no slope information needed.
        (1.0 - d1) * (-2.0 * w) - d1
    } else {
        match l_of_t(input, t) {
            Some(l) => (1.0 - d1) * (-2.0 * w + (1.0 - 2.0 * w) * l) - d1,
            None => return false,
        }
    };
    lhs >= -epsilon.exp()
}

/// Infimum threshold at which the slope condition first holds.
///
/// The bracket grows exponentially from `t = 1` until the condition flips
/// or `1e12` is exceeded (sentinel). Bisection then shrinks the bracket to
/// relative width `1e-12`. The condition is not assumed monotone: a
/// 256-point scan of the full bracket range afterwards looks for an
/// earlier satisfying region and, if one exists, refines that instead.
pub fn t_epsilon(input: &AmplificationInput, epsilon: f64) -> Threshold {
    debug_assert!(epsilon >= 0.0);
    let cond = |t: f64| threshold_condition(input, epsilon, t);
    if cond(0.0) {
        return Threshold::Finite(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while !cond(hi) {
        lo = hi;
        hi *= 2.0;
        if hi > T_MAX {
            return Threshold::NoFinite;
        }
    }
    let scan_limit = hi;
    let refine = |mut lo: f64, mut hi: f64| -> f64 {
        // cond(lo) is false, cond(hi) is true throughout.
        while hi - lo > 1e-12 * hi.max(1.0) {
            let mid = 0.5 * (lo + hi);
            if cond(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    let mut best = refine(lo, hi);
    // Guard against non-monotone conditions: look for an earlier satisfying
    // point anywhere in [0, scan_limit].
    let mut prev_t = 0.0;
    let mut prev_ok = false;
    for k in 1..=256 {
        let t = scan_limit * k as f64 / 256.0;
        if t >= best {
            break;
        }
        let ok = cond(t);
        if ok && !prev_ok {
            best = best.min(refine(prev_t, t));
        }
        prev_t = t;
        prev_ok = ok;
    }
    Threshold::Finite(best)
}

/// Evaluates the two tail sums of the central bound at threshold `t`.
fn tail_sums(input: &AmplificationInput, t: f64) -> (f64, f64) {
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for (i, wi) in input.counts.iter() {
        if wi < WEIGHT_FLOOR {
            continue;
        }
        let shift = (i as f64 + 1.0) / (t + 1.0);
        s1 += wi * binom_half_cdf(i as u64, i as f64 - shift);
        s2 += wi * binom_half_cdf(i as u64, (i + 1) as f64 - shift);
    }
    (s1, s2)
}

/// The normative central bound: `delta_s(epsilon)` evaluated at
/// `t_epsilon`, clamped to `[0, 1]`:
///
/// `delta_s = (-e^eps + (1 - d1) 2w + d1) S1 + (1 - d1)(1 - 2w) S2`
///
/// with `S1 = sum_i w_i F_i(i - (i+1)/(t+1))` and
/// `S2 = sum_i w_i F_i(i+1 - (i+1)/(t+1))`. When no finite threshold exists
/// on the search range, the dual-grid conversion of the trade-off curve is
/// used as the fallback value.
pub fn delta_s(input: &AmplificationInput, epsilon: f64) -> Result<PrivacyBound> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::config(format!("epsilon = {epsilon} must be >= 0")));
    }
    let delta = match t_epsilon(input, epsilon) {
        Threshold::Finite(t) => {
            let (s1, s2) = tail_sums(input, t);
            let w = input.w;
            let d1 = input.delta1;
            let raw = (-epsilon.exp() + (1.0 - d1) * 2.0 * w + d1) * s1
                + (1.0 - d1) * (1.0 - 2.0 * w) * s2;
            raw.clamp(0.0, 1.0)
        }
        Threshold::NoFinite => delta_s_dual(input, epsilon, 1024)?,
    };
    Ok(PrivacyBound { epsilon, delta })
}

/// Diagnostic dual conversion of the trade-off curve: the supremum of
/// `max(0, 1 - e^eps alpha(t) - f_s(alpha(t)))` over a logarithmic `t`
/// grid spanning `[1e-6, 1e6]`.
pub fn delta_s_dual(input: &AmplificationInput, epsilon: f64, grid_size: usize) -> Result<f64> {
    if grid_size < 2 {
        return Err(Error::config("dual grid needs at least 2 points".to_string()));
    }
    let (lo, hi) = (1e-6f64, 1e6f64);
    let ratio = (hi / lo).ln() / (grid_size - 1) as f64;
    let e_eps = epsilon.exp();
    let mut sup: f64 = 0.0;
    for k in 0..grid_size {
        let t = lo * ((k as f64) * ratio).exp();
        let pt = f_s_at(input, t);
        sup = sup.max(1.0 - e_eps * pt.alpha - pt.f_value);
    }
    Ok(sup.clamp(0.0, 1.0))
}

/// Smallest `epsilon` at which the bound settles below `delta_target`,
/// searched on `[0, eps1]` (the worst local budget) to absolute tolerance
/// `1e-6`.
///
/// `delta_s` decays in `epsilon` overall but is not pointwise monotone:
/// the threshold underneath moves between discrete plateaus, producing
/// local upticks (and, in deep small-`n` tails, dips to zero followed by
/// rebounds). A plain bisection could land inside such a dip, so the
/// search first scans a 128-point grid for the last point still above the
/// target and then bisects only the bracketing segment; the result
/// therefore also meets the target at every later grid point.
pub fn epsilon_s(
    input: &AmplificationInput,
    delta_target: f64,
    eps1: f64,
) -> Result<EpsilonResult> {
    if !(delta_target > 0.0 && delta_target < 1.0) {
        return Err(Error::config(format!(
            "delta_target = {delta_target} must lie in (0, 1)"
        )));
    }
    if !(eps1.is_finite() && eps1 > 0.0) {
        return Err(Error::config(format!("eps1 = {eps1} must be > 0")));
    }
    if delta_s(input, 0.0)?.delta <= delta_target {
        return Ok(EpsilonResult {
            epsilon: 0.0,
            amplified: true,
        });
    }
    if delta_s(input, eps1)?.delta > delta_target {
        return Ok(EpsilonResult {
            epsilon: eps1,
            amplified: false,
        });
    }
    // Coarse scan: the last grid point still above the target brackets the
    // final crossing even when the curve dips and rebounds in between.
    const SCAN: usize = 128;
    let mut lo = 0.0f64;
    let mut hi = eps1;
    for k in (0..SCAN).rev() {
        let eps = eps1 * k as f64 / SCAN as f64;
        if delta_s(input, eps)?.delta > delta_target {
            lo = eps;
            hi = eps1 * (k + 1) as f64 / SCAN as f64;
            break;
        }
    }
    // Invariant: delta_s(lo) > target >= delta_s(hi).
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if delta_s(input, mid)?.delta > delta_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(EpsilonResult {
        epsilon: hi,
        amplified: true,
    })
}

/// Picks the worst-case user: maximal `epsilon`, ties broken by larger
/// `delta`, then by lowest index. Returns `(index, epsilon1, delta1)`.
pub fn select_worst_user(specs: &[MechanismSpec]) -> Result<(usize, f64, f64)> {
    let mut best: Option<(usize, f64, f64)> = None;
    for (idx, s) in specs.iter().enumerate() {
        let better = match best {
            None => true,
            Some((_, e, d)) => s.epsilon > e || (s.epsilon == e && s.delta > d),
        };
        if better {
            best = Some((idx, s.epsilon, s.delta));
        }
    }
    best.ok_or_else(|| Error::config("user list is empty".to_string()))
}
