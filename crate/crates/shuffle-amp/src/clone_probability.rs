//! Confounding ("clone") probabilities via likelihood-ratio tests.
//!
//! A shuffled report confounds the analyzer when it could plausibly have
//! come from either of the worst-case user's two neighboring values. For
//! the worst-case user themselves this is the classical binary-test error
//! [`p_neighbor`]; for every other user it is the probability that their
//! report lands where one of the worst-case densities dominates their own
//! ([`p_rest`]). Region boundaries are density crossings: solved in closed
//! form for Laplace pairs (piecewise log-linear densities) and by sign-scan
//! plus bisection refinement for everything else.

use crate::error::{Error, Result};
use crate::mechanisms::{normal_cdf, CalibratedMechanism, MechanismKind};

/// An open interval `(lo, hi)` of the real line; endpoints may be infinite.
/// Endpoints carry no probability mass under continuous mechanisms, so
/// open/closed bookkeeping reduces to this single representation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

/// A finite union of disjoint, sorted open intervals.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RejectionRegion {
    intervals: Vec<Interval>,
}

impl RejectionRegion {
    pub fn empty() -> Self {
        RejectionRegion::default()
    }

    /// Builds a region from raw intervals: drops empty ones, sorts and
    /// merges overlaps so the invariant (disjoint, sorted) always holds.
    pub fn from_intervals(mut raw: Vec<Interval>) -> Self {
        raw.retain(|iv| iv.lo < iv.hi);
        raw.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        let mut merged: Vec<Interval> = Vec::with_capacity(raw.len());
        for iv in raw {
            match merged.last_mut() {
                Some(last) if iv.lo <= last.hi => last.hi = last.hi.max(iv.hi),
                _ => merged.push(iv),
            }
        }
        RejectionRegion { intervals: merged }
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Set intersection of two regions (both stay sorted and disjoint).
    pub fn intersect(&self, other: &RejectionRegion) -> RejectionRegion {
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.intervals.len() && j < other.intervals.len() {
            let a = self.intervals[i];
            let b = other.intervals[j];
            let lo = a.lo.max(b.lo);
            let hi = a.hi.min(b.hi);
            if lo < hi {
                out.push(Interval { lo, hi });
            }
            if a.hi < b.hi {
                i += 1;
            } else {
                j += 1;
            }
        }
        RejectionRegion { intervals: out }
    }

    /// Probability mass of the region under `mech` located at `location`,
    /// as a sum of CDF differences.
    pub fn mass(&self, mech: &CalibratedMechanism, location: f64) -> Result<f64> {
        let mut acc = 0.0;
        for iv in &self.intervals {
            acc += mech.cdf(location, iv.hi)? - mech.cdf(location, iv.lo)?;
        }
        Ok(acc.clamp(0.0, 1.0))
    }
}

/// Outcome of the two one-sided tests for one report: mass attributed to
/// each of the worst-case user's values (after the delta failure
/// allowance) and their minimum, which is the usable clone probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypTestResult {
    /// Mass on the region where the worst-case "0" density dominates.
    pub p0: f64,
    /// Mass on the region where the worst-case "1" density dominates.
    pub p1_side: f64,
    /// `min(p0, p1_side)`.
    pub p: f64,
}

/// Clone probabilities for a full population: the worst-case user's `p1`
/// (the mixture weight `w`) plus the per-user test results for everyone
/// else.
#[derive(Debug, Clone, PartialEq)]
pub struct CloneProbabilities {
    pub p1: f64,
    pub rest: Vec<HypTestResult>,
}

impl CloneProbabilities {
    /// The per-user minimum clone probabilities `p_i`.
    pub fn p_rest(&self) -> Vec<f64> {
        self.rest.iter().map(|r| r.p).collect()
    }
}

/// Test error of distinguishing the worst-case user's two values through
/// their own randomizer: the mass their null density places on the
/// likelihood-ratio rejection region, minus the `delta/2` failure
/// allowance.
///
/// Closed forms: Laplace `0.5 e^(-eps/2)`; Gaussian
/// `max(0, Phi(-sensitivity / (2 sigma)) - delta/2)`; randomized response
/// `1 / (1 + e^eps)`.
pub fn p_neighbor(mech1: &CalibratedMechanism) -> Result<f64> {
    let spec = mech1.spec();
    Ok(match spec.kind {
        MechanismKind::Laplace => 0.5 * (-spec.epsilon / 2.0).exp(),
        MechanismKind::Gaussian => {
            (normal_cdf(-spec.sensitivity / (2.0 * mech1.scale())) - spec.delta / 2.0).max(0.0)
        }
        MechanismKind::RandomizedResponse => 1.0 / (1.0 + spec.epsilon.exp()),
    })
}

/// Random-response reduction baseline: the clone probability every
/// epsilon-LDP mechanism admits by factoring through binary randomized
/// response, `1 / (1 + e^eps)`.
pub fn baseline_p_rr(epsilon: f64) -> f64 {
    1.0 / (1.0 + epsilon.exp())
}

/// The two dominance regions for a report from `mech_i` at true value
/// `x_i`, tested against the worst-case user's densities located at `0` and
/// at `mech1`'s sensitivity:
///
/// * `U0 = { z : f1(z; 0) > f_i(z; x_i)  and  f1(z; 0) > f1(z; D) }`
/// * `U1 = { z : f1(z; D) > f_i(z; x_i)  and  f1(z; D) > f1(z; 0) }`
///
/// Inequalities are strict, so ties contribute nothing and the two regions
/// are disjoint by construction.
pub fn compute_regions(
    mech_i: &CalibratedMechanism,
    x_i: f64,
    mech1: &CalibratedMechanism,
) -> Result<(RejectionRegion, RejectionRegion)> {
    let d = mech1.spec().sensitivity;
    if !(0.0..=d).contains(&x_i) {
        return Err(Error::config(format!(
            "x_i = {x_i} must lie between the worst-case values 0 and {d}"
        )));
    }
    for m in [mech_i, mech1] {
        if m.spec().kind == MechanismKind::RandomizedResponse {
            return Err(Error::config(
                "dominance regions require continuous mechanisms".to_string(),
            ));
        }
    }
    let over_i_0 = dominance_region(mech1, 0.0, mech_i, x_i)?;
    let over_i_1 = dominance_region(mech1, d, mech_i, x_i)?;
    let zero_over_one = dominance_region(mech1, 0.0, mech1, d)?;
    let one_over_zero = dominance_region(mech1, d, mech1, 0.0)?;
    let u0 = over_i_0.intersect(&zero_over_one);
    let u1 = over_i_1.intersect(&one_over_zero);
    Ok((u0, u1))
}

/// One-sided test result for a single report: region masses under the
/// report's own density minus the `delta_i/2` failure allowance per side,
/// floored at zero.
pub fn p_rest(
    mech_i: &CalibratedMechanism,
    x_i: f64,
    mech1: &CalibratedMechanism,
) -> Result<HypTestResult> {
    let (u0, u1) = compute_regions(mech_i, x_i, mech1)?;
    let half_delta = mech_i.spec().delta / 2.0;
    let p0 = (u0.mass(mech_i, x_i)? - half_delta).max(0.0);
    let p1_side = (u1.mass(mech_i, x_i)? - half_delta).max(0.0);
    Ok(HypTestResult {
        p0,
        p1_side,
        p: p0.min(p1_side),
    })
}

/// Worst-case clone probability over the report's possible true values:
/// attained at one of the worst-case user's own values. For the symmetric
/// noise families supported here the two endpoints give equal `p` (checked
/// to 1e-9); the minimum is returned.
pub fn worst_case_p(mech_i: &CalibratedMechanism, mech1: &CalibratedMechanism) -> Result<f64> {
    Ok(worst_case_test(mech_i, mech1)?.p)
}

/// Like [`worst_case_p`] but returns the full one-sided breakdown at the
/// endpoint `x_i = 0` (the sides swap at the other endpoint; `p` and the
/// side product are endpoint-invariant).
pub fn worst_case_test(
    mech_i: &CalibratedMechanism,
    mech1: &CalibratedMechanism,
) -> Result<HypTestResult> {
    let d = mech1.spec().sensitivity;
    let at0 = p_rest(mech_i, 0.0, mech1)?;
    let at1 = p_rest(mech_i, d, mech1)?;
    if (at0.p - at1.p).abs() > 1e-9 {
        return Err(Error::numeric(format!(
            "endpoint asymmetry: p({}) = {} vs p({}) = {}",
            0.0, at0.p, d, at1.p
        )));
    }
    Ok(if at0.p <= at1.p { at0 } else { at1 })
}

/// Region `{ z : f_a(z; loc_a) > f_b(z; loc_b) }`.
///
/// Laplace-Laplace pairs are solved exactly piece by piece (log-densities
/// are piecewise linear); all other continuous pairs go through the
/// sign-scan fallback.
fn dominance_region(
    a: &CalibratedMechanism,
    loc_a: f64,
    b: &CalibratedMechanism,
    loc_b: f64,
) -> Result<RejectionRegion> {
    if a.spec().kind == MechanismKind::Laplace && b.spec().kind == MechanismKind::Laplace {
        Ok(dominance_region_laplace(
            loc_a,
            a.scale(),
            loc_b,
            b.scale(),
        ))
    } else {
        dominance_region_scan(a, loc_a, b, loc_b)
    }
}

/// Exact `{ z : f_a > f_b }` for two Laplace densities. The log-density
/// difference is linear on each of the three segments cut by the two
/// locations; roots are solved per segment.
fn dominance_region_laplace(loc_a: f64, ba: f64, loc_b: f64, bb: f64) -> RejectionRegion {
    // d(z) = -|z-la|/ba + |z-lb|/bb + ln(bb/ba); positive where f_a wins.
    let d = |z: f64| -(z - loc_a).abs() / ba + (z - loc_b).abs() / bb + (bb / ba).ln();
    let (m1, m2) = if loc_a <= loc_b {
        (loc_a, loc_b)
    } else {
        (loc_b, loc_a)
    };
    let mut out = Vec::new();
    // Left ray (-inf, m1]: slope 1/ba - 1/bb.
    push_linear_positive(&mut out, f64::NEG_INFINITY, m1, 1.0 / ba - 1.0 / bb, d(m1), m1);
    // Middle segment [m1, m2] (degenerate when locations coincide).
    if m1 < m2 {
        let slope = (d(m2) - d(m1)) / (m2 - m1);
        push_linear_positive(&mut out, m1, m2, slope, d(m1), m1);
    }
    // Right ray [m2, +inf): slope 1/bb - 1/ba.
    push_linear_positive(&mut out, m2, f64::INFINITY, 1.0 / bb - 1.0 / ba, d(m2), m2);
    RejectionRegion::from_intervals(out)
}

/// Appends the sub-interval of `[lo, hi]` on which the linear function with
/// the given `slope` and value `v_at` at the anchor point `at` is strictly
/// positive.
fn push_linear_positive(
    out: &mut Vec<Interval>,
    lo: f64,
    hi: f64,
    slope: f64,
    v_at: f64,
    at: f64,
) {
    if slope.abs() < 1e-300 {
        if v_at > 0.0 {
            out.push(Interval { lo, hi });
        }
        return;
    }
    let root = at - v_at / slope;
    if slope > 0.0 {
        let lo2 = lo.max(root);
        if lo2 < hi {
            out.push(Interval { lo: lo2, hi });
        }
    } else {
        let hi2 = hi.min(root);
        if lo < hi2 {
            out.push(Interval { lo, hi: hi2 });
        }
    }
}

/// Generic dominance region by sign-scan: 4096 initial cells spanning the
/// two locations padded by 40 scale units, each detected sign change
/// refined by bisection to width 1e-12 in `z`. Cells are far narrower than
/// any feature of the supported log-density differences (affine or
/// quadratic pieces), so no crossing is skipped.
pub(crate) fn dominance_region_scan(
    a: &CalibratedMechanism,
    loc_a: f64,
    b: &CalibratedMechanism,
    loc_b: f64,
) -> Result<RejectionRegion> {
    let smax = a.scale().max(b.scale());
    let lo = loc_a.min(loc_b) - 40.0 * smax;
    let hi = loc_a.max(loc_b) + 40.0 * smax;
    let n = 4096usize;
    let h = (hi - lo) / n as f64;
    let d = |z: f64| -> Result<f64> { Ok(a.log_density(loc_a, z)? - b.log_density(loc_b, z)?) };

    let mut vals = Vec::with_capacity(n + 1);
    for k in 0..=n {
        vals.push(d(lo + k as f64 * h)?);
    }
    // Crossing points between consecutive grid nodes of opposite sign.
    let mut cuts = Vec::new();
    for k in 0..n {
        let (v0, v1) = (vals[k], vals[k + 1]);
        if (v0 > 0.0) != (v1 > 0.0) {
            let (mut zl, mut zr) = (lo + k as f64 * h, lo + (k + 1) as f64 * h);
            let (mut dl, mut _dr) = (v0, v1);
            while zr - zl > 1e-12 {
                let zm = 0.5 * (zl + zr);
                let dm = d(zm)?;
                if (dm > 0.0) == (dl > 0.0) {
                    zl = zm;
                    dl = dm;
                } else {
                    zr = zm;
                    _dr = dm;
                }
            }
            cuts.push(0.5 * (zl + zr));
        }
    }
    // Stitch intervals: walk the cuts, tracking the sign left of each cut.
    let mut out = Vec::new();
    let mut start = if vals[0] > 0.0 {
        // Positive at the left edge: the dominance extends into the far
        // tail, where the mass is negligible either way; keep it exact by
        // extending to -infinity.
        Some(f64::NEG_INFINITY)
    } else {
        None
    };
    for &c in &cuts {
        match start.take() {
            Some(s) => out.push(Interval { lo: s, hi: c }),
            None => start = Some(c),
        }
    }
    if let Some(s) = start {
        out.push(Interval {
            lo: s,
            hi: f64::INFINITY,
        });
    }
    Ok(RejectionRegion::from_intervals(out))
}
