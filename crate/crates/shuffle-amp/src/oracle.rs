//! Brute-force ground truth for small populations.
//!
//! For small `n` the pair of clone-count mixtures the analyzer actually has
//! to distinguish can be materialized exactly: a clone count `C`, a fair
//! split `A ~ Binomial(C, 1/2)` of the clones between the two candidate
//! values, and the worst-case user's own report tipping one side or the
//! other with probability `w`. The hockey-stick divergence between the two
//! resulting distributions is the exact `delta` at a given `epsilon`, which
//! the accountant's closed-form bound is validated against.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::clone_count::{binom_half_pmf, CloneCountDistribution};
use crate::error::{Error, Result};

/// Guard for exact enumeration; larger populations go through the
/// Monte-Carlo spot check instead.
const EXACT_GUARD: usize = 20;

/// A distribution over pairs `(a, b)`: the number of reports attributed to
/// each of the worst-case user's two candidate values.
#[derive(Debug, Clone, PartialEq)]
pub struct JointCountDistribution {
    atoms: BTreeMap<(u32, u32), f64>,
}

impl JointCountDistribution {
    pub fn mass(&self, a: u32, b: u32) -> f64 {
        self.atoms.get(&(a, b)).copied().unwrap_or(0.0)
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&(u32, u32), &f64)> {
        self.atoms.iter()
    }

    pub fn total(&self) -> f64 {
        self.atoms.values().sum()
    }

    /// The same distribution with the two coordinates swapped.
    pub fn mirror(&self) -> JointCountDistribution {
        let atoms = self
            .atoms
            .iter()
            .map(|(&(a, b), &m)| ((b, a), m))
            .collect();
        JointCountDistribution { atoms }
    }
}

/// Exact joint pmf of `(a, b)` under the "null" mixture, in closed form:
/// the total count is `a + b - 1` clones plus the worst-case report, which
/// sits on the first coordinate with probability `1 - w`.
fn mixture_pmf(counts: &CloneCountDistribution, w: f64, a: u32, b: u32) -> f64 {
    if a + b == 0 {
        return 0.0;
    }
    let c = (a + b - 1) as u64;
    let wc = counts.weight(c as usize);
    if wc == 0.0 {
        return 0.0;
    }
    let own_on_a = if a > 0 {
        (1.0 - w) * binom_half_pmf(c, a as i64 - 1)
    } else {
        0.0
    };
    let own_on_b = w * binom_half_pmf(c, a as i64);
    wc * (own_on_a + own_on_b)
}

/// Materializes the exact pair `(P, Q)` of joint count distributions for a
/// clone-count distribution over at most [`EXACT_GUARD`] users.
///
/// `P` places, for each count `c` and split `a`, mass
/// `w_c f_c(a) (1 - w)` on `(a + 1, c - a)` and `w_c f_c(a) w` on
/// `(a, c - a + 1)`; `Q` is the coordinate mirror of `P`.
pub fn exact_mixture(
    counts: &CloneCountDistribution,
    w: f64,
) -> Result<(JointCountDistribution, JointCountDistribution)> {
    if !(w.is_finite() && (0.0..=0.5).contains(&w)) {
        return Err(Error::config(format!("w = {w} must lie in [0, 1/2]")));
    }
    if counts.max_count() + 1 > EXACT_GUARD {
        return Err(Error::config(format!(
            "exact enumeration is guarded at {EXACT_GUARD} users; use the accountant or the Monte-Carlo check"
        )));
    }
    let mut p = BTreeMap::new();
    for (c, wc) in counts.iter() {
        if wc == 0.0 {
            continue;
        }
        for a in 0..=c {
            let base = wc * binom_half_pmf(c as u64, a as i64);
            // Worst-case report on the first value...
            *p.entry(((a + 1) as u32, (c - a) as u32)).or_insert(0.0) += (1.0 - w) * base;
            // ...or confounded onto the second.
            *p.entry((a as u32, (c - a + 1) as u32)).or_insert(0.0) += w * base;
        }
    }
    let p = JointCountDistribution { atoms: p };
    let q = p.mirror();
    Ok((p, q))
}

/// Hockey-stick divergence `sum_s max(0, P(s) - e^eps Q(s))`: the smallest
/// `delta` for which `(epsilon, delta)`-indistinguishability of `P` from
/// `Q` holds.
pub fn hockey_stick(
    p: &JointCountDistribution,
    q: &JointCountDistribution,
    epsilon: f64,
) -> f64 {
    let e_eps = epsilon.exp();
    let mut acc = 0.0;
    for (&(a, b), &pm) in p.atoms() {
        let diff = pm - e_eps * q.mass(a, b);
        if diff > 0.0 {
            acc += diff;
        }
    }
    acc
}

/// Monte-Carlo spot check of the divergence for populations beyond the
/// enumeration guard: draws `(C, A, side)` under `P` and averages the
/// plug-in integrand `max(0, 1 - e^eps Q(s) / P(s))`, with both pmfs
/// evaluated in closed form. The estimate is unbiased, exactly zero when
/// `P = Q`, and bit-identical for a fixed seed. Returns
/// `(estimate, standard_error)`.
pub fn monte_carlo_divergence(
    counts: &CloneCountDistribution,
    w: f64,
    epsilon: f64,
    samples: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    if samples < 10_000 {
        return Err(Error::config(format!(
            "need at least 1e4 samples, got {samples}"
        )));
    }
    if !(w.is_finite() && (0.0..=0.5).contains(&w)) {
        return Err(Error::config(format!("w = {w} must lie in [0, 1/2]")));
    }
    // Cumulative weights for inverse-CDF sampling of the clone count.
    let cum: Vec<(usize, f64)> = {
        let mut acc = 0.0;
        counts
            .iter()
            .map(|(c, wc)| {
                acc += wc;
                (c, acc)
            })
            .collect()
    };
    let total = cum.last().map_or(0.0, |&(_, t)| t);
    let e_eps = epsilon.exp();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let u: f64 = rng.random_range(0.0..total);
        let c = cum
            .iter()
            .find(|&&(_, acc)| u < acc)
            .map(|&(c, _)| c)
            .unwrap_or_else(|| counts.max_count());
        // Fair split of the c clones.
        let mut a = 0u32;
        for _ in 0..c {
            if rng.random::<bool>() {
                a += 1;
            }
        }
        let b = (c as u32) - a;
        // The worst-case report lands on the first side w.p. 1 - w.
        let (a, b) = if rng.random_range(0.0..1.0) < w {
            (a, b + 1)
        } else {
            (a + 1, b)
        };
        let pm = mixture_pmf(counts, w, a, b);
        let qm = mixture_pmf(counts, w, b, a); // Q is the mirror of P.
        let v = (1.0 - e_eps * qm / pm).max(0.0);
        sum += v;
        sum_sq += v * v;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) / (n - 1.0);
    Ok((mean, var.sqrt()))
}
