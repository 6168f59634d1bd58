//! Gamma-medians of fields over subsets.
//!
//! The gamma-median of `f` over `A` is the least data value `a` with
//! `mu({x in A : f(x) > a}) < gamma * mu(A)`; the inequality is strict, so a
//! cumulative weight that exactly equals `gamma * mu(A)` does not qualify.
//! Near-equality of those two accumulated sums is resolved as equality within
//! a relative tolerance of 2^-40; with dyadic weights and dyadic gamma both
//! sides are exact in f64 and the tolerance never fires.

use alloc::vec::Vec;

use crate::error::{domain, Result};
use crate::math;
use crate::space::{Field, MSet, Space};

/// Median parameter restricted to the open interval (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct Gamma(f64);

impl Gamma {
    pub fn new(value: f64) -> Result<Gamma> {
        if value > 0.0 && value < 1.0 {
            Ok(Gamma(value))
        } else {
            Err(domain("gamma must lie strictly between 0 and 1"))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// `min(gamma, 1 - gamma)`, the parameter appearing in the bound of a
    /// median's absolute value by the median of the absolute value.
    pub fn min_with_complement(self) -> Gamma {
        Gamma(self.0.min(1.0 - self.0))
    }

    /// `gamma / c` for `c >= 1`, as used when passing to a containing set.
    pub fn scaled_down(self, c: f64) -> Result<Gamma> {
        if !(c >= 1.0) {
            return Err(domain("scaled_down needs c >= 1"));
        }
        Gamma::new(self.0 / c)
    }
}

const TIE_RTOL: f64 = 1.0 / (1u64 << 40) as f64;

/// Equality of accumulated masses within the documented relative tolerance.
pub(crate) fn mass_eq(a: f64, b: f64) -> bool {
    let scale = math::abs(a).max(math::abs(b));
    math::abs(a - b) <= TIE_RTOL * scale
}

/// `a < b` with near-equal values treated as equal (hence not less).
pub(crate) fn mass_lt(a: f64, b: f64) -> bool {
    a < b && !mass_eq(a, b)
}

/// `a >= b` with the same tie rule: near-equal counts as reached.
pub(crate) fn mass_ge(a: f64, b: f64) -> bool {
    !mass_lt(a, b)
}

/// Gamma-median of `f` over `A`. Errors when `A` is empty.
pub fn gamma_median(space: &Space, f: &Field, a: &MSet, gamma: Gamma) -> Result<f64> {
    space.check_field(f);
    space.check(a);
    let mut vals: Vec<(f64, f64)> = a.iter().map(|i| (f.value(i), space.weight(i))).collect();
    if vals.is_empty() {
        return Err(domain("gamma_median needs a set of positive measure"));
    }
    vals.sort_unstable_by(|x, y| x.0.total_cmp(&y.0));
    let mut mu_a = 0.0;
    for &(_, w) in &vals {
        mu_a += w;
    }
    let target = gamma.get() * mu_a;

    // Distinct values ascending with the mass strictly above each of them.
    let mut above = 0.0;
    let mut groups: Vec<(f64, f64)> = Vec::new(); // (value, mass strictly above)
    let mut i = vals.len();
    while i > 0 {
        let v = vals[i - 1].0;
        let mut group = 0.0;
        while i > 0 && vals[i - 1].0 == v {
            group += vals[i - 1].1;
            i -= 1;
        }
        groups.push((v, above));
        above += group;
    }
    // groups are in descending value order; the qualifying region is an upper
    // ray of values, so the answer is the last qualifying entry.
    let mut best = None;
    for &(v, above) in &groups {
        if mass_lt(above, target) {
            best = Some(v);
        } else {
            break;
        }
    }
    Ok(best.expect("the largest value always qualifies"))
}

/// Median of an indicator with intersection ratio `ratio = mu(S ∩ A)/mu(A)`:
/// 1 exactly when `gamma <= ratio` (ties included), else 0.
pub fn indicator_median(ratio: f64, gamma: Gamma) -> Result<f64> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(domain("indicator ratio must lie in [0, 1]"));
    }
    if mass_ge(ratio, gamma.get()) {
        Ok(1.0)
    } else {
        Ok(0.0)
    }
}

/// Medians at parameters `gamma - eps` for a positive strictly decreasing
/// sequence of epsilons below gamma. The values are nonincreasing along the
/// sequence and stabilize at the gamma-median itself.
pub fn median_gamma_limit(
    space: &Space,
    f: &Field,
    a: &MSet,
    gamma: Gamma,
    eps_seq: &[f64],
) -> Result<Vec<f64>> {
    if eps_seq.is_empty() {
        return Err(domain("median_gamma_limit needs at least one epsilon"));
    }
    for w in eps_seq.windows(2) {
        if !(w[1] < w[0]) {
            return Err(domain("epsilon sequence must be strictly decreasing"));
        }
    }
    let mut out = Vec::with_capacity(eps_seq.len());
    for &eps in eps_seq {
        if !(eps > 0.0) || eps >= gamma.get() {
            return Err(domain("epsilons must satisfy 0 < eps < gamma"));
        }
        out.push(gamma_median(space, f, a, Gamma::new(gamma.get() - eps)?)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Metric;

    fn unit_line(n: usize) -> Space {
        Space::grid(&[n], 1.0).unwrap()
    }

    /// Literal transcription of the definition: scan candidate thresholds in
    /// ascending order and return the first whose strictly-above mass drops
    /// below gamma * mu(A).
    fn median_oracle(space: &Space, f: &Field, a: &MSet, gamma: f64) -> f64 {
        let members = a.indices();
        let mu: f64 = members.iter().map(|&i| space.weight(i)).sum();
        let mut cands: Vec<f64> = members.iter().map(|&i| f.value(i)).collect();
        cands.sort_unstable_by(f64::total_cmp);
        for &c in &cands {
            let above: f64 = members
                .iter()
                .filter(|&&i| f.value(i) > c)
                .map(|&i| space.weight(i))
                .sum();
            if above < gamma * mu {
                return c;
            }
        }
        unreachable!("max candidate always qualifies")
    }

    #[test]
    fn median_on_even_split_indicator() {
        // mu(S ∩ A)/mu(A) = 0.5: gamma = 0.4 -> 1, gamma = 0.6 -> 0.
        let s = unit_line(4);
        let f = Field::new(&s, vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let a = MSet::full(&s);
        assert_eq!(
            gamma_median(&s, &f, &a, Gamma::new(0.4).unwrap()).unwrap(),
            1.0
        );
        assert_eq!(
            gamma_median(&s, &f, &a, Gamma::new(0.6).unwrap()).unwrap(),
            0.0
        );
        // exact tie keeps the upper value
        assert_eq!(
            gamma_median(&s, &f, &a, Gamma::new(0.5).unwrap()).unwrap(),
            1.0
        );
    }

    #[test]
    fn median_matches_oracle_on_mixed_weights() {
        let s = Space::cloud(
            1,
            vec![0.0, 1.0, 2.0, 3.0, 4.0],
            vec![0.5, 0.25, 1.0, 0.125, 2.0],
            Metric::Euclidean,
        )
        .unwrap();
        let f = Field::new(&s, vec![3.0, -1.0, 3.0, 0.5, -2.0]).unwrap();
        let a = MSet::full(&s);
        for g in [0.1, 0.25, 0.5, 0.75, 0.9] {
            let got = gamma_median(&s, &f, &a, Gamma::new(g).unwrap()).unwrap();
            let want = median_oracle(&s, &f, &a, g);
            assert_eq!(got, want, "gamma = {g}");
        }
    }

    #[test]
    fn indicator_median_boundary_is_half_open() {
        let g = Gamma::new(0.5).unwrap();
        assert_eq!(indicator_median(0.5, g).unwrap(), 1.0);
        assert_eq!(indicator_median(0.4999, g).unwrap(), 0.0);
        assert_eq!(indicator_median(1.0, g).unwrap(), 1.0);
        assert_eq!(indicator_median(0.0, g).unwrap(), 0.0);
        assert!(indicator_median(1.5, g).is_err());
    }

    #[test]
    fn indicator_median_consistent_with_gamma_median() {
        let s = unit_line(8);
        let sub = MSet::from_indices(&s, &[0, 1, 2]).unwrap();
        let f = Field::indicator(&s, &sub);
        let a = MSet::from_indices(&s, &[0, 1, 2, 3, 4, 5]).unwrap();
        let ratio = s.measure(&sub.intersect(&a)) / s.measure(&a); // 0.5
        for g in [0.25, 0.5, 0.75] {
            let gm = Gamma::new(g).unwrap();
            assert_eq!(
                gamma_median(&s, &f, &a, gm).unwrap(),
                indicator_median(ratio, gm).unwrap(),
                "gamma = {g}"
            );
        }
    }

    #[test]
    fn gamma_limit_is_monotone_and_stabilizes() {
        let s = unit_line(4);
        let f = Field::new(&s, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let a = MSet::full(&s);
        let gamma = Gamma::new(0.5).unwrap();
        let eps = [0.4, 0.2, 0.1, 0.01, 0.001, 0.0001];
        let vals = median_gamma_limit(&s, &f, &a, gamma, &eps).unwrap();
        for w in vals.windows(2) {
            assert!(w[1] <= w[0]);
        }
        let at_gamma = gamma_median(&s, &f, &a, gamma).unwrap();
        assert_eq!(*vals.last().unwrap(), at_gamma);
        assert!(vals.iter().all(|v| *v >= at_gamma));
    }

    #[test]
    fn empty_set_is_a_domain_error() {
        let s = unit_line(3);
        let f = Field::constant(&s, 1.0).unwrap();
        let empty = MSet::empty(&s);
        assert!(gamma_median(&s, &f, &empty, Gamma::new(0.5).unwrap()).is_err());
    }

    #[test]
    fn gamma_validation() {
        assert!(Gamma::new(0.0).is_err());
        assert!(Gamma::new(1.0).is_err());
        assert!(Gamma::new(f64::NAN).is_err());
        assert!(Gamma::new(0.5).is_ok());
    }
}
