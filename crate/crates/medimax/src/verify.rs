//! Property suites behind `medimax verify`: randomized checks of the median
//! laws, the maximal-operator identities, and the solver-versus-oracle
//! agreements. Weights, values, and thresholds are dyadic rationals so every
//! comparison that is exact on paper is exact in floating point too.

use std::collections::HashSet;

use medimax_core::basis::{countable_refinement, sets_at, BasisFamily, BasisKind};
use medimax_core::experiments::sample_points;
use medimax_core::hajlasz::{
    capacity, hajlasz_norm, is_s_gradient, oracle_capacity, oracle_hajlasz_norm, oracle_seq_norm,
    realized_annuli, seq_norm, CapacityOpts, FSpaceSpec, SolveControl,
};
use medimax_core::maximal::{indicator_superlevel, median_maximal, median_oscillation, EngineOpts};
use medimax_core::median::{gamma_median, indicator_median, median_gamma_limit, Gamma};
use medimax_core::space::{Field, MSet, Metric};
use medimax_core::Space;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::runner::lipschitz_sample;
use crate::CliError;

#[derive(Debug, Clone)]
pub struct Check {
    pub anchor: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn check(anchor: &'static str, body: impl FnOnce() -> Result<(), String>) -> Check {
    match body() {
        Ok(()) => Check {
            anchor,
            pass: true,
            detail: String::new(),
        },
        Err(detail) => Check {
            anchor,
            pass: false,
            detail,
        },
    }
}

/// Map a core error into a check failure message.
fn ce<T>(r: medimax_core::Result<T>) -> Result<T, String> {
    r.map_err(|e| format!("unexpected error: {e}"))
}

pub fn run_suite(name: &str, seed: u64) -> Result<Vec<Check>, CliError> {
    let mut checks = Vec::new();
    match name {
        "median" => median_suite(seed, &mut checks),
        "maximal" => maximal_suite(seed, &mut checks),
        "hajlasz" => hajlasz_suite(seed, &mut checks),
        "all" => {
            median_suite(seed, &mut checks);
            maximal_suite(seed, &mut checks);
            hajlasz_suite(seed, &mut checks);
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown suite '{other}'; expected all, median, maximal, or hajlasz"
            )))
        }
    }
    Ok(checks)
}

// ---------------------------------------------------------------- generators

struct Gen {
    rng: ChaCha8Rng,
}

impl Gen {
    fn new(seed: u64, salt: u64) -> Gen {
        Gen {
            rng: ChaCha8Rng::seed_from_u64(seed ^ salt),
        }
    }

    /// Point cloud with coordinates on the 1/8 lattice (all distinct) and
    /// weights k/64.
    fn space(&mut self) -> Space {
        let n = self.rng.gen_range(3..=10usize);
        let dim = self.rng.gen_range(1..=2usize);
        let mut seen = HashSet::new();
        let mut coords = Vec::new();
        while seen.len() < n {
            let pt: Vec<i32> = (0..dim).map(|_| self.rng.gen_range(0..=32)).collect();
            if seen.insert(pt.clone()) {
                coords.extend(pt.iter().map(|&k| f64::from(k) / 8.0));
            }
        }
        let weights: Vec<f64> = (0..n)
            .map(|_| f64::from(self.rng.gen_range(1..=64)) / 64.0)
            .collect();
        Space::cloud(dim, coords, weights, Metric::Euclidean).expect("valid cloud")
    }

    /// Values j/256 with |j| <= 512; exact under shifts by k/16 and dyadic
    /// scalings.
    fn field(&mut self, space: &Space) -> Field {
        let values: Vec<f64> = (0..space.len())
            .map(|_| f64::from(self.rng.gen_range(-512..=512)) / 256.0)
            .collect();
        Field::new(space, values).expect("finite values")
    }

    fn nonneg_field(&mut self, space: &Space) -> Field {
        let values: Vec<f64> = (0..space.len())
            .map(|_| f64::from(self.rng.gen_range(0..=512)) / 256.0)
            .collect();
        Field::new(space, values).expect("finite values")
    }

    fn subset(&mut self, space: &Space) -> MSet {
        loop {
            let mut set = MSet::empty(space);
            for i in 0..space.len() {
                if self.rng.gen_bool(0.5) {
                    set.insert(i);
                }
            }
            if !set.is_empty() {
                return set;
            }
        }
    }

    fn maybe_empty_subset(&mut self, space: &Space) -> MSet {
        let mut set = MSet::empty(space);
        for i in 0..space.len() {
            if self.rng.gen_bool(0.4) {
                set.insert(i);
            }
        }
        set
    }

    fn gamma(&mut self) -> Gamma {
        Gamma::new(f64::from(self.rng.gen_range(1..=63)) / 64.0).expect("in range")
    }
}

fn measure_of(space: &Space, set: &MSet) -> f64 {
    space.measure(set)
}

// ------------------------------------------------------------- median suite

fn median_suite(seed: u64, checks: &mut Vec<Check>) {
    checks.push(check("median.gamma-monotone", || {
        let mut g = Gen::new(seed, 0x01);
        for i in 0..200 {
            let sp = g.space();
            let f = g.field(&sp);
            let a = g.subset(&sp);
            let (mut g1, mut g2) = (g.gamma(), g.gamma());
            if g1.get() > g2.get() {
                std::mem::swap(&mut g1, &mut g2);
            }
            let m1 = ce(gamma_median(&sp, &f, &a, g1))?;
            let m2 = ce(gamma_median(&sp, &f, &a, g2))?;
            if m1 < m2 {
                return Err(format!(
                    "instance {i}: gamma {} gave {m1} below gamma {} giving {m2}",
                    g1.get(),
                    g2.get()
                ));
            }
        }
        Ok(())
    }));

    checks.push(check("median.function-monotone", || {
        let mut g = Gen::new(seed, 0x02);
        for i in 0..200 {
            let sp = g.space();
            let f = g.field(&sp);
            let h = g.nonneg_field(&sp);
            let sum: Vec<f64> = f
                .values()
                .iter()
                .zip(h.values())
                .map(|(a, b)| a + b)
                .collect();
            let fg = Field::new(&sp, sum).expect("finite");
            let a = g.subset(&sp);
            let gamma = g.gamma();
            let m_lo = ce(gamma_median(&sp, &f, &a, gamma))?;
            let m_hi = ce(gamma_median(&sp, &fg, &a, gamma))?;
            if m_lo > m_hi {
                return Err(format!("instance {i}: median dropped after adding h >= 0"));
            }
        }
        Ok(())
    }));

    checks.push(check("median.subset-localization", || {
        let mut g = Gen::new(seed, 0x03);
        for i in 0..200 {
            let sp = g.space();
            let f = g.field(&sp);
            let a = g.subset(&sp);
            let mut b = a.clone();
            for j in 0..sp.len() {
                if g.rng.gen_bool(0.5) {
                    b.insert(j);
                }
            }
            let c = measure_of(&sp, &b) / measure_of(&sp, &a);
            let gamma = g.gamma();
            let scaled = gamma.scaled_down(c).map_err(|e| format!("{e}"))?;
            let m_a = ce(gamma_median(&sp, &f, &a, gamma))?;
            let m_b = ce(gamma_median(&sp, &f, &b, scaled))?;
            if m_a > m_b {
                return Err(format!(
                    "instance {i}: localized median {m_a} exceeds {m_b} at gamma/{c}"
                ));
            }
        }
        Ok(())
    }));

    checks.push(check("median.shift-equivariance", || {
        let mut g = Gen::new(seed, 0x04);
        for i in 0..200 {
            let sp = g.space();
            let f = g.field(&sp);
            let a = g.subset(&sp);
            let gamma = g.gamma();
            let c = f64::from(g.rng.gen_range(-32..=32)) / 16.0;
            let shifted: Vec<f64> = f.values().iter().map(|v| v + c).collect();
            let fc = Field::new(&sp, shifted).expect("finite");
            let lhs = ce(gamma_median(&sp, &fc, &a, gamma))?;
            let rhs = ce(gamma_median(&sp, &f, &a, gamma))? + c;
            if lhs != rhs {
                return Err(format!("instance {i}: shift by {c} moved {rhs} to {lhs}"));
            }
        }
        Ok(())
    }));

    checks.push(check("median.positive-scaling", || {
        let mut g = Gen::new(seed, 0x05);
        for i in 0..200 {
            let sp = g.space();
            let f = g.field(&sp);
            let a = g.subset(&sp);
            let gamma = g.gamma();
            let c = (2.0f64).powi(g.rng.gen_range(-2..=3));
            let scaled: Vec<f64> = f.values().iter().map(|v| c * v).collect();
            let fc = Field::new(&sp, scaled).expect("finite");
            let lhs = ce(gamma_median(&sp, &fc, &a, gamma))?;
            let rhs = c * ce(gamma_median(&sp, &f, &a, gamma))?;
            if lhs != rhs {
                return Err(format!("instance {i}: scaling by {c} gave {lhs} not {rhs}"));
            }
        }
        Ok(())
    }));

    checks.push(check("median.absolute-bound", || {
        let mut g = Gen::new(seed, 0x06);
        for i in 0..200 {
            let sp = g.space();
            let f = g.field(&sp);
            let a = g.subset(&sp);
            let gamma = g.gamma();
            let lhs = ce(gamma_median(&sp, &f, &a, gamma))?.abs();
            let rhs = ce(gamma_median(&sp, &f.abs(), &a, gamma.min_with_complement()))?;
            if lhs > rhs {
                return Err(format!("instance {i}: |median| {lhs} above {rhs}"));
            }
        }
        Ok(())
    }));

    checks.push(check("median.split-subadditive", || {
        let mut g = Gen::new(seed, 0x07);
        for i in 0..200 {
            let sp = g.space();
            let f = g.field(&sp);
            let h = g.field(&sp);
            let sum: Vec<f64> = f
                .values()
                .iter()
                .zip(h.values())
                .map(|(a, b)| a + b)
                .collect();
            let fh = Field::new(&sp, sum).expect("finite");
            let a = g.subset(&sp);
            let num = g.rng.gen_range(2..=63);
            let split = g.rng.gen_range(1..num);
            let gamma = Gamma::new(f64::from(num) / 64.0).expect("in range");
            let g1 = Gamma::new(f64::from(split) / 64.0).expect("in range");
            let g2 = Gamma::new(f64::from(num - split) / 64.0).expect("in range");
            let lhs = ce(gamma_median(&sp, &fh, &a, gamma))?;
            let rhs =
                ce(gamma_median(&sp, &f, &a, g1))? + ce(gamma_median(&sp, &h, &a, g2))?;
            if lhs > rhs {
                return Err(format!("instance {i}: split bound {rhs} beaten by {lhs}"));
            }
        }
        Ok(())
    }));

    checks.push(check("median.power-mean-bound", || {
        let mut g = Gen::new(seed, 0x08);
        for i in 0..200 {
            let sp = g.space();
            let f = g.field(&sp);
            let a = g.subset(&sp);
            let gamma = g.gamma();
            let lhs = ce(gamma_median(&sp, &f.abs(), &a, gamma))?;
            for p in [0.5, 1.0, 2.0] {
                let mu = measure_of(&sp, &a);
                let avg: f64 = a
                    .iter()
                    .map(|j| sp.weight(j) * f.value(j).abs().powf(p))
                    .sum::<f64>()
                    / mu;
                let rhs = (avg / gamma.get()).powf(1.0 / p);
                if lhs > rhs + 1e-9 * (1.0 + rhs.abs()) {
                    return Err(format!(
                        "instance {i}: p={p} power mean bound {rhs} beaten by {lhs}"
                    ));
                }
            }
        }
        Ok(())
    }));

    checks.push(check("median.lipschitz-localization", || {
        let sp = ce(Space::grid_at(
            &[32, 32],
            1.0 / 32.0,
            &[0.5 / 32.0, 0.5 / 32.0],
            Metric::Euclidean,
        ))?;
        let (f, lip) = lipschitz_sample(&sp).map_err(|e| format!("{e}"))?;
        let family = ce(BasisFamily::new(BasisKind::Cubes, 0, 4, seed))?;
        let gamma = Gamma::new(0.25).expect("in range");
        for x in sample_points(&sp, 12, seed ^ 0x09) {
            let bands = ce(median_oscillation(&sp, &f, &family, x, gamma, 10_000))?;
            let last = bands.last().expect("nonempty scale grid");
            let dev = (last.hi - f.value(x)).abs().max((last.lo - f.value(x)).abs());
            if dev > lip * last.scale {
                return Err(format!(
                    "point {x}: deviation {dev} above {} at scale {}",
                    lip * last.scale,
                    last.scale
                ));
            }
        }
        Ok(())
    }));

    checks.push(check("median.l0-continuity", || {
        let mut g = Gen::new(seed, 0x0A);
        for i in 0..150 {
            let sp = g.space();
            let f = g.field(&sp);
            let dir: Vec<f64> = (0..sp.len())
                .map(|_| f64::from(g.rng.gen_range(-256..=256)) / 256.0)
                .collect();
            let a = g.subset(&sp);
            let gamma = g.gamma();
            let base = ce(gamma_median(&sp, &f, &a, gamma))?;
            let mut delta = 0.25;
            for _ in 0..16 {
                let perturbed: Vec<f64> = f
                    .values()
                    .iter()
                    .zip(&dir)
                    .map(|(v, d)| v + delta * d)
                    .collect();
                let fi = Field::new(&sp, perturbed).expect("finite");
                let m = ce(gamma_median(&sp, &fi, &a, gamma))?;
                if (m - base).abs() > delta {
                    return Err(format!(
                        "instance {i}: perturbation {delta} moved median by {}",
                        (m - base).abs()
                    ));
                }
                delta /= 2.0;
            }
        }
        Ok(())
    }));

    checks.push(check("median.set-continuity", || {
        let mut g = Gen::new(seed, 0x0B);
        for i in 0..150 {
            let sp = g.space();
            let f = g.field(&sp);
            let a = g.subset(&sp);
            let gamma = g.gamma();
            let target = ce(gamma_median(&sp, &f, &a, gamma))?;
            let order = a.indices();
            let mut last = f64::NAN;
            for take in 1..=order.len() {
                let part = MSet::from_indices(&sp, &order[..take]).map_err(|e| format!("{e}"))?;
                last = ce(gamma_median(&sp, &f, &part, gamma))?;
            }
            if last != target {
                return Err(format!(
                    "instance {i}: exhausted chain stabilized at {last}, full set gives {target}"
                ));
            }
        }
        Ok(())
    }));

    checks.push(check("median.indicator m^γ_{χ_A}", || {
        let mut g = Gen::new(seed, 0x0C);
        for i in 0..200 {
            let gamma = g.gamma();
            // force exact boundary hits on every fourth draw
            let ratio = if i % 4 == 0 {
                gamma.get()
            } else {
                f64::from(g.rng.gen_range(0..=64)) / 64.0
            };
            let got = ce(indicator_median(ratio, gamma))?;
            let want = if gamma.get() <= ratio { 1.0 } else { 0.0 };
            if got != want {
                return Err(format!(
                    "closed form: ratio {ratio} gamma {} gave {got} not {want}",
                    gamma.get()
                ));
            }
        }
        for i in 0..300 {
            let sp = g.space();
            let s = g.maybe_empty_subset(&sp);
            let a = g.subset(&sp);
            let gamma = g.gamma();
            let ratio = measure_of(&sp, &s.intersect(&a)) / measure_of(&sp, &a);
            let direct = ce(gamma_median(&sp, &Field::indicator(&sp, &s), &a, gamma))?;
            let formula = ce(indicator_median(ratio, gamma))?;
            if direct != formula {
                return Err(format!(
                    "instance {i}: indicator median {direct} but ratio formula says {formula} \
                     (ratio {ratio}, gamma {})",
                    gamma.get()
                ));
            }
        }
        Ok(())
    }));

    checks.push(check("median.oracle-threshold-scan", || {
        let mut g = Gen::new(seed, 0x0D);
        for i in 0..300 {
            let sp = g.space();
            let f = g.field(&sp);
            let a = g.subset(&sp);
            let gamma = g.gamma();
            let got = ce(gamma_median(&sp, &f, &a, gamma))?;
            let want = scan_oracle(&sp, &f, &a, gamma.get());
            if got != want {
                return Err(format!(
                    "instance {i}: library {got} versus threshold scan {want}"
                ));
            }
        }
        Ok(())
    }));

    checks.push(check("median.gamma-limit", || {
        let mut g = Gen::new(seed, 0x0E);
        for i in 0..150 {
            let sp = g.space();
            let f = g.field(&sp);
            let a = g.subset(&sp);
            let gamma = g.gamma();
            let target = ce(gamma_median(&sp, &f, &a, gamma))?;
            // stop the epsilon walk beneath the gap to the nearest mass
            // ratio below gamma, where stabilization must be exact
            let mu = measure_of(&sp, &a);
            let mut best_below = 0.0f64;
            for j in a.iter() {
                let above: f64 = a
                    .iter()
                    .filter(|&k| f.value(k) > f.value(j))
                    .map(|k| sp.weight(k))
                    .sum();
                let r = above / mu;
                if r < gamma.get() {
                    best_below = best_below.max(r);
                }
            }
            let gap = gamma.get() - best_below;
            let mut eps_seq = Vec::new();
            let mut eps = gamma.get() / 2.0;
            while eps > gap / 4.0 {
                eps_seq.push(eps);
                eps /= 2.0;
            }
            eps_seq.push(eps);
            let seq = ce(median_gamma_limit(&sp, &f, &a, gamma, &eps_seq))?;
            for w in seq.windows(2) {
                if w[1] > w[0] {
                    return Err(format!("instance {i}: sequence increased along epsilons"));
                }
            }
            if *seq.last().expect("nonempty") != target {
                return Err(format!(
                    "instance {i}: limit {} missed median {target}",
                    seq.last().expect("nonempty")
                ));
            }
        }
        Ok(())
    }));
}

/// Independent transcription of the median definition: ascending scan over
/// the restricted values, first one whose strictly-above mass is below
/// gamma * mu(A). Plain comparisons; dyadic data keeps it exact.
fn scan_oracle(space: &Space, f: &Field, a: &MSet, gamma: f64) -> f64 {
    let members = a.indices();
    let mu: f64 = members.iter().map(|&i| space.weight(i)).sum();
    let mut values: Vec<f64> = members.iter().map(|&i| f.value(i)).collect();
    values.sort_unstable_by(f64::total_cmp);
    for &v in &values {
        let above: f64 = members
            .iter()
            .filter(|&&i| f.value(i) > v)
            .map(|&i| space.weight(i))
            .sum();
        if above < gamma * mu {
            return v;
        }
    }
    *values.last().expect("nonempty set")
}

// ------------------------------------------------------------ maximal suite

/// Alternating 1D interval and 2D cube stages, both small enough for full
/// enumeration.
fn maximal_stage(stage: usize, seed: u64) -> (Space, BasisFamily) {
    if stage % 2 == 0 {
        let sp = Space::grid(&[32], 0.125).expect("valid grid");
        let family = BasisFamily::new(BasisKind::Balls, -2, 1, seed).expect("valid family");
        (sp, family)
    } else {
        let sp = Space::grid(&[8, 8], 0.125).expect("valid grid");
        let family = BasisFamily::new(BasisKind::Cubes, 0, 2, seed).expect("valid family");
        (sp, family)
    }
}

fn grid_dyadic_field(g: &mut Gen, space: &Space) -> Field {
    let values: Vec<f64> = (0..space.len())
        .map(|_| f64::from(g.rng.gen_range(0..=512)) / 256.0)
        .collect();
    Field::new(space, values).expect("finite values")
}

fn maximal_suite(seed: u64, checks: &mut Vec<Check>) {
    checks.push(check("maximal.level-set-identity", || {
        let mut g = Gen::new(seed, 0x20);
        for i in 0..24 {
            let (sp, family) = maximal_stage(i, seed);
            let f = grid_dyadic_field(&mut g, &sp);
            let gamma = g.gamma();
            let pick = g.rng.gen_range(0..sp.len());
            let lambda = f.value(pick);
            let coarsest = family.coarsest();
            let s_set = f.super_level(&sp, lambda);
            let mut left = MSet::empty(&sp);
            let mut right = MSet::empty(&sp);
            for x in 0..sp.len() {
                let sets = ce(sets_at(&sp, &family, x, coarsest, 10_000))?;
                let mut sup = f64::NEG_INFINITY;
                let mut qualifies = false;
                for b in &sets {
                    sup = sup.max(ce(gamma_median(&sp, &f, &b.members, gamma))?);
                    let ratio =
                        measure_of(&sp, &s_set.intersect(&b.members)) / measure_of(&sp, &b.members);
                    if ce(indicator_median(ratio, gamma))? == 1.0 {
                        qualifies = true;
                    }
                }
                if sup > lambda {
                    left.insert(x);
                }
                if qualifies {
                    right.insert(x);
                }
            }
            if left != right {
                return Err(format!(
                    "instance {i}: {{M f > λ}} has {} points, indicator form {}",
                    left.card(),
                    right.card()
                ));
            }
        }
        Ok(())
    }));

    checks.push(check("maximal.engine-matches-enumeration", || {
        let mut g = Gen::new(seed, 0x21);
        for i in 0..24 {
            let (sp, family) = maximal_stage(i, seed);
            let f = grid_dyadic_field(&mut g, &sp);
            let gamma = g.gamma();
            let pick = g.rng.gen_range(0..sp.len());
            let lambda = f.value(pick);
            let s_set = f.super_level(&sp, lambda);
            let coarsest = family.coarsest();
            let mut by_enum = MSet::empty(&sp);
            for x in 0..sp.len() {
                let sets = ce(sets_at(&sp, &family, x, coarsest, 10_000))?;
                for b in &sets {
                    let ratio =
                        measure_of(&sp, &s_set.intersect(&b.members)) / measure_of(&sp, &b.members);
                    if ce(indicator_median(ratio, gamma))? == 1.0 {
                        by_enum.insert(x);
                        break;
                    }
                }
            }
            let (by_engine, _) = ce(indicator_superlevel(
                &sp,
                &s_set,
                &family,
                gamma,
                coarsest,
                &EngineOpts::default(),
            ))?;
            if by_enum != by_engine {
                return Err(format!(
                    "instance {i}: engine found {} points, enumeration {}",
                    by_engine.card(),
                    by_enum.card()
                ));
            }
        }
        Ok(())
    }));

    checks.push(check("maximal.gamma-monotone", || {
        let mut g = Gen::new(seed, 0x22);
        for i in 0..16 {
            let (sp, family) = maximal_stage(i, seed);
            let f = grid_dyadic_field(&mut g, &sp);
            let (mut g1, mut g2) = (g.gamma(), g.gamma());
            if g1.get() > g2.get() {
                std::mem::swap(&mut g1, &mut g2);
            }
            for x in sample_points(&sp, 8, seed ^ i as u64) {
                let m1 = ce(median_maximal(&sp, &f, &family, x, g1, 10_000))?;
                let m2 = ce(median_maximal(&sp, &f, &family, x, g2, 10_000))?;
                if m1 < m2 {
                    return Err(format!(
                        "instance {i} point {x}: gamma {} gave {m1} under gamma {} giving {m2}",
                        g1.get(),
                        g2.get()
                    ));
                }
            }
        }
        Ok(())
    }));

    checks.push(check("maximal.refinement-sandwich", || {
        let mut g = Gen::new(seed, 0x23);
        for i in 0..12 {
            let (sp, family) = maximal_stage(i, seed);
            let refined = countable_refinement(&family);
            let f = grid_dyadic_field(&mut g, &sp);
            let gamma = g.gamma();
            let halved = gamma.scaled_down(2.0).map_err(|e| format!("{e}"))?;
            for x in sample_points(&sp, 8, seed ^ ((i as u64) << 8)) {
                let base = ce(median_maximal(&sp, &f, &family, x, gamma, 10_000))?;
                let fine = ce(median_maximal(&sp, &f, &refined, x, gamma, 10_000))?;
                let relaxed = ce(median_maximal(&sp, &f, &family, x, halved, 10_000))?;
                if base > fine + 1e-12 || fine > relaxed + 1e-12 {
                    return Err(format!(
                        "instance {i} point {x}: sandwich {base} <= {fine} <= {relaxed} broken"
                    ));
                }
            }
        }
        Ok(())
    }));
}

// ------------------------------------------------------------ hajlasz suite

/// Small cloud with distinct snapped coordinates; at most `n_max` points.
fn small_cloud(g: &mut Gen, n_max: usize) -> Space {
    let n = g.rng.gen_range(3..=n_max);
    let mut seen = HashSet::new();
    let mut coords = Vec::new();
    while seen.len() < n {
        let pt: Vec<i32> = (0..2).map(|_| g.rng.gen_range(0..=8)).collect();
        if seen.insert(pt.clone()) {
            coords.extend(pt.iter().map(|&k| f64::from(k) / 8.0));
        }
    }
    let weights: Vec<f64> = (0..n)
        .map(|_| f64::from(g.rng.gen_range(1..=16)) / 16.0)
        .collect();
    Space::cloud(2, coords, weights, Metric::Euclidean).expect("valid cloud")
}

fn unit_field(g: &mut Gen, space: &Space) -> Field {
    let values: Vec<f64> = (0..space.len())
        .map(|_| f64::from(g.rng.gen_range(0..=32)) / 16.0)
        .collect();
    Field::new(space, values).expect("finite values")
}

fn hajlasz_suite(seed: u64, checks: &mut Vec<Check>) {
    let control = SolveControl::default();

    checks.push(check("hajlasz.norm-vs-oracle", || {
        let mut g = Gen::new(seed, 0x40);
        for i in 0..6 {
            let sp = small_cloud(&mut g, 4);
            let u = unit_field(&mut g, &sp);
            let p = if i % 2 == 0 { 1.0 } else { 2.0 };
            let s = if i % 3 == 0 { 1.0 } else { 0.5 };
            let (solved, _) = ce(hajlasz_norm(&sp, &u, s, p, &control))?;
            let oracle = ce(oracle_hajlasz_norm(&sp, &u, s, p))?;
            if (solved - oracle).abs() > 1e-3 * (1.0 + oracle) {
                return Err(format!(
                    "instance {i}: solver {solved} versus oracle {oracle} (s={s}, p={p})"
                ));
            }
        }
        Ok(())
    }));

    checks.push(check("hajlasz.seq-norm-vs-oracle", || {
        let mut g = Gen::new(seed, 0x41);
        let mut done = 0;
        let mut attempts = 0;
        while done < 4 && attempts < 200 {
            attempts += 1;
            let sp = small_cloud(&mut g, 3);
            // keep the annulus count low enough for the oracle's variable cap
            let Some((k_lo, k_hi)) = ce(realized_annuli(&sp))? else {
                continue;
            };
            let groups = (k_hi - k_lo + 1) as usize;
            if groups * sp.len() > 9 {
                continue;
            }
            let u = unit_field(&mut g, &sp);
            let spec = if done % 2 == 0 {
                ce(FSpaceSpec::mpq(0.5, 2.0, 2.0))?
            } else {
                ce(FSpaceSpec::npq(0.5, 2.0, 2.0))?
            };
            let (solved, _) = ce(seq_norm(&sp, &u, &spec, &control))?;
            let oracle = ce(oracle_seq_norm(&sp, &u, &spec))?;
            if (solved - oracle).abs() > 2e-3 * (1.0 + oracle) {
                return Err(format!(
                    "attempt {attempts}: solver {solved} versus oracle {oracle}"
                ));
            }
            done += 1;
        }
        if done < 4 {
            return Err("could not build enough small-annulus instances".to_string());
        }
        Ok(())
    }));

    checks.push(check("hajlasz.capacity-vs-oracle", || {
        let mut g = Gen::new(seed, 0x42);
        let opts = CapacityOpts::default();
        for i in 0..4 {
            let sp = small_cloud(&mut g, 3);
            let e = {
                let mut set = MSet::empty(&sp);
                set.insert(g.rng.gen_range(0..sp.len()));
                set
            };
            let spec = ce(FSpaceSpec::mp(0.5, 2.0))?;
            let (solved, _) = ce(capacity(&sp, &e, &spec, &opts))?;
            let oracle = ce(oracle_capacity(&sp, &e, &spec, opts.rho))?;
            if (solved - oracle).abs() > 2e-3 * (1.0 + oracle) {
                return Err(format!(
                    "instance {i}: solver {solved} versus oracle {oracle}"
                ));
            }
        }
        Ok(())
    }));

    checks.push(check("hajlasz.capacity-monotone", || {
        let mut g = Gen::new(seed, 0x43);
        let opts = CapacityOpts::default();
        let spec = FSpaceSpec::mp(0.5, 2.0).expect("valid spec");
        for i in 0..8 {
            let sp = small_cloud(&mut g, 8);
            let f_set = g.subset(&sp);
            let order = f_set.indices();
            let take = g.rng.gen_range(1..=order.len());
            let e_set = MSet::from_indices(&sp, &order[..take]).map_err(|e| format!("{e}"))?;
            let (cap_e, _) = ce(capacity(&sp, &e_set, &spec, &opts))?;
            let (cap_f, _) = ce(capacity(&sp, &f_set, &spec, &opts))?;
            if cap_e > cap_f * (1.0 + 1e-5) + 1e-6 {
                return Err(format!(
                    "instance {i}: subset capacity {cap_e} above superset {cap_f}"
                ));
            }
        }
        Ok(())
    }));

    checks.push(check("hajlasz.gradient-certificate", || {
        let mut g = Gen::new(seed, 0x44);
        for i in 0..6 {
            let sp = small_cloud(&mut g, 5);
            let u = unit_field(&mut g, &sp);
            let s = 0.5;
            let (_, witness) = ce(hajlasz_norm(&sp, &u, s, 2.0, &control))?;
            // inflate slightly: the solver meets constraints to tolerance
            let inflated: Vec<f64> = witness
                .values()
                .iter()
                .map(|v| v * (1.0 + 1e-5) + 1e-5)
                .collect();
            let gfield = Field::new(&sp, inflated).expect("finite");
            let (ok, violation) = ce(is_s_gradient(&sp, &u, &gfield, s))?;
            if !ok {
                return Err(format!(
                    "instance {i}: inflated witness rejected, violation {violation:?}"
                ));
            }
        }
        Ok(())
    }));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_suite_is_usage_error() {
        assert!(matches!(run_suite("bogus", 1), Err(CliError::Usage(_))));
    }

    #[test]
    fn median_suite_passes_on_default_seed() {
        let checks = run_suite("median", 17).unwrap();
        assert!(checks.len() >= 12);
        for c in &checks {
            assert!(c.pass, "{} failed: {}", c.anchor, c.detail);
        }
    }

    #[test]
    fn suites_are_deterministic_in_seed() {
        let a = run_suite("median", 3).unwrap();
        let b = run_suite("median", 3).unwrap();
        let pass_a: Vec<bool> = a.iter().map(|c| c.pass).collect();
        let pass_b: Vec<bool> = b.iter().map(|c| c.pass).collect();
        assert_eq!(pass_a, pass_b);
    }
}
