//! Measurement harnesses: density points, Lebesgue points, weak-type and
//! L^p constants, continuity in measure, and finiteness scans, each emitting
//! a deterministic machine-readable report.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::{scale_set_budget, sets_at, BasisFamily, SetParams};
use crate::error::{domain, Result};
use crate::math;
use crate::maximal::{
    abs_value_grid, indicator_superlevel, median_maximal_field, median_maximal_sampled,
    median_oscillation, EngineOpts,
};
use crate::median::{gamma_median, mass_ge, Gamma};
use crate::space::{lp_norm, Field, MSet, Space};

/// One measurement row: ordered (name, value) pairs so serialization is
/// byte-deterministic.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Row {
    pub fields: Vec<(String, f64)>,
}

impl Row {
    pub fn new(fields: &[(&str, f64)]) -> Row {
        Row {
            fields: fields.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }
}

/// Experiment output. Every constant in `summary` is the observed extreme
/// over the declared sample, never an extrapolation.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Report {
    pub kind: String,
    pub meta: Vec<(String, String)>,
    pub rows: Vec<Row>,
    pub summary: Vec<(String, f64)>,
    pub verdicts: Vec<(String, bool)>,
    pub caveats: Vec<String>,
}

impl Report {
    pub fn new(kind: &str) -> Report {
        Report {
            kind: kind.to_string(),
            meta: Vec::new(),
            rows: Vec::new(),
            summary: Vec::new(),
            verdicts: Vec::new(),
            caveats: Vec::new(),
        }
    }

    fn meta(&mut self, key: &str, value: String) {
        self.meta.push((key.to_string(), value));
    }

    pub fn summary_value(&self, key: &str) -> Option<f64> {
        self.summary
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| *v)
    }

    pub fn verdict(&self, key: &str) -> Option<bool> {
        self.verdicts.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    pub fn all_verdicts_hold(&self) -> bool {
        self.verdicts.iter().all(|(_, v)| *v)
    }
}

fn family_meta(report: &mut Report, space: &Space, family: &BasisFamily) {
    report.meta("family", family.descriptor());
    report.meta(
        "scales",
        format!("2^-{}..2^-{}", family.k_min, family.k_max),
    );
    report.meta("seed", format!("{}", family.seed));
    let shape = match space.grid_info() {
        Some(g) => format!("{:?}", g.shape),
        None => format!("{} points", space.len()),
    };
    report.meta("space", shape);
}

/// Deterministic sample of distinct points.
pub fn sample_points(space: &Space, count: usize, seed: u64) -> Vec<usize> {
    let n = space.len();
    if count >= n {
        return (0..n).collect();
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9011_57AD);
    idx.shuffle(&mut rng);
    idx.truncate(count);
    idx.sort_unstable();
    idx
}

/// Fraction of sampled points, per scale, whose indicator averages over
/// sampled sets stray from the point's own indicator value by more than
/// `tol`. On a density basis the fractions decay toward zero with the scale
/// and every failure sits within one scale of the target's boundary: a set of
/// diameter below `s` whose average differs from `chi_A(x)` must contain a
/// point from the other side of the boundary, at distance below `s` from `x`.
pub fn density_test(
    space: &Space,
    family: &BasisFamily,
    sets: &[(String, MSet)],
    points: usize,
    budget: usize,
    tol: f64,
    seed: u64,
) -> Result<Report> {
    if sets.is_empty() {
        return Err(domain("density test needs at least one set"));
    }
    let mut report = Report::new("density");
    family_meta(&mut report, space, family);
    report.meta("tol", format!("{tol}"));
    let xs = sample_points(space, points, seed);
    let scales = family.scale_grid();
    let mut fractions = Vec::new();
    let mut stray = 0usize;
    for &s in &scales {
        let mut fails = 0usize;
        let mut total = 0usize;
        for &x in &xs {
            // budget counts cells, so coarse scales sample and fine enumerate
            let bs = sets_at(space, family, x, s, scale_set_budget(space, s, budget))?;
            for (_, a) in sets {
                total += 1;
                let chi = if a.contains(x) { 1.0 } else { 0.0 };
                let mut worst = 0.0f64;
                for b in &bs {
                    let mut hit = 0.0;
                    let mut all = 0.0;
                    for y in b.members.iter() {
                        let w = space.weight(y);
                        all += w;
                        if a.contains(y) {
                            hit += w;
                        }
                    }
                    worst = worst.max(math::abs(hit / all - chi));
                }
                if worst > tol {
                    fails += 1;
                    if boundary_distance(space, a, x) >= s {
                        stray += 1;
                    }
                }
            }
        }
        let fraction = fails as f64 / total as f64;
        fractions.push(fraction);
        report.rows.push(Row::new(&[
            ("scale", s),
            ("fail_fraction", fraction),
        ]));
    }
    let last = *fractions.last().unwrap();
    report.summary.push(("final_fail_fraction".into(), last));
    report.summary.push(("stray_failures".into(), stray as f64));
    report
        .verdicts
        .push(("density.failures-at-boundary".into(), stray == 0));
    let trend = fractions.windows(2).all(|w| w[1] <= w[0] + 0.05);
    report
        .verdicts
        .push(("density.fractions-trend-down".into(), trend));
    Ok(report)
}

/// Distance from `x` to the nearest point on the other side of the indicator
/// boundary of `a` (infinite when no such point exists).
fn boundary_distance(space: &Space, a: &MSet, x: usize) -> f64 {
    let inside = a.contains(x);
    let mut best = f64::INFINITY;
    for y in 0..space.len() {
        if a.contains(y) != inside {
            best = best.min(space.distance(x, y));
        }
    }
    best
}

/// Fraction of sampled points, per scale and gamma, where some sampled set
/// at that scale has a gamma-median further than the scale-dependent
/// tolerance `tol_floor + tol_slope * scale` from the point value.
#[allow(clippy::too_many_arguments)]
pub fn lebesgue_point_test(
    space: &Space,
    family: &BasisFamily,
    f: &Field,
    gammas: &[Gamma],
    points: usize,
    budget: usize,
    tol_floor: f64,
    tol_slope: f64,
    seed: u64,
) -> Result<Report> {
    if gammas.is_empty() {
        return Err(domain("lebesgue point test needs at least one gamma"));
    }
    let mut report = Report::new("lebesgue");
    family_meta(&mut report, space, family);
    report.meta("tol", format!("{tol_floor} + {tol_slope} * scale"));
    let xs = sample_points(space, points, seed);
    let mut final_fraction = 0.0f64;
    for &gamma in gammas {
        let mut bands = Vec::with_capacity(xs.len());
        for &x in &xs {
            bands.push(median_oscillation(space, f, family, x, gamma, budget)?);
        }
        let scales = family.scale_grid();
        for (si, &s) in scales.iter().enumerate() {
            let tol = tol_floor + tol_slope * s;
            let mut fails = 0usize;
            for (bi, &x) in xs.iter().enumerate() {
                let band = bands[bi][si];
                let dev = math::abs(band.hi - f.value(x)).max(math::abs(band.lo - f.value(x)));
                if dev > tol {
                    fails += 1;
                }
            }
            let fraction = fails as f64 / xs.len() as f64;
            report.rows.push(Row::new(&[
                ("gamma", gamma.get()),
                ("scale", s),
                ("tol", tol),
                ("fail_fraction", fraction),
            ]));
            if si + 1 == scales.len() {
                final_fraction = final_fraction.max(fraction);
            }
        }
    }
    report
        .summary
        .push(("final_fail_fraction".into(), final_fraction));
    report.verdicts.push((
        "lebesgue.final-fraction-zero".into(),
        final_fraction == 0.0,
    ));
    Ok(report)
}

/// Restricted weak-type constant: the largest observed ratio
/// `mu({Mf > lambda}) / mu({|f| > lambda})` over inputs and lambda values.
/// 0/0 rows are skipped; a positive numerator over a zero denominator flags
/// the constant as infinite.
pub fn weak_type_constant(
    space: &Space,
    family: &BasisFamily,
    gamma: Gamma,
    inputs: &[(String, Field)],
    lambda_override: Option<&[f64]>,
    opts: &EngineOpts,
) -> Result<Report> {
    if inputs.is_empty() {
        return Err(domain("weak type scan needs at least one input"));
    }
    let mut report = Report::new("weaktype");
    family_meta(&mut report, space, family);
    report.meta("gamma", format!("{}", gamma.get()));
    let mut c_est = 0.0f64;
    let mut infinite = false;
    let mut truncated = false;
    for (ii, (name, f)) in inputs.iter().enumerate() {
        let grid: Vec<f64> = match lambda_override {
            Some(g) => g.to_vec(),
            None => {
                // both distribution functions are right-continuous steps that
                // change only at |f| values, so these lambdas (plus 0 when
                // absent) witness the ratio for every real lambda
                let mut g = abs_value_grid(f);
                if g.first().is_some_and(|v| *v > 0.0) {
                    g.insert(0, 0.0);
                }
                g
            }
        };
        for &lam in &grid {
            let s_lam = f.super_level(space, lam);
            let mu_s = space.measure(&s_lam);
            let (t, info) =
                indicator_superlevel(space, &s_lam, family, gamma, family.coarsest(), opts)?;
            truncated |= info.truncated;
            let mu_t = space.measure(&t);
            let ratio = if mu_s > 0.0 {
                mu_t / mu_s
            } else if mu_t > 0.0 {
                infinite = true;
                f64::INFINITY
            } else {
                continue; // 0/0: nothing to report at this level
            };
            c_est = c_est.max(ratio);
            report.rows.push(Row::new(&[
                ("input", ii as f64),
                ("lambda", lam),
                ("mu_super_f", mu_s),
                ("mu_super_max", mu_t),
                ("ratio", ratio),
            ]));
        }
        let _ = name;
    }
    report.summary.push(("c_est".into(), c_est));
    report
        .summary
        .push(("c_est_infinite".into(), f64::from(u8::from(infinite))));
    report
        .verdicts
        .push(("weaktype.finite".into(), !infinite));
    if truncated {
        report
            .caveats
            .push("engine budget truncated the enumeration; c_est is a lower estimate".into());
    }
    Ok(report)
}

/// Largest `||Mf||_p / ||f||_p` per exponent, cross-checked against the
/// layer-cake bound `(c_est * p)^(1/p)` with `c_est` either supplied or
/// measured on the same inputs over their full value grids.
pub fn lp_bound(
    space: &Space,
    family: &BasisFamily,
    gamma: Gamma,
    p_list: &[f64],
    inputs: &[(String, Field)],
    c_est_override: Option<f64>,
    opts: &EngineOpts,
) -> Result<Report> {
    if p_list.iter().any(|p| !(*p >= 1.0)) {
        return Err(domain("layer-cake cross-check needs p >= 1"));
    }
    let mut report = Report::new("lpbound");
    family_meta(&mut report, space, family);
    report.meta("gamma", format!("{}", gamma.get()));
    let c_est = match c_est_override {
        Some(c) => c,
        None => {
            let wt = weak_type_constant(space, family, gamma, inputs, None, opts)?;
            wt.summary_value("c_est").unwrap()
        }
    };
    report.summary.push(("c_est_used".into(), c_est));
    let mut truncated = false;
    let mut fields = Vec::with_capacity(inputs.len());
    for (_, f) in inputs {
        let grid = abs_value_grid(f);
        let mf = median_maximal_field(space, f, family, gamma, &grid, opts)?;
        truncated |= mf.provenance.truncated;
        fields.push(mf);
    }
    let mut all_within = true;
    let mut max_ratio_any = 0.0f64;
    for &p in p_list {
        let bound = math::powf(c_est * p, 1.0 / p);
        let mut max_ratio = 0.0f64;
        for (ii, (_, f)) in inputs.iter().enumerate() {
            let nf = lp_norm(space, f, p)?;
            let nm = lp_norm(space, &fields[ii].values, p)?;
            if nf == 0.0 {
                if nm > 0.0 {
                    report
                        .caveats
                        .push("zero input with nonzero maximal norm: implementation bug".into());
                    all_within = false;
                }
                continue;
            }
            let ratio = nm / nf;
            max_ratio = max_ratio.max(ratio);
            report.rows.push(Row::new(&[
                ("input", ii as f64),
                ("p", p),
                ("ratio", ratio),
                ("bound", bound),
            ]));
        }
        max_ratio_any = max_ratio_any.max(max_ratio);
        report
            .summary
            .push((format!("max_ratio_p{p}"), max_ratio));
        if max_ratio > bound {
            all_within = false;
        }
    }
    report
        .summary
        .push(("max_ratio".into(), max_ratio_any));
    report
        .verdicts
        .push(("lpbound.within-layer-cake".into(), all_within));
    if truncated {
        report
            .caveats
            .push("engine budget truncated the enumeration; ratios are lower estimates".into());
    }
    Ok(report)
}

/// Superlevel measures `mu({Mf_k > lambda})` along a sequence of inputs
/// whose norms vanish; verdict: the final measure drops below `tol`.
#[allow(clippy::too_many_arguments)]
pub fn continuity_in_measure(
    space: &Space,
    family: &BasisFamily,
    gamma: Gamma,
    lambda: f64,
    p: f64,
    seq: &[(String, Field)],
    tol: f64,
    opts: &EngineOpts,
) -> Result<Report> {
    if seq.is_empty() {
        return Err(domain("continuity check needs a nonempty sequence"));
    }
    let mut report = Report::new("continuity");
    family_meta(&mut report, space, family);
    report.meta("gamma", format!("{}", gamma.get()));
    report.meta("lambda", format!("{lambda}"));
    let mut last = f64::INFINITY;
    for (k, (_, f)) in seq.iter().enumerate() {
        let norm = lp_norm(space, f, p)?;
        let s_lam = f.super_level(space, lambda);
        let (t, _) =
            indicator_superlevel(space, &s_lam, family, gamma, family.coarsest(), opts)?;
        last = space.measure(&t);
        report.rows.push(Row::new(&[
            ("k", k as f64),
            ("input_norm", norm),
            ("mu_super_max", last),
        ]));
    }
    report.summary.push(("final_measure".into(), last));
    report
        .verdicts
        .push(("continuity.final-below-tol".into(), last <= tol));
    Ok(report)
}

/// Fraction of sampled points with maximal value above `threshold`. On a
/// finite space the maximal value never exceeds `max |f|`, so the honest
/// caveat is part of the report.
#[allow(clippy::too_many_arguments)]
pub fn finiteness_scan(
    space: &Space,
    family: &BasisFamily,
    gamma: Gamma,
    inputs: &[(String, Field)],
    threshold: f64,
    points: usize,
    budget: usize,
    seed: u64,
) -> Result<Report> {
    if inputs.is_empty() {
        return Err(domain("finiteness scan needs at least one input"));
    }
    let mut report = Report::new("finiteness");
    family_meta(&mut report, space, family);
    report.meta("threshold", format!("{threshold}"));
    let xs = sample_points(space, points, seed);
    let mut worst_fraction = 0.0f64;
    let mut global_max = 0.0f64;
    for (ii, (_, f)) in inputs.iter().enumerate() {
        let mut above = 0usize;
        let mut max_val = 0.0f64;
        for &x in &xs {
            let v = median_maximal_sampled(space, f, family, x, gamma, budget)?;
            max_val = max_val.max(v);
            if v > threshold {
                above += 1;
            }
        }
        let fraction = above as f64 / xs.len() as f64;
        worst_fraction = worst_fraction.max(fraction);
        global_max = global_max.max(max_val);
        report.rows.push(Row::new(&[
            ("input", ii as f64),
            ("max_value", max_val),
            ("fraction_above", fraction),
        ]));
    }
    report
        .summary
        .push(("worst_fraction_above".into(), worst_fraction));
    report.summary.push(("max_value".into(), global_max));
    report.verdicts.push((
        "finiteness.all-below-threshold".into(),
        worst_fraction == 0.0,
    ));
    report.caveats.push(
        "finite data bounds every maximal value by max |f|; the scan demonstrates the \
         reporting path rather than an infinitude risk"
            .into(),
    );
    Ok(report)
}

fn grid_span(space: &Space) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let g = space
        .grid_info()
        .ok_or_else(|| domain("corpus generators need a grid space"))?;
    let lo: Vec<f64> = g.origin.clone();
    let hi: Vec<f64> = (0..space.dim())
        .map(|a| g.origin[a] + (g.shape[a] - 1) as f64 * g.spacing)
        .collect();
    Ok((lo, hi, g.spacing))
}

/// Indicator of a random axis block with dyadic-aligned corners, so the same
/// continuum set rasterizes to proportional cell counts at every dyadic
/// resolution.
fn random_aligned_block(space: &Space, rng: &mut ChaCha8Rng) -> Result<MSet> {
    let g = space.grid_info().unwrap();
    let dim = space.dim();
    let mut params = Vec::new();
    for a in 0..dim {
        let n = g.shape[a];
        // corners on a coarse sublattice of 16 cells
        let unit = (n / 16).max(1);
        let lo_u = rng.gen_range(0..(n / unit).saturating_sub(1).max(1));
        let len_u = rng.gen_range(1..=((n / unit) - lo_u).min(8).max(1));
        let lo = lo_u * unit;
        let len = len_u * unit;
        let center = g.origin[a] + (lo as f64 + (len as f64 - 1.0) / 2.0) * g.spacing;
        params.push((center, len as f64 * g.spacing / 2.0));
    }
    let block = SetParams::Block {
        center: params.iter().map(|(c, _)| *c).collect(),
        half_sides: params.iter().map(|(_, h)| *h).collect(),
    };
    Ok(block.rasterize(space))
}

/// Indicator inputs: single blocks and small unions.
pub fn indicator_corpus(space: &Space, seed: u64, count: usize) -> Result<Vec<(String, Field)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC0_2B05);
    let mut out = Vec::new();
    for i in 0..count {
        let parts = 1 + (i % 3);
        let mut m = MSet::empty(space);
        for _ in 0..parts {
            m = m.union(&random_aligned_block(space, &mut rng)?);
        }
        if m.is_empty() {
            m.insert(rng.gen_range(0..space.len()));
        }
        out.push((format!("indicator-{i}"), Field::indicator(space, &m)));
    }
    Ok(out)
}

/// The default mixed corpus: indicators, Lipschitz bumps, axis jumps, and
/// truncated heavy tails quantized to a dyadic value ladder (so maximal
/// fields stay cheap to quantize exactly).
pub fn standard_corpus(space: &Space, seed: u64, per_kind: usize) -> Result<Vec<(String, Field)>> {
    let (lo, hi, h) = grid_span(space)?;
    let dim = space.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x57D_C0B5);
    let mut out = indicator_corpus(space, seed, per_kind)?;
    for i in 0..per_kind {
        // Lipschitz bump: amp * max(0, 1 - |x - c| / r); constant amp / r
        let c: Vec<f64> = (0..dim)
            .map(|a| lo[a] + rng.gen::<f64>() * (hi[a] - lo[a]))
            .collect();
        let r = (hi[0] - lo[0]) * (0.1 + 0.4 * rng.gen::<f64>());
        let amp = 0.5 + rng.gen::<f64>();
        let f = Field::from_fn(space, |p| {
            let d = math::sqrt((0..dim).map(|a| (p[a] - c[a]) * (p[a] - c[a])).sum());
            let raw = amp * (1.0 - d / r).max(0.0);
            // snap to the 1/256 ladder: few distinct values, exact quantization
            math::floor(raw * 256.0) / 256.0
        })?;
        out.push((format!("lipschitz-{i}"), f));
    }
    for i in 0..per_kind {
        let cut = lo[0] + rng.gen::<f64>() * (hi[0] - lo[0]);
        let low = rng.gen::<f64>();
        let high = low + 0.5 + rng.gen::<f64>();
        let f = Field::from_fn(space, |p| if p[0] < cut { low } else { high })?;
        out.push((format!("jump-{i}"), f));
    }
    for i in 0..per_kind {
        let c: Vec<f64> = (0..dim)
            .map(|a| lo[a] + rng.gen::<f64>() * (hi[a] - lo[a]))
            .collect();
        let alpha = 0.3 + 0.6 * rng.gen::<f64>();
        let f = Field::from_fn(space, |p| {
            let d = math::sqrt((0..dim).map(|a| (p[a] - c[a]) * (p[a] - c[a])).sum())
                .max(h);
            let raw = math::powf(d, -alpha).min(64.0);
            // snap to powers of two: few distinct values, exact quantization
            math::exp2(math::floor(math::log2(raw)))
        })?;
        out.push((format!("heavytail-{i}"), f));
    }
    Ok(out)
}

/// Indicator sequence with halving supports, for the continuity check.
pub fn shrinking_sequence(space: &Space, seed: u64, len: usize) -> Result<Vec<(String, Field)>> {
    let g = space
        .grid_info()
        .ok_or_else(|| domain("corpus generators need a grid space"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51_4B1);
    let dim = space.dim();
    let mut out = Vec::new();
    let mut side = (g.shape.iter().min().unwrap() / 2).max(1);
    for k in 0..len {
        let mut anchor = vec![0usize; dim];
        for a in 0..dim {
            anchor[a] = rng.gen_range(0..=(g.shape[a] - side));
        }
        let mut m = MSet::empty(space);
        let mut idx = anchor.clone();
        loop {
            m.insert(space.flat_index(&idx));
            let mut a = dim;
            let mut done = false;
            loop {
                if a == 0 {
                    done = true;
                    break;
                }
                a -= 1;
                idx[a] += 1;
                if idx[a] < anchor[a] + side {
                    break;
                }
                idx[a] = anchor[a];
            }
            if done {
                break;
            }
        }
        out.push((format!("shrink-{k}"), Field::indicator(space, &m)));
        side = (side / 2).max(1);
    }
    Ok(out)
}

/// Union of rotated needles through the grid center, one per angle step.
/// Needle geometry is specified in cells, so the pattern is cell-identical
/// across resolutions while its relative footprint shrinks.
pub fn needle_fan(
    space: &Space,
    angles: u32,
    len_cells: usize,
    width_cells: usize,
) -> Result<MSet> {
    let g = space
        .grid_info()
        .ok_or_else(|| domain("needle fans need a grid space"))?;
    if space.dim() != 2 {
        return Err(domain("needle fans are two-dimensional"));
    }
    if angles == 0 || len_cells == 0 || width_cells == 0 {
        return Err(domain("needle fan parameters must be positive"));
    }
    let center = [
        g.origin[0] + (g.shape[0] / 2) as f64 * g.spacing,
        g.origin[1] + (g.shape[1] / 2) as f64 * g.spacing,
    ];
    let mut fan = MSet::empty(space);
    for i in 0..angles {
        let angle = i as f64 * core::f64::consts::PI / angles as f64;
        let needle = SetParams::RotRect {
            center,
            half_len: len_cells as f64 * g.spacing / 2.0,
            half_wid: width_cells as f64 * g.spacing / 2.0,
            angle,
        };
        fan = fan.union(&needle.rasterize(space));
    }
    Ok(fan)
}

/// Convenience: exact indicator-median check used by property suites.
pub fn indicator_median_matches(space: &Space, a: &MSet, b: &MSet, gamma: Gamma) -> Result<bool> {
    let f = Field::indicator(space, a);
    let m = gamma_median(space, &f, b, gamma)?;
    let ratio = space.measure(&a.intersect(b)) / space.measure(b);
    let want = if mass_ge(ratio, gamma.get()) { 1.0 } else { 0.0 };
    Ok(m == want)
}
