//! Median maximal operators over basis families, per point and as quantized
//! fields, plus exact indicator-superlevel engines.
//!
//! The level-set identity drives everything global: for lambda >= 0,
//! `M f(x) > lambda` holds exactly when some family set B containing x has
//! `mu(B intersect {|f| > lambda}) >= gamma * mu(B)` (ties resolved by the
//! same near-equality rule the medians use). Engines answer that indicator
//! question for all x at once.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::{scale_set_budget, sets_at, BasisFamily, BasisKind, ENUM_THRESHOLD};
use crate::error::{domain, Error, Result};
use crate::math;
use crate::median::{gamma_median, mass_ge, Gamma};
use crate::space::{Field, MSet, Metric, Space};

/// Budgets for the global engines. All runs with equal options and family
/// seed are byte-deterministic.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EngineOpts {
    /// Per-point enumeration budget for the pointwise fallback.
    pub point_budget: usize,
    /// Cap on (side tuple) combinations in the block engine; beyond it a
    /// canonical hash-strided subset is scanned (cubes are always kept).
    pub max_side_pairs: usize,
    /// Cap on raster row-cells processed by the rotated-rectangle paint
    /// engine.
    pub paint_cell_budget: u64,
}

impl Default for EngineOpts {
    fn default() -> Self {
        EngineOpts {
            point_budget: ENUM_THRESHOLD,
            max_side_pairs: 4096,
            paint_cell_budget: 50_000_000,
        }
    }
}

/// What an engine actually did, for reporting.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EngineInfo {
    pub engine: String,
    /// True when a budget truncated the enumeration, making the result a
    /// lower (inner) estimate of the true superlevel set.
    pub truncated: bool,
}

/// How a maximal field was produced.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Provenance {
    pub family: String,
    pub gamma: f64,
    pub engine: String,
    pub lambda_grid_len: usize,
    pub truncated: bool,
    pub notes: Vec<String>,
}

/// A quantized median maximal field together with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct MaximalField {
    pub values: Field,
    pub provenance: Provenance,
}

/// Weighted average of `f` over a set.
pub fn set_average(space: &Space, f: &Field, a: &MSet) -> Result<f64> {
    space.check_field(f);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in a.iter() {
        let w = space.weight(i);
        num += f.value(i) * w;
        den += w;
    }
    if den <= 0.0 {
        return Err(domain("average over an empty set"));
    }
    Ok(num / den)
}

/// Distinct values of `|f|`, ascending; the natural quantization grid.
pub fn abs_value_grid(f: &Field) -> Vec<f64> {
    let mut v: Vec<f64> = f.values().iter().map(|x| math::abs(*x)).collect();
    v.sort_unstable_by(f64::total_cmp);
    v.dedup();
    v
}

fn scales_within(family: &BasisFamily, eps: f64) -> Vec<f64> {
    family
        .scale_grid()
        .into_iter()
        .filter(|s| *s <= eps)
        .collect()
}

/// For these kinds, one `sets_at` call at scale eps already enumerates every
/// family set of diameter below eps (no multi-scale sweep needed).
fn enumeration_is_cumulative(kind: &BasisKind) -> bool {
    matches!(
        kind,
        BasisKind::Balls | BasisKind::Cubes | BasisKind::AxisRects { .. } | BasisKind::DyadicCubes
    )
}

/// Median maximal value at one point: the largest gamma-median of `|f|` over
/// enumerated family sets containing `x`.
pub fn median_maximal(
    space: &Space,
    f: &Field,
    family: &BasisFamily,
    x: usize,
    gamma: Gamma,
    budget: usize,
) -> Result<f64> {
    restricted_median_maximal(space, f, family, x, gamma, family.coarsest(), budget)
}

/// Median maximal value at one point with the enumeration budget read as a
/// cell total and spread across scales, so coarse sets are sampled while fine
/// ones stay fully enumerated. Suited to scans over large grids; the sampled
/// value never exceeds the exhaustive one.
pub fn median_maximal_sampled(
    space: &Space,
    f: &Field,
    family: &BasisFamily,
    x: usize,
    gamma: Gamma,
    cell_budget: usize,
) -> Result<f64> {
    let abs = f.abs();
    let mut best = f64::NEG_INFINITY;
    for s in family.scale_grid() {
        for b in sets_at(space, family, x, s, scale_set_budget(space, s, cell_budget))? {
            best = best.max(gamma_median(space, &abs, &b.members, gamma)?);
        }
    }
    Ok(best)
}

/// Same, over sets of diameter strictly below `r`. Errors with
/// `ResolutionExhausted` when `r` undercuts the family's finest scale.
pub fn restricted_median_maximal(
    space: &Space,
    f: &Field,
    family: &BasisFamily,
    x: usize,
    gamma: Gamma,
    r: f64,
    budget: usize,
) -> Result<f64> {
    if r < family.finest() {
        return Err(Error::ResolutionExhausted { scale: r });
    }
    let abs = f.abs();
    let eps = if r < family.coarsest() {
        r
    } else {
        family.coarsest()
    };
    let mut best = f64::NEG_INFINITY;
    if enumeration_is_cumulative(&family.kind) {
        for b in sets_at(space, family, x, eps, budget)? {
            best = best.max(gamma_median(space, &abs, &b.members, gamma)?);
        }
    } else {
        for s in scales_within(family, eps) {
            for b in sets_at(space, family, x, s, budget)? {
                best = best.max(gamma_median(space, &abs, &b.members, gamma)?);
            }
        }
    }
    Ok(best)
}

/// Average maximal value at one point (for side-by-side comparisons with the
/// median operator).
pub fn average_maximal(
    space: &Space,
    f: &Field,
    family: &BasisFamily,
    x: usize,
    budget: usize,
) -> Result<f64> {
    let abs = f.abs();
    let mut best = f64::NEG_INFINITY;
    if enumeration_is_cumulative(&family.kind) {
        for b in sets_at(space, family, x, family.coarsest(), budget)? {
            best = best.max(set_average(space, &abs, &b.members)?);
        }
    } else {
        for s in family.scale_grid() {
            for b in sets_at(space, family, x, s, budget)? {
                best = best.max(set_average(space, &abs, &b.members)?);
            }
        }
    }
    Ok(best)
}

/// Per-scale envelope of gamma-medians over sets containing `x` of diameter
/// below the scale, coarse to fine. The band endpoints bound every limit of
/// medians along sets shrinking to `x`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScaleBand {
    pub scale: f64,
    pub lo: f64,
    pub hi: f64,
}

pub fn median_oscillation(
    space: &Space,
    f: &Field,
    family: &BasisFamily,
    x: usize,
    gamma: Gamma,
    budget: usize,
) -> Result<Vec<ScaleBand>> {
    let mut out = Vec::new();
    for s in family.scale_grid() {
        // budget counts cells, not sets: coarse scales sample, fine enumerate
        let sets = sets_at(space, family, x, s, scale_set_budget(space, s, budget))?;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for b in &sets {
            let m = gamma_median(space, f, &b.members, gamma)?;
            lo = lo.min(m);
            hi = hi.max(m);
        }
        out.push(ScaleBand { scale: s, lo, hi });
    }
    Ok(out)
}

/// Points x where some family set B containing x, of diameter below `eps`,
/// satisfies `mu(B intersect S) >= gamma * mu(B)` (with the usual tie rule).
pub fn indicator_superlevel(
    space: &Space,
    s_set: &MSet,
    family: &BasisFamily,
    gamma: Gamma,
    eps: f64,
    opts: &EngineOpts,
) -> Result<(MSet, EngineInfo)> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(domain("scale must be positive and finite"));
    }
    let grid = space.grid_info().cloned();
    match (&family.kind, grid, space.dim()) {
        (BasisKind::Cubes, Some(_), 1) | (BasisKind::AxisRects { .. }, Some(_), 1) => {
            let lens = line_lens(space, eps);
            Ok(block_superlevel_1d(space, s_set, gamma, &lens))
        }
        (BasisKind::Balls, Some(g), 1) => {
            // realized half-widths: j cells needs a radius r <= eps/2 with
            // j * h < r
            let jmax = math::floor_strict(eps / (2.0 * g.spacing));
            Ok(ball_superlevel_1d(space, s_set, gamma, jmax))
        }
        (BasisKind::Cubes, Some(_), 2) => {
            let pairs = plane_pairs(space, family, eps, 1, opts);
            Ok(block_superlevel_2d(space, s_set, gamma, pairs))
        }
        (BasisKind::AxisRects { max_eccentricity }, Some(_), 2) => {
            let pairs = plane_pairs(space, family, eps, *max_eccentricity, opts);
            Ok(block_superlevel_2d(space, s_set, gamma, pairs))
        }
        (
            BasisKind::RotatedRects {
                angle_count,
                max_eccentricity,
            },
            Some(_),
            2,
        ) if matches!(space.metric(), Metric::Euclidean) => Ok(paint_superlevel(
            space,
            s_set,
            family,
            gamma,
            eps,
            *angle_count,
            *max_eccentricity,
            opts,
        )),
        _ => pointwise_superlevel(space, s_set, family, gamma, eps, opts),
    }
}

/// Admissible interval lengths in cells.
fn line_lens(space: &Space, eps: f64) -> Vec<usize> {
    let g = space.grid_info().unwrap();
    let n = g.shape[0];
    // length L spans point diameter (L - 1) * h
    let cap = (math::floor_strict(eps / g.spacing) + 1).min(n);
    (1..=cap).collect()
}

/// Balls in 1D rasterize to symmetric windows around a data point, clipped
/// at the grid boundary; centers near the edge yield genuinely asymmetric
/// sets, so the scan is center-indexed rather than anchor-indexed.
/// `gamma * (1 - 2^-40)` as an exact scaled integer: `mass_ge(cnt, gamma *
/// len)` on nonnegative counts reduces to `cnt >= gamma * (1 - 2^-40) * len`,
/// which with the returned `(a, s)` reads `(cnt << s) >= a * len` in exact
/// i128 arithmetic (every f64 is a dyadic rational). None when the shifted
/// values for prefix counts up to `n` would overflow.
fn psi_scale(gamma: f64, n: usize) -> Option<(i128, u32)> {
    let bits = gamma.to_bits();
    let exp = ((bits >> 52) & 0x7FF) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    let (mut m, mut e) = if exp == 0 {
        (frac, -1074i32)
    } else {
        (frac | (1u64 << 52), exp - 1075)
    };
    while m & 1 == 0 {
        m >>= 1;
        e += 1;
    }
    let a = (m as u128) * ((1u128 << 40) - 1);
    let s = 40i64 - e as i64;
    if s <= 0 {
        return None;
    }
    let nb = 128 - (n as u128 + 1).leading_zeros();
    let ab = 128 - a.leading_zeros();
    if s as u32 + nb >= 127 || ab + nb >= 127 {
        return None;
    }
    Some((a as i128, s as u32))
}

/// `psi(k) = (pc[k] << s) - a * k`; a window `[i, j)` qualifies at level
/// gamma exactly when `psi(j) >= psi(i)`.
fn psi_vals(pc: &[u32], a: i128, s: u32) -> Vec<i128> {
    pc.iter()
        .enumerate()
        .map(|(k, &c)| ((c as i128) << s) - a * k as i128)
        .collect()
}

/// Sparse range-min table over every other entry of a psi array (the two
/// index parities are queried separately because odd-length windows pair
/// endpoints of opposite parity).
struct ClassMin {
    first: usize,
    table: Vec<Vec<i128>>,
}

impl ClassMin {
    fn build(first: usize, psi: &[i128]) -> ClassMin {
        let vals: Vec<i128> = psi.iter().copied().skip(first).step_by(2).collect();
        let mut table = vec![vals];
        let mut l = 0;
        while table[0].len() >= (2usize << l) {
            let prev = &table[l];
            let half = 1usize << l;
            let next: Vec<i128> = (0..prev.len() - half)
                .map(|p| prev[p].min(prev[p + half]))
                .collect();
            table.push(next);
            l += 1;
        }
        ClassMin { first, table }
    }

    fn min_range(&self, p_lo: usize, p_hi: usize) -> i128 {
        let l = (usize::BITS - 1 - (p_hi - p_lo + 1).leading_zeros()) as usize;
        self.table[l][p_lo].min(self.table[l][p_hi + 1 - (1usize << l)])
    }

    /// Leftmost class position in `[p_lo, p_hi]` with value <= t.
    fn leftmost_leq(&self, p_lo: usize, p_hi: usize, t: i128) -> Option<usize> {
        if p_lo > p_hi || self.min_range(p_lo, p_hi) > t {
            return None;
        }
        let (mut lo, mut hi) = (p_lo, p_hi);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if self.min_range(lo, mid) <= t {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        Some(lo)
    }

    /// Class positions whose original indices fall in `[i_lo, i_hi]`.
    fn pos_range(&self, i_lo: usize, i_hi: usize) -> Option<(usize, usize)> {
        if self.table[0].is_empty() || i_hi < self.first {
            return None;
        }
        let p_hi = ((i_hi - self.first) / 2).min(self.table[0].len() - 1);
        let p_lo = (i_lo.max(self.first) - self.first).div_ceil(2);
        (p_lo <= p_hi).then_some((p_lo, p_hi))
    }
}

/// Marks every x covered by a pair `i <= x < j` with `j - i <= cap` (odd
/// `j - i` only, when asked) and `psi(i) <= psi(j)`. Such a pair is exactly a
/// qualifying window `[i, j)` under the psi encoding.
fn cover_pairs(psi: &[i128], cap: usize, odd_only: bool, covered: &mut [bool]) {
    let n = covered.len();
    let max_len = if odd_only { n - (n + 1) % 2 } else { n };
    if cap >= max_len {
        // no effective length cap: prefix minima against suffix maxima
        if odd_only {
            let mut pmin = [i128::MAX; 2];
            let mut smax = vec![[i128::MIN; 2]; n + 2];
            for j in (0..=n).rev() {
                smax[j] = smax[j + 1];
                let side = &mut smax[j][j % 2];
                *side = (*side).max(psi[j]);
            }
            for (x, c) in covered.iter_mut().enumerate() {
                pmin[x % 2] = pmin[x % 2].min(psi[x]);
                if pmin[0] <= smax[x + 1][1] || pmin[1] <= smax[x + 1][0] {
                    *c = true;
                }
            }
        } else {
            let mut smax = vec![i128::MIN; n + 2];
            for j in (0..=n).rev() {
                smax[j] = smax[j + 1].max(psi[j]);
            }
            let mut pmin = i128::MAX;
            for (x, c) in covered.iter_mut().enumerate() {
                pmin = pmin.min(psi[x]);
                if pmin <= smax[x + 1] {
                    *c = true;
                }
            }
        }
        return;
    }
    let classes = [ClassMin::build(0, psi), ClassMin::build(1, psi)];
    let mut diff = vec![0i32; n + 1];
    for j in 1..=n {
        let lo = j.saturating_sub(cap);
        let hi = j - 1;
        let t = psi[j];
        let mut best: Option<usize> = None;
        for (par, class) in classes.iter().enumerate() {
            if odd_only && par == j % 2 {
                continue;
            }
            if let Some((p_lo, p_hi)) = class.pos_range(lo, hi) {
                if let Some(p) = class.leftmost_leq(p_lo, p_hi, t) {
                    let i = class.first + 2 * p;
                    best = Some(best.map_or(i, |b| b.min(i)));
                }
            }
        }
        if let Some(i) = best {
            diff[i] += 1;
            diff[j] -= 1;
        }
    }
    let mut acc = 0i32;
    for (x, c) in covered.iter_mut().enumerate() {
        acc += diff[x];
        if acc > 0 {
            *c = true;
        }
    }
}

fn prefix_counts(s_set: &MSet, n: usize) -> Vec<u32> {
    let mut pc = vec![0u32; n + 1];
    for i in 0..n {
        pc[i + 1] = pc[i] + u32::from(s_set.contains(i));
    }
    pc
}

fn marks_to_set(space: &Space, covered: &[bool], engine: &str) -> (MSet, EngineInfo) {
    let mut out = MSet::empty(space);
    for (x, c) in covered.iter().enumerate() {
        if *c {
            out.insert(x);
        }
    }
    (
        out,
        EngineInfo {
            engine: String::from(engine),
            truncated: false,
        },
    )
}

fn ball_superlevel_1d(
    space: &Space,
    s_set: &MSet,
    gamma: Gamma,
    jmax: usize,
) -> (MSet, EngineInfo) {
    let n = space.len();
    let Some((a, s)) = psi_scale(gamma.get(), n) else {
        return ball_superlevel_1d_scan(space, s_set, gamma, jmax);
    };
    let pc = prefix_counts(s_set, n);
    let psi = psi_vals(&pc, a, s);
    let jcap = jmax.min(n - 1);
    let mut covered = vec![false; n];
    // interior windows [c - j, c + j] are the odd-length intervals with
    // half-length <= jcap
    cover_pairs(&psi, 2 * jcap + 1, true, &mut covered);
    // windows clipped at the left edge realize [0, b] for every b <= 2 * jcap
    let cap0 = (2 * jcap + 1).min(n);
    let mut best_jj = 0;
    for jj in 1..=cap0 {
        if psi[jj] >= psi[0] {
            best_jj = jj;
        }
    }
    for c in covered.iter_mut().take(best_jj) {
        *c = true;
    }
    // and symmetrically [i, n - 1] for every i >= n - 1 - 2 * jcap
    let i0 = (n - 1).saturating_sub(2 * jcap);
    if let Some(i) = (i0..n).find(|&i| psi[i] <= psi[n]) {
        for c in covered.iter_mut().skip(i) {
            *c = true;
        }
    }
    marks_to_set(space, &covered, "ball-scan-1d")
}

/// Literal center-indexed sweep, kept as the fallback for gammas whose
/// scaled-integer form would overflow.
fn ball_superlevel_1d_scan(
    space: &Space,
    s_set: &MSet,
    gamma: Gamma,
    jmax: usize,
) -> (MSet, EngineInfo) {
    let n = space.len();
    let pc = prefix_counts(s_set, n);
    let mut covered = vec![false; n];
    let mut marks = vec![false; n];
    let mut pm = vec![0u32; n + 1];
    for j in 0..=jmax.min(n - 1) {
        for (c, m) in marks.iter_mut().enumerate() {
            let lo = c.saturating_sub(j);
            let hi = (c + j).min(n - 1);
            let cnt = pc[hi + 1] - pc[lo];
            *m = mass_ge(cnt as f64, gamma.get() * (hi + 1 - lo) as f64);
        }
        for c in 0..n {
            pm[c + 1] = pm[c] + u32::from(marks[c]);
        }
        for (x, cov) in covered.iter_mut().enumerate() {
            if *cov {
                continue;
            }
            // x belongs to the window of c exactly when |x - c| <= j
            let lo = x.saturating_sub(j);
            let hi = (x + j).min(n - 1);
            if pm[hi + 1] > pm[lo] {
                *cov = true;
            }
        }
    }
    marks_to_set(space, &covered, "ball-scan-1d")
}

fn block_superlevel_1d(
    space: &Space,
    s_set: &MSet,
    gamma: Gamma,
    lens: &[usize],
) -> (MSet, EngineInfo) {
    let n = space.len();
    // the 1D block families realize every length up to their cap
    debug_assert!(lens.iter().copied().eq(1..=lens.len()));
    let cap = lens.len().min(n);
    let Some((a, s)) = psi_scale(gamma.get(), n) else {
        return block_superlevel_1d_scan(space, s_set, gamma, lens);
    };
    if cap == 0 {
        return marks_to_set(space, &vec![false; n], "block-scan-1d");
    }
    let pc = prefix_counts(s_set, n);
    let psi = psi_vals(&pc, a, s);
    let mut covered = vec![false; n];
    cover_pairs(&psi, cap, false, &mut covered);
    marks_to_set(space, &covered, "block-scan-1d")
}

/// Literal per-length sweep, kept as the fallback for gammas whose
/// scaled-integer form would overflow.
fn block_superlevel_1d_scan(
    space: &Space,
    s_set: &MSet,
    gamma: Gamma,
    lens: &[usize],
) -> (MSet, EngineInfo) {
    let n = space.len();
    let pc = prefix_counts(s_set, n);
    let mut covered = vec![false; n];
    let mut marks = vec![false; n];
    let mut pm = vec![0u32; n + 1];
    for &len in lens {
        if len > n {
            continue;
        }
        let anchors = n - len + 1;
        let need = gamma.get() * len as f64;
        for a in 0..anchors {
            let cnt = pc[a + len] - pc[a];
            marks[a] = mass_ge(cnt as f64, need);
        }
        for a in 0..anchors {
            pm[a + 1] = pm[a] + u32::from(marks[a]);
        }
        for (x, c) in covered.iter_mut().enumerate() {
            if *c {
                continue;
            }
            let lo = x.saturating_sub(len - 1);
            let hi = x.min(anchors - 1);
            if hi >= lo && pm[hi + 1] > pm[lo] {
                *c = true;
            }
        }
    }
    marks_to_set(space, &covered, "block-scan-1d")
}

fn fnv2(a: u64, b: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for v in [a, b] {
        h ^= v;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

/// Side pairs for the 2D block engine. The keep rule depends only on the
/// pair and on family-level quantities, so pair sets for nested diameter
/// ranges are nested.
fn plane_pairs(
    space: &Space,
    family: &BasisFamily,
    eps: f64,
    max_ecc: u32,
    opts: &EngineOpts,
) -> (Vec<(usize, usize)>, bool) {
    let g = space.grid_info().unwrap();
    let admissible = |l0: usize, l1: usize, bound: f64| -> bool {
        let d0 = (l0 - 1) as f64;
        let d1 = (l1 - 1) as f64;
        let diag = match space.metric() {
            Metric::Chebyshev => d0.max(d1),
            _ => math::hypot(d0, d1),
        };
        let (lo, hi) = if l0 < l1 { (l0, l1) } else { (l1, l0) };
        diag * g.spacing < bound && hi <= lo * max_ecc as usize
    };
    let cap_at = |bound: f64| -> usize {
        (math::floor_strict(bound / g.spacing) + 1).min(g.shape[0].max(g.shape[1]))
    };
    // stride chosen from the family's coarsest scale so restricted runs scan
    // a subset of the global run's pairs
    let full_bound = family.coarsest();
    let full_cap = cap_at(full_bound);
    let mut full_total: u64 = 0;
    for l0 in 1..=full_cap {
        for l1 in 1..=full_cap {
            if admissible(l0, l1, full_bound) {
                full_total += 1;
            }
        }
    }
    let stride = (full_total / opts.max_side_pairs as u64).max(1);
    let cap = cap_at(eps.min(full_bound));
    let mut pairs = Vec::new();
    for l0 in 1..=cap {
        for l1 in 1..=cap {
            if !admissible(l0, l1, eps.min(full_bound)) {
                continue;
            }
            if l0 == l1 || fnv2(l0 as u64, l1 as u64) % stride == 0 {
                pairs.push((l0, l1));
            }
        }
    }
    (pairs, stride > 1)
}

struct Sat2 {
    n1p: usize,
    p: Vec<u32>,
}

impl Sat2 {
    fn build(n0: usize, n1: usize, mut at: impl FnMut(usize, usize) -> u32) -> Sat2 {
        let n1p = n1 + 1;
        let mut p = vec![0u32; (n0 + 1) * n1p];
        for i0 in 0..n0 {
            let mut row = 0u32;
            for i1 in 0..n1 {
                row += at(i0, i1);
                p[(i0 + 1) * n1p + (i1 + 1)] = p[i0 * n1p + (i1 + 1)] + row;
            }
        }
        Sat2 { n1p, p }
    }

    /// Count over the index box `[a0, b0] x [a1, b1]`, inclusive.
    #[inline]
    fn query(&self, a0: usize, b0: usize, a1: usize, b1: usize) -> u32 {
        let p = &self.p;
        let n = self.n1p;
        p[(b0 + 1) * n + (b1 + 1)] + p[a0 * n + a1] - p[a0 * n + (b1 + 1)] - p[(b0 + 1) * n + a1]
    }
}

fn block_superlevel_2d(
    space: &Space,
    s_set: &MSet,
    gamma: Gamma,
    (pairs, truncated): (Vec<(usize, usize)>, bool),
) -> (MSet, EngineInfo) {
    let g = space.grid_info().unwrap();
    let (n0, n1) = (g.shape[0], g.shape[1]);
    let sat = Sat2::build(n0, n1, |i0, i1| u32::from(s_set.contains(i0 * n1 + i1)));
    let mut covered = vec![false; n0 * n1];
    for (l0, l1) in pairs {
        if l0 > n0 || l1 > n1 {
            continue;
        }
        let (a0s, a1s) = (n0 - l0 + 1, n1 - l1 + 1);
        let need = gamma.get() * (l0 * l1) as f64;
        let marks = Sat2::build(a0s, a1s, |a0, a1| {
            let cnt = sat.query(a0, a0 + l0 - 1, a1, a1 + l1 - 1);
            u32::from(mass_ge(cnt as f64, need))
        });
        for x0 in 0..n0 {
            let lo0 = x0.saturating_sub(l0 - 1);
            let hi0 = x0.min(a0s - 1);
            if hi0 < lo0 {
                continue;
            }
            for x1 in 0..n1 {
                let idx = x0 * n1 + x1;
                if covered[idx] {
                    continue;
                }
                let lo1 = x1.saturating_sub(l1 - 1);
                let hi1 = x1.min(a1s - 1);
                if hi1 >= lo1 && marks.query(lo0, hi0, lo1, hi1) > 0 {
                    covered[idx] = true;
                }
            }
        }
    }
    let mut out = MSet::empty(space);
    for (x, c) in covered.iter().enumerate() {
        if *c {
            out.insert(x);
        }
    }
    (
        out,
        EngineInfo {
            engine: String::from("block-sat-2d"),
            truncated,
        },
    )
}

/// Row intervals of an open rotated rectangle, used for both the mass query
/// and the paint pass.
struct RectRows {
    i0_lo: usize,
    /// half-open column spans per row, `None` for empty rows
    spans: Vec<Option<(usize, usize)>>,
}

fn rect_rows(
    g: &crate::space::GridInfo,
    center: [f64; 2],
    half_len: f64,
    half_wid: f64,
    angle: f64,
) -> RectRows {
    let (sin, cos) = (math::sin(angle), math::cos(angle));
    let r0 = math::abs(cos) * half_len + math::abs(sin) * half_wid;
    let h = g.spacing;
    let lo0 = ((center[0] - r0 - g.origin[0]) / h).max(0.0) as usize;
    let hi0f = ((center[0] + r0 - g.origin[0]) / h).min((g.shape[0] - 1) as f64);
    let hi0 = if hi0f < lo0 as f64 { 0 } else { hi0f as usize };
    let mut spans = Vec::new();
    if hi0f < lo0 as f64 {
        return RectRows { i0_lo: lo0, spans };
    }
    for i0 in lo0..=hi0 {
        let dx = g.origin[0] + i0 as f64 * h - center[0];
        // membership in row i0: |cos*dx + sin*dy| < hl and |-sin*dx + cos*dy| < hw
        // with dy = y - center[1]; both are strict linear constraints in dy
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for (a, b, bound) in [
            (sin, cos * dx, half_len),
            (cos, -sin * dx, half_wid),
        ] {
            // |a * dy + b| < bound
            if math::abs(a) < 1e-300 {
                if math::abs(b) >= bound {
                    lo = f64::INFINITY;
                }
                continue;
            }
            let (t0, t1) = ((-bound - b) / a, (bound - b) / a);
            lo = lo.max(t0.min(t1));
            hi = hi.min(t0.max(t1));
        }
        if lo >= hi {
            spans.push(None);
            continue;
        }
        // dy strictly inside (lo, hi): index range in the second axis
        let jlo = math::floor((center[1] + lo - g.origin[1]) / h) + 1.0;
        let jhi = math::ceil((center[1] + hi - g.origin[1]) / h) - 1.0;
        let jlo = jlo.max(0.0);
        let jhi = jhi.min((g.shape[1] - 1) as f64);
        if jhi < jlo {
            spans.push(None);
        } else {
            spans.push(Some((jlo as usize, jhi as usize + 1)));
        }
    }
    RectRows { i0_lo: lo0, spans }
}

#[allow(clippy::too_many_arguments)]
fn paint_superlevel(
    space: &Space,
    s_set: &MSet,
    family: &BasisFamily,
    gamma: Gamma,
    eps: f64,
    angle_count: u32,
    max_ecc: u32,
    opts: &EngineOpts,
) -> (MSet, EngineInfo) {
    let g = space.grid_info().unwrap().clone();
    let (n0, n1) = (g.shape[0], g.shape[1]);
    // per-row prefix counts of S
    let mut pc = vec![0u32; n0 * (n1 + 1)];
    for i0 in 0..n0 {
        for i1 in 0..n1 {
            pc[i0 * (n1 + 1) + i1 + 1] =
                pc[i0 * (n1 + 1) + i1] + u32::from(s_set.contains(i0 * n1 + i1));
        }
    }
    let row_count = |i0: usize, j0: usize, j1: usize| -> u32 {
        pc[i0 * (n1 + 1) + j1] - pc[i0 * (n1 + 1) + j0]
    };

    let mut covered = vec![false; n0 * n1];
    let mut cells_used: u64 = 0;
    let mut truncated = false;
    // fine scales first so thin structure is painted before any budget cut
    let mut scales = scales_within(family, eps);
    scales.reverse();
    let mut eccs = Vec::new();
    let mut e = 1u32;
    while e <= max_ecc {
        eccs.push(e);
        e = e.saturating_mul(2);
    }
    'outer: for (si, s) in scales.iter().enumerate() {
        let diag = s * (1.0 - 1e-12);
        for (ei, &ecc) in eccs.iter().enumerate() {
            let er = ecc as f64;
            let hl = diag / 2.0 / math::sqrt(1.0 + 1.0 / (er * er));
            let hw = hl / er;
            if 2.0 * hw < 0.5 * g.spacing {
                continue;
            }
            for ai in 0..angle_count {
                let angle = ai as f64 * core::f64::consts::PI / angle_count as f64;
                let stride = ((hw / g.spacing) as usize).max(1);
                let mut rng = ChaCha8Rng::seed_from_u64(
                    family.seed ^ fnv2(si as u64, fnv2(ei as u64, ai as u64)),
                );
                let j0 = rng.gen_range(0..stride.max(1));
                let j1 = rng.gen_range(0..stride.max(1));
                let mut i0 = j0;
                while i0 < n0 {
                    let mut i1 = j1;
                    while i1 < n1 {
                        let center = [
                            g.origin[0] + i0 as f64 * g.spacing,
                            g.origin[1] + i1 as f64 * g.spacing,
                        ];
                        let rows = rect_rows(&g, center, hl, hw, angle);
                        let mut cnt_s = 0u64;
                        let mut cnt = 0u64;
                        for (r, span) in rows.spans.iter().enumerate() {
                            if let Some((a, b)) = span {
                                cnt += (b - a) as u64;
                                cnt_s += u64::from(row_count(rows.i0_lo + r, *a, *b));
                            }
                        }
                        cells_used += cnt.max(1);
                        if cnt > 0 && mass_ge(cnt_s as f64, gamma.get() * cnt as f64) {
                            for (r, span) in rows.spans.iter().enumerate() {
                                if let Some((a, b)) = span {
                                    let base = (rows.i0_lo + r) * n1;
                                    for j in *a..*b {
                                        covered[base + j] = true;
                                    }
                                }
                            }
                        }
                        if cells_used > opts.paint_cell_budget {
                            truncated = true;
                            break 'outer;
                        }
                        i1 += stride;
                    }
                    i0 += stride;
                }
            }
        }
    }
    let mut out = MSet::empty(space);
    for (x, c) in covered.iter().enumerate() {
        if *c {
            out.insert(x);
        }
    }
    (
        out,
        EngineInfo {
            engine: String::from("rot-paint-2d"),
            truncated,
        },
    )
}

fn pointwise_superlevel(
    space: &Space,
    s_set: &MSet,
    family: &BasisFamily,
    gamma: Gamma,
    eps: f64,
    opts: &EngineOpts,
) -> Result<(MSet, EngineInfo)> {
    let mut out = MSet::empty(space);
    let scales: Vec<f64> = if enumeration_is_cumulative(&family.kind) {
        vec![eps]
    } else {
        scales_within(family, eps)
    };
    for x in 0..space.len() {
        'scales: for s in &scales {
            let sets = match sets_at(space, family, x, *s, opts.point_budget) {
                Ok(v) => v,
                Err(Error::ResolutionExhausted { .. }) => continue,
                Err(e) => return Err(e),
            };
            for b in sets {
                let inter = space.measure(&b.members.intersect(s_set));
                let total = space.measure(&b.members);
                if mass_ge(inter, gamma.get() * total) {
                    out.insert(x);
                    break 'scales;
                }
            }
        }
    }
    let truncated = matches!(
        family.kind,
        BasisKind::RotatedRects { .. } | BasisKind::Refined(_)
    );
    Ok((
        out,
        EngineInfo {
            engine: String::from("pointwise"),
            truncated,
        },
    ))
}

/// The median maximal field quantized to a value grid: each point gets the
/// smallest grid value whose superlevel set excludes it. With the full grid
/// `abs_value_grid(f)` this reproduces the exact maximal values, since every
/// gamma-median of `|f|` is one of those values.
pub fn median_maximal_field(
    space: &Space,
    f: &Field,
    family: &BasisFamily,
    gamma: Gamma,
    lambda_grid: &[f64],
    opts: &EngineOpts,
) -> Result<MaximalField> {
    space.check_field(f);
    if lambda_grid.is_empty() {
        return Err(domain("empty value grid"));
    }
    for w in lambda_grid.windows(2) {
        if !(w[0] < w[1]) {
            return Err(domain("value grid must be strictly increasing"));
        }
    }
    if !lambda_grid.iter().all(|l| l.is_finite() && *l >= 0.0) {
        return Err(domain("value grid entries must be finite and nonnegative"));
    }
    let eps = family.coarsest();
    let mut assigned: Vec<Option<f64>> = vec![None; space.len()];
    let mut engine = String::new();
    let mut truncated = false;
    for &lam in lambda_grid {
        let sl = f.super_level(space, lam);
        let (t, info) = indicator_superlevel(space, &sl, family, gamma, eps, opts)?;
        engine = info.engine;
        truncated |= info.truncated;
        for x in 0..space.len() {
            if assigned[x].is_none() && !t.contains(x) {
                assigned[x] = Some(lam);
            }
        }
    }
    let top = *lambda_grid.last().unwrap();
    // points exceeding every grid value are clamped to the top and reported
    let clamped = assigned.iter().filter(|a| a.is_none()).count();
    let values = Field::new(
        space,
        assigned.iter().map(|a| a.unwrap_or(top)).collect(),
    )?;
    let mut notes = Vec::new();
    if clamped > 0 {
        notes.push(format!(
            "{clamped} point(s) exceed the top grid value and were clamped"
        ));
    }
    Ok(MaximalField {
        values,
        provenance: Provenance {
            family: family.descriptor(),
            gamma: gamma.get(),
            engine,
            lambda_grid_len: lambda_grid.len(),
            truncated,
            notes,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Space;

    fn fam(kind: BasisKind, k_min: i32, k_max: i32) -> BasisFamily {
        BasisFamily::new(kind, k_min, k_max, 11).unwrap()
    }

    /// Literal triple loop over every admissible block and anchor.
    fn brute_block_superlevel_1d(
        space: &Space,
        s_set: &MSet,
        gamma: Gamma,
        lens: &[usize],
    ) -> MSet {
        let n = space.len();
        let mut out = MSet::empty(space);
        for &len in lens {
            if len > n {
                continue;
            }
            for a in 0..=(n - len) {
                let cnt = (a..a + len).filter(|i| s_set.contains(*i)).count();
                if mass_ge(cnt as f64, gamma.get() * len as f64) {
                    for x in a..a + len {
                        out.insert(x);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn interval_engine_matches_brute_force() {
        let s = Space::grid(&[37], 0.25).unwrap();
        let mut set = MSet::empty(&s);
        for i in [0, 1, 5, 6, 7, 12, 20, 21, 22, 23, 30, 36] {
            set.insert(i);
        }
        for gamma in [0.2, 1.0 / 3.0, 0.5, 0.7] {
            let gamma = Gamma::new(gamma).unwrap();
            for eps in [0.6, 1.3, 2.6] {
                let lens = line_lens(&s, eps);
                let (got, info) = block_superlevel_1d(&s, &set, gamma, &lens);
                assert!(!info.truncated);
                let want = brute_block_superlevel_1d(&s, &set, gamma, &lens);
                assert_eq!(got, want, "gamma {gamma:?} eps {eps}");
            }
        }
    }

    #[test]
    fn psi_engines_match_literal_scans() {
        let s = Space::grid(&[64], 0.125).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for round in 0..40 {
            let mut set = MSet::empty(&s);
            for i in 0..s.len() {
                if rng.gen_bool(0.3) {
                    set.insert(i);
                }
            }
            // alternate exact dyadic levels with arbitrary ones
            let g = if round % 2 == 0 {
                rng.gen_range(1..64) as f64 / 64.0
            } else {
                0.05 + 0.9 * rng.gen::<f64>()
            };
            let gamma = Gamma::new(g).unwrap();
            for cap in [1usize, 5, 17, 63, 64] {
                let lens: Vec<usize> = (1..=cap).collect();
                let fast = block_superlevel_1d(&s, &set, gamma, &lens).0;
                let scan = block_superlevel_1d_scan(&s, &set, gamma, &lens).0;
                assert_eq!(fast, scan, "block round {round} gamma {g} cap {cap}");
            }
            for jmax in [0usize, 3, 31, 63, 80] {
                let fast = ball_superlevel_1d(&s, &set, gamma, jmax).0;
                let scan = ball_superlevel_1d_scan(&s, &set, gamma, jmax).0;
                assert_eq!(fast, scan, "ball round {round} gamma {g} jmax {jmax}");
            }
        }
    }

    #[test]
    fn ball_engine_matches_pointwise_enumeration() {
        let s = Space::grid(&[25], 1.0).unwrap();
        let mut set = MSet::empty(&s);
        for i in [0, 3, 4, 5, 11, 17, 18, 24] {
            set.insert(i);
        }
        let family = fam(BasisKind::Balls, -3, 4);
        let opts = EngineOpts::default();
        for gamma in [0.3, 0.5, 0.75] {
            let gamma = Gamma::new(gamma).unwrap();
            for eps in [2.0, 7.0, 13.0] {
                // radii below eps/2 give half-widths 0..floor_strict(eps/2)
                let (engine, info) =
                    ball_superlevel_1d(&s, &set, gamma, math::floor_strict(eps / 2.0));
                assert_eq!(info.engine, "ball-scan-1d");
                let (pointwise, _) =
                    pointwise_superlevel(&s, &set, &family, gamma, eps, &opts).unwrap();
                assert_eq!(engine, pointwise, "gamma {gamma:?} eps {eps}");
            }
        }
    }

    #[test]
    fn sat_engine_matches_brute_force_2d() {
        let s = Space::grid(&[9, 11], 1.0).unwrap();
        let mut set = MSet::empty(&s);
        for (i, j) in [
            (0, 0),
            (0, 1),
            (1, 0),
            (4, 5),
            (4, 6),
            (5, 5),
            (5, 6),
            (8, 10),
            (2, 9),
            (7, 3),
        ] {
            set.insert(s.flat_index(&[i, j]));
        }
        let gamma = Gamma::new(0.4).unwrap();
        let family = fam(BasisKind::AxisRects { max_eccentricity: 3 }, -3, 4);
        let eps = 5.0;
        let opts = EngineOpts::default();
        let (pairs, truncated) = plane_pairs(&s, &family, eps, 3, &opts);
        assert!(!truncated);
        let (got, _) = block_superlevel_2d(&s, &set, gamma, (pairs.clone(), truncated));
        let mut want = MSet::empty(&s);
        for (l0, l1) in pairs {
            for a0 in 0..=(9 - l0) {
                for a1 in 0..=(11 - l1) {
                    let mut cnt = 0usize;
                    for i in a0..a0 + l0 {
                        for j in a1..a1 + l1 {
                            cnt += usize::from(set.contains(s.flat_index(&[i, j])));
                        }
                    }
                    if mass_ge(cnt as f64, gamma.get() * (l0 * l1) as f64) {
                        for i in a0..a0 + l0 {
                            for j in a1..a1 + l1 {
                                want.insert(s.flat_index(&[i, j]));
                            }
                        }
                    }
                }
            }
        }
        assert_eq!(got, want);
    }

    #[test]
    fn quantized_field_equals_pointwise_maximal_on_full_grid() {
        let s = Space::grid(&[24], 0.125).unwrap();
        let vals: Vec<f64> = (0..s.len())
            .map(|i| match i % 5 {
                0 => 0.0,
                1 => -1.5,
                2 => 0.5,
                3 => 3.0,
                _ => 1.0,
            })
            .collect();
        let f = Field::new(&s, vals).unwrap();
        let family = fam(BasisKind::Cubes, -1, 6);
        let gamma = Gamma::new(0.375).unwrap();
        let grid = abs_value_grid(&f);
        let mf = median_maximal_field(&s, &f, &family, gamma, &grid, &EngineOpts::default())
            .unwrap();
        assert!(!mf.provenance.truncated);
        for x in 0..s.len() {
            let direct = median_maximal(&s, &f, &family, x, gamma, ENUM_THRESHOLD).unwrap();
            assert_eq!(mf.values.value(x), direct, "point {x}");
        }
    }

    #[test]
    fn axis_aligned_paint_is_contained_in_block_superlevel() {
        let s = Space::grid(&[32, 32], 0.125).unwrap();
        let mut set = MSet::empty(&s);
        for i in 10..20 {
            for j in 12..22 {
                set.insert(s.flat_index(&[i, j]));
            }
        }
        let gamma = Gamma::new(0.5).unwrap();
        let rot = fam(
            BasisKind::RotatedRects {
                angle_count: 1,
                max_eccentricity: 1,
            },
            -1,
            5,
        );
        // an angle-0 square can rasterize to an off-square box, so compare
        // against axis rects of mild eccentricity
        let rects = fam(BasisKind::AxisRects { max_eccentricity: 2 }, -1, 5);
        let opts = EngineOpts::default();
        let eps = 2.0;
        let (painted, _) = indicator_superlevel(&s, &set, &rot, gamma, eps, &opts).unwrap();
        let (blocks, info) = indicator_superlevel(&s, &set, &rects, gamma, eps, &opts).unwrap();
        assert_eq!(info.engine, "block-sat-2d");
        assert!(painted.is_subset(&blocks));
        assert!(!painted.is_empty());
    }

    #[test]
    fn restricted_maximal_errors_below_resolution() {
        let s = Space::grid(&[16], 0.5).unwrap();
        let f = Field::constant(&s, 1.0).unwrap();
        let family = fam(BasisKind::Cubes, -3, 2);
        let gamma = Gamma::new(0.5).unwrap();
        let err = restricted_median_maximal(&s, &f, &family, 4, gamma, 0.1, 64);
        assert!(matches!(err, Err(Error::ResolutionExhausted { .. })));
        let ok = restricted_median_maximal(&s, &f, &family, 4, gamma, 1.0, 64).unwrap();
        assert_eq!(ok, 1.0);
    }

    #[test]
    fn oscillation_band_is_flat_for_constant_fields() {
        let s = Space::grid(&[12, 12], 0.25).unwrap();
        let f = Field::constant(&s, 2.5).unwrap();
        let family = fam(BasisKind::Balls, -2, 4);
        let bands = median_oscillation(&s, &f, &family, 40, Gamma::new(0.3).unwrap(), 32)
            .unwrap();
        assert_eq!(bands.len(), 7);
        for b in bands {
            assert_eq!(b.lo, 2.5);
            assert_eq!(b.hi, 2.5);
        }
    }

    #[test]
    fn dyadic_maximal_never_exceeds_cube_maximal() {
        let s = Space::grid(&[16, 16], 0.25).unwrap();
        let vals: Vec<f64> = (0..s.len())
            .map(|i| if i % 7 == 0 { 4.0 } else { (i % 3) as f64 })
            .collect();
        let f = Field::new(&s, vals).unwrap();
        let dy = fam(BasisKind::DyadicCubes, -3, 4);
        let cu = fam(BasisKind::Cubes, -3, 4);
        let gamma = Gamma::new(0.25).unwrap();
        for x in (0..s.len()).step_by(17) {
            let a = median_maximal(&s, &f, &dy, x, gamma, ENUM_THRESHOLD).unwrap();
            let b = median_maximal(&s, &f, &cu, x, gamma, ENUM_THRESHOLD).unwrap();
            assert!(a <= b, "dyadic {a} vs cubes {b} at {x}");
        }
    }
}
