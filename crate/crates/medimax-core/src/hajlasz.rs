//! Pointwise-gradient smoothness on finite metric spaces: s-gradients and
//! their dyadic-annulus refinements, minimal-gradient norms via convex
//! minimization, set capacities, and harnesses for the capacity laws.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::basis::{sets_at, BasisFamily};
use crate::error::{domain, Error, Result};
use crate::experiments::{Report, Row};
use crate::math;
use crate::maximal::{median_maximal, median_oscillation, set_average};
use crate::median::Gamma;
use crate::solver::{self, Constraint, Objective};
use crate::space::{estimate_doubling, lp_norm, Field, MSet, Space};

/// Public face of the internal solver controls.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveControl {
    pub rel_tol: f64,
    pub max_iters: usize,
}

impl Default for SolveControl {
    fn default() -> Self {
        SolveControl {
            rel_tol: 1e-6,
            max_iters: 100_000,
        }
    }
}

impl SolveControl {
    fn to_opts(&self) -> solver::SolveOpts {
        solver::SolveOpts {
            rel_tol: self.rel_tol,
            feas_tol: 1e-10,
            max_iters: self.max_iters,
        }
    }
}

/// Dyadic annulus index: the unique k with `2^(-k-1) <= d < 2^(-k)`.
/// Distances of 1 or more land in k <= -1; there is no cutoff.
pub fn annulus_index(d: f64) -> Result<i32> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(domain("annulus index needs a positive finite distance"));
    }
    let mut k = (math::ceil(-math::log2(d)) - 1.0) as i32;
    // float-robust: nudge until the defining inequalities hold exactly
    while d < math::exp2(-(k + 1) as f64) {
        k += 1;
    }
    while d >= math::exp2(-k as f64) {
        k -= 1;
    }
    Ok(k)
}

/// The annulus range realized by the space's positive pairwise distances,
/// or None for a single point.
pub fn realized_annuli(space: &Space) -> Result<Option<(i32, i32)>> {
    let n = space.len();
    let mut lo = i32::MAX;
    let mut hi = i32::MIN;
    let mut any = false;
    for x in 0..n {
        for y in (x + 1)..n {
            let d = space.distance(x, y);
            if d == 0.0 {
                continue;
            }
            let k = annulus_index(d)?;
            lo = lo.min(k);
            hi = hi.max(k);
            any = true;
        }
    }
    Ok(if any { Some((lo, hi)) } else { None })
}

/// A per-annulus stack of nonnegative fields, `fields[i]` belonging to
/// annulus `k_min + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSeq {
    pub k_min: i32,
    pub fields: Vec<Field>,
}

impl GradientSeq {
    pub fn new(space: &Space, k_min: i32, fields: Vec<Field>) -> Result<GradientSeq> {
        if fields.is_empty() {
            return Err(domain("a gradient sequence needs at least one level"));
        }
        for f in &fields {
            space.check_field(f);
            if f.values().iter().any(|v| *v < 0.0) {
                return Err(domain("gradient fields must be nonnegative"));
            }
        }
        Ok(GradientSeq { k_min, fields })
    }

    pub fn k_max(&self) -> i32 {
        self.k_min + self.fields.len() as i32 - 1
    }

    pub fn field(&self, k: i32) -> Option<&Field> {
        if k < self.k_min || k > self.k_max() {
            return None;
        }
        Some(&self.fields[(k - self.k_min) as usize])
    }
}

/// Which minimal-gradient norm a problem refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Family {
    /// Single-gradient space M^{s,p} (the q = infinity case).
    Mp,
    /// Pointwise-coupled sequence space M^s_{p,q}: L^p of l^q over levels.
    Mpq,
    /// Levelwise sequence space N^s_{p,q}: l^q over levels of L^p.
    Npq,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FSpaceSpec {
    pub family: Family,
    pub s: f64,
    pub p: f64,
    /// Ignored for `Mp` (treated as infinity).
    pub q: f64,
}

impl FSpaceSpec {
    pub fn mp(s: f64, p: f64) -> Result<FSpaceSpec> {
        let spec = FSpaceSpec {
            family: Family::Mp,
            s,
            p,
            q: f64::INFINITY,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn mpq(s: f64, p: f64, q: f64) -> Result<FSpaceSpec> {
        let spec = FSpaceSpec {
            family: Family::Mpq,
            s,
            p,
            q,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn npq(s: f64, p: f64, q: f64) -> Result<FSpaceSpec> {
        let spec = FSpaceSpec {
            family: Family::Npq,
            s,
            p,
            q,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0) || !self.p.is_finite() {
            return Err(domain("exponent p must be positive and finite"));
        }
        match self.family {
            Family::Mp => {
                if !(self.s > 0.0 && self.s <= 1.0) {
                    return Err(domain("smoothness s must lie in (0, 1]"));
                }
            }
            Family::Mpq | Family::Npq => {
                if !(self.s > 0.0 && self.s < 1.0) {
                    return Err(domain("sequence-space smoothness s must lie in (0, 1)"));
                }
                if !(self.q > 0.0) {
                    return Err(domain("exponent q must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Errors with `Nonconvex` when minimization is out of scope; only
    /// feasibility checks and explicit upper bounds apply below exponent 1.
    pub fn solver_ready(&self) -> Result<()> {
        self.validate()?;
        if self.p < 1.0 {
            return Err(Error::Nonconvex);
        }
        if matches!(self.family, Family::Mpq | Family::Npq) && self.q.is_finite() && self.q < 1.0 {
            return Err(Error::Nonconvex);
        }
        Ok(())
    }

    fn effective_q(&self) -> f64 {
        match self.family {
            Family::Mp => f64::INFINITY,
            _ => self.q,
        }
    }
}

/// A constraint pair and the amount by which it fails.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub x: usize,
    pub y: usize,
    pub gap: f64,
}

/// Exact all-pairs check of `|u(x) - u(y)| <= d(x,y)^s (g(x) + g(y))`.
/// Returns the worst violating pair when the answer is false.
pub fn is_s_gradient(
    space: &Space,
    u: &Field,
    g: &Field,
    s: f64,
) -> Result<(bool, Option<Violation>)> {
    space.check_field(u);
    space.check_field(g);
    if !(s > 0.0 && s <= 1.0) {
        return Err(domain("smoothness s must lie in (0, 1]"));
    }
    if g.values().iter().any(|v| *v < 0.0) {
        return Err(domain("gradient fields must be nonnegative"));
    }
    let n = space.len();
    let mut worst: Option<Violation> = None;
    for x in 0..n {
        for y in (x + 1)..n {
            let d = space.distance(x, y);
            let lhs = math::abs(u.value(x) - u.value(y));
            let rhs = math::powf(d, s) * (g.value(x) + g.value(y));
            let gap = lhs - rhs;
            if gap > 0.0 && worst.map_or(true, |w| gap > w.gap) {
                worst = Some(Violation { x, y, gap });
            }
        }
    }
    Ok((worst.is_none(), worst))
}

/// Per-annulus variant: the pair at distance d constrains only the field of
/// its own annulus. Errors when a realized annulus falls outside the
/// sequence's range.
pub fn is_fractional_s_gradient(
    space: &Space,
    u: &Field,
    seq: &GradientSeq,
    s: f64,
) -> Result<(bool, Option<Violation>)> {
    space.check_field(u);
    if !(s > 0.0 && s < 1.0) {
        return Err(domain("sequence-space smoothness s must lie in (0, 1)"));
    }
    let n = space.len();
    let mut worst: Option<Violation> = None;
    for x in 0..n {
        for y in (x + 1)..n {
            let d = space.distance(x, y);
            if d == 0.0 {
                continue;
            }
            let k = annulus_index(d)?;
            let g = seq.field(k).ok_or_else(|| {
                domain(format!(
                    "pair at distance {d} realizes annulus {k}, outside the sequence range \
                     [{}, {}]",
                    seq.k_min,
                    seq.k_max()
                ))
            })?;
            let lhs = math::abs(u.value(x) - u.value(y));
            let rhs = math::powf(d, s) * (g.value(x) + g.value(y));
            let gap = lhs - rhs;
            if gap > 0.0 && worst.map_or(true, |w| gap > w.gap) {
                worst = Some(Violation { x, y, gap });
            }
        }
    }
    Ok((worst.is_none(), worst))
}

/// A returned minimizer must satisfy its constraints to near machine
/// precision; anything else is a solver defect surfaced loudly.
fn certify(sol: &solver::Solution) -> Result<()> {
    if sol.max_violation > 1e-7 {
        return Err(domain(format!(
            "solver certificate violates constraints by {:.3e} \
             ({} iterations, converged: {})",
            sol.max_violation, sol.iters, sol.converged
        )));
    }
    Ok(())
}

/// One pairwise requirement `g(x) + g(y) >= rhs` in annulus `k`.
struct PairNeed {
    x: usize,
    y: usize,
    k: i32,
    rhs: f64,
}

fn pair_needs(space: &Space, u: &Field, s: f64) -> Result<Vec<PairNeed>> {
    let n = space.len();
    let mut out = Vec::new();
    for x in 0..n {
        for y in (x + 1)..n {
            let d = space.distance(x, y);
            let du = math::abs(u.value(x) - u.value(y));
            if d == 0.0 {
                if du > 0.0 {
                    return Err(domain(
                        "coincident points carry different values; no gradient exists",
                    ));
                }
                continue;
            }
            if du == 0.0 {
                continue; // satisfied by any nonnegative gradient
            }
            out.push(PairNeed {
                x,
                y,
                k: annulus_index(d)?,
                rhs: du / math::powf(d, s),
            });
        }
    }
    Ok(out)
}

fn feasible_start(n: usize, needs: &[PairNeed]) -> (Vec<f64>, f64) {
    let top = needs.iter().fold(0.0f64, |m, c| m.max(c.rhs));
    (vec![top / 2.0; n], top)
}

/// Minimal `||g||_p` over s-gradients of `u` (the seminorm of the
/// single-gradient space), with the minimizing gradient.
pub fn hajlasz_norm(
    space: &Space,
    u: &Field,
    s: f64,
    p: f64,
    control: &SolveControl,
) -> Result<(f64, Field)> {
    space.check_field(u);
    let spec = FSpaceSpec::mp(s, p)?;
    spec.solver_ready()?;
    let n = space.len();
    let needs = pair_needs(space, u, s)?;
    if needs.is_empty() {
        let zero = Field::constant(space, 0.0)?;
        return Ok((0.0, zero));
    }
    let cons: Vec<Constraint> = needs
        .iter()
        .map(|c| Constraint {
            terms: vec![(c.x, 1.0), (c.y, 1.0)],
            rhs: c.rhs,
        })
        .collect();
    let obj = Objective::PowerSum {
        weights: space.weights().to_vec(),
        p,
    };
    let (start, _) = feasible_start(n, &needs);
    let lo = vec![0.0; n];
    let hi = vec![f64::INFINITY; n];
    let sol = solver::minimize(&obj, &cons, &lo, &hi, &start, &control.to_opts());
    certify(&sol)?;
    let g = Field::new(space, sol.v)?;
    Ok((math::powf(sol.value, 1.0 / p), g))
}

/// Minimal mixed norm over fractional s-gradient sequences. Levelwise
/// norms split into independent per-annulus problems; pointwise-coupled
/// norms solve jointly. `q = infinity` reduces to the single-gradient
/// problem (every level shares the optimal gradient for `Mpq`, and the
/// worst level decides for `Npq`).
pub fn seq_norm(
    space: &Space,
    u: &Field,
    spec: &FSpaceSpec,
    control: &SolveControl,
) -> Result<(f64, GradientSeq)> {
    space.check_field(u);
    spec.validate()?;
    spec.solver_ready()?;
    let n = space.len();
    let needs = pair_needs(space, u, spec.s)?;
    let (k_lo, k_hi) = match realized_annuli(space)? {
        Some(r) => r,
        None => (0, 0),
    };
    let groups = (k_hi - k_lo + 1) as usize;
    let zero_seq = |space: &Space| -> Result<GradientSeq> {
        let fields = (0..groups)
            .map(|_| Field::constant(space, 0.0))
            .collect::<Result<Vec<_>>>()?;
        GradientSeq::new(space, k_lo, fields)
    };
    if needs.is_empty() {
        return Ok((0.0, zero_seq(space)?));
    }
    let q = spec.effective_q();
    let p = spec.p;

    if q.is_infinite() && !matches!(spec.family, Family::Npq) {
        // pointwise sup over levels: one gradient serves every level
        let (val, g) = hajlasz_norm(space, u, spec.s, p, control)?;
        let fields = vec![g; groups];
        return Ok((val, GradientSeq::new(space, k_lo, fields)?));
    }

    match spec.family {
        Family::Npq => {
            // levels are independent: minimize each L^p norm, then combine
            let mut level_norms = vec![0.0f64; groups];
            let mut fields = Vec::with_capacity(groups);
            for gi in 0..groups {
                let k = k_lo + gi as i32;
                let cons: Vec<Constraint> = needs
                    .iter()
                    .filter(|c| c.k == k)
                    .map(|c| Constraint {
                        terms: vec![(c.x, 1.0), (c.y, 1.0)],
                        rhs: c.rhs,
                    })
                    .collect();
                if cons.is_empty() {
                    fields.push(Field::constant(space, 0.0)?);
                    continue;
                }
                let obj = Objective::PowerSum {
                    weights: space.weights().to_vec(),
                    p,
                };
                let top = cons.iter().fold(0.0f64, |m, c| m.max(c.rhs));
                let start = vec![top / 2.0; n];
                let sol = solver::minimize(
                    &obj,
                    &cons,
                    &vec![0.0; n],
                    &vec![f64::INFINITY; n],
                    &start,
                    &control.to_opts(),
                );
                certify(&sol)?;
                level_norms[gi] = math::powf(sol.value, 1.0 / p);
                fields.push(Field::new(space, sol.v)?);
            }
            let value = if q.is_infinite() {
                level_norms.iter().fold(0.0f64, |m, a| m.max(*a))
            } else {
                math::powf(
                    level_norms.iter().map(|a| math::powf(*a, q)).sum(),
                    1.0 / q,
                )
            };
            Ok((value, GradientSeq::new(space, k_lo, fields)?))
        }
        Family::Mpq => {
            // levels couple through the pointwise l^q sum
            let obj = Objective::GroupPower {
                point_weights: space.weights().to_vec(),
                p,
                q,
                groups,
            };
            let cons: Vec<Constraint> = needs
                .iter()
                .map(|c| {
                    let gi = (c.k - k_lo) as usize;
                    Constraint {
                        terms: vec![(gi * n + c.x, 1.0), (gi * n + c.y, 1.0)],
                        rhs: c.rhs,
                    }
                })
                .collect();
            let top = needs.iter().fold(0.0f64, |m, c| m.max(c.rhs));
            let start = vec![top / 2.0; groups * n];
            let sol = solver::minimize(
                &obj,
                &cons,
                &vec![0.0; groups * n],
                &vec![f64::INFINITY; groups * n],
                &start,
                &control.to_opts(),
            );
            certify(&sol)?;
            let mut fields = Vec::with_capacity(groups);
            for gi in 0..groups {
                fields.push(Field::new(space, sol.v[gi * n..(gi + 1) * n].to_vec())?);
            }
            Ok((
                math::powf(sol.value, 1.0 / p),
                GradientSeq::new(space, k_lo, fields)?,
            ))
        }
        Family::Mp => unreachable!("infinite q handled above"),
    }
}

/// Full norm: `||u||_p` plus the seminorm of the chosen family.
pub fn fspace_norm(
    space: &Space,
    u: &Field,
    spec: &FSpaceSpec,
    control: &SolveControl,
) -> Result<f64> {
    let base = lp_norm(space, u, spec.p)?;
    let sem = match spec.family {
        Family::Mp => hajlasz_norm(space, u, spec.s, spec.p, control)?.0,
        _ => seq_norm(space, u, spec, control)?.0,
    };
    Ok(base + sem)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityOpts {
    /// Neighborhood radius; None means half the minimal positive distance,
    /// which pins exactly the set itself on generic spaces.
    pub rho: Option<f64>,
    /// Hard cap on solvable space sizes.
    pub size_cap: usize,
    /// Restrict admissible functions to [0, 1] (equivalent to the
    /// unrestricted class; both are exposed so the equivalence can be
    /// tested).
    pub restricted: bool,
    pub solve: SolveControl,
}

impl Default for CapacityOpts {
    fn default() -> Self {
        CapacityOpts {
            rho: None,
            size_cap: 64,
            restricted: true,
            solve: SolveControl::default(),
        }
    }
}

fn closed_neighborhood(space: &Space, e: &MSet, rho: f64) -> MSet {
    let mut out = e.clone();
    for x in 0..space.len() {
        if out.contains(x) {
            continue;
        }
        for y in e.iter() {
            if space.distance(x, y) <= rho {
                out.insert(x);
                break;
            }
        }
    }
    out
}

/// Set capacity for the chosen family: the least `(||u||_p + seminorm)^p`
/// over functions pinned to 1 on the rho-neighborhood of `E`. Returns the
/// optimal `u`.
pub fn capacity(
    space: &Space,
    e: &MSet,
    spec: &FSpaceSpec,
    opts: &CapacityOpts,
) -> Result<(f64, Field)> {
    space.check(e);
    spec.validate()?;
    spec.solver_ready()?;
    let n = space.len();
    if n > opts.size_cap {
        return Err(Error::SizeCap {
            size: n,
            cap: opts.size_cap,
        });
    }
    if e.is_empty() {
        return Ok((0.0, Field::constant(space, 0.0)?));
    }
    if matches!(spec.family, Family::Mpq | Family::Npq) && !spec.q.is_finite() {
        return Err(domain("sequence-space capacity needs a finite q"));
    }
    let rho = opts.rho.unwrap_or_else(|| space.min_positive_distance() / 2.0);
    if rho < 0.0 {
        return Err(domain("neighborhood radius must be nonnegative"));
    }
    let pinned = closed_neighborhood(space, e, rho);

    let (k_lo, k_hi) = match realized_annuli(space)? {
        Some(r) => r,
        None => (0, 0),
    };
    let groups = match spec.family {
        Family::Mp => 1,
        _ => (k_hi - k_lo + 1) as usize,
    };
    let p = spec.p;
    let vars = n * (groups + 1);

    // constraints: for each pair, both signs of
    // u(x) - u(y) <= d^s (g_k(x) + g_k(y))
    let mut cons = Vec::new();
    for x in 0..n {
        for y in (x + 1)..n {
            let d = space.distance(x, y);
            if d == 0.0 {
                continue;
            }
            let gi = match spec.family {
                Family::Mp => 0,
                _ => (annulus_index(d)? - k_lo) as usize,
            };
            let ds = math::powf(d, spec.s);
            let gx = (1 + gi) * n + x;
            let gy = (1 + gi) * n + y;
            cons.push(Constraint {
                terms: vec![(x, -1.0), (y, 1.0), (gx, ds), (gy, ds)],
                rhs: 0.0,
            });
            cons.push(Constraint {
                terms: vec![(x, 1.0), (y, -1.0), (gx, ds), (gy, ds)],
                rhs: 0.0,
            });
        }
    }

    let mut lo = vec![0.0; vars];
    let mut hi = vec![f64::INFINITY; vars];
    for x in 0..n {
        if pinned.contains(x) {
            lo[x] = 1.0;
            hi[x] = 1.0;
        } else if opts.restricted {
            hi[x] = 1.0;
        }
    }
    // u == 1, g == 0 is always admissible; start there
    let mut start = vec![0.0; vars];
    for x in 0..n {
        start[x] = 1.0;
    }

    let obj = Objective::NormPlusMixed {
        point_weights: space.weights().to_vec(),
        p,
        q: match spec.family {
            Family::Mp => 1.0, // single group: the inner sum is trivial
            _ => spec.q,
        },
        groups,
        per_k: matches!(spec.family, Family::Npq),
    };
    let sol = solver::minimize(&obj, &cons, &lo, &hi, &start, &opts.solve.to_opts());
    certify(&sol)?;
    let u = Field::new(space, sol.v[0..n].to_vec())?;
    Ok((math::powf(sol.value, p), u))
}

fn subadd_r(spec: &FSpaceSpec) -> f64 {
    let q = spec.effective_q();
    if q.is_infinite() {
        1.0
    } else {
        (q / spec.p).min(1.0)
    }
}

/// Checks `C(E_1 ∪ ... ∪ E_m)^r <= C_est * sum C(E_i)^r` with
/// `r = min(1, q/p)`, reporting the smallest working constant.
pub fn subadditivity_check(
    space: &Space,
    sets: &[MSet],
    spec: &FSpaceSpec,
    opts: &CapacityOpts,
) -> Result<Report> {
    if sets.is_empty() {
        return Err(domain("subadditivity check needs at least one set"));
    }
    let mut report = Report::new("capacity-subadd");
    let r = subadd_r(spec);
    report
        .meta
        .push(("r".to_string(), format!("{r}")));
    let mut union = MSet::empty(space);
    let mut sum_r = 0.0;
    for (i, e) in sets.iter().enumerate() {
        let (c, _) = capacity(space, e, spec, opts)?;
        sum_r += math::powf(c, r);
        union = union.union(e);
        report.rows.push(Row::new(&[
            ("set", i as f64),
            ("capacity", c),
        ]));
    }
    let (c_union, _) = capacity(space, &union, spec, opts)?;
    report.rows.push(Row::new(&[
        ("set", -1.0),
        ("capacity", c_union),
    ]));
    let c_est = if sum_r > 0.0 {
        math::powf(c_union, r) / sum_r
    } else if c_union > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    report.summary.push(("c_est".to_string(), c_est));
    report
        .verdicts
        .push(("subadd.finite".to_string(), c_est.is_finite()));
    Ok(report)
}

/// Capacities along an increasing chain: verdicts are near-monotonicity and
/// agreement of the final element with an independent solve of the union.
pub fn capacity_monotone_limit(
    space: &Space,
    chain: &[MSet],
    spec: &FSpaceSpec,
    tol: f64,
    opts: &CapacityOpts,
) -> Result<Report> {
    if chain.is_empty() {
        return Err(domain("monotone limit check needs a nonempty chain"));
    }
    if !(spec.p > 1.0) || !(spec.effective_q() > 1.0) {
        return Err(domain(
            "the monotone limit law is exercised only for p > 1 and q > 1",
        ));
    }
    for w in chain.windows(2) {
        if !w[0].is_subset(&w[1]) {
            return Err(domain("chain must be increasing under inclusion"));
        }
    }
    let mut report = Report::new("capacity-monotone-limit");
    let mut caps = Vec::with_capacity(chain.len());
    for (i, e) in chain.iter().enumerate() {
        let (c, _) = capacity(space, e, spec, opts)?;
        caps.push(c);
        report.rows.push(Row::new(&[("i", i as f64), ("capacity", c)]));
    }
    let mut union = MSet::empty(space);
    for e in chain {
        union = union.union(e);
    }
    let (c_union, _) = capacity(space, &union, spec, opts)?;
    report
        .summary
        .push(("union_capacity".to_string(), c_union));
    let slack = 1e-6 * (1.0 + caps.iter().fold(0.0f64, |m, c| m.max(*c)));
    let monotone = caps.windows(2).all(|w| w[1] >= w[0] - slack);
    let last = *caps.last().unwrap();
    let gap = math::abs(last - c_union);
    report.summary.push(("final_gap".to_string(), gap));
    report
        .verdicts
        .push(("monotone.nondecreasing".to_string(), monotone));
    report
        .verdicts
        .push(("monotone.limit-matches".to_string(), gap <= tol));
    Ok(report)
}

/// Which field drives the capacitary superlevel sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeakTypeMode {
    /// Finest-scale upper median envelope (the limsup surrogate).
    LimsupMedian,
    /// Finest-scale largest average.
    LimsupAverage,
    /// Median maximal function over all scales.
    Maximal,
}

fn weak_type_field(
    space: &Space,
    u: &Field,
    family: &BasisFamily,
    gamma: Gamma,
    mode: WeakTypeMode,
    budget: usize,
) -> Result<Vec<f64>> {
    let n = space.len();
    let mut out = Vec::with_capacity(n);
    let abs = u.abs();
    for x in 0..n {
        let v = match mode {
            WeakTypeMode::LimsupMedian => {
                let bands = median_oscillation(space, &abs, family, x, gamma, budget)?;
                bands.last().map(|b| b.hi).unwrap_or(0.0)
            }
            WeakTypeMode::LimsupAverage => {
                let mut best = f64::NEG_INFINITY;
                for b in sets_at(space, family, x, family.finest(), budget)? {
                    best = best.max(set_average(space, &abs, &b.members)?);
                }
                best
            }
            WeakTypeMode::Maximal => median_maximal(space, &abs, family, x, gamma, budget)?,
        };
        out.push(v);
    }
    Ok(out)
}

/// Capacities of superlevel sets of limsup/maximal fields against the
/// scaling `lambda^(-p) ||u||_F^p`. Reports the largest observed ratio; in
/// `Maximal` mode also whether capacities decay as lambda grows.
#[allow(clippy::too_many_arguments)]
pub fn capacitary_weak_type(
    space: &Space,
    u_list: &[(String, Field)],
    spec: &FSpaceSpec,
    gamma: Gamma,
    family: &BasisFamily,
    lambda_grid: &[f64],
    mode: WeakTypeMode,
    budget: usize,
    opts: &CapacityOpts,
) -> Result<Report> {
    if u_list.is_empty() || lambda_grid.is_empty() {
        return Err(domain("capacitary scan needs inputs and a lambda grid"));
    }
    let mut report = Report::new("capacitary-weaktype");
    report
        .meta
        .push(("gamma".to_string(), format!("{}", gamma.get())));
    report
        .meta
        .push(("family".to_string(), family.descriptor()));
    let samples: Vec<(usize, f64)> = (0..space.len().min(8))
        .map(|i| (i * space.len() / 8.min(space.len()).max(1), space.diameter() / 4.0))
        .filter(|(x, r)| *x < space.len() && *r > 0.0)
        .collect();
    if let Ok(d) = estimate_doubling(space, &samples) {
        report
            .meta
            .push(("doubling_c_d".to_string(), format!("{:.6}", d.c_d)));
    }
    let mut c_est = 0.0f64;
    let mut monotone = true;
    for (ui, (name, u)) in u_list.iter().enumerate() {
        let norm = fspace_norm(space, u, spec, &opts.solve)?;
        let vals = weak_type_field(space, u, family, gamma, mode, budget)?;
        let mut prev = f64::INFINITY;
        for &lam in lambda_grid {
            if !(lam > 0.0) {
                return Err(domain("lambda grid must be positive"));
            }
            let mut sup = MSet::empty(space);
            for (x, v) in vals.iter().enumerate() {
                if *v > lam {
                    sup.insert(x);
                }
            }
            let (cap, _) = capacity(space, &sup, spec, opts)?;
            if cap > prev + 1e-9 {
                monotone = false;
            }
            prev = cap;
            let bound = math::powf(lam, -spec.p) * math::powf(norm, spec.p);
            let ratio = if bound > 0.0 {
                cap / bound
            } else if cap > 0.0 {
                f64::INFINITY
            } else {
                continue; // 0/0: vacuous level
            };
            c_est = c_est.max(ratio);
            report.rows.push(Row::new(&[
                ("input", ui as f64),
                ("lambda", lam),
                ("capacity", cap),
                ("ratio", ratio),
            ]));
        }
        let _ = name;
    }
    report.summary.push(("c_est".to_string(), c_est));
    report
        .verdicts
        .push(("capweak.finite".to_string(), c_est.is_finite()));
    if matches!(mode, WeakTypeMode::Maximal) {
        report
            .verdicts
            .push(("capweak.decay-in-lambda".to_string(), monotone));
    }
    Ok(report)
}

/// Brute-force oracle: coordinate-grid search with shrinking boxes. Returns
/// the best feasible value and point, or None when no grid point of the
/// first round is feasible.
pub fn grid_search_min(
    lo: &[f64],
    hi: &[f64],
    levels: usize,
    rounds: usize,
    mut feasible: impl FnMut(&[f64]) -> bool,
    mut value: impl FnMut(&[f64]) -> f64,
) -> Option<(f64, Vec<f64>)> {
    let dims = lo.len();
    assert_eq!(hi.len(), dims);
    assert!(levels >= 2);
    let mut clo = lo.to_vec();
    let mut chi = hi.to_vec();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut point = vec![0.0; dims];
    for _ in 0..rounds {
        let mut idx = vec![0usize; dims];
        let mut round_best: Option<(f64, Vec<f64>)> = None;
        loop {
            for a in 0..dims {
                let t = idx[a] as f64 / (levels - 1) as f64;
                point[a] = clo[a] + t * (chi[a] - clo[a]);
            }
            if feasible(&point) {
                let v = value(&point);
                if round_best.as_ref().map_or(true, |(b, _)| v < *b) {
                    round_best = Some((v, point.clone()));
                }
            }
            let mut a = 0;
            loop {
                if a == dims {
                    break;
                }
                idx[a] += 1;
                if idx[a] < levels {
                    break;
                }
                idx[a] = 0;
                a += 1;
            }
            if a == dims {
                break;
            }
        }
        let (rv, rp) = round_best?;
        if best.as_ref().map_or(true, |(b, _)| rv < *b) {
            best = Some((rv, rp.clone()));
        }
        // shrink the box around the incumbent, staying inside the original
        let anchor = &best.as_ref().unwrap().1;
        for a in 0..dims {
            let half = 1.5 * (chi[a] - clo[a]) / (levels - 1) as f64;
            clo[a] = (anchor[a] - half).max(lo[a]);
            chi[a] = (anchor[a] + half).min(hi[a]);
        }
    }
    best
}

/// Oracle for the single-gradient seminorm on tiny spaces.
pub fn oracle_hajlasz_norm(space: &Space, u: &Field, s: f64, p: f64) -> Result<f64> {
    space.check_field(u);
    let n = space.len();
    if n > 6 {
        return Err(Error::SizeCap { size: n, cap: 6 });
    }
    let needs = pair_needs(space, u, s)?;
    if needs.is_empty() {
        return Ok(0.0);
    }
    let top = needs.iter().fold(0.0f64, |m, c| m.max(c.rhs));
    let w = space.weights().to_vec();
    let (val, _) = grid_search_min(
        &vec![0.0; n],
        &vec![top; n],
        9,
        9,
        |g| needs.iter().all(|c| g[c.x] + g[c.y] >= c.rhs - 1e-12),
        |g| {
            let mut sum = 0.0;
            for (x, wx) in w.iter().enumerate() {
                sum += wx * math::powf(g[x], p);
            }
            math::powf(sum, 1.0 / p)
        },
    )
    .expect("the top corner is always feasible");
    Ok(val)
}

/// Oracle for the mixed sequence norms on tiny spaces.
pub fn oracle_seq_norm(space: &Space, u: &Field, spec: &FSpaceSpec) -> Result<f64> {
    space.check_field(u);
    spec.validate()?;
    let n = space.len();
    let needs = pair_needs(space, u, spec.s)?;
    if needs.is_empty() {
        return Ok(0.0);
    }
    let (k_lo, k_hi) = realized_annuli(space)?.unwrap();
    let groups = (k_hi - k_lo + 1) as usize;
    let vars = groups * n;
    if vars > 9 {
        return Err(Error::SizeCap { size: vars, cap: 9 });
    }
    let q = spec.effective_q();
    let top = needs.iter().fold(0.0f64, |m, c| m.max(c.rhs));
    let w = space.weights().to_vec();
    let p = spec.p;
    let value = |g: &[f64]| -> f64 {
        if q.is_infinite() {
            if matches!(spec.family, Family::Npq) {
                // sup over levels of the L^p norms
                let mut worst = 0.0f64;
                for gi in 0..groups {
                    let mut a = 0.0;
                    for (x, wx) in w.iter().enumerate() {
                        a += wx * math::powf(g[gi * n + x], p);
                    }
                    worst = worst.max(math::powf(a, 1.0 / p));
                }
                return worst;
            }
            let mut sum = 0.0;
            for (x, wx) in w.iter().enumerate() {
                let mut worst = 0.0f64;
                for gi in 0..groups {
                    worst = worst.max(g[gi * n + x]);
                }
                sum += wx * math::powf(worst, p);
            }
            return math::powf(sum, 1.0 / p);
        }
        match spec.family {
            Family::Npq => {
                let mut t = 0.0;
                for gi in 0..groups {
                    let mut a = 0.0;
                    for (x, wx) in w.iter().enumerate() {
                        a += wx * math::powf(g[gi * n + x], p);
                    }
                    t += math::powf(math::powf(a, 1.0 / p), q);
                }
                math::powf(t, 1.0 / q)
            }
            _ => {
                let mut sum = 0.0;
                for (x, wx) in w.iter().enumerate() {
                    let mut inner = 0.0;
                    for gi in 0..groups {
                        inner += math::powf(g[gi * n + x], q);
                    }
                    sum += wx * math::powf(inner, p / q);
                }
                math::powf(sum, 1.0 / p)
            }
        }
    };
    let (val, _) = grid_search_min(
        &vec![0.0; vars],
        &vec![top; vars],
        7,
        9,
        |g| {
            needs.iter().all(|c| {
                let gi = (c.k - k_lo) as usize;
                g[gi * n + c.x] + g[gi * n + c.y] >= c.rhs - 1e-12
            })
        },
        value,
    )
    .expect("the top corner is always feasible");
    Ok(val)
}

/// Oracle for capacity on tiny spaces: joint grid search over (u, g).
pub fn oracle_capacity(
    space: &Space,
    e: &MSet,
    spec: &FSpaceSpec,
    rho: Option<f64>,
) -> Result<f64> {
    space.check(e);
    spec.validate()?;
    let n = space.len();
    if e.is_empty() {
        return Ok(0.0);
    }
    let groups = match spec.family {
        Family::Mp => 1,
        _ => {
            let (k_lo, k_hi) = realized_annuli(space)?.unwrap();
            (k_hi - k_lo + 1) as usize
        }
    };
    let vars = n * (groups + 1);
    if vars > 9 {
        return Err(Error::SizeCap { size: vars, cap: 9 });
    }
    let rho = rho.unwrap_or_else(|| space.min_positive_distance() / 2.0);
    let pinned = closed_neighborhood(space, e, rho);
    let (k_lo, _) = realized_annuli(space)?.unwrap_or((0, 0));
    let p = spec.p;
    let q = spec.effective_q();
    let w = space.weights().to_vec();

    // pairwise data for feasibility
    let mut pairs = Vec::new();
    for x in 0..n {
        for y in (x + 1)..n {
            let d = space.distance(x, y);
            if d == 0.0 {
                continue;
            }
            let gi = match spec.family {
                Family::Mp => 0usize,
                _ => (annulus_index(d)? - k_lo) as usize,
            };
            pairs.push((x, y, gi, math::powf(d, spec.s)));
        }
    }

    let mut lo = vec![0.0; vars];
    let mut hi = vec![1.0; vars];
    for x in 0..n {
        if pinned.contains(x) {
            lo[x] = 1.0;
        }
    }
    // gradients range over [0, gmax]; u spans at most 1 and the nearest
    // distance bounds the needed gradient
    let dmin = space.min_positive_distance();
    let gmax = 1.0 / math::powf(dmin, spec.s);
    for v in hi.iter_mut().skip(n) {
        *v = gmax;
    }

    let value = |v: &[f64]| -> f64 {
        let mut up = 0.0;
        for (x, wx) in w.iter().enumerate() {
            up += wx * math::powf(v[x], p);
        }
        let nu = math::powf(up, 1.0 / p);
        let sem = match spec.family {
            Family::Npq => {
                let mut t = 0.0;
                for gi in 0..groups {
                    let mut a = 0.0;
                    for (x, wx) in w.iter().enumerate() {
                        a += wx * math::powf(v[(gi + 1) * n + x], p);
                    }
                    t += math::powf(math::powf(a, 1.0 / p), q);
                }
                math::powf(t, 1.0 / q)
            }
            Family::Mpq => {
                let mut sum = 0.0;
                for (x, wx) in w.iter().enumerate() {
                    let mut inner = 0.0;
                    for gi in 0..groups {
                        inner += math::powf(v[(gi + 1) * n + x], q);
                    }
                    sum += wx * math::powf(inner, p / q);
                }
                math::powf(sum, 1.0 / p)
            }
            Family::Mp => {
                let mut sum = 0.0;
                for (x, wx) in w.iter().enumerate() {
                    sum += wx * math::powf(v[n + x], p);
                }
                math::powf(sum, 1.0 / p)
            }
        };
        math::powf(nu + sem, p)
    };
    let (val, _) = grid_search_min(
        &lo,
        &hi,
        7,
        9,
        |v| {
            pairs.iter().all(|(x, y, gi, ds)| {
                math::abs(v[*x] - v[*y]) <= ds * (v[(gi + 1) * n + x] + v[(gi + 1) * n + y]) + 1e-12
            })
        },
        value,
    )
    .expect("u = 1, g = gmax is feasible");
    Ok(val)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Metric;

    fn two_points(d: f64) -> Space {
        Space::cloud(
            1,
            vec![0.0, d],
            vec![1.0, 1.0],
            Metric::Euclidean,
        )
        .unwrap()
    }

    #[test]
    fn annulus_indices_match_their_defining_band() {
        for &(d, want) in &[(1.0, -1), (0.5, 0), (0.3, 1), (0.25, 1), (0.24, 2), (2.0, -2)] {
            assert_eq!(annulus_index(d).unwrap(), want, "d = {d}");
        }
        for d in [1e-6, 0.1, 0.7, 3.7, 128.0] {
            let k = annulus_index(d).unwrap();
            assert!(math::exp2(-(k + 1) as f64) <= d && d < math::exp2(-k as f64));
        }
    }

    #[test]
    fn constant_functions_have_zero_gradients() {
        let s = two_points(1.0);
        let u = Field::constant(&s, 3.0).unwrap();
        let g = Field::constant(&s, 0.0).unwrap();
        let (ok, worst) = is_s_gradient(&s, &u, &g, 1.0).unwrap();
        assert!(ok);
        assert!(worst.is_none());
        let (val, _) = hajlasz_norm(&s, &u, 1.0, 2.0, &SolveControl::default()).unwrap();
        assert_eq!(val, 0.0);
    }

    #[test]
    fn two_point_jump_splits_the_gradient_evenly() {
        let s = two_points(1.0);
        let u = Field::new(&s, vec![0.0, 1.0]).unwrap();
        let g = Field::constant(&s, 0.5).unwrap();
        let (ok, _) = is_s_gradient(&s, &u, &g, 0.7).unwrap();
        assert!(ok, "g = 1/2 each achieves equality at d = 1");
        let zero = Field::constant(&s, 0.0).unwrap();
        let (bad, worst) = is_s_gradient(&s, &u, &zero, 0.7).unwrap();
        assert!(!bad);
        assert_eq!(worst.unwrap().gap, 1.0);

        let (val, gopt) = hajlasz_norm(&s, &u, 0.5, 2.0, &SolveControl::default()).unwrap();
        let want = 1.0 / math::sqrt(2.0);
        assert!((val - want).abs() < 1e-5, "val {val} want {want}");
        let (feas, _) = is_s_gradient(&s, &u, &gopt, 0.5).unwrap();
        assert!(feas, "solver certificate must be feasible");
    }

    #[test]
    fn solver_matches_oracle_on_small_instances() {
        let s = Space::cloud(
            1,
            vec![0.0, 0.4, 1.1],
            vec![1.0, 0.5, 2.0],
            Metric::Euclidean,
        )
        .unwrap();
        let u = Field::new(&s, vec![0.2, 1.0, 0.1]).unwrap();
        for p in [1.0, 1.5, 2.0] {
            let (val, _) = hajlasz_norm(&s, &u, 0.8, p, &SolveControl::default()).unwrap();
            let oracle = oracle_hajlasz_norm(&s, &u, 0.8, p).unwrap();
            assert!(
                (val - oracle).abs() < 1e-3,
                "p = {p}: solver {val} oracle {oracle}"
            );
        }
    }

    #[test]
    fn seq_norm_single_annulus_reduces_to_hajlasz_norm() {
        // a near-equilateral triangle: all sides inside the band [0.25, 0.5)
        let s = Space::cloud(
            2,
            vec![0.0, 0.0, 0.3, 0.0, 0.15, 0.26],
            vec![1.0, 1.0, 1.0],
            Metric::Euclidean,
        )
        .unwrap();
        assert_eq!(realized_annuli(&s).unwrap(), Some((1, 1)));
        let u = Field::new(&s, vec![0.0, 0.5, 0.2]).unwrap();
        let spec = FSpaceSpec::npq(0.6, 2.0, f64::INFINITY).unwrap();
        let (nval, seq) = seq_norm(&s, &u, &spec, &SolveControl::default()).unwrap();
        let (hval, _) = hajlasz_norm(&s, &u, 0.6, 2.0, &SolveControl::default()).unwrap();
        assert!((nval - hval).abs() < 1e-6, "{nval} vs {hval}");
        let (ok, _) = is_fractional_s_gradient(&s, &u, &seq, 0.6).unwrap();
        assert!(ok);
    }

    #[test]
    fn seq_norm_matches_oracle_for_both_routes() {
        let s = Space::cloud(
            1,
            vec![0.0, 0.3, 0.9],
            vec![1.0, 1.0, 1.0],
            Metric::Euclidean,
        )
        .unwrap();
        let u = Field::new(&s, vec![0.0, 0.7, 0.2]).unwrap();
        for family in [Family::Mpq, Family::Npq] {
            let spec = FSpaceSpec {
                family,
                s: 0.5,
                p: 2.0,
                q: 2.0,
            };
            let (val, seq) = seq_norm(&s, &u, &spec, &SolveControl::default()).unwrap();
            let oracle = oracle_seq_norm(&s, &u, &spec).unwrap();
            assert!(
                (val - oracle).abs() < 2e-3,
                "{family:?}: solver {val} oracle {oracle}"
            );
            let (ok, worst) = is_fractional_s_gradient(&s, &u, &seq, 0.5).unwrap();
            assert!(ok, "{family:?} certificate violated: {worst:?}");
        }
    }

    #[test]
    fn nonconvex_exponents_are_refused() {
        let s = two_points(1.0);
        let u = Field::new(&s, vec![0.0, 1.0]).unwrap();
        let err = hajlasz_norm(&s, &u, 0.5, 0.5, &SolveControl::default()).unwrap_err();
        assert!(matches!(err, Error::Nonconvex));
        let spec = FSpaceSpec {
            family: Family::Mpq,
            s: 0.5,
            p: 2.0,
            q: 0.5,
        };
        let err = seq_norm(&s, &u, &spec, &SolveControl::default()).unwrap_err();
        assert!(matches!(err, Error::Nonconvex));
    }

    #[test]
    fn capacity_of_empty_and_full_sets() {
        let s = Space::grid(&[4], 0.25).unwrap();
        let spec = FSpaceSpec::mp(1.0, 2.0).unwrap();
        let opts = CapacityOpts::default();
        let (c0, u0) = capacity(&s, &MSet::empty(&s), &spec, &opts).unwrap();
        assert_eq!(c0, 0.0);
        assert!(u0.values().iter().all(|v| *v == 0.0));
        let (cx, ux) = capacity(&s, &MSet::full(&s), &spec, &opts).unwrap();
        assert!((cx - s.total_mass()).abs() < 1e-9, "{cx}");
        assert!(ux.values().iter().all(|v| (*v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn capacity_matches_oracle_on_three_points() {
        let s = Space::cloud(
            1,
            vec![0.0, 0.5, 1.2],
            vec![1.0, 1.0, 1.0],
            Metric::Euclidean,
        )
        .unwrap();
        let mut e = MSet::empty(&s);
        e.insert(1);
        let spec = FSpaceSpec::mp(1.0, 2.0).unwrap();
        let (c, u) = capacity(&s, &e, &spec, &CapacityOpts::default()).unwrap();
        let oracle = oracle_capacity(&s, &e, &spec, None).unwrap();
        assert!((c - oracle).abs() < 2e-3, "solver {c} oracle {oracle}");
        assert!((u.value(1) - 1.0).abs() < 1e-12, "pinned point");
    }

    #[test]
    fn capacity_is_monotone_in_the_set() {
        let s = Space::grid(&[5], 0.5).unwrap();
        let spec = FSpaceSpec::mp(1.0, 2.0).unwrap();
        let opts = CapacityOpts::default();
        let mut small = MSet::empty(&s);
        small.insert(2);
        let mut big = small.clone();
        big.insert(0);
        big.insert(4);
        let (cs, _) = capacity(&s, &small, &spec, &opts).unwrap();
        let (cb, _) = capacity(&s, &big, &spec, &opts).unwrap();
        assert!(cs <= cb + 1e-6, "small {cs} big {cb}");
    }

    #[test]
    fn restricted_and_unrestricted_capacities_agree() {
        let s = Space::cloud(
            1,
            vec![0.0, 0.6, 1.0],
            vec![1.0, 2.0, 1.0],
            Metric::Euclidean,
        )
        .unwrap();
        let mut e = MSet::empty(&s);
        e.insert(0);
        let spec = FSpaceSpec::mp(0.7, 2.0).unwrap();
        let restricted = CapacityOpts::default();
        let unrestricted = CapacityOpts {
            restricted: false,
            ..CapacityOpts::default()
        };
        let (cr, _) = capacity(&s, &e, &spec, &restricted).unwrap();
        let (cu, _) = capacity(&s, &e, &spec, &unrestricted).unwrap();
        assert!((cr - cu).abs() < 1e-4, "restricted {cr} free {cu}");
    }

    #[test]
    fn size_cap_is_enforced() {
        let s = Space::grid(&[80], 0.01).unwrap();
        let spec = FSpaceSpec::mp(1.0, 2.0).unwrap();
        let err = capacity(&s, &MSet::full(&s), &spec, &CapacityOpts::default()).unwrap_err();
        assert!(matches!(err, Error::SizeCap { size: 80, cap: 64 }));
    }

    #[test]
    fn fractional_pairs_outside_range_error() {
        let s = two_points(1.0); // annulus -1
        let u = Field::new(&s, vec![0.0, 1.0]).unwrap();
        let g = Field::constant(&s, 1.0).unwrap();
        let seq = GradientSeq::new(&s, 3, vec![g]).unwrap();
        assert!(is_fractional_s_gradient(&s, &u, &seq, 0.5).is_err());
    }
}
