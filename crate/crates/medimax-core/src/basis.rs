//! Differentiation basis families: parametric collections of open sets
//! (balls, axis blocks, rotated rectangles, dyadic cubes) rasterized onto a
//! space on demand.
//!
//! Families are Busemann–Feller: membership of a point in a set is decided by
//! the set alone, so `sets_at(x, ...)` enumerates every family set containing
//! `x` (up to the sampling budget), not just sets centered at `x`. All
//! rasterizations use strict inequalities, the discrete stand-in for openness.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, Error, Result};
use crate::math;
use crate::space::{MSet, Metric, Space};

/// Full enumeration is used below this many candidate sets per query point;
/// beyond it, a seeded sample of the same distribution is drawn directly.
pub const ENUM_THRESHOLD: usize = 10_000;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum BasisKind {
    /// Metric balls around any data point. On a 1D grid these are the
    /// (uncentered) intervals.
    Balls,
    /// Axis-aligned cubes on a grid.
    Cubes,
    /// Axis-aligned rectangles with side ratio at most `max_eccentricity`.
    AxisRects { max_eccentricity: u32 },
    /// Rectangles rotated by angles `i * pi / angle_count`, side ratio up to
    /// `max_eccentricity`. 2D grids only.
    RotatedRects {
        angle_count: u32,
        max_eccentricity: u32,
    },
    /// The dyadic cubes of the grid: one cube per generation through a point.
    DyadicCubes,
    /// Countable refinement of an inner family: finite unions of balls, each
    /// contained in an inner set of at most twice its measure.
    Refined(Box<BasisFamily>),
}

impl BasisKind {
    pub fn name(&self) -> &'static str {
        match self {
            BasisKind::Balls => "balls",
            BasisKind::Cubes => "cubes",
            BasisKind::AxisRects { .. } => "axis_rects",
            BasisKind::RotatedRects { .. } => "rotated_rects",
            BasisKind::DyadicCubes => "dyadic_cubes",
            BasisKind::Refined(_) => "refined",
        }
    }
}

/// A parametric family together with its dyadic scale grid `2^-k` for
/// `k_min <= k <= k_max` (diameters, decreasing) and a sampling seed.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BasisFamily {
    pub kind: BasisKind,
    pub k_min: i32,
    pub k_max: i32,
    pub seed: u64,
}

impl BasisFamily {
    pub fn new(kind: BasisKind, k_min: i32, k_max: i32, seed: u64) -> Result<BasisFamily> {
        if k_min > k_max {
            return Err(domain("scale grid needs k_min <= k_max"));
        }
        match &kind {
            BasisKind::AxisRects { max_eccentricity } if *max_eccentricity == 0 => {
                return Err(domain("max_eccentricity must be at least 1"));
            }
            BasisKind::RotatedRects {
                angle_count,
                max_eccentricity,
            } if *angle_count == 0 || *max_eccentricity == 0 => {
                return Err(domain("rotated rects need angles >= 1 and eccentricity >= 1"));
            }
            _ => {}
        }
        Ok(BasisFamily {
            kind,
            k_min,
            k_max,
            seed,
        })
    }

    /// Decreasing list of scale diameters `2^-k`, coarse to fine.
    pub fn scale_grid(&self) -> Vec<f64> {
        (self.k_min..=self.k_max)
            .map(|k| math::exp2(-k as f64))
            .collect()
    }

    pub fn coarsest(&self) -> f64 {
        math::exp2(-self.k_min as f64)
    }

    pub fn finest(&self) -> f64 {
        math::exp2(-self.k_max as f64)
    }

    pub fn descriptor(&self) -> String {
        use alloc::format;
        match &self.kind {
            BasisKind::AxisRects { max_eccentricity } => {
                format!("axis_rects(e={max_eccentricity})")
            }
            BasisKind::RotatedRects {
                angle_count,
                max_eccentricity,
            } => format!("rotated_rects(angles={angle_count}, e={max_eccentricity})"),
            BasisKind::Refined(inner) => format!("refined({})", inner.descriptor()),
            k => String::from(k.name()),
        }
    }
}

/// Geometric description of a single family set; rasterization is strict.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum SetParams {
    /// Ball centered at a data point (works for every metric).
    BallAt { center: usize, radius: f64 },
    /// Ball with a free center (coordinate metrics only).
    Ball { center: Vec<f64>, radius: f64 },
    /// Open axis box `{y : |y_a - center_a| < half_sides_a}`.
    Block {
        center: Vec<f64>,
        half_sides: Vec<f64>,
    },
    /// Open rotated box in the plane.
    RotRect {
        center: [f64; 2],
        half_len: f64,
        half_wid: f64,
        angle: f64,
    },
    Union(Vec<SetParams>),
}

impl SetParams {
    pub fn contains(&self, space: &Space, i: usize) -> bool {
        match self {
            SetParams::BallAt { center, radius } => space.distance(*center, i) < *radius,
            SetParams::Ball { center, radius } => space.distance_to(center, i) < *radius,
            SetParams::Block { center, half_sides } => {
                let c = space.coord(i);
                (0..space.dim()).all(|a| math::abs(c[a] - center[a]) < half_sides[a])
            }
            SetParams::RotRect {
                center,
                half_len,
                half_wid,
                angle,
            } => {
                let c = space.coord(i);
                let (dx, dy) = (c[0] - center[0], c[1] - center[1]);
                let (sin, cos) = (math::sin(*angle), math::cos(*angle));
                let u = cos * dx + sin * dy;
                let v = -sin * dx + cos * dy;
                math::abs(u) < *half_len && math::abs(v) < *half_wid
            }
            SetParams::Union(parts) => parts.iter().any(|p| p.contains(space, i)),
        }
    }

    /// Smallest axis box (in coordinates) enclosing the set, for windowed
    /// rasterization; `None` means scan everything.
    fn bounding_box(&self, dim: usize) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            SetParams::BallAt { .. } => None,
            SetParams::Ball { center, radius } => Some((
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            )),
            SetParams::Block { center, half_sides } => Some((
                (0..dim).map(|a| center[a] - half_sides[a]).collect(),
                (0..dim).map(|a| center[a] + half_sides[a]).collect(),
            )),
            SetParams::RotRect {
                center,
                half_len,
                half_wid,
                angle,
            } => {
                let (sin, cos) = (math::sin(*angle), math::cos(*angle));
                let rx = math::abs(cos) * half_len + math::abs(sin) * half_wid;
                let ry = math::abs(sin) * half_len + math::abs(cos) * half_wid;
                Some((
                    vec![center[0] - rx, center[1] - ry],
                    vec![center[0] + rx, center[1] + ry],
                ))
            }
            SetParams::Union(parts) => {
                let mut lo = vec![f64::INFINITY; dim];
                let mut hi = vec![f64::NEG_INFINITY; dim];
                for p in parts {
                    let (plo, phi) = p.bounding_box(dim)?;
                    for a in 0..dim {
                        lo[a] = lo[a].min(plo[a]);
                        hi[a] = hi[a].max(phi[a]);
                    }
                }
                Some((lo, hi))
            }
        }
    }

    pub fn rasterize(&self, space: &Space) -> MSet {
        if let SetParams::BallAt { center, radius } = self {
            return space.ball(*center, *radius);
        }
        if let SetParams::Union(parts) = self {
            let mut out = MSet::empty(space);
            for p in parts {
                out = out.union(&p.rasterize(space));
            }
            return out;
        }
        let mut out = MSet::empty(space);
        if let Some(g) = space.grid_info() {
            if let Some((lo, hi)) = self.bounding_box(space.dim()) {
                let dim = space.dim();
                let mut ilo = vec![0usize; dim];
                let mut ihi = vec![0usize; dim];
                for a in 0..dim {
                    let l = math::ceil((lo[a] - g.origin[a]) / g.spacing - 1.0).max(0.0);
                    let h = math::floor((hi[a] - g.origin[a]) / g.spacing + 1.0)
                        .min((g.shape[a] - 1) as f64);
                    if h < l {
                        return out;
                    }
                    ilo[a] = l as usize;
                    ihi[a] = h as usize;
                }
                let mut idx = ilo.clone();
                loop {
                    let flat = space.flat_index(&idx);
                    if self.contains(space, flat) {
                        out.insert(flat);
                    }
                    let mut a = dim;
                    loop {
                        if a == 0 {
                            return out;
                        }
                        a -= 1;
                        idx[a] += 1;
                        if idx[a] <= ihi[a] {
                            break;
                        }
                        idx[a] = ilo[a];
                    }
                }
            }
        }
        for i in 0..space.len() {
            if self.contains(space, i) {
                out.insert(i);
            }
        }
        out
    }

    /// Image under `y -> scale * y + shift`, in parameter space.
    pub fn map_homothety(&self, space: &Space, scale: f64, shift: &[f64]) -> SetParams {
        let map_point = |p: &[f64]| -> Vec<f64> {
            (0..p.len()).map(|a| scale * p[a] + shift[a]).collect()
        };
        match self {
            SetParams::BallAt { center, radius } => SetParams::Ball {
                center: map_point(space.coord(*center)),
                radius: scale * radius,
            },
            SetParams::Ball { center, radius } => SetParams::Ball {
                center: map_point(center),
                radius: scale * radius,
            },
            SetParams::Block { center, half_sides } => SetParams::Block {
                center: map_point(center),
                half_sides: half_sides.iter().map(|h| scale * h).collect(),
            },
            SetParams::RotRect {
                center,
                half_len,
                half_wid,
                angle,
            } => SetParams::RotRect {
                center: [
                    scale * center[0] + shift[0],
                    scale * center[1] + shift[1],
                ],
                half_len: scale * half_len,
                half_wid: scale * half_wid,
                angle: *angle,
            },
            SetParams::Union(parts) => SetParams::Union(
                parts
                    .iter()
                    .map(|p| p.map_homothety(space, scale, shift))
                    .collect(),
            ),
        }
    }
}

/// A family set: its parameters and its rasterization.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    pub params: SetParams,
    pub members: MSet,
}

impl BasisSet {
    fn from_params(params: SetParams, space: &Space) -> BasisSet {
        let members = params.rasterize(space);
        BasisSet { params, members }
    }

    /// Diameter over the included points (the lattice notion of set size).
    pub fn point_diameter(&self, space: &Space) -> f64 {
        let idx = self.members.indices();
        let mut best = 0.0f64;
        for (i, &a) in idx.iter().enumerate() {
            for &b in &idx[i + 1..] {
                best = best.max(space.distance(a, b));
            }
        }
        best
    }
}

/// Apply the homothety `y -> scale * y + shift_cells * spacing` to a set.
/// Grid spaces only; errors when the image leaves the grid.
pub fn homothety(
    space: &Space,
    set: &BasisSet,
    scale: f64,
    shift_cells: &[i64],
) -> Result<BasisSet> {
    let g = space
        .grid_info()
        .ok_or_else(|| domain("homothety needs a grid space"))?;
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(domain("homothety scale must be positive and finite"));
    }
    if shift_cells.len() != space.dim() {
        return Err(domain("homothety shift dimension must match the space"));
    }
    let shift: Vec<f64> = shift_cells.iter().map(|s| *s as f64 * g.spacing).collect();
    let params = set.params.map_homothety(space, scale, &shift);
    let (lo, hi) = params
        .bounding_box(space.dim())
        .ok_or_else(|| domain("set kind does not support homothety"))?;
    for a in 0..space.dim() {
        let min = g.origin[a] - 0.5 * g.spacing;
        let max = g.origin[a] + (g.shape[a] as f64 - 0.5) * g.spacing;
        if lo[a] < min || hi[a] > max {
            return Err(Error::OutOfDomain(String::from(
                "homothety image leaves the grid",
            )));
        }
    }
    let out = BasisSet::from_params(params, space);
    if out.members.is_empty() {
        return Err(Error::OutOfDomain(String::from(
            "homothety image rasterizes to the empty set",
        )));
    }
    Ok(out)
}

fn rng_for(family: &BasisFamily, x: usize, eps: f64, salt: u64) -> ChaCha8Rng {
    let mut s = family.seed ^ salt;
    s = s
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(x as u64);
    s = s.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ eps.to_bits();
    ChaCha8Rng::seed_from_u64(s)
}

/// Metric length of the diagonal of an index-difference vector, in cells.
fn block_diag_cells(metric: &Metric, delta: &[usize]) -> f64 {
    match metric {
        Metric::Chebyshev => delta.iter().map(|d| *d as f64).fold(0.0, f64::max),
        _ => math::sqrt(delta.iter().map(|d| (*d as f64) * (*d as f64)).sum()),
    }
}

/// Largest block side (in cells) whose point diameter stays below `eps`.
fn max_side_cells(eps: f64, spacing: f64, per_axis_factor: f64) -> usize {
    // side L has point diameter (L - 1) * spacing * factor < eps
    math::floor_strict(eps / (spacing * per_axis_factor)) + 1
}

/// Set-count budget that keeps the rasterized cell total near `cell_budget`
/// at the given scale: coarse scales (big sets) get a small sample while fine
/// scales stay fully enumerated. Non-grid spaces pass the budget through.
pub fn scale_set_budget(space: &Space, eps: f64, cell_budget: usize) -> usize {
    let Some(g) = space.grid_info() else {
        return cell_budget.max(1);
    };
    let side = math::floor_strict(eps / g.spacing) + 1;
    let cells = side.saturating_pow(space.dim() as u32).max(1);
    (cell_budget / cells).max(16).min(cell_budget.max(1))
}

/// Enumerate (or sample) the family sets containing `x` with point diameter
/// below `eps`. Deterministic for fixed `(family, x, eps, budget)`.
pub fn sets_at(
    space: &Space,
    family: &BasisFamily,
    x: usize,
    eps: f64,
    budget: usize,
) -> Result<Vec<BasisSet>> {
    if x >= space.len() {
        return Err(domain("query point out of range"));
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(domain("scale must be positive and finite"));
    }
    if budget == 0 {
        return Err(domain("budget must be at least 1"));
    }
    let sets = match &family.kind {
        BasisKind::Balls => balls_at(space, family, x, eps, budget)?,
        BasisKind::Cubes => blocks_at(space, family, x, eps, budget, 1)?,
        BasisKind::AxisRects { max_eccentricity } => {
            blocks_at(space, family, x, eps, budget, *max_eccentricity)?
        }
        BasisKind::RotatedRects {
            angle_count,
            max_eccentricity,
        } => rot_rects_at(space, family, x, eps, budget, *angle_count, *max_eccentricity)?,
        BasisKind::DyadicCubes => dyadic_at(space, x, eps)?,
        BasisKind::Refined(inner) => refined_at(space, family, inner, x, eps, budget)?,
    };
    if sets.is_empty() {
        return Err(Error::ResolutionExhausted { scale: eps });
    }
    debug_assert!(sets.iter().all(|s| s.members.contains(x)));
    Ok(sets)
}

fn balls_at(
    space: &Space,
    family: &BasisFamily,
    x: usize,
    eps: f64,
    budget: usize,
) -> Result<Vec<BasisSet>> {
    let r_cap = eps / 2.0; // pairwise distances stay strictly below eps
    let canonical = SetParams::BallAt {
        center: x,
        radius: r_cap,
    };
    let mut out = vec![BasisSet::from_params(canonical, space)];
    if budget == 1 {
        return Ok(out);
    }

    // candidate centers: data points strictly closer to x than r_cap
    let centers: Vec<usize> = if space.grid_info().is_some() {
        space.ball(x, r_cap).indices()
    } else {
        (0..space.len())
            .filter(|&c| space.distance(c, x) < r_cap)
            .collect()
    };
    // radii per center come from realized distances; estimate the total count
    let per_center = centers.len().max(1);
    let estimate = centers.len().saturating_mul(per_center);

    if estimate <= ENUM_THRESHOLD {
        let mut cands: Vec<SetParams> = Vec::new();
        for &c in &centers {
            let d_cx = space.distance(c, x);
            let mut radii: Vec<f64> = centers
                .iter()
                .map(|&y| space.distance(c, y))
                .filter(|&d| d > d_cx && d <= r_cap)
                .collect();
            radii.push(r_cap);
            radii.sort_unstable_by(f64::total_cmp);
            radii.dedup();
            for r in radii {
                if c == x && r == r_cap {
                    continue; // canonical, already emitted
                }
                cands.push(SetParams::BallAt { center: c, radius: r });
            }
        }
        sample_into(&mut out, cands, space, family, x, eps, budget, 0x0B);
    } else {
        let mut rng = rng_for(family, x, eps, 0x0B);
        while out.len() < budget {
            let c = centers[rng.gen_range(0..centers.len())];
            let d_cx = space.distance(c, x);
            let r = d_cx + (r_cap - d_cx) * rng.gen::<f64>().max(f64::MIN_POSITIVE);
            out.push(BasisSet::from_params(
                SetParams::BallAt { center: c, radius: r },
                space,
            ));
        }
    }
    Ok(out)
}

/// Blocks (cubes when `max_ecc == 1`) containing `x` with diameter below eps.
fn blocks_at(
    space: &Space,
    family: &BasisFamily,
    x: usize,
    eps: f64,
    budget: usize,
    max_ecc: u32,
) -> Result<Vec<BasisSet>> {
    let g = space
        .grid_info()
        .ok_or_else(|| domain("cube and rectangle families need a grid space"))?
        .clone();
    let dim = space.dim();
    let xi = space.grid_index(x);
    let factor = match space.metric() {
        Metric::Chebyshev => 1.0,
        _ => math::sqrt(dim as f64),
    };
    // per-axis cap: even a single axis of length L needs (L-1) * h < eps
    let axis_cap = max_side_cells(eps, g.spacing, 1.0).min(*g.shape.iter().max().unwrap());

    // count admissible side tuples by recursive enumeration with caps
    let mut tuples: Vec<Vec<usize>> = Vec::new();
    let mut current = vec![0usize; dim];
    enumerate_tuples(
        &mut tuples,
        &mut current,
        0,
        dim,
        axis_cap,
        max_ecc as usize,
        eps,
        g.spacing,
        space.metric(),
    );
    // on non-square grids the cap comes from the longest axis; a side equal
    // to shape[a] already covers axis a, so longer sides are redundant and
    // would anchor outside the grid
    tuples.retain(|sides| (0..dim).all(|a| sides[a] <= g.shape[a]));

    let count_for = |sides: &[usize]| -> usize {
        (0..dim)
            .map(|a| {
                let lo = xi[a].saturating_sub(sides[a] - 1);
                let hi = xi[a].min(g.shape[a] - sides[a]);
                if hi < lo {
                    0
                } else {
                    hi - lo + 1
                }
            })
            .product()
    };
    let total: usize = tuples.iter().map(|t| count_for(t)).sum();

    let block_from = |sides: &[usize], anchor: &[usize]| -> SetParams {
        let center: Vec<f64> = (0..dim)
            .map(|a| g.origin[a] + (anchor[a] as f64 + (sides[a] as f64 - 1.0) / 2.0) * g.spacing)
            .collect();
        let half_sides: Vec<f64> = (0..dim).map(|a| sides[a] as f64 * g.spacing / 2.0).collect();
        SetParams::Block { center, half_sides }
    };

    // canonical: the largest admissible cube, centered on x as far as the
    // grid allows
    let cube_side = max_side_cells(eps, g.spacing, factor).min(*g.shape.iter().min().unwrap());
    let canon_sides = vec![cube_side; dim];
    let mut canon_anchor = vec![0usize; dim];
    for a in 0..dim {
        let want = xi[a].saturating_sub(cube_side / 2);
        canon_anchor[a] = want
            .min(g.shape[a] - cube_side)
            .max(xi[a].saturating_sub(cube_side - 1))
            .min(xi[a]);
    }
    let canonical = block_from(&canon_sides, &canon_anchor);
    let mut out = vec![BasisSet::from_params(canonical.clone(), space)];
    if budget == 1 {
        return Ok(out);
    }

    if total <= ENUM_THRESHOLD {
        let mut cands: Vec<SetParams> = Vec::new();
        for sides in &tuples {
            let mut anchor = vec![0usize; dim];
            let lo: Vec<usize> = (0..dim).map(|a| xi[a].saturating_sub(sides[a] - 1)).collect();
            let hi: Vec<usize> = (0..dim)
                .map(|a| xi[a].min(g.shape[a].saturating_sub(sides[a])))
                .collect();
            if (0..dim).any(|a| hi[a] < lo[a]) {
                continue;
            }
            anchor.copy_from_slice(&lo);
            loop {
                let p = block_from(sides, &anchor);
                if p != canonical {
                    cands.push(p);
                }
                let mut a = dim;
                let mut done = false;
                loop {
                    if a == 0 {
                        done = true;
                        break;
                    }
                    a -= 1;
                    anchor[a] += 1;
                    if anchor[a] <= hi[a] {
                        break;
                    }
                    anchor[a] = lo[a];
                }
                if done {
                    break;
                }
            }
        }
        sample_into(&mut out, cands, space, family, x, eps, budget, 0xC0);
    } else {
        let mut rng = rng_for(family, x, eps, 0xC0);
        let mut guard = 0usize;
        while out.len() < budget && guard < budget * 64 {
            guard += 1;
            let sides = &tuples[rng.gen_range(0..tuples.len())];
            let mut anchor = vec![0usize; dim];
            let mut ok = true;
            for a in 0..dim {
                let lo = xi[a].saturating_sub(sides[a] - 1);
                let hi = xi[a].min(g.shape[a].saturating_sub(sides[a]));
                if hi < lo {
                    ok = false;
                    break;
                }
                anchor[a] = rng.gen_range(lo..=hi);
            }
            if !ok {
                continue;
            }
            out.push(BasisSet::from_params(block_from(sides, &anchor), space));
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn enumerate_tuples(
    tuples: &mut Vec<Vec<usize>>,
    current: &mut Vec<usize>,
    axis: usize,
    dim: usize,
    axis_cap: usize,
    max_ecc: usize,
    eps: f64,
    spacing: f64,
    metric: &Metric,
) {
    if axis == dim {
        let delta: Vec<usize> = current.iter().map(|s| s - 1).collect();
        if block_diag_cells(metric, &delta) * spacing < eps {
            let lo = *current.iter().min().unwrap() as f64;
            let hi = *current.iter().max().unwrap() as f64;
            if hi <= lo * max_ecc as f64 {
                tuples.push(current.clone());
            }
        }
        return;
    }
    for side in 1..=axis_cap {
        current[axis] = side;
        enumerate_tuples(
            tuples, current, axis + 1, dim, axis_cap, max_ecc, eps, spacing, metric,
        );
    }
}

fn rot_rects_at(
    space: &Space,
    family: &BasisFamily,
    x: usize,
    eps: f64,
    budget: usize,
    angle_count: u32,
    max_ecc: u32,
) -> Result<Vec<BasisSet>> {
    let g = space
        .grid_info()
        .ok_or_else(|| domain("rotated rectangles need a grid space"))?;
    if space.dim() != 2 {
        return Err(domain("rotated rectangles are defined on 2D grids"));
    }
    if !matches!(space.metric(), Metric::Euclidean) {
        return Err(domain("rotated rectangles need the euclidean metric"));
    }
    let xc = [space.coord(x)[0], space.coord(x)[1]];
    let diag = eps * (1.0 - 1e-12);
    // canonical: unrotated square-ish rect centered at x
    let hl0 = diag / 2.0 / math::sqrt(2.0);
    let canonical = SetParams::RotRect {
        center: xc,
        half_len: hl0,
        half_wid: hl0,
        angle: 0.0,
    };
    let mut out = Vec::new();
    let canon = BasisSet::from_params(canonical, space);
    if canon.members.contains(x) {
        out.push(canon);
    }
    let mut rng = rng_for(family, x, eps, 0x27);
    let mut attempts = 0usize;
    let max_attempts = budget.saturating_mul(32).max(256);
    while out.len() < budget && attempts < max_attempts {
        attempts += 1;
        let angle = rng.gen_range(0..angle_count) as f64 * core::f64::consts::PI
            / angle_count as f64;
        // log-uniform eccentricity in [1, max_ecc]
        let ecc = math::exp2(rng.gen::<f64>() * math::log2(max_ecc as f64));
        let d = diag * (0.25 + 0.75 * rng.gen::<f64>());
        let hl = d / 2.0 / math::sqrt(1.0 + 1.0 / (ecc * ecc));
        let hw = hl / ecc;
        if 2.0 * hw < g.spacing * 0.5 {
            continue; // too thin to rasterize reliably at this scale
        }
        // place x strictly inside: center = x - R(u) with u in the open box
        let u = (rng.gen::<f64>() * 2.0 - 1.0) * hl * 0.9;
        let v = (rng.gen::<f64>() * 2.0 - 1.0) * hw * 0.9;
        let (sin, cos) = (math::sin(angle), math::cos(angle));
        let center = [xc[0] - (cos * u - sin * v), xc[1] - (sin * u + cos * v)];
        let params = SetParams::RotRect {
            center,
            half_len: hl,
            half_wid: hw,
            angle,
        };
        let set = BasisSet::from_params(params, space);
        if set.members.contains(x) {
            out.push(set);
        }
    }
    Ok(out)
}

fn dyadic_at(space: &Space, x: usize, eps: f64) -> Result<Vec<BasisSet>> {
    let g = space
        .grid_info()
        .ok_or_else(|| domain("dyadic cubes need a grid space"))?
        .clone();
    let dim = space.dim();
    let xi = space.grid_index(x);
    let max_shape = *g.shape.iter().max().unwrap();
    let mut generations = 0u32;
    while (1usize << generations) < max_shape {
        generations += 1;
    }
    let mut out = Vec::new();
    for gen in 0..=generations {
        let len = 1usize << (generations - gen);
        let mut lo = vec![0usize; dim];
        let mut hi = vec![0usize; dim];
        for a in 0..dim {
            lo[a] = (xi[a] / len) * len;
            hi[a] = (lo[a] + len - 1).min(g.shape[a] - 1);
        }
        let delta: Vec<usize> = (0..dim).map(|a| hi[a] - lo[a]).collect();
        if block_diag_cells(space.metric(), &delta) * g.spacing >= eps {
            continue;
        }
        let center: Vec<f64> = (0..dim)
            .map(|a| g.origin[a] + (lo[a] + hi[a]) as f64 / 2.0 * g.spacing)
            .collect();
        let half_sides: Vec<f64> = (0..dim)
            .map(|a| (hi[a] - lo[a] + 1) as f64 * g.spacing / 2.0)
            .collect();
        out.push(BasisSet::from_params(
            SetParams::Block { center, half_sides },
            space,
        ));
    }
    Ok(out)
}

/// Countable refinement: every inner set, plus trimmed variants that keep at
/// least half its measure. Trims are canonical per inner set (derived from
/// the set's own bits, not from the query point), so a trim containing `y` is
/// regenerated when querying at `y`.
pub fn countable_refinement(family: &BasisFamily) -> BasisFamily {
    BasisFamily {
        kind: BasisKind::Refined(Box::new(family.clone())),
        k_min: family.k_min,
        k_max: family.k_max,
        seed: family.seed ^ 0x5EED_BA5E_0F12_3457,
    }
}

const TRIMS_PER_SET: usize = 2;

fn refined_at(
    space: &Space,
    family: &BasisFamily,
    inner: &BasisFamily,
    x: usize,
    eps: f64,
    budget: usize,
) -> Result<Vec<BasisSet>> {
    let inner_budget = (budget / (1 + TRIMS_PER_SET)).max(1);
    let base = sets_at(space, inner, x, eps, inner_budget)?;
    let singleton_radius = space.min_positive_distance() / 2.0;
    let mut out = Vec::with_capacity(base.len() * (1 + TRIMS_PER_SET));
    for b in &base {
        out.push(b.clone());
        for members in canonical_trims(space, family.seed, b) {
            if members == b.members || !members.contains(x) {
                continue;
            }
            let parts: Vec<SetParams> = members
                .iter()
                .map(|i| SetParams::BallAt {
                    center: i,
                    radius: singleton_radius,
                })
                .collect();
            out.push(BasisSet {
                params: SetParams::Union(parts),
                members,
            });
            if out.len() >= budget {
                return Ok(out);
            }
        }
    }
    Ok(out)
}

/// Deterministic hash of a subset's bit pattern, used to seed its trims.
fn mset_hash(m: &MSet) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for i in m.iter() {
        h ^= i as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

/// Trimmed variants of a set: drop a seeded prefix of its points while the
/// dropped mass stays within half the total, keeping the admission rule
/// `mu(trim) >= mu(base) / 2` exact.
pub(crate) fn canonical_trims(space: &Space, seed: u64, base: &BasisSet) -> Vec<MSet> {
    let mu = space.measure(&base.members);
    let idx = base.members.indices();
    let mut out = Vec::new();
    for t in 0..TRIMS_PER_SET as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ mset_hash(&base.members) ^ (t << 32));
        let mut order = idx.clone();
        order.shuffle(&mut rng);
        let mut trimmed = base.members.clone();
        let mut dropped = 0.0;
        for &i in &order {
            let w = space.weight(i);
            if dropped + w <= mu / 2.0 {
                trimmed.remove(i);
                dropped += w;
            }
        }
        out.push(trimmed);
    }
    out
}

/// Keep `budget` sets: everything when the enumeration fits, otherwise the
/// canonical head plus a seeded uniform sample of the rest.
#[allow(clippy::too_many_arguments)]
fn sample_into(
    out: &mut Vec<BasisSet>,
    cands: Vec<SetParams>,
    space: &Space,
    family: &BasisFamily,
    x: usize,
    eps: f64,
    budget: usize,
    salt: u64,
) {
    let keep = budget - out.len();
    if cands.len() <= keep {
        for p in cands {
            out.push(BasisSet::from_params(p, space));
        }
        return;
    }
    let mut rng = rng_for(family, x, eps, salt ^ 0x5A);
    let mut picks: Vec<usize> = (0..cands.len()).collect();
    picks.shuffle(&mut rng);
    picks.truncate(keep);
    picks.sort_unstable();
    for i in picks {
        out.push(BasisSet::from_params(cands[i].clone(), space));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, h: f64) -> Space {
        Space::grid(&[n], h).unwrap()
    }

    fn plane(n: usize, h: f64) -> Space {
        Space::grid(&[n, n], h).unwrap()
    }

    fn family(kind: BasisKind) -> BasisFamily {
        BasisFamily::new(kind, -2, 8, 7).unwrap()
    }

    #[test]
    fn balls_budget_one_is_the_canonical_ball() {
        let s = line(32, 1.0);
        let sets = sets_at(&s, &family(BasisKind::Balls), 10, 5.0, 1).unwrap();
        assert_eq!(sets.len(), 1);
        assert_eq!(sets[0].members, s.ball(10, 2.5));
        match &sets[0].params {
            SetParams::BallAt { center, radius } => {
                assert_eq!(*center, 10);
                assert_eq!(*radius, 2.5);
            }
            other => panic!("unexpected params {other:?}"),
        }
    }

    #[test]
    fn every_returned_set_contains_x_and_fits_the_scale() {
        let s = plane(16, 0.125);
        for kind in [
            BasisKind::Balls,
            BasisKind::Cubes,
            BasisKind::AxisRects { max_eccentricity: 4 },
            BasisKind::RotatedRects {
                angle_count: 8,
                max_eccentricity: 4,
            },
            BasisKind::DyadicCubes,
        ] {
            let fam = family(kind);
            for &x in &[0, 35, 130, 255] {
                for &eps in &[0.3, 0.8, 1.6] {
                    let sets = sets_at(&s, &fam, x, eps, 24).unwrap();
                    assert!(!sets.is_empty());
                    for b in &sets {
                        assert!(b.members.contains(x), "{} missing x", fam.descriptor());
                        assert!(
                            b.point_diameter(&s) < eps,
                            "{} set too large at eps {eps}",
                            fam.descriptor()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn full_enumeration_regenerates_sets_from_other_member_points() {
        // Busemann-Feller cross-query on a small grid with exhaustive budget.
        let s = plane(8, 1.0);
        for kind in [BasisKind::Balls, BasisKind::Cubes, BasisKind::DyadicCubes] {
            let fam = family(kind);
            let x = 27;
            let eps = 3.2;
            let sets = sets_at(&s, &fam, x, eps, ENUM_THRESHOLD).unwrap();
            for b in &sets {
                for y in b.members.iter() {
                    let there = sets_at(&s, &fam, y, eps, ENUM_THRESHOLD).unwrap();
                    assert!(
                        there.iter().any(|c| c.members == b.members),
                        "{} set from x={x} not regenerated at y={y}",
                        fam.descriptor()
                    );
                }
            }
        }
    }

    #[test]
    fn cube_enumeration_matches_direct_count() {
        // all blocks [a, a+l-1] containing x with (l-1) * h * sqrt(2) < eps
        let s = plane(9, 1.0);
        let x = s.flat_index(&[4, 4]);
        let eps = 3.0;
        let sets = sets_at(&s, &family(BasisKind::Cubes), x, eps, ENUM_THRESHOLD).unwrap();
        let lmax = (1..)
            .take_while(|l| ((l - 1) as f64) * (2.0f64).sqrt() < eps)
            .last()
            .unwrap();
        let mut want = 0usize;
        for l in 1..=lmax {
            let choices = |c: usize| -> usize {
                let lo = c.saturating_sub(l - 1);
                let hi = c.min(9 - l);
                hi - lo + 1
            };
            want += choices(4) * choices(4);
        }
        assert_eq!(sets.len(), want);
        // no duplicates
        for (i, a) in sets.iter().enumerate() {
            for b in &sets[i + 1..] {
                assert_ne!(a.members, b.members);
            }
        }
    }

    #[test]
    fn axis_rects_respect_eccentricity() {
        let s = plane(16, 1.0);
        let x = s.flat_index(&[8, 8]);
        let sets = sets_at(
            &s,
            &family(BasisKind::AxisRects { max_eccentricity: 2 }),
            x,
            6.0,
            ENUM_THRESHOLD,
        )
        .unwrap();
        let mut seen_non_square = false;
        for b in &sets {
            if let SetParams::Block { half_sides, .. } = &b.params {
                let e = (half_sides[0] / half_sides[1]).max(half_sides[1] / half_sides[0]);
                assert!(e <= 2.0 + 1e-12);
                if (half_sides[0] - half_sides[1]).abs() > 1e-12 {
                    seen_non_square = true;
                }
            }
        }
        assert!(seen_non_square);
    }

    #[test]
    fn dyadic_cubes_are_nested_one_per_generation() {
        let s = plane(16, 0.0625);
        let x = s.flat_index(&[5, 9]);
        let sets = sets_at(&s, &family(BasisKind::DyadicCubes), x, 2.0, 64).unwrap();
        // coarse to fine, each contains the next
        for w in sets.windows(2) {
            assert!(w[1].members.is_subset(&w[0].members));
            assert!(w[1].members.card() < w[0].members.card());
        }
        assert_eq!(sets.last().unwrap().members.card(), 1);
    }

    #[test]
    fn sampling_is_deterministic_under_seed() {
        let s = plane(64, 1.0);
        let fam = family(BasisKind::RotatedRects {
            angle_count: 16,
            max_eccentricity: 8,
        });
        let a = sets_at(&s, &fam, 2080, 20.0, 12).unwrap();
        let b = sets_at(&s, &fam, 2080, 20.0, 12).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.members, y.members);
        }
        let other_seed = BasisFamily::new(fam.kind.clone(), fam.k_min, fam.k_max, 8).unwrap();
        let c = sets_at(&s, &other_seed, 2080, 20.0, 12).unwrap();
        assert!(a.iter().zip(&c).any(|(x, y)| x.members != y.members));
    }

    #[test]
    fn homothety_identity_is_exact_and_scaling_scales_measure() {
        let s = plane(33, 0.25);
        let x = s.flat_index(&[16, 16]);
        let sets = sets_at(&s, &family(BasisKind::Cubes), x, 4.0, 4).unwrap();
        let b = &sets[0];
        let same = homothety(&s, b, 1.0, &[0, 0]).unwrap();
        assert_eq!(same.members, b.members);

        // open boxes lose up to one boundary layer per axis on the lattice,
        // so the ratio sits a little below the continuum value of 4
        let doubled = homothety(&s, b, 2.0, &[-16, -16]).unwrap();
        let ratio = s.measure(&doubled.members) / s.measure(&b.members);
        assert!(ratio > 3.0 && ratio <= 4.0 + 1e-12, "area ratio {ratio}");

        // an image pushed past the boundary is rejected
        let err = homothety(&s, b, 2.0, &[30, 30]);
        assert!(matches!(err, Err(Error::OutOfDomain(_))));
    }

    #[test]
    fn refinement_members_keep_half_the_mass_and_include_the_base() {
        let s = plane(12, 1.0);
        let fam = family(BasisKind::Cubes);
        let refined = countable_refinement(&fam);
        let x = s.flat_index(&[6, 6]);
        let base = sets_at(&s, &fam, x, 4.0, 8).unwrap();
        let fine = sets_at(&s, &refined, x, 4.0, 24).unwrap();
        assert!(fine.len() >= base.len());
        for c in &fine {
            // every refined set fits inside some base set with at most twice
            // its measure
            let hosted = base.iter().any(|b| {
                c.members.is_subset(&b.members)
                    && s.measure(&b.members) <= 2.0 * s.measure(&c.members) + 1e-12
            });
            assert!(hosted, "refined set without a host");
        }
        for b in &base {
            assert!(fine.iter().any(|c| c.members == b.members));
        }
    }
}
