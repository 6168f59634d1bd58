//! Shared generators and literal-definition oracles for the integration
//! suites. Instances are dyadic throughout (weights k/64, values j/256,
//! parameters g/64) so every mass comparison evaluates exactly in f64 and
//! the engine's tie tolerance can only ever see exact equality.
#![allow(dead_code)]

use medimax_core::basis::{sets_at, BasisFamily};
use medimax_core::space::Metric;
use medimax_core::{Field, Gamma, MSet, Space};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Point cloud with distinct coordinates on the 1/8 lattice and weights k/64.
pub fn dyadic_cloud(r: &mut ChaCha8Rng, max_points: usize) -> Space {
    let n = r.gen_range(2..=max_points.max(2));
    let dim = if r.gen::<bool>() { 1 } else { 2 };
    let side = 64usize;
    let picks = rand::seq::index::sample(r, side.pow(dim as u32), n);
    let mut coords = Vec::with_capacity(n * dim);
    let mut weights = Vec::with_capacity(n);
    for cell in picks {
        if dim == 1 {
            coords.push(cell as f64 / 8.0);
        } else {
            coords.push((cell % side) as f64 / 8.0);
            coords.push((cell / side) as f64 / 8.0);
        }
        weights.push(r.gen_range(1..=64) as f64 / 64.0);
    }
    Space::cloud(dim, coords, weights, Metric::Euclidean).unwrap()
}

/// Uniform 1D grid on the 1/8 lattice.
pub fn dyadic_grid_1d(r: &mut ChaCha8Rng, min_n: usize, max_n: usize) -> Space {
    Space::grid(&[r.gen_range(min_n..=max_n)], 0.125).unwrap()
}

/// Uniform 2D grid on the 1/8 lattice.
pub fn dyadic_grid_2d(r: &mut ChaCha8Rng, min_side: usize, max_side: usize) -> Space {
    let nx = r.gen_range(min_side..=max_side);
    let ny = r.gen_range(min_side..=max_side);
    Space::grid(&[nx, ny], 0.125).unwrap()
}

/// Field with values j/256, |j| <= 512.
pub fn dyadic_field(r: &mut ChaCha8Rng, space: &Space) -> Field {
    let vals = (0..space.len())
        .map(|_| r.gen_range(-512i32..=512) as f64 / 256.0)
        .collect();
    Field::new(space, vals).unwrap()
}

/// Nonnegative variant of `dyadic_field`.
pub fn dyadic_field_nonneg(r: &mut ChaCha8Rng, space: &Space) -> Field {
    let vals = (0..space.len())
        .map(|_| r.gen_range(0i32..=512) as f64 / 256.0)
        .collect();
    Field::new(space, vals).unwrap()
}

/// Parameter g/64 with 1 <= g <= 63.
pub fn dyadic_gamma(r: &mut ChaCha8Rng) -> Gamma {
    Gamma::new(r.gen_range(1..=63) as f64 / 64.0).unwrap()
}

/// Random subset hitting each point with probability 1/2, forced nonempty.
pub fn nonempty_subset(r: &mut ChaCha8Rng, space: &Space) -> MSet {
    let mut set = MSet::empty(space);
    for i in 0..space.len() {
        if r.gen::<bool>() {
            set.insert(i);
        }
    }
    if set.is_empty() {
        set.insert(r.gen_range(0..space.len()));
    }
    set
}

/// Literal transcription of the gamma-median definition: the smallest
/// attained value whose strictly-above mass in `a` falls below
/// `gamma * mu(a)`. Plain comparisons only; on dyadic instances every mass
/// is exact, so this agrees with any tie-tolerant implementation.
pub fn oracle_median(space: &Space, f: &Field, a: &MSet, gamma: f64) -> f64 {
    let mut vals: Vec<f64> = a.iter().map(|i| f.value(i)).collect();
    vals.sort_by(f64::total_cmp);
    vals.dedup();
    let mu: f64 = a.iter().map(|i| space.weight(i)).sum();
    for &v in &vals {
        let above: f64 = a
            .iter()
            .filter(|&i| f.value(i) > v)
            .map(|i| space.weight(i))
            .sum();
        if above < gamma * mu {
            return v;
        }
    }
    unreachable!("the largest value always qualifies")
}

/// Every family set containing `x`, across the whole scale grid,
/// deduplicated by member bits.
pub fn family_sets_through(space: &Space, family: &BasisFamily, x: usize) -> Vec<MSet> {
    let mut out: Vec<MSet> = Vec::new();
    for s in family.scale_grid() {
        for b in sets_at(space, family, x, s, 1 << 20).unwrap() {
            if !out.iter().any(|m| *m == b.members) {
                out.push(b.members);
            }
        }
    }
    out
}

/// Smallest power of two at or above `x` (for measure-ratio covers).
pub fn pow2_at_least(x: f64) -> f64 {
    let mut c = 1.0;
    while c < x {
        c *= 2.0;
    }
    c
}
