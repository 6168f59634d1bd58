//! Builds core objects from a resolved config and dispatches the experiment
//! pipelines. Everything here is deterministic in (config, seed).

use medimax_core::basis::{countable_refinement, BasisFamily, BasisKind};
use medimax_core::experiments::{
    self, indicator_corpus, needle_fan, shrinking_sequence, standard_corpus, Report,
};
use medimax_core::hajlasz::{
    self, capacity, capacity_monotone_limit, capacitary_weak_type, fspace_norm, hajlasz_norm,
    seq_norm, subadditivity_check, CapacityOpts, FSpaceSpec, SolveControl, WeakTypeMode,
};
use medimax_core::maximal::EngineOpts;
use medimax_core::median::Gamma;
use medimax_core::space::{Field, MSet, Metric};
use medimax_core::Space;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Experiment, RunConfig};
use crate::CliError;

pub fn build_space(cfg: &RunConfig) -> Result<Space, CliError> {
    let n_max = *cfg.grid.iter().max().expect("nonempty grid");
    let spacing = cfg.span / n_max as f64;
    // 1D lines center the span on 0.5 so the unit block [0,1] has equal
    // slack on both sides; planar grids cover (0, span)^2 with cell centers.
    let origin: Vec<f64> = if cfg.grid.len() == 1 {
        vec![0.5 - cfg.span / 2.0 + spacing / 2.0]
    } else {
        cfg.grid.iter().map(|_| spacing / 2.0).collect()
    };
    Ok(Space::grid_at(
        &cfg.grid,
        spacing,
        &origin,
        Metric::Euclidean,
    )?)
}

pub fn build_family(cfg: &RunConfig, dim: usize) -> Result<BasisFamily, CliError> {
    let (name, refined) = match cfg.family.strip_prefix("refined:") {
        Some(inner) => (inner, true),
        None => (cfg.family.as_str(), false),
    };
    let kind = match name {
        "balls" | "intervals1d" => BasisKind::Balls,
        "cubes" => BasisKind::Cubes,
        "axis_rects" => BasisKind::AxisRects {
            max_eccentricity: cfg.eccentricity,
        },
        "rotated_rects" => BasisKind::RotatedRects {
            angle_count: cfg.angles,
            max_eccentricity: cfg.eccentricity,
        },
        "dyadic" | "dyadic_cubes" => BasisKind::DyadicCubes,
        other => {
            return Err(CliError::Usage(format!(
                "unknown family '{other}'; expected balls, intervals1d, cubes, axis_rects, \
                 rotated_rects, or dyadic"
            )))
        }
    };
    if matches!(kind, BasisKind::RotatedRects { .. }) && dim != 2 {
        return Err(CliError::Usage(
            "rotated_rects needs a 2D grid".to_string(),
        ));
    }
    let family = BasisFamily::new(kind, cfg.k_min, cfg.k_max, cfg.seed)?;
    Ok(if refined {
        countable_refinement(&family)
    } else {
        family
    })
}

/// Index-aligned canonical block: [0,1] on a line, the centered quarter-area
/// block on a plane. Index ranges keep cell counts exactly proportional
/// across resolutions.
pub fn canonical_set(space: &Space, grid: &[usize]) -> Result<MSet, CliError> {
    let mut set = MSet::empty(space);
    if grid.len() == 1 {
        for i in 0..space.len() {
            let x = space.coord(i)[0];
            if x > 0.0 && x < 1.0 {
                set.insert(i);
            }
        }
    } else {
        let (nx, ny) = (grid[0], grid[1]);
        for ix in nx / 4..(3 * nx / 4).max(nx / 4 + 1) {
            for iy in ny / 4..(3 * ny / 4).max(ny / 4 + 1) {
                set.insert(space.flat_index(&[ix, iy]));
            }
        }
    }
    if set.is_empty() {
        return Err(CliError::Usage(
            "grid too small to hold the canonical block".to_string(),
        ));
    }
    Ok(set)
}

/// Piecewise-linear cone mix with a certified Lipschitz constant: each term
/// is amp * max(0, 1 - slope * |x - c|), so the sum is Lipschitz with
/// constant at most sum |amp| * slope in the Euclidean metric.
pub fn lipschitz_sample(space: &Space) -> Result<(Field, f64), CliError> {
    let cones: [(f64, f64, [f64; 2]); 3] = [
        (1.0, 2.0, [0.3, 0.3]),
        (-0.7, 3.0, [0.7, 0.45]),
        (0.5, 2.5, [0.45, 0.75]),
    ];
    let dim = space.dim();
    let field = Field::from_fn(space, |x| {
        let mut total = 0.0;
        for (amp, slope, center) in cones {
            let mut d2 = 0.0;
            for (axis, xi) in x.iter().enumerate().take(dim.min(2)) {
                let delta = xi - center[axis];
                d2 += delta * delta;
            }
            total += amp * (1.0 - slope * d2.sqrt()).max(0.0);
        }
        total
    })?;
    let lip: f64 = cones.iter().map(|(amp, slope, _)| amp.abs() * slope).sum();
    Ok((field, lip))
}

pub fn build_corpus(
    space: &Space,
    grid: &[usize],
    spec: &str,
    seed: u64,
) -> Result<Vec<(String, Field)>, CliError> {
    let mut out = Vec::new();
    for atom in spec.split('+') {
        let atom = atom.trim();
        if atom == "canonical" {
            let set = canonical_set(space, grid)?;
            out.push(("unit_block".to_string(), Field::indicator(space, &set)));
        } else if atom == "lipschitz" {
            let (field, _) = lipschitz_sample(space)?;
            out.push(("cone_mix".to_string(), field));
        } else if let Some(rest) = atom.strip_prefix("indicators:") {
            let n = parse_count(rest, atom)?;
            out.extend(indicator_corpus(space, seed, n)?);
        } else if let Some(rest) = atom.strip_prefix("standard:") {
            let n = parse_count(rest, atom)?;
            out.extend(standard_corpus(space, seed, n)?);
        } else if let Some(rest) = atom.strip_prefix("fan:") {
            let parts: Vec<&str> = rest.split(',').collect();
            if parts.len() != 3 {
                return Err(CliError::Usage(format!(
                    "fan atom '{atom}' must be fan:<angles>,<len_cells>,<width_cells>"
                )));
            }
            let angles: u32 = parts[0]
                .parse()
                .map_err(|_| CliError::Usage(format!("bad angle count in '{atom}'")))?;
            let len: usize = parts[1]
                .parse()
                .map_err(|_| CliError::Usage(format!("bad length in '{atom}'")))?;
            let width: usize = parts[2]
                .parse()
                .map_err(|_| CliError::Usage(format!("bad width in '{atom}'")))?;
            let set = needle_fan(space, angles, len, width)?;
            out.push((
                format!("fan_{angles}x{len}x{width}"),
                Field::indicator(space, &set),
            ));
        } else {
            return Err(CliError::Usage(format!(
                "unknown corpus atom '{atom}'; expected canonical, lipschitz, indicators:<n>, \
                 standard:<n>, or fan:<angles>,<len>,<width>"
            )));
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("corpus is empty".to_string()));
    }
    Ok(out)
}

fn parse_count(text: &str, atom: &str) -> Result<usize, CliError> {
    let n: usize = text
        .parse()
        .map_err(|_| CliError::Usage(format!("bad count in corpus atom '{atom}'")))?;
    if n == 0 {
        return Err(CliError::Usage(format!(
            "corpus atom '{atom}' asks for zero inputs"
        )));
    }
    Ok(n)
}

fn engine_opts(cfg: &RunConfig) -> EngineOpts {
    EngineOpts {
        point_budget: cfg.budget,
        paint_cell_budget: cfg.paint_budget,
        ..EngineOpts::default()
    }
}

fn build_fspec(cfg: &RunConfig) -> Result<FSpaceSpec, CliError> {
    let p = cfg.p[0];
    let spec = match cfg.fam.as_str() {
        "mp" => FSpaceSpec::mp(cfg.s, p)?,
        "mpq" => FSpaceSpec::mpq(
            cfg.s,
            p,
            cfg.q
                .ok_or_else(|| CliError::Usage("family mpq needs --q".to_string()))?,
        )?,
        "npq" => FSpaceSpec::npq(
            cfg.s,
            p,
            cfg.q
                .ok_or_else(|| CliError::Usage("family npq needs --q".to_string()))?,
        )?,
        other => {
            return Err(CliError::Usage(format!(
                "unknown norm family '{other}'"
            )))
        }
    };
    spec.solver_ready()?;
    Ok(spec)
}

fn parse_target(space: &Space, cfg: &RunConfig) -> Result<MSet, CliError> {
    if cfg.target == "center" {
        return canonical_set(space, &cfg.grid);
    }
    if let Some(rest) = cfg.target.strip_prefix("point:") {
        let idx: usize = rest
            .parse()
            .map_err(|_| CliError::Usage(format!("bad point index '{rest}'")))?;
        if idx >= space.len() {
            return Err(CliError::Usage(format!(
                "point index {idx} outside space of {} points",
                space.len()
            )));
        }
        return Ok(MSet::from_indices(space, &[idx])?);
    }
    if let Some(rest) = cfg.target.strip_prefix("indices:") {
        let parsed: Result<Vec<usize>, _> = rest.split(',').map(|t| t.trim().parse()).collect();
        let indices = parsed
            .map_err(|_| CliError::Usage(format!("bad index list '{rest}'")))?;
        return Ok(MSet::from_indices(space, &indices)?);
    }
    Err(CliError::Usage(format!(
        "unknown target '{}'; expected center, point:<idx>, or indices:<i,j,...>",
        cfg.target
    )))
}

/// Run the configured experiment; returns (slug, report) pairs in the order
/// they should be written.
pub fn execute(cfg: &RunConfig) -> Result<Vec<(String, Report)>, CliError> {
    let space = build_space(cfg)?;
    let gamma = Gamma::new(cfg.gamma)?;
    match cfg.experiment {
        Experiment::Density => {
            let family = build_family(cfg, space.dim())?;
            let corpus = build_corpus(&space, &cfg.grid, &cfg.corpus, cfg.seed)?;
            let sets: Vec<(String, MSet)> = corpus
                .iter()
                .map(|(name, f)| (name.clone(), f.support(&space)))
                .collect();
            let report = experiments::density_test(
                &space,
                &family,
                &sets,
                cfg.points,
                cfg.budget,
                cfg.tol.unwrap_or(1e-9),
                cfg.seed,
            )?;
            Ok(vec![("density".to_string(), report)])
        }
        Experiment::Lebesgue => {
            let family = build_family(cfg, space.dim())?;
            let (field, lip) = lipschitz_sample(&space)?;
            let report = experiments::lebesgue_point_test(
                &space,
                &family,
                &field,
                &[gamma],
                cfg.points,
                cfg.budget,
                cfg.tol.unwrap_or(1e-9),
                lip,
                cfg.seed,
            )?;
            Ok(vec![("lebesgue".to_string(), report)])
        }
        Experiment::Weaktype => {
            let family = build_family(cfg, space.dim())?;
            let corpus = build_corpus(&space, &cfg.grid, &cfg.corpus, cfg.seed)?;
            let grid_override = cfg.lambda.map(|l| vec![l]);
            let report = experiments::weak_type_constant(
                &space,
                &family,
                gamma,
                &corpus,
                grid_override.as_deref(),
                &engine_opts(cfg),
            )?;
            Ok(vec![("weaktype".to_string(), report)])
        }
        Experiment::Lpbound => {
            let family = build_family(cfg, space.dim())?;
            let corpus = build_corpus(&space, &cfg.grid, &cfg.corpus, cfg.seed)?;
            let opts = engine_opts(cfg);
            let mut artifacts = Vec::new();
            let c_est = match cfg.c_est {
                Some(c) => c,
                None => {
                    let wt = experiments::weak_type_constant(
                        &space, &family, gamma, &corpus, None, &opts,
                    )?;
                    if wt.summary_value("c_est_infinite") == Some(1.0) {
                        return Err(CliError::Usage(
                            "weak-type scan hit an infinite ratio; pass --c-est to bound \
                             the comparison constant explicitly"
                                .to_string(),
                        ));
                    }
                    let c = wt.summary_value("c_est").unwrap_or(0.0);
                    artifacts.push(("weaktype".to_string(), wt));
                    c
                }
            };
            let report =
                experiments::lp_bound(&space, &family, gamma, &cfg.p, &corpus, Some(c_est), &opts)?;
            artifacts.push(("lpbound".to_string(), report));
            Ok(artifacts)
        }
        Experiment::Continuity => {
            let family = build_family(cfg, space.dim())?;
            let seq = shrinking_sequence(&space, cfg.seed, cfg.count)?;
            let report = experiments::continuity_in_measure(
                &space,
                &family,
                gamma,
                cfg.lambda.unwrap_or(0.5),
                cfg.p[0],
                &seq,
                cfg.tol.unwrap_or(0.01),
                &engine_opts(cfg),
            )?;
            Ok(vec![("continuity".to_string(), report)])
        }
        Experiment::Finiteness => {
            let family = build_family(cfg, space.dim())?;
            let corpus = build_corpus(&space, &cfg.grid, &cfg.corpus, cfg.seed)?;
            let threshold = cfg.threshold.unwrap_or_else(|| {
                corpus
                    .iter()
                    .flat_map(|(_, f)| f.values().iter().map(|v| v.abs()))
                    .fold(0.0, f64::max)
            });
            let report = experiments::finiteness_scan(
                &space,
                &family,
                gamma,
                &corpus,
                threshold,
                cfg.points,
                cfg.budget,
                cfg.seed,
            )?;
            Ok(vec![("finiteness".to_string(), report)])
        }
        Experiment::HajlaszNorm => run_hajlasz_norm(cfg, &space),
        Experiment::Capacity => run_capacity(cfg, &space),
        Experiment::Captests => run_captests(cfg, &space, gamma),
    }
}

fn run_hajlasz_norm(cfg: &RunConfig, space: &Space) -> Result<Vec<(String, Report)>, CliError> {
    let spec = build_fspec(cfg)?;
    let control = SolveControl::default();
    let corpus = build_corpus(space, &cfg.grid, &cfg.corpus, cfg.seed)?;
    let mut report = Report::new("hajlasz-norm");
    report.meta.push(("family".to_string(), cfg.fam.clone()));
    report.meta.push(("s".to_string(), format!("{}", spec.s)));
    report.meta.push(("p".to_string(), format!("{}", spec.p)));
    if cfg.fam != "mp" {
        report.meta.push(("q".to_string(), format!("{}", spec.q)));
    }
    let mut max_norm = 0.0f64;
    for (i, (name, u)) in corpus.iter().enumerate() {
        let seminorm = match spec.family {
            hajlasz::Family::Mp => hajlasz_norm(space, u, spec.s, spec.p, &control)?.0,
            _ => seq_norm(space, u, &spec, &control)?.0,
        };
        let total = fspace_norm(space, u, &spec, &control)?;
        max_norm = max_norm.max(total);
        report.meta.push((format!("input_{i}"), name.clone()));
        report.rows.push(experiments::Row::new(&[
            ("input", i as f64),
            ("seminorm", seminorm),
            ("norm", total),
        ]));
    }
    report.summary.push(("max_norm".to_string(), max_norm));
    Ok(vec![("hajlasz-norm".to_string(), report)])
}

fn run_capacity(cfg: &RunConfig, space: &Space) -> Result<Vec<(String, Report)>, CliError> {
    let spec = build_fspec(cfg)?;
    let target = parse_target(space, cfg)?;
    let opts = CapacityOpts {
        rho: cfg.rho,
        ..CapacityOpts::default()
    };
    let (value, witness) = capacity(space, &target, &spec, &opts)?;
    let mut report = Report::new("capacity");
    report.meta.push(("family".to_string(), cfg.fam.clone()));
    report.meta.push(("target".to_string(), cfg.target.clone()));
    report.rows.push(experiments::Row::new(&[
        ("target_size", target.card() as f64),
        ("capacity", value),
    ]));
    report.summary.push(("capacity".to_string(), value));

    let mut witness_report = Report::new("capacity-witness");
    for i in 0..space.len() {
        witness_report.rows.push(experiments::Row::new(&[
            ("index", i as f64),
            ("u", witness.value(i)),
        ]));
    }
    Ok(vec![
        ("capacity".to_string(), report),
        ("witness".to_string(), witness_report),
    ])
}

/// Random small subsets for the capacity batteries.
fn random_sets(space: &Space, count: usize, seed: u64) -> Vec<MSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xCAB_7E57);
    let n = space.len();
    (0..count)
        .map(|_| {
            let size = rng.gen_range(1..=3.min(n));
            let mut set = MSet::empty(space);
            while set.card() < size {
                set.insert(rng.gen_range(0..n));
            }
            set
        })
        .collect()
}

fn run_captests(
    cfg: &RunConfig,
    space: &Space,
    gamma: Gamma,
) -> Result<Vec<(String, Report)>, CliError> {
    let spec = build_fspec(cfg)?;
    let opts = CapacityOpts {
        rho: cfg.rho,
        ..CapacityOpts::default()
    };
    let sets = random_sets(space, cfg.count, cfg.seed);
    let subadd = subadditivity_check(space, &sets, &spec, &opts)?;

    // Monotone chain: nested prefixes of the largest battery set's closure
    // under a fixed fill order, ending at the union target.
    let target = parse_target(space, cfg)?;
    let order: Vec<usize> = target.indices();
    let mut chain = Vec::new();
    let steps = order.len().min(4).max(1);
    for step in 1..=steps {
        let take = (order.len() * step).div_ceil(steps);
        chain.push(MSet::from_indices(space, &order[..take.max(1)])?);
    }
    let monotone =
        capacity_monotone_limit(space, &chain, &spec, cfg.tol.unwrap_or(1e-3), &opts)?;

    let family = build_family(cfg, space.dim())?;
    let mut u_list = build_corpus(space, &cfg.grid, "canonical", cfg.seed)?;
    u_list.extend(standard_corpus(space, cfg.seed, 1)?);
    let mut lambdas: Vec<f64> = u_list
        .iter()
        .flat_map(|(_, u)| u.values().iter().map(|v| v.abs()))
        .filter(|v| *v > 0.0)
        .collect();
    lambdas.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    lambdas.dedup();
    // keep at most six levels, spread across the observed range
    if lambdas.len() > 6 {
        let stride = lambdas.len().div_ceil(6);
        lambdas = lambdas.iter().copied().step_by(stride).collect();
    }
    let limsup = capacitary_weak_type(
        space,
        &u_list,
        &spec,
        gamma,
        &family,
        &lambdas,
        WeakTypeMode::LimsupMedian,
        cfg.budget,
        &opts,
    )?;
    let maximal = capacitary_weak_type(
        space,
        &u_list,
        &spec,
        gamma,
        &family,
        &lambdas,
        WeakTypeMode::Maximal,
        cfg.budget,
        &opts,
    )?;
    Ok(vec![
        ("subadd".to_string(), subadd),
        ("monotone".to_string(), monotone),
        ("capweak-limsup".to_string(), limsup),
        ("capweak-maximal".to_string(), maximal),
    ])
}
