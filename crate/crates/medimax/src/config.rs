//! Run configuration: partial layers (config file, flags) merged into a
//! fully resolved `RunConfig` whose canonical JSON form is hashed into the
//! report provenance. Explicit flags always win over file values.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Density,
    Lebesgue,
    Weaktype,
    Lpbound,
    Continuity,
    Finiteness,
    HajlaszNorm,
    Capacity,
    Captests,
}

impl Experiment {
    pub fn parse(name: &str) -> Result<Experiment, CliError> {
        Ok(match name {
            "density" => Experiment::Density,
            "lebesgue" => Experiment::Lebesgue,
            "weaktype" => Experiment::Weaktype,
            "lpbound" => Experiment::Lpbound,
            "continuity" => Experiment::Continuity,
            "finiteness" => Experiment::Finiteness,
            "hajlasz-norm" => Experiment::HajlaszNorm,
            "capacity" => Experiment::Capacity,
            "captests" => Experiment::Captests,
            other => {
                return Err(CliError::Usage(format!(
                    "unknown experiment kind '{other}'; expected one of density, lebesgue, \
                     weaktype, lpbound, continuity, finiteness, hajlasz-norm, capacity, captests"
                )))
            }
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Density => "density",
            Experiment::Lebesgue => "lebesgue",
            Experiment::Weaktype => "weaktype",
            Experiment::Lpbound => "lpbound",
            Experiment::Continuity => "continuity",
            Experiment::Finiteness => "finiteness",
            Experiment::HajlaszNorm => "hajlasz-norm",
            Experiment::Capacity => "capacity",
            Experiment::Captests => "captests",
        }
    }
}

/// One layer of configuration. All fields optional so layers stack.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartialConfig {
    pub experiment: Option<String>,
    /// Grid shape, "256x256" or "4096".
    pub grid: Option<String>,
    /// Physical side length covered by the longest grid axis.
    pub span: Option<f64>,
    /// Family name: balls | intervals1d | cubes | axis_rects |
    /// rotated_rects | dyadic, optionally prefixed "refined:".
    pub family: Option<String>,
    pub angles: Option<u32>,
    pub eccentricity: Option<u32>,
    pub k_min: Option<i32>,
    pub k_max: Option<i32>,
    pub gamma: Option<f64>,
    pub p: Option<Vec<f64>>,
    pub q: Option<f64>,
    pub s: Option<f64>,
    /// Norm family for Hajlasz runs: mp | mpq | npq.
    pub fam: Option<String>,
    pub lambda: Option<f64>,
    pub c_est: Option<f64>,
    pub tol: Option<f64>,
    pub threshold: Option<f64>,
    pub corpus: Option<String>,
    pub points: Option<usize>,
    pub count: Option<usize>,
    pub budget: Option<usize>,
    pub paint_budget: Option<u64>,
    pub rho: Option<f64>,
    /// Capacity target: center | point:<idx> | indices:<i,j,...>.
    pub target: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<String>,
}

impl PartialConfig {
    pub fn from_file(path: &Path) -> Result<PartialConfig, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    /// Layer `over` on top of `self`: any field set in `over` wins.
    pub fn overridden_by(mut self, over: &PartialConfig) -> PartialConfig {
        macro_rules! take {
            ($($f:ident),*) => { $( if over.$f.is_some() { self.$f = over.$f.clone(); } )* };
        }
        take!(
            experiment, grid, span, family, angles, eccentricity, k_min, k_max, gamma, p, q, s,
            fam, lambda, c_est, tol, threshold, corpus, points, count, budget, paint_budget, rho,
            target, seed, out
        );
        self
    }
}

/// Fully resolved run description. Serialized canonically (struct order)
/// and hashed for provenance; equal configs hash equally.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub grid: Vec<usize>,
    pub span: f64,
    pub family: String,
    pub angles: u32,
    pub eccentricity: u32,
    pub k_min: i32,
    pub k_max: i32,
    pub gamma: f64,
    pub p: Vec<f64>,
    pub q: Option<f64>,
    pub s: f64,
    pub fam: String,
    pub lambda: Option<f64>,
    pub c_est: Option<f64>,
    pub tol: Option<f64>,
    pub threshold: Option<f64>,
    pub corpus: String,
    pub points: usize,
    pub count: usize,
    pub budget: usize,
    pub paint_budget: u64,
    pub rho: Option<f64>,
    pub target: String,
    pub seed: u64,
    /// Artifact sink, not an experiment input: reports hash the same wherever
    /// they land.
    #[serde(skip_serializing)]
    pub out: String,
}

fn parse_grid(text: &str) -> Result<Vec<usize>, CliError> {
    let dims: Result<Vec<usize>, _> = text
        .split('x')
        .map(|t| t.trim().parse::<usize>())
        .collect();
    let dims =
        dims.map_err(|_| CliError::Usage(format!("grid '{text}' is not like 4096 or 256x256")))?;
    if dims.is_empty() || dims.len() > 2 || dims.contains(&0) {
        return Err(CliError::Usage(format!(
            "grid '{text}' must be 1D or 2D with positive sides"
        )));
    }
    Ok(dims)
}

/// Coarsest useful scale: the span itself, rounded to the dyadic grid.
fn default_k_min(span: f64) -> i32 {
    -(span.log2().ceil() as i32)
}

/// Finest useful scale: roughly four cells across.
fn default_k_max(span: f64, n_max: usize) -> i32 {
    let spacing = span / n_max as f64;
    (-(4.0 * spacing).log2()).floor() as i32
}

pub fn resolve(kind: Experiment, c: &PartialConfig) -> Result<RunConfig, CliError> {
    let grid_text = c.grid.clone().unwrap_or_else(|| {
        match kind {
            Experiment::Lebesgue => "256x256",
            Experiment::Density => "128x128",
            Experiment::Weaktype | Experiment::Lpbound => "4096",
            Experiment::Continuity | Experiment::Finiteness => "64x64",
            Experiment::HajlaszNorm | Experiment::Capacity | Experiment::Captests => "4x4",
        }
        .to_string()
    });
    let grid = parse_grid(&grid_text)?;
    let one_dim = grid.len() == 1;

    let family = c.family.clone().unwrap_or_else(|| {
        if one_dim {
            "intervals1d".to_string()
        } else {
            "cubes".to_string()
        }
    });
    if family.ends_with("intervals1d") && !one_dim {
        return Err(CliError::Usage(
            "family intervals1d needs a 1D grid; use balls on higher dimensions".to_string(),
        ));
    }

    // A 1D line needs room on both sides of the unit block for the maximal
    // enlargement; the planar experiments live on the unit square.
    let span = c.span.unwrap_or(if one_dim { 16.0 } else { 1.0 });
    if !(span > 0.0) || !span.is_finite() {
        return Err(CliError::Usage(format!("span must be positive, got {span}")));
    }

    let n_max = *grid.iter().max().expect("nonempty grid");
    let k_min = c.k_min.unwrap_or_else(|| default_k_min(span));
    let k_max = c.k_max.unwrap_or_else(|| {
        // density fractions hit zero exactly once the scale admits only
        // singletons, so sweep all the way down; elsewhere stop near 4 cells
        let extra = if kind == Experiment::Density { 2 } else { 0 };
        default_k_max(span, n_max) + extra
    });
    if k_min > k_max {
        return Err(CliError::Usage(format!(
            "scale range is empty: k_min {k_min} > k_max {k_max}"
        )));
    }

    let gamma = c.gamma.unwrap_or(0.25);
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(CliError::Usage(format!(
            "gamma must lie strictly between 0 and 1, got {gamma}"
        )));
    }

    let p = c.p.clone().unwrap_or_else(|| match kind {
        Experiment::Lpbound => vec![1.0, 2.0],
        Experiment::Continuity => vec![1.0],
        _ => vec![2.0],
    });
    if p.is_empty() || p.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(CliError::Usage(format!(
            "p values must be positive and finite, got {p:?}"
        )));
    }

    let s = c.s.unwrap_or(0.5);
    if !(s > 0.0 && s <= 1.0) {
        return Err(CliError::Usage(format!(
            "smoothness s must lie in (0, 1], got {s}"
        )));
    }

    let fam = c.fam.clone().unwrap_or_else(|| match kind {
        Experiment::Captests => "mpq".to_string(),
        _ => "mp".to_string(),
    });
    if !matches!(fam.as_str(), "mp" | "mpq" | "npq") {
        return Err(CliError::Usage(format!(
            "norm family must be mp, mpq, or npq, got '{fam}'"
        )));
    }
    let q = c.q.or(match (kind, fam.as_str()) {
        (Experiment::Captests, _) | (_, "mpq") | (_, "npq") => Some(2.0),
        _ => None,
    });
    if let Some(q) = q {
        if !(q > 0.0) {
            return Err(CliError::Usage(format!("q must be positive, got {q}")));
        }
    }

    if let Some(l) = c.lambda {
        if !(l >= 0.0) || !l.is_finite() {
            return Err(CliError::Usage(format!(
                "lambda must be finite and nonnegative, got {l}"
            )));
        }
    }
    if let Some(t) = c.tol {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(CliError::Usage(format!(
                "tol must be finite and nonnegative, got {t}"
            )));
        }
    }
    if let Some(v) = c.c_est {
        if !(v > 0.0) || !v.is_finite() {
            return Err(CliError::Usage(format!(
                "c-est override must be positive, got {v}"
            )));
        }
    }
    if let Some(r) = c.rho {
        if !(r > 0.0) || !r.is_finite() {
            return Err(CliError::Usage(format!("rho must be positive, got {r}")));
        }
    }

    let corpus = c.corpus.clone().unwrap_or_else(|| {
        match kind {
            Experiment::Density => "canonical+indicators:4",
            Experiment::Weaktype => "canonical+indicators:6",
            Experiment::Lpbound => "canonical+indicators:4+standard:2",
            Experiment::Finiteness => "standard:3",
            _ => "canonical",
        }
        .to_string()
    });

    let count = c.count.unwrap_or(match kind {
        Experiment::Continuity => 8,
        Experiment::Captests => 6,
        _ => 1,
    });
    if count == 0 {
        return Err(CliError::Usage("count must be at least 1".to_string()));
    }

    let budget = c.budget.unwrap_or(10_000);
    if budget == 0 {
        return Err(CliError::Usage("budget must be at least 1".to_string()));
    }

    Ok(RunConfig {
        experiment: kind,
        grid,
        span,
        family,
        angles: c.angles.unwrap_or(32),
        eccentricity: c.eccentricity.unwrap_or(32),
        k_min,
        k_max,
        gamma,
        p,
        q,
        s,
        fam,
        lambda: c.lambda,
        c_est: c.c_est,
        tol: c.tol,
        threshold: c.threshold,
        corpus,
        points: c.points.unwrap_or(48),
        count,
        budget,
        paint_budget: c.paint_budget.unwrap_or(50_000_000),
        rho: c.rho,
        target: c.target.clone().unwrap_or_else(|| "center".to_string()),
        seed: c.seed.unwrap_or(17),
        out: c.out.clone().unwrap_or_else(|| "out".to_string()),
    })
}

impl RunConfig {
    /// Canonical JSON used both in the report and for the provenance hash.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let file = PartialConfig {
            gamma: Some(0.5),
            seed: Some(3),
            ..PartialConfig::default()
        };
        let flags = PartialConfig {
            gamma: Some(0.25),
            ..PartialConfig::default()
        };
        let merged = file.overridden_by(&flags);
        assert_eq!(merged.gamma, Some(0.25));
        assert_eq!(merged.seed, Some(3));
    }

    #[test]
    fn grid_parsing_accepts_1d_and_2d() {
        assert_eq!(parse_grid("4096").unwrap(), vec![4096]);
        assert_eq!(parse_grid("256x128").unwrap(), vec![256, 128]);
        assert!(parse_grid("0x4").is_err());
        assert!(parse_grid("2x2x2").is_err());
        assert!(parse_grid("abc").is_err());
    }

    #[test]
    fn resolve_rejects_out_of_range_gamma() {
        let c = PartialConfig {
            gamma: Some(1.5),
            ..PartialConfig::default()
        };
        assert!(resolve(Experiment::Weaktype, &c).is_err());
    }

    #[test]
    fn default_scales_cover_span_down_to_cells() {
        let cfg = resolve(Experiment::Weaktype, &PartialConfig::default()).unwrap();
        assert_eq!(cfg.grid, vec![4096]);
        // span 16: coarsest diameter 16, finest about four cells
        assert_eq!(cfg.k_min, -4);
        assert_eq!(cfg.k_max, 6);
        let cfg2 = resolve(Experiment::Lebesgue, &PartialConfig::default()).unwrap();
        assert_eq!(cfg2.k_min, 0);
        assert_eq!(cfg2.k_max, 6);
    }

    #[test]
    fn canonical_json_is_stable_for_equal_configs() {
        let a = resolve(Experiment::Density, &PartialConfig::default()).unwrap();
        let b = resolve(Experiment::Density, &PartialConfig::default()).unwrap();
        assert_eq!(a.canonical_json(), b.canonical_json());
    }
}
