//! Domain description files and run configuration.
//!
//! Both formats are flat `key = value` text ('#' starts a comment). Domain
//! files describe the region:
//!
//! ```text
//! shape = ball          # polygon | ball | ellipse | interval
//! center = 0 0
//! radius = 1
//! ```
//!
//! with `vertices = x0 y0 x1 y1 ...` (counterclockwise) for polygons,
//! `semi_axes = a b` for ellipses, and `endpoints = a b` for intervals.
//! Run configs hold solver/game/check parameters under the keys the CLI
//! flags mirror; flags win over file values.

use crate::geometry::{ConvexDomain, GeometryError};
use crate::solver::{SchemeParams, Sweep};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: expected 'key = value'")]
    BadLine { line: usize },
    #[error("missing key '{0}'")]
    MissingKey(&'static str),
    #[error("key '{key}': {reason}")]
    BadValue { key: String, reason: String },
    #[error("unknown shape '{0}' (expected polygon|ball|ellipse|interval)")]
    UnknownShape(String),
    #[error("unknown key '{0}'")]
    UnknownKey(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Flat key = value store with insertion-order-independent lookups.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::BadLine { line: lineno + 1 })?;
            entries.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(KeyValues { entries })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    pub fn set(&mut self, key: &str, value: String) {
        self.entries.insert(key.to_string(), value);
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    fn require(&self, key: &'static str) -> Result<&str, ConfigError> {
        self.get(key).ok_or(ConfigError::MissingKey(key))
    }

    pub fn numbers(&self, key: &'static str) -> Result<Vec<f64>, ConfigError> {
        let raw = self.require(key)?;
        raw.split([' ', ',', ';'])
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>().map_err(|_| ConfigError::BadValue {
                    key: key.to_string(),
                    reason: format!("'{s}' is not a number"),
                })
            })
            .collect()
    }

    pub fn number(&self, key: &'static str) -> Result<f64, ConfigError> {
        let v = self.numbers(key)?;
        if v.len() != 1 {
            return Err(ConfigError::BadValue {
                key: key.to_string(),
                reason: format!("expected one number, got {}", v.len()),
            });
        }
        Ok(v[0])
    }
}

const DOMAIN_KEYS: &[&str] = &[
    "shape",
    "vertices",
    "center",
    "radius",
    "semi_axes",
    "endpoints",
];

/// Parses a domain description.
pub fn parse_domain(kv: &KeyValues) -> Result<ConvexDomain, ConfigError> {
    for key in kv.keys() {
        if !DOMAIN_KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
    }
    let shape = kv.require("shape")?;
    let pair = |key: &'static str| -> Result<[f64; 2], ConfigError> {
        let v = kv.numbers(key)?;
        if v.len() != 2 {
            return Err(ConfigError::BadValue {
                key: key.to_string(),
                reason: format!("expected two numbers, got {}", v.len()),
            });
        }
        Ok([v[0], v[1]])
    };
    match shape {
        "ball" => Ok(ConvexDomain::ball(pair("center")?, kv.number("radius")?)?),
        "ellipse" => Ok(ConvexDomain::ellipse(pair("center")?, pair("semi_axes")?)?),
        "interval" => {
            let [a, b] = pair("endpoints")?;
            Ok(ConvexDomain::interval(a, b)?)
        }
        "polygon" => {
            let flat = kv.numbers("vertices")?;
            if flat.len() < 6 || flat.len() % 2 != 0 {
                return Err(ConfigError::BadValue {
                    key: "vertices".to_string(),
                    reason: "need an even list of at least 6 numbers (x y pairs)".to_string(),
                });
            }
            let vertices = flat.chunks(2).map(|c| [c[0], c[1]]).collect();
            Ok(ConvexDomain::polygon(vertices)?)
        }
        other => Err(ConfigError::UnknownShape(other.to_string())),
    }
}

pub fn domain_to_text(d: &ConvexDomain) -> String {
    let mut out = String::new();
    match d {
        ConvexDomain::Interval { a, b } => {
            let _ = writeln!(out, "shape = interval\nendpoints = {a} {b}");
        }
        ConvexDomain::Ball { center, radius } => {
            let _ = writeln!(
                out,
                "shape = ball\ncenter = {} {}\nradius = {radius}",
                center[0], center[1]
            );
        }
        ConvexDomain::Ellipse { center, semi_axes } => {
            let _ = writeln!(
                out,
                "shape = ellipse\ncenter = {} {}\nsemi_axes = {} {}",
                center[0], center[1], semi_axes[0], semi_axes[1]
            );
        }
        ConvexDomain::Polygon { vertices } => {
            let flat: Vec<String> = vertices
                .iter()
                .flat_map(|v| [v[0].to_string(), v[1].to_string()])
                .collect();
            let _ = writeln!(out, "shape = polygon\nvertices = {}", flat.join(" "));
        }
        ConvexDomain::Offset { .. } => {
            // parallel bodies are internal; nearest description is the base
            unreachable!("offset domains are not written to files")
        }
    }
    out
}

/// Everything a run needs, resolved from config file + flag overrides.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub domain: ConvexDomain,
    pub f_constant: f64,
    pub scheme: SchemeParams,
    pub trials: usize,
    pub seed: u64,
    pub game_max_steps: Option<usize>,
    pub start: [f64; 2],
    pub checks: Vec<String>,
    pub refinements: usize,
    pub shrink: f64,
    pub threads: usize,
    pub min_exit_rate: f64,
}

pub const KNOWN_CHECKS: &[&str] = &[
    "concavity",
    "cones",
    "quadcone",
    "semiconcavity",
    "envelope",
    "gradient",
    "decay",
    "blowup",
    "comparison",
    "restricted",
];

impl RunConfig {
    /// Resolves a run config from already-merged key/values. `domain` must
    /// point at a domain description file.
    pub fn from_keyvalues(kv: &KeyValues, base_dir: &Path) -> Result<Self, ConfigError> {
        const RUN_KEYS: &[&str] = &[
            "domain",
            "f",
            "eps",
            "m",
            "tol",
            "max_iter",
            "sweep",
            "trials",
            "seed",
            "max_steps",
            "start",
            "checks",
            "refinements",
            "out",
            "threads",
            "shrink",
            "min_exit_rate",
        ];
        for key in kv.keys() {
            if !RUN_KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey(key.to_string()));
            }
        }
        let domain_path = kv.require("domain")?;
        let path = base_dir.join(domain_path);
        let domain = parse_domain(&KeyValues::load(&path)?)?;

        let eps = kv.number("eps")?;
        let mut scheme = SchemeParams::new(eps);
        if let Some(_m) = kv.get("m") {
            scheme.m = kv.number("m")? as usize;
        }
        if let Some(t) = kv.get("tol") {
            if t != "auto" {
                scheme.tol = Some(kv.number("tol")?);
            }
        }
        if kv.get("max_iter").is_some() {
            scheme.max_iter = kv.number("max_iter")? as usize;
        }
        if let Some(s) = kv.get("sweep") {
            scheme.sweep = match s {
                "gauss_seidel" => Sweep::GaussSeidel,
                "jacobi" => Sweep::Jacobi,
                other => {
                    return Err(ConfigError::BadValue {
                        key: "sweep".to_string(),
                        reason: format!("'{other}' (expected gauss_seidel|jacobi)"),
                    })
                }
            };
        }
        let start = match kv.get("start") {
            Some(_) => {
                let v = kv.numbers("start")?;
                match v.len() {
                    1 => [v[0], 0.0],
                    2 => [v[0], v[1]],
                    n => {
                        return Err(ConfigError::BadValue {
                            key: "start".to_string(),
                            reason: format!("expected 1 or 2 coordinates, got {n}"),
                        })
                    }
                }
            }
            None => domain.centroid(),
        };
        let checks = match kv.get("checks") {
            Some(raw) => {
                let list: Vec<String> = raw
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
                for c in &list {
                    if !KNOWN_CHECKS.contains(&c.as_str()) {
                        return Err(ConfigError::BadValue {
                            key: "checks".to_string(),
                            reason: format!("unknown check '{c}'"),
                        });
                    }
                }
                list
            }
            // blowup wants a boundary layer much thinner than its dyadic
            // fit range, so it only runs when asked for explicitly
            None => KNOWN_CHECKS
                .iter()
                .filter(|c| **c != "blowup")
                .map(|s| s.to_string())
                .collect(),
        };
        Ok(RunConfig {
            domain,
            f_constant: kv
                .get("f")
                .map(|_| kv.number("f"))
                .transpose()?
                .unwrap_or(1.0),
            scheme,
            trials: kv
                .get("trials")
                .map(|_| kv.number("trials"))
                .transpose()?
                .unwrap_or(100_000.0) as usize,
            seed: kv
                .get("seed")
                .map(|_| kv.number("seed"))
                .transpose()?
                .unwrap_or(0.0) as u64,
            game_max_steps: kv
                .get("max_steps")
                .map(|_| kv.number("max_steps").map(|v| v as usize))
                .transpose()?,
            start,
            checks,
            refinements: kv
                .get("refinements")
                .map(|_| kv.number("refinements"))
                .transpose()?
                .unwrap_or(1.0) as usize,
            shrink: kv
                .get("shrink")
                .map(|_| kv.number("shrink"))
                .transpose()?
                .unwrap_or(0.5),
            threads: kv
                .get("threads")
                .map(|_| kv.number("threads"))
                .transpose()?
                .unwrap_or(0.0) as usize,
            min_exit_rate: kv
                .get("min_exit_rate")
                .map(|_| kv.number("min_exit_rate"))
                .transpose()?
                .unwrap_or(0.99),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_ball_domain() {
        let kv = KeyValues::parse("shape = ball\ncenter = 0 0\nradius = 1\n").unwrap();
        let d = parse_domain(&kv).unwrap();
        assert_eq!(d, ConvexDomain::ball([0.0, 0.0], 1.0).unwrap());
    }

    #[test]
    fn parse_polygon_domain_with_comments() {
        let kv =
            KeyValues::parse("# unit square\nshape = polygon\nvertices = 0 0  1 0  1 1  0 1\n")
                .unwrap();
        let d = parse_domain(&kv).unwrap();
        assert!(d.contains([0.5, 0.5]));
    }

    #[test]
    fn parse_interval_and_ellipse() {
        let kv = KeyValues::parse("shape = interval\nendpoints = -1 1\n").unwrap();
        assert_eq!(parse_domain(&kv).unwrap().dimension(), 1);
        let kv = KeyValues::parse("shape = ellipse\ncenter = 0 0\nsemi_axes = 2 1\n").unwrap();
        assert_eq!(parse_domain(&kv).unwrap().diameter(), 4.0);
    }

    #[test]
    fn error_messages_name_the_key() {
        let kv = KeyValues::parse("shape = ball\ncenter = 0 0\nradius = big\n").unwrap();
        let err = parse_domain(&kv).unwrap_err().to_string();
        assert!(err.contains("radius"), "{err}");

        let kv = KeyValues::parse("shape = cube\n").unwrap();
        assert!(matches!(
            parse_domain(&kv),
            Err(ConfigError::UnknownShape(_))
        ));

        let kv =
            KeyValues::parse("shape = ball\ncenter = 0 0\nradius = 1\nfrobnicate = 2\n").unwrap();
        assert!(matches!(parse_domain(&kv), Err(ConfigError::UnknownKey(_))));
    }

    #[test]
    fn domain_text_roundtrip() {
        for d in [
            ConvexDomain::ball([0.25, -1.0], 0.75).unwrap(),
            ConvexDomain::interval(-2.0, 3.0).unwrap(),
            ConvexDomain::polygon(vec![
                [0.0, 0.0],
                [1.1, 0.0],
                [1.5, 0.8],
                [0.7, 1.3],
                [-0.2, 0.6],
            ])
            .unwrap(),
            ConvexDomain::ellipse([0.0, 0.0], [1.5, 0.7]).unwrap(),
        ] {
            let text = domain_to_text(&d);
            let back = parse_domain(&KeyValues::parse(&text).unwrap()).unwrap();
            assert_eq!(back, d);
        }
    }

    #[test]
    fn run_config_resolves_defaults() {
        let dir = std::env::temp_dir().join(format!("inflap-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join("dom.dom"), "shape = interval\nendpoints = -1 1\n").unwrap();
        let kv = KeyValues::parse("domain = dom.dom\neps = 0.125\n").unwrap();
        let rc = RunConfig::from_keyvalues(&kv, &dir).unwrap();
        assert_eq!(rc.f_constant, 1.0);
        assert_eq!(rc.trials, 100_000);
        assert_eq!(rc.checks.len(), KNOWN_CHECKS.len() - 1); // all but blowup
        assert_eq!(rc.start, [0.0, 0.0]);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn run_config_rejects_bad_checks() {
        let dir = std::env::temp_dir().join(format!("inflap-cfg2-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join("dom.dom"), "shape = interval\nendpoints = -1 1\n").unwrap();
        let kv =
            KeyValues::parse("domain = dom.dom\neps = 0.125\nchecks = concavity,bogus\n").unwrap();
        let err = RunConfig::from_keyvalues(&kv, &dir)
            .unwrap_err()
            .to_string();
        assert!(err.contains("bogus"), "{err}");
        std::fs::remove_dir_all(&dir).ok();
    }
}
