//! Flat key=value configuration files and the point/datum mini-syntax.

use anyhow::{anyhow, bail, Context, Result};
use hurwitz_core::covering::MonodromyDatum;
use hurwitz_core::mesh::BranchConfiguration;
use hurwitz_core::C64;
use std::collections::BTreeMap;

/// Parsed key=value file: `#` starts a comment, blank lines are ignored.
#[derive(Debug, Default, Clone)]
pub struct FileConfig {
    pub entries: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn load(path: Option<&std::path::Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        let mut entries = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("config line {} is not key=value: {line:?}", lineno + 1))?;
            entries.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(FileConfig { entries })
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| anyhow!("config key {key} = {raw:?}: {e}")),
        }
    }

    pub fn get_string(&self, key: &str) -> Option<String> {
        self.entries.get(key).cloned()
    }
}

/// `re,im;re,im;...`
pub fn parse_points(spec: &str) -> Result<Vec<C64>> {
    spec.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|pair| {
            let (re, im) = pair
                .split_once(',')
                .ok_or_else(|| anyhow!("point {pair:?} is not re,im"))?;
            Ok(C64::new(re.trim().parse()?, im.trim().parse()?))
        })
        .collect()
}

/// `a b;a b;...` with 1-based sheet labels.
pub fn parse_transpositions(spec: &str) -> Result<Vec<(usize, usize)>> {
    spec.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|pair| {
            let mut it = pair.split_whitespace();
            let a = it
                .next()
                .ok_or_else(|| anyhow!("transposition {pair:?} needs two labels"))?
                .parse()?;
            let b = it
                .next()
                .ok_or_else(|| anyhow!("transposition {pair:?} needs two labels"))?
                .parse()?;
            if it.next().is_some() {
                bail!("transposition {pair:?} has extra tokens");
            }
            Ok((a, b))
        })
        .collect()
}

/// The genus-2 double cover branched at the 6th roots of unity.
pub fn hexagon() -> Result<BranchConfiguration> {
    let datum = MonodromyDatum::genus_zero(2, &[(1, 2); 6])?;
    Ok(BranchConfiguration::regular_polygon(datum)?)
}

/// A genus-0 three-sheeted cover branched at the 4th roots of unity.
pub fn square3() -> Result<BranchConfiguration> {
    let datum = MonodromyDatum::genus_zero(3, &[(1, 2), (1, 2), (1, 3), (1, 3)])?;
    Ok(BranchConfiguration::regular_polygon(datum)?)
}

pub struct SurfaceSpec {
    pub preset: Option<String>,
    pub points: Option<String>,
    pub transpositions: Option<String>,
    pub degree: Option<usize>,
}

impl SurfaceSpec {
    /// Resolves the branch configuration from preset or explicit data,
    /// falling back to config-file keys `preset`, `points`,
    /// `transpositions`, `degree`.
    pub fn resolve(&self, file: &FileConfig) -> Result<BranchConfiguration> {
        let preset = self
            .preset
            .clone()
            .or_else(|| file.get_string("preset"));
        let points = self
            .points
            .clone()
            .or_else(|| file.get_string("points"));
        let transpositions = self
            .transpositions
            .clone()
            .or_else(|| file.get_string("transpositions"));
        let degree = match self.degree {
            Some(d) => Some(d),
            None => file.get("degree")?,
        };
        match (preset.as_deref(), points, transpositions, degree) {
            (Some("hexagon"), None, None, None) => hexagon(),
            (Some("square3"), None, None, None) => square3(),
            (Some(other), ..) => bail!("unknown preset {other:?} (or preset mixed with explicit data)"),
            (None, Some(points), Some(taus), Some(degree)) => {
                let points = parse_points(&points)?;
                let taus = parse_transpositions(&taus)?;
                let datum = MonodromyDatum::genus_zero(degree, &taus)?;
                Ok(BranchConfiguration::new(points, datum)?)
            }
            _ => bail!(
                "specify either --preset or all of --points, --transpositions, --degree"
            ),
        }
    }

    pub fn describe(&self, file: &FileConfig) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (key, value) in [
            ("preset", self.preset.clone().or_else(|| file.get_string("preset"))),
            ("points", self.points.clone().or_else(|| file.get_string("points"))),
            (
                "transpositions",
                self.transpositions
                    .clone()
                    .or_else(|| file.get_string("transpositions")),
            ),
            (
                "degree",
                self.degree
                    .map(|d| d.to_string())
                    .or_else(|| file.get_string("degree")),
            ),
        ] {
            if let Some(v) = value {
                out.push((key.to_string(), v));
            }
        }
        out
    }
}
