//! Run configuration: built-in defaults, then a flat `key = value` file,
//! then command-line flags.

use std::collections::BTreeMap;
use std::path::Path;

use hexposome::geom::Point;
use hexposome::hexgrid::{GridFingerprint, GridSpec};

use crate::UsageError;

pub const KEYS: [&str; 9] = [
    "res",
    "base_edge",
    "rotation_sign",
    "origin_x",
    "origin_y",
    "chunk_width",
    "halo",
    "min_coverage",
    "threads",
];

/// Values from a config file, checked against [`KEYS`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    /// Blank lines and `#` comments are skipped; a key may appear once.
    pub fn parse(text: &str) -> Result<Self, UsageError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: String| UsageError(format!("config line {}: {m}", i + 1));
            let (k, v) = line.split_once('=').ok_or_else(|| err(format!("expected key=value, got {line:?}")))?;
            let (k, v) = (k.trim().replace('-', "_"), v.trim());
            if !KEYS.contains(&k.as_str()) {
                return Err(err(format!("unknown key {k:?} (known: {})", KEYS.join(", "))));
            }
            if values.insert(k.clone(), v.to_string()).is_some() {
                return Err(err(format!("duplicate key {k:?}")));
            }
        }
        Ok(Self { values })
    }

    pub fn read(path: &Path) -> Result<Self, UsageError> {
        let text = std::fs::read_to_string(path).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, UsageError> {
        self.values
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| UsageError(format!("config key {key}: cannot parse {v:?}")))
            })
            .transpose()
    }
}

/// Settings given on the command line; `None` defers to the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub res: Option<u8>,
    pub base_edge: Option<f64>,
    pub rotation_sign: Option<i8>,
    pub origin: Option<(f64, f64)>,
    pub chunk_width: Option<f64>,
    pub halo: Option<f64>,
    pub min_coverage: Option<f64>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub res: u8,
    pub grid: GridSpec,
    pub chunk_width: Option<f64>,
    pub halo: Option<f64>,
    pub min_coverage: f64,
    /// 0 lets the thread pool pick.
    pub threads: usize,
}

pub const DEFAULT_RES: u8 = 8;

impl RunConfig {
    /// Flags over file over defaults. `env_threads` is the default thread
    /// count when neither sets one.
    pub fn resolve(file: &ConfigFile, flags: &Overrides, env_threads: Option<usize>) -> Result<Self, UsageError> {
        let def = GridSpec::default();
        let res = flags.res.or(file.get("res")?).unwrap_or(DEFAULT_RES);
        let base_edge = flags.base_edge.or(file.get("base_edge")?).unwrap_or(def.base_edge);
        let rotation_sign = flags.rotation_sign.or(file.get("rotation_sign")?).unwrap_or(def.rotation_sign);
        let (ox, oy) = match flags.origin {
            Some(o) => o,
            None => (
                file.get("origin_x")?.unwrap_or(def.origin.x),
                file.get("origin_y")?.unwrap_or(def.origin.y),
            ),
        };
        let grid = GridSpec::new(Point::new(ox, oy), base_edge, rotation_sign, def.max_resolution)
            .map_err(|e| UsageError(format!("grid: {e}")))?;
        grid.check_res(res).map_err(|e| UsageError(format!("grid: {e}")))?;
        let chunk_width = flags.chunk_width.or(file.get("chunk_width")?);
        if let Some(w) = chunk_width {
            if !(w > 0.0 && w.is_finite()) {
                return Err(UsageError(format!("chunk_width must be positive, got {w}")));
            }
        }
        let halo = flags.halo.or(file.get("halo")?);
        let min_coverage = flags
            .min_coverage
            .or(file.get("min_coverage")?)
            .unwrap_or(hexposome::convert::DEFAULT_MIN_COVERAGE);
        let threads = flags.threads.or(file.get("threads")?).or(env_threads).unwrap_or(0);
        Ok(Self {
            res,
            grid,
            chunk_width,
            halo,
            min_coverage,
            threads,
        })
    }

    pub fn fingerprint(&self) -> GridFingerprint {
        self.grid.fingerprint(self.res)
    }
}

/// `HEXPOSOME_THREADS`, when set.
pub fn env_threads() -> Result<Option<usize>, UsageError> {
    match std::env::var("HEXPOSOME_THREADS") {
        Ok(v) if v.trim().is_empty() => Ok(None),
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| UsageError(format!("HEXPOSOME_THREADS must be a non-negative integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}
