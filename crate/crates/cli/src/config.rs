//! Experiment configuration and dataset profiles.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hsi_manifold::datacube::parse_id_list;
use hsi_manifold::ensemble::TrialGrid;
use hsi_manifold::features::{FilterBank, SpectrumScope};
use hsi_manifold::synthetic::SceneSpec;
use serde::{Deserialize, Serialize};

use crate::UsageError;

/// Environment variable naming the directory that holds converted datasets
/// and, optionally, profile overrides.
pub const PROFILE_DIR_ENV: &str = "HSI_PROFILE_DIR";

const BUILTIN_PROFILES: &[(&str, &str)] = &[
    ("indian_pines", include_str!("../profiles/indian_pines.profile")),
    ("pavia_university", include_str!("../profiles/pavia_university.profile")),
    ("synthetic", include_str!("../profiles/synthetic.profile")),
];

/// Where a scene comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneSource {
    Files { cube: PathBuf, mask: PathBuf },
    Generated(SceneSpecDef),
}

/// Serializable mirror of [`SceneSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpecDef {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub classes: usize,
    pub noise: f64,
    pub seed: u64,
}

impl From<SceneSpecDef> for SceneSpec {
    fn from(d: SceneSpecDef) -> Self {
        SceneSpec {
            height: d.height,
            width: d.width,
            bands: d.bands,
            classes: d.classes,
            noise: d.noise,
            seed: d.seed,
        }
    }
}

/// A named dataset with its preprocessing and default clutter threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetProfile {
    pub name: String,
    pub source: SceneSource,
    /// Sensor band ids removed before feature extraction.
    pub drop_bands: Vec<u32>,
    pub tau: f64,
    /// `(row, col, height, width)` window of the scene to keep.
    pub crop: Option<[usize; 4]>,
}

/// Splits `key = value` lines; `#` starts a comment line.
pub fn parse_key_values(text: &str, origin: &Path) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(UsageError(format!("{}:{}: expected `key = value`", origin.display(), n + 1)).into());
        };
        out.push((n + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn parse_num<T: std::str::FromStr>(value: &str, key: &str, origin: &Path, line: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| UsageError(format!("{}:{line}: bad value `{value}` for `{key}`", origin.display())).into())
}

impl DatasetProfile {
    /// Parses a profile. Relative data paths are resolved against `base`.
    pub fn parse(text: &str, origin: &Path, base: &Path) -> Result<Self> {
        let mut name = None;
        let mut cube = None;
        let mut mask = None;
        let mut generator = None;
        let mut spec = SceneSpecDef {
            height: 32,
            width: 32,
            bands: 24,
            classes: 4,
            noise: 0.04,
            seed: 11,
        };
        let mut drop_bands = Vec::new();
        let mut tau = None;
        let mut crop = None;
        for (line, key, value) in parse_key_values(text, origin)? {
            match key.as_str() {
                "name" => name = Some(value),
                "cube" => cube = Some(base.join(value)),
                "mask" => mask = Some(base.join(value)),
                "generator" => generator = Some(value),
                "height" => spec.height = parse_num(&value, &key, origin, line)?,
                "width" => spec.width = parse_num(&value, &key, origin, line)?,
                "bands" => spec.bands = parse_num(&value, &key, origin, line)?,
                "classes" => spec.classes = parse_num(&value, &key, origin, line)?,
                "noise" => spec.noise = parse_num(&value, &key, origin, line)?,
                "scene_seed" => spec.seed = parse_num(&value, &key, origin, line)?,
                "drop_bands" => {
                    drop_bands =
                        parse_id_list(&value).map_err(|e| UsageError(format!("{}:{line}: {e}", origin.display())))?
                }
                "tau" => tau = Some(parse_num::<f64>(&value, &key, origin, line)?),
                "crop" => {
                    let parts: Vec<usize> = value
                        .split(',')
                        .map(|v| parse_num(v.trim(), &key, origin, line))
                        .collect::<Result<_>>()?;
                    let [r, c, h, w] = parts[..] else {
                        bail!(UsageError(format!(
                            "{}:{line}: crop needs `row, col, height, width`",
                            origin.display()
                        )));
                    };
                    crop = Some([r, c, h, w]);
                }
                other => log::debug!("{}:{line}: ignoring unknown key `{other}`", origin.display()),
            }
        }
        let source = match (generator.as_deref(), cube, mask) {
            (Some("field"), None, None) => SceneSource::Generated(spec),
            (Some(g), _, _) if g != "field" => {
                bail!(UsageError(format!("{}: unknown generator `{g}`", origin.display())))
            }
            (None, Some(cube), Some(mask)) => SceneSource::Files { cube, mask },
            _ => bail!(UsageError(format!(
                "{}: a profile needs either `cube` and `mask` or `generator = field`",
                origin.display()
            ))),
        };
        let tau = tau.unwrap_or(0.25);
        check_tau(tau)?;
        Ok(Self {
            name: name.unwrap_or_else(|| {
                origin
                    .file_stem()
                    .map_or("dataset".into(), |s| s.to_string_lossy().into())
            }),
            source,
            drop_bands,
            tau,
            crop,
        })
    }

    /// Resolves `--dataset`: an existing profile file, a profile in
    /// `$HSI_PROFILE_DIR`, or a built-in profile whose data files are looked
    /// up in `$HSI_PROFILE_DIR` (current directory if unset).
    pub fn resolve(spec: &str) -> Result<Self> {
        let as_path = Path::new(spec);
        if as_path.is_file() {
            let text = std::fs::read_to_string(as_path).with_context(|| format!("reading {}", as_path.display()))?;
            let base = as_path.parent().unwrap_or(Path::new("."));
            return Self::parse(&text, as_path, base);
        }
        let data_dir = std::env::var_os(PROFILE_DIR_ENV).map(PathBuf::from);
        if let Some(dir) = &data_dir {
            let candidate = dir.join(format!("{spec}.profile"));
            if candidate.is_file() {
                let text = std::fs::read_to_string(&candidate)?;
                return Self::parse(&text, &candidate, dir);
            }
        }
        if let Some((name, text)) = BUILTIN_PROFILES.iter().find(|(n, _)| *n == spec) {
            let base = data_dir.unwrap_or_else(|| PathBuf::from("."));
            return Self::parse(text, Path::new(&format!("<builtin {name}>")), &base);
        }
        let names: Vec<&str> = BUILTIN_PROFILES.iter().map(|p| p.0).collect();
        bail!(UsageError(format!(
            "unknown dataset `{spec}` (not a file; built-in profiles: {})",
            names.join(", ")
        )))
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        bail!(UsageError(format!("clutter threshold {tau} outside [0, 1]")));
    }
    Ok(())
}

/// Everything `run` needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetProfile,
    pub grid: TrialGrid,
    pub density: f64,
    pub seed: u64,
    pub tau: f64,
    pub window: usize,
    pub out: PathBuf,
    /// Worker threads; `0` uses all cores.
    #[serde(skip)]
    pub threads: usize,
    #[serde(skip)]
    pub resume: bool,
}

/// Optional settings, in the order they are layered.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub dataset: Option<String>,
    pub density: Option<f64>,
    pub seed: Option<u64>,
    pub tau: Option<f64>,
    pub window: Option<usize>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub resume: Option<bool>,
    pub ablation: Option<bool>,
    pub scopes: Option<Vec<SpectrumScope>>,
    pub box_sizes: Option<Vec<usize>>,
    pub neighbors: Option<Vec<usize>>,
    pub dims: Option<Vec<usize>>,
}

fn parse_list<T: std::str::FromStr>(value: &str, what: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| UsageError(format!("bad {what} entry `{s}`")).into())
        })
        .collect()
}

/// Comma-separated scope names; `all` stands for every scope.
pub fn parse_scopes(value: &str) -> Result<Vec<SpectrumScope>> {
    if value.trim().eq_ignore_ascii_case("all") {
        return Ok(SpectrumScope::ALL.to_vec());
    }
    parse_list(value, "scope")
}

pub fn parse_usizes(value: &str) -> Result<Vec<usize>> {
    parse_list(value, "grid")
}

fn parse_bool(value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => bail!(UsageError(format!("bad boolean `{value}`"))),
    }
}

impl Overrides {
    /// Reads a `key = value` experiment file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut o = Overrides::default();
        for (line, key, value) in parse_key_values(&text, path)? {
            let at = |e: anyhow::Error| UsageError(format!("{}:{line}: {e}", path.display()));
            match key.as_str() {
                "dataset" => {
                    let rel = base.join(&value);
                    o.dataset = Some(if rel.is_file() {
                        rel.to_string_lossy().into_owned()
                    } else {
                        value
                    });
                }
                "density" => o.density = Some(parse_num(&value, &key, path, line)?),
                "seed" => o.seed = Some(parse_num(&value, &key, path, line)?),
                "tau" => o.tau = Some(parse_num(&value, &key, path, line)?),
                "window" => o.window = Some(parse_num(&value, &key, path, line)?),
                "out" => o.out = Some(base.join(value)),
                "threads" => o.threads = Some(parse_num(&value, &key, path, line)?),
                "resume" => o.resume = Some(parse_bool(&value).map_err(at)?),
                "ablation" => o.ablation = Some(parse_bool(&value).map_err(at)?),
                "scopes" => o.scopes = Some(parse_scopes(&value).map_err(at)?),
                "box_sizes" => o.box_sizes = Some(parse_usizes(&value).map_err(at)?),
                "neighbors" => o.neighbors = Some(parse_usizes(&value).map_err(at)?),
                "dims" => o.dims = Some(parse_usizes(&value).map_err(at)?),
                other => log::warn!("{}:{line}: ignoring unknown key `{other}`", path.display()),
            }
        }
        Ok(o)
    }

    /// `other` wins wherever it is set.
    pub fn layer(self, other: Overrides) -> Overrides {
        Overrides {
            dataset: other.dataset.or(self.dataset),
            density: other.density.or(self.density),
            seed: other.seed.or(self.seed),
            tau: other.tau.or(self.tau),
            window: other.window.or(self.window),
            out: other.out.or(self.out),
            threads: other.threads.or(self.threads),
            resume: other.resume.or(self.resume),
            ablation: other.ablation.or(self.ablation),
            scopes: other.scopes.or(self.scopes),
            box_sizes: other.box_sizes.or(self.box_sizes),
            neighbors: other.neighbors.or(self.neighbors),
            dims: other.dims.or(self.dims),
        }
    }

    pub fn into_config(self) -> Result<ExperimentConfig> {
        let Some(dataset) = self.dataset else {
            bail!(UsageError(
                "no dataset given (use --dataset or `dataset =` in --config)".into()
            ));
        };
        let dataset = DatasetProfile::resolve(&dataset)?;
        let mut grid = if self.ablation.unwrap_or(false) {
            TrialGrid::ablation()
        } else {
            TrialGrid::standard()
        };
        if let Some(v) = self.scopes {
            grid.scopes = v;
        }
        if let Some(v) = self.box_sizes {
            grid.box_sizes = v;
        }
        if let Some(v) = self.neighbors {
            grid.neighbors = v;
        }
        if let Some(v) = self.dims {
            grid.dims = v;
        }
        let config = ExperimentConfig {
            tau: self.tau.unwrap_or(dataset.tau),
            dataset,
            grid,
            density: self.density.unwrap_or(0.10),
            seed: self.seed.unwrap_or(0),
            window: self.window.unwrap_or(51),
            out: self.out.unwrap_or_else(|| PathBuf::from("hsi-run")),
            threads: self.threads.unwrap_or(0),
            resume: self.resume.unwrap_or(false),
        };
        config.validate()?;
        Ok(config)
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        check_tau(self.tau)?;
        if !(self.density > 0.0 && self.density <= 1.0) {
            bail!(UsageError(format!("density {} outside (0, 1]", self.density)));
        }
        if self.window == 0 || self.window % 2 == 0 {
            bail!(UsageError(format!("window must be odd, got {}", self.window)));
        }
        let g = &self.grid;
        if g.is_empty() {
            bail!(UsageError("every grid list must be nonempty".into()));
        }
        if let Some(p) = g.box_sizes.iter().find(|&&p| p == 0 || p % 2 == 0) {
            bail!(UsageError(format!("box size must be odd, got {p}")));
        }
        if g.neighbors.contains(&0) || g.dims.contains(&0) {
            bail!(UsageError("k and d must be at least 1".into()));
        }
        if g.bank == FilterBank::IdentityOnly && g.box_sizes.iter().any(|&p| p != 1) {
            log::warn!("identity-only features with spatial smoothing (p > 1)");
        }
        Ok(())
    }
}
