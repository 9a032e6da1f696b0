//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hsi_manifold::classify::accuracy_report;
use hsi_manifold::datacube::{
    default_classes, format_label_grid, load_cube, load_label_mask, parse_label_grid, remove_bands, write_cube,
    HsiCube, Label, LabelMask, ReferenceSet,
};
use hsi_manifold::ensemble::{clutter_split, consensus, entropy, enumerate_trials, run_trials, tally, TrialConfig};
use hsi_manifold::features::{FilterBank, SpectrumScope};
use hsi_manifold::synthetic::field_scene;
use hsi_manifold::{sample_reference, AccuracyReport, EnsembleTally, LabelMap};
use serde::{Deserialize, Serialize};

use crate::config::{DatasetProfile, ExperimentConfig, SceneSource};
use crate::render::{render_classmap, render_grayscale, RenderPalette};
use crate::UsageError;

pub const TALLY_FILE: &str = "tally.bin";
pub const ENTROPY_FILE: &str = "entropy.pgm";
pub const CONSENSUS_FILE: &str = "consensus.ppm";
pub const CLUTTER_FILE: &str = "consensus_clutter.ppm";
pub const REPORT_FILE: &str = "report.json";
pub const EXPERIMENT_FILE: &str = "experiment.json";
pub const REFERENCES_FILE: &str = "references.csv";

pub fn trial_file(id: usize) -> String {
    format!("trial_{id}.labels")
}

/// Loads (or generates) a profile's scene and applies band removal and
/// cropping.
pub fn load_scene(profile: &DatasetProfile) -> Result<(HsiCube, LabelMask)> {
    let (cube, mask) = match &profile.source {
        SceneSource::Files { cube, mask } => {
            if !cube.is_file() {
                bail!(hsi_manifold::Error::InvalidData(format!(
                    "dataset `{}` unavailable: {} not found (set {} to the directory holding the converted files)",
                    profile.name,
                    cube.display(),
                    crate::config::PROFILE_DIR_ENV
                )));
            }
            let c = load_cube(cube)?;
            let m = load_label_mask(mask, &c)?;
            (c, m)
        }
        SceneSource::Generated(spec) => field_scene(&(*spec).into())?,
    };
    let cube = if profile.drop_bands.is_empty() {
        cube
    } else {
        remove_bands(&cube, &profile.drop_bands)?
    };
    match profile.crop {
        None => Ok((cube, mask)),
        Some(window) => crop(&cube, &mask, window),
    }
}

fn crop(cube: &HsiCube, mask: &LabelMask, [r0, c0, h, w]: [usize; 4]) -> Result<(HsiCube, LabelMask)> {
    if h == 0 || w == 0 || r0 + h > cube.height() || c0 + w > cube.width() {
        bail!(UsageError(format!(
            "crop {h}x{w} at ({r0}, {c0}) exceeds the {}x{} scene",
            cube.height(),
            cube.width()
        )));
    }
    let pick = |p: usize| (r0 + p / w) * cube.width() + c0 + p % w;
    let mut samples = Vec::with_capacity(h * w * cube.bands());
    for b in 0..cube.bands() {
        let band = cube.band(b);
        samples.extend((0..h * w).map(|p| band[pick(p)]));
    }
    let labels: Vec<Label> = (0..h * w).map(|p| mask.labels()[pick(p)]).collect();
    let cube = HsiCube::new(h, w, cube.band_ids().to_vec(), samples)?;
    let cropped = LabelMask::new(h, w, labels)?;
    let classes = mask.classes()[..cropped.num_classes()].to_vec();
    Ok((cube, cropped.with_classes(classes)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    /// Sample standard deviation (`n − 1` denominator; 0 for one value).
    pub fn of(values: &[f64]) -> Stats {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Stats {
            mean,
            std: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial_id: usize,
    pub scope: SpectrumScope,
    pub box_size: usize,
    pub k: usize,
    pub d: usize,
    pub bank: FilterBank,
    pub oa: f64,
    pub aa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub dataset: String,
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub classes: usize,
    pub density: f64,
    pub seed: u64,
    pub window: usize,
    pub tau: f64,
    pub references: usize,
    pub trials: usize,
    pub instance_oa: Stats,
    pub instance_aa: Stats,
    pub ensemble_oa: f64,
    pub ensemble_aa: f64,
    pub clutter_pixels: usize,
    pub clutter_fraction: f64,
    pub ensemble: AccuracyReport,
    pub per_trial: Vec<TrialSummary>,
}

/// Run metadata needed to resume a run or re-render its images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub config: ExperimentConfig,
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub classes: usize,
    pub palette: RenderPalette,
    pub references: Vec<(usize, Label)>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming {}", tmp.display()))
}

pub fn write_references(refs: &ReferenceSet, path: &Path) -> Result<()> {
    let mut text = String::from("pixel,label\n");
    for (p, l) in refs.entries() {
        text.push_str(&format!("{p},{l}\n"));
    }
    write_atomic(path, text.as_bytes())
}

pub fn read_references(path: &Path) -> Result<ReferenceSet> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("pixel") {
            continue;
        }
        let parsed = line
            .split_once(',')
            .and_then(|(p, l)| Some((p.trim().parse::<usize>().ok()?, l.trim().parse::<Label>().ok()?)));
        match parsed {
            Some(e) => entries.push(e),
            None => bail!(hsi_manifold::Error::InvalidData(format!(
                "{}:{}: expected `pixel,label`",
                path.display(),
                n + 1
            ))),
        }
    }
    Ok(ReferenceSet::from_entries(entries, 0.0, 0)?)
}

fn load_trial_map(path: &Path, height: usize, width: usize, classes: usize) -> Result<LabelMap> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let labels = parse_label_grid(&text, height, width, path)?;
    Ok(LabelMap::new(height, width, classes, labels)?)
}

/// Everything `run` leaves behind, also returned to callers.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: ExperimentReport,
    pub out: PathBuf,
}

pub fn cmd_run(config: &ExperimentConfig) -> Result<RunOutcome> {
    config.validate()?;
    let (cube, mask) = load_scene(&config.dataset)?;
    let classes = mask.num_classes();
    let refs = sample_reference(&mask, config.density, config.seed)?;
    let trials = enumerate_trials(&config.grid)?;
    log::info!(
        "{}: {}x{}x{}, {classes} classes, {} reference pixels, {} trials",
        config.dataset.name,
        cube.height(),
        cube.width(),
        cube.bands(),
        refs.len(),
        trials.len()
    );

    let out = &config.out;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let record = ExperimentRecord {
        config: config.clone(),
        height: cube.height(),
        width: cube.width(),
        bands: cube.bands(),
        classes,
        palette: RenderPalette::from_classes(mask.classes()),
        references: refs.entries().to_vec(),
    };
    let record_path = out.join(EXPERIMENT_FILE);
    let record_json = serde_json::to_string_pretty(&record)?;
    if config.resume && record_path.is_file() {
        let previous =
            fs::read_to_string(&record_path).with_context(|| format!("reading {}", record_path.display()))?;
        if previous != record_json {
            bail!(UsageError(format!(
                "{} belongs to a different experiment; refusing to resume",
                out.display()
            )));
        }
    }
    write_atomic(&record_path, record_json.as_bytes())?;
    write_references(&refs, &out.join(REFERENCES_FILE))?;

    let mut maps: Vec<Option<LabelMap>> = vec![None; trials.len()];
    if config.resume {
        for t in &trials {
            let path = out.join(trial_file(t.trial_id));
            if path.is_file() {
                maps[t.trial_id] = Some(load_trial_map(&path, cube.height(), cube.width(), classes)?);
            }
        }
        let done = maps.iter().filter(|m| m.is_some()).count();
        if done > 0 {
            log::info!("resuming: {done} of {} trials already on disk", trials.len());
        }
    }
    let pending: Vec<TrialConfig> = trials.iter().copied().filter(|t| maps[t.trial_id].is_none()).collect();

    let width = cube.width();
    let persist = |t: &TrialConfig, map: &LabelMap| -> hsi_manifold::Result<()> {
        let path = out.join(trial_file(t.trial_id));
        write_atomic(&path, format_label_grid(map.labels(), width).as_bytes())
            .map_err(|e| hsi_manifold::Error::InvalidData(format!("{e:#}")))?;
        log::info!("trial {} done", t.trial_id);
        Ok(())
    };
    let work = || run_trials(&cube, &pending, &refs, classes, config.window, config.seed, persist);
    let result = if config.threads == 0 {
        work()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .context("building the worker pool")?
            .install(work)
    };
    let fresh = result.map_err(|(t, e)| {
        anyhow::Error::new(e).context(format!(
            "trial {} (scope {}, p {}, k {}, d {}) failed",
            t.trial_id,
            t.scope.name(),
            t.box_size,
            t.k,
            t.d
        ))
    })?;
    for (t, map) in pending.iter().zip(fresh) {
        maps[t.trial_id] = Some(map);
    }
    let maps: Vec<LabelMap> = maps.into_iter().map(|m| m.expect("every trial present")).collect();

    let tally = tally(&maps)?;
    let mut bin = Vec::new();
    tally.write_bin(&mut bin)?;
    write_atomic(&out.join(TALLY_FILE), &bin)?;
    let (consensus_map, clutter) = write_images(&tally, &refs, config.tau, &record.palette, out)?;

    let mut per_trial = Vec::with_capacity(trials.len());
    for (t, map) in trials.iter().zip(&maps) {
        let r = accuracy_report(map, &mask, &refs)?;
        per_trial.push(TrialSummary {
            trial_id: t.trial_id,
            scope: t.scope,
            box_size: t.box_size,
            k: t.k,
            d: t.d,
            bank: t.bank,
            oa: r.overall,
            aa: r.average,
        });
    }
    let ensemble = accuracy_report(&consensus_map, &mask, &refs)?;
    let oas: Vec<f64> = per_trial.iter().map(|t| t.oa).collect();
    let aas: Vec<f64> = per_trial.iter().map(|t| t.aa).collect();
    let clutter_pixels = clutter.iter().filter(|&&c| c).count();
    let report = ExperimentReport {
        dataset: config.dataset.name.clone(),
        height: cube.height(),
        width: cube.width(),
        bands: cube.bands(),
        classes,
        density: config.density,
        seed: config.seed,
        window: config.window,
        tau: config.tau,
        references: refs.len(),
        trials: trials.len(),
        instance_oa: Stats::of(&oas),
        instance_aa: Stats::of(&aas),
        ensemble_oa: ensemble.overall,
        ensemble_aa: ensemble.average,
        clutter_pixels,
        clutter_fraction: clutter_pixels as f64 / clutter.len() as f64,
        ensemble,
        per_trial,
    };
    write_atomic(
        &out.join(REPORT_FILE),
        serde_json::to_string_pretty(&report)?.as_bytes(),
    )?;
    log::info!(
        "ensemble OA {:.2} AA {:.2}; instance OA {:.2} +- {:.2} (max {:.2})",
        report.ensemble_oa,
        report.ensemble_aa,
        report.instance_oa.mean,
        report.instance_oa.std,
        report.instance_oa.max
    );
    Ok(RunOutcome {
        report,
        out: out.clone(),
    })
}

/// Entropy, consensus and clutter-masked consensus images from a tally.
fn write_images(
    tally: &EnsembleTally,
    refs: &ReferenceSet,
    tau: f64,
    palette: &RenderPalette,
    out: &Path,
) -> Result<(LabelMap, Vec<bool>)> {
    let h = entropy(tally)?;
    let cons = consensus(tally)?;
    let split = clutter_split(&h, &cons, tau, refs)?;
    write_atomic(&out.join(ENTROPY_FILE), &render_grayscale(&h)?)?;
    write_atomic(&out.join(CONSENSUS_FILE), &render_classmap(&cons, None, palette)?)?;
    write_atomic(
        &out.join(CLUTTER_FILE),
        &render_classmap(&split.consensus, Some(&split.clutter), palette)?,
    )?;
    Ok((cons, split.clutter))
}

/// Re-renders the images of a finished run from its tally.
pub fn cmd_render(run_dir: &Path, tau: Option<f64>, out: Option<&Path>) -> Result<()> {
    let record_path = run_dir.join(EXPERIMENT_FILE);
    let record: ExperimentRecord = serde_json::from_str(
        &fs::read_to_string(&record_path).with_context(|| format!("reading {}", record_path.display()))?,
    )
    .with_context(|| format!("parsing {}", record_path.display()))?;
    let tally_path = run_dir.join(TALLY_FILE);
    let file = fs::File::open(&tally_path).with_context(|| format!("opening {}", tally_path.display()))?;
    let tally = EnsembleTally::read_bin(
        std::io::BufReader::new(file),
        record.height,
        record.width,
        record.classes,
    )?;
    let refs = ReferenceSet::from_entries(record.references.clone(), record.config.density, record.config.seed)?;
    let tau = tau.unwrap_or(record.config.tau);
    if !(0.0..=1.0).contains(&tau) {
        bail!(UsageError(format!("clutter threshold {tau} outside [0, 1]")));
    }
    let out = out.unwrap_or(run_dir);
    fs::create_dir_all(out)?;
    write_images(&tally, &refs, tau, &record.palette, out)?;
    Ok(())
}

/// Infers the grid shape of a label text file.
fn grid_shape(text: &str) -> (usize, usize) {
    let rows: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let width = rows.first().map_or(0, |r| r.split(',').count());
    (rows.len(), width)
}

/// Scores a predicted label grid against a reference mask.
pub fn cmd_evaluate(pred: &Path, truth: &Path, refs: Option<&Path>, out: Option<&Path>) -> Result<AccuracyReport> {
    let truth_text = fs::read_to_string(truth).with_context(|| format!("reading {}", truth.display()))?;
    let (h, w) = grid_shape(&truth_text);
    let mask = LabelMask::new(h, w, parse_label_grid(&truth_text, h, w, truth)?)?;
    let pred_text = fs::read_to_string(pred).with_context(|| format!("reading {}", pred.display()))?;
    let labels = parse_label_grid(&pred_text, h, w, pred)?;
    let map = LabelMap::new(h, w, mask.num_classes(), labels)?;
    let refs = match refs {
        Some(p) => read_references(p)?,
        None => ReferenceSet::from_entries(Vec::new(), 0.0, 0)?,
    };
    let report = accuracy_report(&map, &mask, &refs)?;
    let json = serde_json::to_string_pretty(&report)?;
    match out {
        Some(p) => write_atomic(p, json.as_bytes())?,
        None => println!("{json}"),
    }
    Ok(report)
}

fn split_values(line: &str) -> impl Iterator<Item = &str> {
    line.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
}

/// Converts a text dump with one pixel spectrum per line (row-major pixel
/// order, comma or whitespace separated) into a cube.
pub fn convert_spectra(text: &str, origin: &Path, height: usize, width: usize) -> Result<HsiCube> {
    let mut bands = None;
    let mut by_pixel: Vec<f32> = Vec::new();
    let mut pixels = 0;
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let before = by_pixel.len();
        for v in split_values(line) {
            let x: f32 = v.parse().map_err(|_| {
                hsi_manifold::Error::InvalidData(format!("{}:{}: not a number: `{v}`", origin.display(), n + 1))
            })?;
            by_pixel.push(x);
        }
        let count = by_pixel.len() - before;
        match bands {
            None => bands = Some(count),
            Some(b) if b != count => bail!(hsi_manifold::Error::InvalidData(format!(
                "{}:{}: ragged row with {count} values, expected {b}",
                origin.display(),
                n + 1
            ))),
            _ => {}
        }
        pixels += 1;
    }
    let bands = bands.unwrap_or(0);
    if pixels != height * width {
        bail!(hsi_manifold::Error::DimensionMismatch(format!(
            "{}: {pixels} pixel rows for a {height}x{width} scene",
            origin.display()
        )));
    }
    let mut samples = vec![0.0f32; pixels * bands];
    for p in 0..pixels {
        for b in 0..bands {
            samples[b * pixels + p] = by_pixel[p * bands + b];
        }
    }
    Ok(HsiCube::from_bsq(height, width, bands, samples)?)
}

/// Converts a whitespace or comma separated integer grid into a mask.
pub fn convert_mask(text: &str, origin: &Path) -> Result<LabelMask> {
    let mut rows: Vec<Vec<Label>> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<Label> = split_values(line)
            .map(|v| {
                v.parse::<Label>().map_err(|_| {
                    hsi_manifold::Error::InvalidData(format!("{}:{}: bad label `{v}`", origin.display(), n + 1))
                })
            })
            .collect::<std::result::Result<_, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                bail!(hsi_manifold::Error::InvalidData(format!(
                    "{}:{}: ragged row with {} values, expected {}",
                    origin.display(),
                    n + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    let (h, w) = (rows.len(), rows.first().map_or(0, Vec::len));
    Ok(LabelMask::new(h, w, rows.concat())?)
}

pub struct ConvertArgs<'a> {
    pub spectra: Option<&'a Path>,
    pub height: Option<usize>,
    pub width: Option<usize>,
    pub band_ids: Option<Vec<u32>>,
    pub cube_out: Option<&'a Path>,
    pub mask: Option<&'a Path>,
    pub mask_out: Option<&'a Path>,
}

pub fn cmd_convert(args: &ConvertArgs<'_>) -> Result<()> {
    if args.spectra.is_none() && args.mask.is_none() {
        bail!(UsageError("convert needs --spectra and/or --mask".into()));
    }
    let mut shape = None;
    if let Some(mask_path) = args.mask {
        let Some(out) = args.mask_out else {
            bail!(UsageError("--mask needs --mask-out".into()));
        };
        let text = fs::read_to_string(mask_path).with_context(|| format!("reading {}", mask_path.display()))?;
        let mask = convert_mask(&text, mask_path)?;
        shape = Some((mask.height(), mask.width()));
        write_atomic(out, format_label_grid(mask.labels(), mask.width()).as_bytes())?;
    }
    if let Some(spectra) = args.spectra {
        let Some(out) = args.cube_out else {
            bail!(UsageError("--spectra needs --cube-out".into()));
        };
        let (h, w) = match (args.height, args.width, shape) {
            (Some(h), Some(w), _) => (h, w),
            (None, None, Some(s)) => s,
            _ => bail!(UsageError(
                "give --height and --width (or a --mask to take them from)".into()
            )),
        };
        let text = fs::read_to_string(spectra).with_context(|| format!("reading {}", spectra.display()))?;
        let mut cube = convert_spectra(&text, spectra, h, w)?;
        if let Some(ids) = &args.band_ids {
            cube = HsiCube::new(h, w, ids.clone(), cube.samples().to_vec())?;
        }
        let data_name = out
            .file_stem()
            .map(|s| format!("{}.raw", s.to_string_lossy()))
            .unwrap_or_else(|| "cube.raw".into());
        write_cube(&cube, out, &data_name)?;
    }
    Ok(())
}

/// Writes a generated field scene as cube, mask and a profile naming them.
pub fn cmd_synth(spec: &hsi_manifold::synthetic::SceneSpec, dir: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let (cube, mask) = field_scene(spec)?;
    write_cube(&cube, dir.join(format!("{name}.hdr")), &format!("{name}.raw"))?;
    write_atomic(
        &dir.join(format!("{name}.labels")),
        format_label_grid(mask.labels(), mask.width()).as_bytes(),
    )?;
    let mut classes = String::new();
    for (i, c) in default_classes(mask.num_classes()).iter().enumerate() {
        classes.push_str(&format!(
            "{}, {}, {}, {}, {}\n",
            i + 1,
            c.name,
            c.rgb[0],
            c.rgb[1],
            c.rgb[2]
        ));
    }
    write_atomic(&dir.join(format!("{name}.labels.classes")), classes.as_bytes())?;
    let profile = dir.join(format!("{name}.profile"));
    write_atomic(
        &profile,
        format!("name = {name}\ncube = {name}.hdr\nmask = {name}.labels\ntau = 0.25\n").as_bytes(),
    )?;
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_of_values() {
        let s = Stats::of(&[1.0, 2.0, 3.0]);
        assert_eq!((s.mean, s.std, s.min, s.max), (2.0, 1.0, 1.0, 3.0));
        assert_eq!(Stats::of(&[4.0]).std, 0.0);
    }

    #[test]
    fn spectra_conversion_reports_ragged_line() {
        let err = convert_spectra("1 2 3\n4 5 6\n7 8\n9 1 2\n", Path::new("dump.txt"), 2, 2).unwrap_err();
        assert!(format!("{err:#}").contains("dump.txt:3"), "{err:#}");
        let cube = convert_spectra("1,2\n3,4\n5,6\n7,8\n", Path::new("d"), 2, 2).unwrap();
        assert_eq!(cube.band(0), &[1.0, 3.0, 5.0, 7.0]);
    }

    #[test]
    fn mask_conversion() {
        let m = convert_mask("0 1\n2 2\n", Path::new("m")).unwrap();
        assert_eq!(m.num_classes(), 2);
        let err = convert_mask("0 1\n2\n", Path::new("m")).unwrap_err();
        assert!(format!("{err:#}").contains("m:2"));
    }
}
