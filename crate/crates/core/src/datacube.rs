//! Hyperspectral cubes, reference label masks and training-sample draws.
//!
//! Cubes are stored as a small `key = value` text header next to a raw
//! little-endian `f32` payload in band-sequential order (each band is a
//! row-major `height × width` plane). Label masks are comma-separated
//! integer grids where `0` marks unlabeled pixels.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class label. `0` is reserved for unlabeled / clutter.
pub type Label = u16;

/// A `height × width × bands` block of radiance samples.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    height: usize,
    width: usize,
    band_ids: Vec<u32>,
    samples: Vec<f32>,
}

impl HsiCube {
    /// Builds a cube from band-sequential samples. `band_ids` are the
    /// original sensor indices of the stored bands.
    pub fn new(height: usize, width: usize, band_ids: Vec<u32>, samples: Vec<f32>) -> Result<Self> {
        let bands = band_ids.len();
        if height == 0 || width == 0 || bands == 0 {
            return Err(Error::InvalidData(format!("empty cube ({height}x{width}x{bands})")));
        }
        if samples.len() != height * width * bands {
            return Err(Error::DimensionMismatch(format!(
                "{} samples for a {height}x{width}x{bands} cube",
                samples.len()
            )));
        }
        if band_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidData("band ids must be strictly increasing".into()));
        }
        let plane = height * width;
        if let Some(pos) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                band: band_ids[pos / plane] as usize,
                pixel: pos % plane,
            });
        }
        Ok(Self {
            height,
            width,
            band_ids,
            samples,
        })
    }

    /// Convenience constructor numbering bands `1..=bands`.
    pub fn from_bsq(height: usize, width: usize, bands: usize, samples: Vec<f32>) -> Result<Self> {
        Self::new(height, width, (1..=bands as u32).collect(), samples)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.band_ids.len()
    }

    /// Number of pixels, `height × width`.
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn band_ids(&self) -> &[u32] {
        &self.band_ids
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    /// The row-major plane of band position `b`.
    pub fn band(&self, b: usize) -> &[f32] {
        let plane = self.pixels();
        &self.samples[b * plane..(b + 1) * plane]
    }

    pub fn sample(&self, band: usize, pixel: usize) -> f32 {
        self.samples[band * self.pixels() + pixel]
    }

    /// Copies the spectrum of `pixel` at the given band positions into `out`.
    pub fn spectrum_into(&self, pixel: usize, positions: &[usize], out: &mut [f64]) {
        let plane = self.pixels();
        for (o, &b) in out.iter_mut().zip(positions) {
            *o = self.samples[b * plane + pixel] as f64;
        }
    }
}

/// Parsed cube header.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeHeader {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub data: PathBuf,
    pub band_ids: Option<Vec<u32>>,
}

impl CubeHeader {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut height = None;
        let mut width = None;
        let mut bands = None;
        let mut dtype = None;
        let mut interleave = None;
        let mut data = None;
        let mut band_ids = None;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::parse(path, n + 1, "expected `key = value`"));
            };
            let (key, value) = (key.trim(), value.trim());
            let int = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| Error::parse(path, n + 1, format!("`{key}` is not an integer")))
            };
            match key {
                "height" => height = Some(int(value)?),
                "width" => width = Some(int(value)?),
                "bands" => bands = Some(int(value)?),
                "dtype" => dtype = Some(value.to_string()),
                "interleave" => interleave = Some(value.to_string()),
                "data" => data = Some(PathBuf::from(value)),
                "band_ids" => band_ids = Some(parse_id_list(value).map_err(|e| Error::parse(path, n + 1, e))?),
                _ => {}
            }
        }
        let missing = |k: &str| Error::parse(path, 0, format!("missing required key `{k}`"));
        let header = CubeHeader {
            height: height.ok_or_else(|| missing("height"))?,
            width: width.ok_or_else(|| missing("width"))?,
            bands: bands.ok_or_else(|| missing("bands"))?,
            data: data.ok_or_else(|| missing("data"))?,
            band_ids,
        };
        match dtype.as_deref() {
            Some("f32le") => {}
            Some(other) => return Err(Error::parse(path, 0, format!("unsupported dtype `{other}`"))),
            None => return Err(missing("dtype")),
        }
        match interleave.as_deref() {
            Some("bsq") => {}
            Some(other) => return Err(Error::parse(path, 0, format!("unsupported interleave `{other}`"))),
            None => return Err(missing("interleave")),
        }
        if let Some(ids) = &header.band_ids {
            if ids.len() != header.bands {
                return Err(Error::parse(
                    path,
                    0,
                    format!("{} band ids for {} bands", ids.len(), header.bands),
                ));
            }
        }
        Ok(header)
    }

    pub fn render(&self) -> String {
        let mut s = format!(
            "height = {}\nwidth = {}\nbands = {}\ndtype = f32le\ninterleave = bsq\ndata = {}\n",
            self.height,
            self.width,
            self.bands,
            self.data.display()
        );
        if let Some(ids) = &self.band_ids {
            let list: Vec<String> = ids.iter().map(|i| i.to_string()).collect();
            s.push_str(&format!("band_ids = {}\n", list.join(",")));
        }
        s
    }
}

/// Parses `1,2,5-9` style id lists (inclusive ranges).
pub fn parse_id_list(text: &str) -> std::result::Result<Vec<u32>, String> {
    let mut out = Vec::new();
    for item in text.split(|c: char| c == ',' || c.is_whitespace()) {
        let item = item.trim();
        if item.is_empty() {
            continue;
        }
        if let Some((a, b)) = item.split_once('-') {
            let a: u32 = a.trim().parse().map_err(|_| format!("bad range `{item}`"))?;
            let b: u32 = b.trim().parse().map_err(|_| format!("bad range `{item}`"))?;
            if a > b {
                return Err(format!("descending range `{item}`"));
            }
            out.extend(a..=b);
        } else {
            out.push(item.parse().map_err(|_| format!("bad id `{item}`"))?);
        }
    }
    Ok(out)
}

/// Loads a cube from its header file. The payload path is resolved
/// relative to the header's directory.
pub fn load_cube(header_path: impl AsRef<Path>) -> Result<HsiCube> {
    let header_path = header_path.as_ref();
    let text = fs::read_to_string(header_path).map_err(|e| Error::io(header_path, e))?;
    let header = CubeHeader::parse(&text, header_path)?;
    let data_path = header_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&header.data);
    let bytes = fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
    let expected = header.height * header.width * header.bands;
    if bytes.len() != expected * 4 {
        return Err(Error::DimensionMismatch(format!(
            "{}: payload holds {} bytes, header implies {} ({}x{}x{} f32)",
            data_path.display(),
            bytes.len(),
            expected * 4,
            header.height,
            header.width,
            header.bands
        )));
    }
    let samples: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let band_ids = header.band_ids.unwrap_or_else(|| (1..=header.bands as u32).collect());
    HsiCube::new(header.height, header.width, band_ids, samples)
}

/// Writes `cube` as a header at `header_path` plus a payload named `data_name`
/// in the same directory.
pub fn write_cube(cube: &HsiCube, header_path: impl AsRef<Path>, data_name: &str) -> Result<()> {
    let header_path = header_path.as_ref();
    let dir = header_path.parent().unwrap_or_else(|| Path::new("."));
    let default_ids = cube.band_ids.iter().copied().eq(1..=cube.bands() as u32);
    let header = CubeHeader {
        height: cube.height,
        width: cube.width,
        bands: cube.bands(),
        data: PathBuf::from(data_name),
        band_ids: (!default_ids).then(|| cube.band_ids.clone()),
    };
    let mut bytes = Vec::with_capacity(cube.samples.len() * 4);
    for v in &cube.samples {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let data_path = dir.join(data_name);
    fs::write(&data_path, bytes).map_err(|e| Error::io(&data_path, e))?;
    fs::write(header_path, header.render()).map_err(|e| Error::io(header_path, e))
}

/// Drops the bands whose sensor ids are listed in `drop`.
pub fn remove_bands(cube: &HsiCube, drop: &[u32]) -> Result<HsiCube> {
    let drop: BTreeSet<u32> = drop.iter().copied().collect();
    if let Some(unknown) = drop.iter().find(|id| !cube.band_ids.contains(id)) {
        return Err(Error::InvalidParameter(format!("unknown band id {unknown}")));
    }
    if drop.len() == cube.bands() {
        return Err(Error::InvalidParameter(
            "dropping every band leaves an empty cube".into(),
        ));
    }
    let plane = cube.pixels();
    let mut band_ids = Vec::with_capacity(cube.bands() - drop.len());
    let mut samples = Vec::with_capacity(plane * (cube.bands() - drop.len()));
    for (b, id) in cube.band_ids.iter().enumerate() {
        if !drop.contains(id) {
            band_ids.push(*id);
            samples.extend_from_slice(cube.band(b));
        }
    }
    Ok(HsiCube {
        height: cube.height,
        width: cube.width,
        band_ids,
        samples,
    })
}

/// Per-class display metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassInfo {
    pub name: String,
    pub rgb: [u8; 3],
}

/// Reference labeling of a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMask {
    height: usize,
    width: usize,
    labels: Vec<Label>,
    classes: Vec<ClassInfo>,
}

impl LabelMask {
    /// Validates `labels` and derives the class count as the largest label.
    /// Every class `1..=L` must occur at least once.
    pub fn new(height: usize, width: usize, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for a {height}x{width} mask",
                labels.len()
            )));
        }
        let num_classes = labels.iter().copied().max().unwrap_or(0) as usize;
        if num_classes == 0 {
            return Err(Error::InvalidData("mask has no labeled pixels".into()));
        }
        let mut seen = vec![false; num_classes + 1];
        for &l in &labels {
            seen[l as usize] = true;
        }
        if let Some(missing) = (1..=num_classes).find(|&c| !seen[c]) {
            return Err(Error::InvalidData(format!(
                "class {missing} does not occur in the mask (L = {num_classes})"
            )));
        }
        let classes = default_classes(num_classes);
        Ok(Self {
            height,
            width,
            labels,
            classes,
        })
    }

    /// Replaces the default class names and colors.
    pub fn with_classes(mut self, classes: Vec<ClassInfo>) -> Result<Self> {
        if classes.len() != self.num_classes() {
            return Err(Error::DimensionMismatch(format!(
                "{} class entries for {} classes",
                classes.len(),
                self.num_classes()
            )));
        }
        self.classes = classes;
        Ok(self)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    /// Number of labeled classes `L`.
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn classes(&self) -> &[ClassInfo] {
        &self.classes
    }

    /// Fraction of pixels carrying a nonzero label.
    pub fn labeled_fraction(&self) -> f64 {
        let n = self.labels.iter().filter(|&&l| l != 0).count();
        n as f64 / self.labels.len() as f64
    }

    /// Pixel counts per class, indexed `0..L` for classes `1..=L`.
    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_classes()];
        for &l in &self.labels {
            if l != 0 {
                sizes[l as usize - 1] += 1;
            }
        }
        sizes
    }
}

/// Evenly spread hues, deterministic for a given class count.
pub fn default_classes(num_classes: usize) -> Vec<ClassInfo> {
    (0..num_classes)
        .map(|c| {
            let hue = c as f64 / num_classes.max(1) as f64;
            let value = if c % 2 == 0 { 1.0 } else { 0.75 };
            ClassInfo {
                name: format!("class {}", c + 1),
                rgb: hsv_to_rgb(hue, 0.85, value),
            }
        })
        .collect()
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h6 = h * 6.0;
    let sector = h6.floor() as i64 % 6;
    let f = h6 - h6.floor();
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    let (r, g, b) = match sector {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    let to8 = |x: f64| (x * 255.0).round().clamp(0.0, 255.0) as u8;
    [to8(r), to8(g), to8(b)]
}

/// Parses a comma-separated integer grid of exactly `height` rows and
/// `width` columns. Blank lines are skipped.
pub fn parse_label_grid(text: &str, height: usize, width: usize, path: &Path) -> Result<Vec<Label>> {
    let mut labels = Vec::with_capacity(height * width);
    let mut rows = 0;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let before = labels.len();
        for cell in line.split(',') {
            let cell = cell.trim();
            let v: i64 = cell
                .parse()
                .map_err(|_| Error::parse(path, n + 1, format!("not an integer: `{cell}`")))?;
            if v < 0 {
                return Err(Error::parse(path, n + 1, format!("negative label {v}")));
            }
            if v > Label::MAX as i64 {
                return Err(Error::parse(path, n + 1, format!("label {v} out of range")));
            }
            labels.push(v as Label);
        }
        if labels.len() - before != width {
            return Err(Error::DimensionMismatch(format!(
                "{}:{}: {} values, expected {width}",
                path.display(),
                n + 1,
                labels.len() - before
            )));
        }
        rows += 1;
    }
    if rows != height {
        return Err(Error::DimensionMismatch(format!(
            "{}: {rows} rows, expected {height}",
            path.display()
        )));
    }
    Ok(labels)
}

/// Formats labels as a comma-separated grid, one image row per line.
pub fn format_label_grid(labels: &[Label], width: usize) -> String {
    let mut out = String::with_capacity(labels.len() * 3);
    for row in labels.chunks(width) {
        for (i, l) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&l.to_string());
        }
        out.push('\n');
    }
    out
}

/// Loads the label mask at `path` for `cube`. A sidecar `<path>.classes`
/// with `class_id, name, r, g, b` lines is picked up when present.
pub fn load_label_mask(path: impl AsRef<Path>, cube: &HsiCube) -> Result<LabelMask> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let labels = parse_label_grid(&text, cube.height(), cube.width(), path)?;
    let mask = LabelMask::new(cube.height(), cube.width(), labels)?;
    let sidecar = class_sidecar_path(path);
    if sidecar.exists() {
        let classes = load_class_sidecar(&sidecar, mask.num_classes())?;
        mask.with_classes(classes)
    } else {
        Ok(mask)
    }
}

pub fn class_sidecar_path(mask_path: &Path) -> PathBuf {
    let mut s = mask_path.as_os_str().to_owned();
    s.push(".classes");
    PathBuf::from(s)
}

/// Reads `class_id, name, r, g, b` lines. Classes not listed keep their
/// default entry.
pub fn load_class_sidecar(path: &Path, num_classes: usize) -> Result<Vec<ClassInfo>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut classes = default_classes(num_classes);
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(Error::parse(path, n + 1, "expected `class_id, name, r, g, b`"));
        }
        let id: usize = fields[0]
            .parse()
            .map_err(|_| Error::parse(path, n + 1, "bad class id"))?;
        if id == 0 || id > num_classes {
            return Err(Error::parse(
                path,
                n + 1,
                format!("class id {id} outside 1..={num_classes}"),
            ));
        }
        let mut rgb = [0u8; 3];
        for (c, f) in rgb.iter_mut().zip(&fields[2..]) {
            *c = f
                .parse()
                .map_err(|_| Error::parse(path, n + 1, format!("bad color component `{f}`")))?;
        }
        classes[id - 1] = ClassInfo {
            name: fields[1].to_string(),
            rgb,
        };
    }
    Ok(classes)
}

/// Labeled pixels drawn as classifier anchors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSet {
    /// `(pixel index, label)`, sorted by pixel index.
    entries: Vec<(usize, Label)>,
    density: f64,
    seed: u64,
}

impl ReferenceSet {
    /// Builds a set from explicit entries. Indices must be unique and labels
    /// nonzero.
    pub fn from_entries(mut entries: Vec<(usize, Label)>, density: f64, seed: u64) -> Result<Self> {
        entries.sort_unstable();
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidData("duplicate reference pixel".into()));
        }
        if entries.iter().any(|e| e.1 == 0) {
            return Err(Error::InvalidData("reference label 0".into()));
        }
        Ok(Self { entries, density, seed })
    }

    pub fn entries(&self) -> &[(usize, Label)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn density(&self) -> f64 {
        self.density
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Membership flags over `pixels` pixels.
    pub fn mask(&self, pixels: usize) -> Vec<bool> {
        let mut m = vec![false; pixels];
        for &(p, _) in &self.entries {
            if p < pixels {
                m[p] = true;
            }
        }
        m
    }

    /// Label of `pixel` if it is a reference pixel.
    pub fn label_of(&self, pixel: usize) -> Option<Label> {
        self.entries
            .binary_search_by_key(&pixel, |e| e.0)
            .ok()
            .map(|i| self.entries[i].1)
    }
}

/// Number of reference pixels drawn from a class of `class_size` pixels.
pub fn per_class_count(class_size: usize, density: f64) -> usize {
    if class_size == 0 {
        return 0;
    }
    ((density * class_size as f64).round() as usize).clamp(1, class_size)
}

/// Draws `max(1, round(density · m_c))` pixels per class uniformly without
/// replacement. Each class uses its own generator stream derived from
/// `seed`, so the draw is reproducible.
pub fn sample_reference(mask: &LabelMask, density: f64, seed: u64) -> Result<ReferenceSet> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::InvalidParameter(format!("density {density} outside (0, 1]")));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); mask.num_classes()];
    for (p, &l) in mask.labels().iter().enumerate() {
        if l != 0 {
            by_class[l as usize - 1].push(p);
        }
    }
    let mut entries = Vec::new();
    for (c, pixels) in by_class.iter().enumerate() {
        let count = per_class_count(pixels.len(), density);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64 + 1);
        for i in index::sample(&mut rng, pixels.len(), count) {
            entries.push((pixels[i], (c + 1) as Label));
        }
    }
    ReferenceSet::from_entries(entries, density, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cube() -> HsiCube {
        HsiCube::from_bsq(2, 2, 3, (0..12).map(|v| v as f32).collect()).unwrap()
    }

    #[test]
    fn header_round_trip_loads_small_cube() {
        let dir = tempfile::tempdir().unwrap();
        let cube = tiny_cube();
        write_cube(&cube, dir.path().join("c.hdr"), "c.raw").unwrap();
        let back = load_cube(dir.path().join("c.hdr")).unwrap();
        assert_eq!(back.pixels(), 4);
        assert_eq!(back.bands(), 3);
        assert_eq!(back, cube);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_cube(&tiny_cube(), dir.path().join("c.hdr"), "c.raw").unwrap();
        let raw = dir.path().join("c.raw");
        let bytes = fs::read(&raw).unwrap();
        fs::write(&raw, &bytes[..bytes.len() - 4]).unwrap();
        let err = load_cube(dir.path().join("c.hdr")).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)), "{err}");
    }

    #[test]
    fn non_finite_sample_names_band_and_pixel() {
        let mut s: Vec<f32> = (0..12).map(|v| v as f32).collect();
        s[7] = f32::NAN;
        match HsiCube::from_bsq(2, 2, 3, s) {
            Err(Error::NonFinite { band, pixel }) => {
                assert_eq!((band, pixel), (2, 3));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_requires_supported_dtype() {
        let text = "height=1\nwidth=1\nbands=1\ndtype=f64le\ninterleave=bsq\ndata=x";
        assert!(CubeHeader::parse(text, Path::new("h")).is_err());
        let ok = "height=1\nwidth=1\nbands=1\ndtype=f32le\ninterleave=bsq\ndata=x\nsensor=foo";
        assert_eq!(CubeHeader::parse(ok, Path::new("h")).unwrap().bands, 1);
    }

    #[test]
    fn remove_bands_edge_cases() {
        let cube = tiny_cube();
        assert_eq!(remove_bands(&cube, &[]).unwrap(), cube);
        let pruned = remove_bands(&cube, &[2]).unwrap();
        assert_eq!(pruned.band_ids(), &[1, 3]);
        assert_eq!(pruned.band(1), cube.band(2));
        assert!(remove_bands(&cube, &[1, 2, 3]).is_err());
        assert!(remove_bands(&cube, &[9]).is_err());
    }

    #[test]
    fn indian_pines_pruning_count() {
        let cube = HsiCube::from_bsq(1, 1, 220, vec![0.0; 220]).unwrap();
        let mut drop = parse_id_list("104-108,150-163,220").unwrap();
        assert_eq!(drop.len(), 20);
        drop.extend([1, 2, 3, 4]);
        assert_eq!(remove_bands(&cube, &drop).unwrap().bands(), 196);
    }

    #[test]
    fn label_grid_parsing() {
        let p = Path::new("m");
        let labels = parse_label_grid("0,1\n2,2\n", 2, 2, p).unwrap();
        let mask = LabelMask::new(2, 2, labels).unwrap();
        assert_eq!(mask.num_classes(), 2);
        assert_eq!(mask.labels().iter().filter(|&&l| l == 0).count(), 1);
        assert!(parse_label_grid("0,-1\n2,2\n", 2, 2, p).is_err());
        assert!(parse_label_grid("0,1,1\n2,2\n", 2, 2, p).is_err());
        assert!(parse_label_grid("0,1\n", 2, 2, p).is_err());
    }

    #[test]
    fn missing_class_is_rejected() {
        assert!(LabelMask::new(1, 3, vec![0, 1, 3]).is_err());
    }

    #[test]
    fn sidecar_overrides_names() {
        let dir = tempfile::tempdir().unwrap();
        let cube = tiny_cube();
        let mp = dir.path().join("m.txt");
        fs::write(&mp, "0,1\n2,2\n").unwrap();
        fs::write(class_sidecar_path(&mp), "2, Woods, 10, 200, 30\n").unwrap();
        let mask = load_label_mask(&mp, &cube).unwrap();
        assert_eq!(mask.classes()[1].name, "Woods");
        assert_eq!(mask.classes()[1].rgb, [10, 200, 30]);
        assert_eq!(mask.classes()[0].name, "class 1");
    }

    #[test]
    fn per_class_counts() {
        assert_eq!(per_class_count(7, 0.05), 1);
        assert_eq!(per_class_count(7, 1.0), 7);
        assert_eq!(per_class_count(1200, 0.1), 120);
        assert_eq!(per_class_count(20, 0.05), 1);
    }

    #[test]
    fn full_density_selects_every_labeled_pixel() {
        let mask = LabelMask::new(2, 3, vec![0, 1, 1, 2, 0, 2]).unwrap();
        let refs = sample_reference(&mask, 1.0, 3).unwrap();
        let px: Vec<usize> = refs.entries().iter().map(|e| e.0).collect();
        assert_eq!(px, vec![1, 2, 3, 5]);
        assert!(sample_reference(&mask, 0.0, 3).is_err());
        assert!(sample_reference(&mask, 1.5, 3).is_err());
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let labels: Vec<Label> = (0..400).map(|i| (i % 5) as Label).collect();
        let mask = LabelMask::new(20, 20, labels).unwrap();
        let a = sample_reference(&mask, 0.1, 42).unwrap();
        let b = sample_reference(&mask, 0.1, 42).unwrap();
        let c = sample_reference(&mask, 0.1, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.entries(), c.entries());
        assert_eq!(a.len(), 4 * 8);
    }
}
