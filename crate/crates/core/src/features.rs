//! Filter-bank feature embedding of a cube.
//!
//! Each pixel's (scoped) spectrum is extended with its numerical gradient
//! and its mean and standard deviation; every resulting channel is then
//! smoothed with a `p × p` spatial box filter.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datacube::HsiCube;
use crate::error::{Error, Result};

/// Which of the (pruned) bands a trial looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumScope {
    Whole,
    Odd,
    Even,
}

impl SpectrumScope {
    pub const ALL: [SpectrumScope; 3] = [SpectrumScope::Whole, SpectrumScope::Odd, SpectrumScope::Even];

    pub fn name(self) -> &'static str {
        match self {
            SpectrumScope::Whole => "whole",
            SpectrumScope::Odd => "odd",
            SpectrumScope::Even => "even",
        }
    }
}

impl std::str::FromStr for SpectrumScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "whole" => Ok(SpectrumScope::Whole),
            "odd" => Ok(SpectrumScope::Odd),
            "even" => Ok(SpectrumScope::Even),
            other => Err(Error::InvalidParameter(format!("unknown spectrum scope `{other}`"))),
        }
    }
}

/// Spectral filters applied before the box filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterBank {
    /// Identity, gradient, mean and standard deviation.
    Full,
    /// Raw bands only (no-embedding baseline).
    IdentityOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureParams {
    pub scope: SpectrumScope,
    /// Side of the spatial box filter; odd, `1` disables smoothing.
    pub box_size: usize,
    pub bank: FilterBank,
}

impl FeatureParams {
    pub fn new(scope: SpectrumScope, box_size: usize) -> Self {
        Self {
            scope,
            box_size,
            bank: FilterBank::Full,
        }
    }

    pub fn identity_only(scope: SpectrumScope, box_size: usize) -> Self {
        Self {
            scope,
            box_size,
            bank: FilterBank::IdentityOnly,
        }
    }
}

/// Per-pixel feature vectors, stored pixel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImage {
    height: usize,
    width: usize,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureImage {
    pub fn new(height: usize, width: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || dim == 0 {
            return Err(Error::InvalidData(format!(
                "empty feature image ({height}x{width}, dim {dim})"
            )));
        }
        if data.len() != height * width * dim {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {height}x{width} pixels of dimension {dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite feature value".into()));
        }
        Ok(Self {
            height,
            width,
            dim,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// Feature dimension `M`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pixel(&self, p: usize) -> &[f64] {
        &self.data[p * self.dim..(p + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Keeps only channels `range` of every pixel.
    pub fn select_channels(&self, range: std::ops::Range<usize>) -> FeatureImage {
        assert!(range.end <= self.dim && !range.is_empty());
        let dim = range.len();
        let mut data = Vec::with_capacity(self.pixels() * dim);
        for p in 0..self.pixels() {
            data.extend_from_slice(&self.pixel(p)[range.clone()]);
        }
        FeatureImage {
            height: self.height,
            width: self.width,
            dim,
            data,
        }
    }

    /// Applies `f` to every value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> FeatureImage {
        FeatureImage {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    /// Mirrors the image left-right.
    pub fn flip_horizontal(&self) -> FeatureImage {
        self.remap(|y, x| y * self.width + (self.width - 1 - x))
    }

    /// Mirrors the image top-bottom.
    pub fn flip_vertical(&self) -> FeatureImage {
        self.remap(|y, x| (self.height - 1 - y) * self.width + x)
    }

    fn remap(&self, src: impl Fn(usize, usize) -> usize) -> FeatureImage {
        let mut data = Vec::with_capacity(self.data.len());
        for y in 0..self.height {
            for x in 0..self.width {
                data.extend_from_slice(self.pixel(src(y, x)));
            }
        }
        FeatureImage { data, ..self.clone() }
    }
}

/// Band positions (within the cube's kept bands) covered by `scope`.
pub fn select_scope(cube: &HsiCube, scope: SpectrumScope) -> Result<Vec<usize>> {
    let positions: Vec<usize> = match scope {
        SpectrumScope::Whole => (0..cube.bands()).collect(),
        SpectrumScope::Even => (0..cube.bands()).step_by(2).collect(),
        SpectrumScope::Odd => (1..cube.bands()).step_by(2).collect(),
    };
    if positions.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "{} scope of a {}-band cube has {} band(s); at least 2 are needed",
            scope.name(),
            cube.bands(),
            positions.len()
        )));
    }
    Ok(positions)
}

/// Central differences inside, one-sided differences at both ends.
pub fn spectral_gradient(v: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; v.len()];
    gradient_into(v, &mut out)?;
    Ok(out)
}

fn gradient_into(v: &[f64], out: &mut [f64]) -> Result<()> {
    let b = v.len();
    if b < 2 {
        return Err(Error::InvalidParameter(format!(
            "gradient needs at least 2 bands, got {b}"
        )));
    }
    out[0] = v[1] - v[0];
    out[b - 1] = v[b - 1] - v[b - 2];
    for i in 1..b - 1 {
        out[i] = (v[i + 1] - v[i - 1]) / 2.0;
    }
    Ok(())
}

/// Mean and population standard deviation.
pub fn spectral_moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Feature dimension produced by `params` for `scoped_bands` bands.
pub fn feature_dim(bank: FilterBank, scoped_bands: usize) -> usize {
    match bank {
        FilterBank::Full => 2 * scoped_bands + 2,
        FilterBank::IdentityOnly => scoped_bands,
    }
}

/// Builds the embedded feature image of `cube`.
pub fn assemble_features(cube: &HsiCube, params: &FeatureParams) -> Result<FeatureImage> {
    check_box_size(params.box_size)?;
    let positions = select_scope(cube, params.scope)?;
    let b = positions.len();
    let dim = feature_dim(params.bank, b);
    let mut data = vec![0.0; cube.pixels() * dim];
    data.par_chunks_mut(dim).enumerate().for_each(|(p, out)| {
        cube.spectrum_into(p, &positions, &mut out[..b]);
        if params.bank == FilterBank::Full {
            let (spec, rest) = out.split_at_mut(b);
            gradient_into(spec, &mut rest[..b]).expect("scope has >= 2 bands");
            let (mean, std) = spectral_moments(spec);
            rest[b] = mean;
            rest[b + 1] = std;
        }
    });
    let img = FeatureImage::new(cube.height(), cube.width(), dim, data)?;
    box_filter(&img, params.box_size)
}

fn check_box_size(p: usize) -> Result<()> {
    if p == 0 || p % 2 == 0 {
        return Err(Error::InvalidParameter(format!(
            "box size must be odd and >= 1, got {p}"
        )));
    }
    Ok(())
}

/// Replaces every channel by its mean over the `p × p` window centered on
/// each pixel, replicating edge pixels outside the image.
///
/// Each 1-D pass adds mirrored offsets in pairs, so the result is bitwise
/// unchanged by horizontal or vertical flips of the input.
pub fn box_filter(img: &FeatureImage, p: usize) -> Result<FeatureImage> {
    check_box_size(p)?;
    if p == 1 {
        return Ok(img.clone());
    }
    let (h, w, dim) = (img.height, img.width, img.dim);
    let half = (p / 2) as isize;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;

    let mut horiz = vec![0.0; img.data.len()];
    horiz.par_chunks_mut(w * dim).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            let acc = &mut row[x * dim..(x + 1) * dim];
            acc.copy_from_slice(img.pixel(y * w + x));
            for r in 1..=half {
                let l = img.pixel(y * w + clamp(x as isize - r, w));
                let rr = img.pixel(y * w + clamp(x as isize + r, w));
                for c in 0..dim {
                    acc[c] += l[c] + rr[c];
                }
            }
        }
    });

    let norm = (p * p) as f64;
    let mut out = vec![0.0; img.data.len()];
    out.par_chunks_mut(w * dim).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            let acc = &mut row[x * dim..(x + 1) * dim];
            let at = |yy: usize| &horiz[(yy * w + x) * dim..(yy * w + x + 1) * dim];
            acc.copy_from_slice(at(y));
            for r in 1..=half {
                let u = at(clamp(y as isize - r, h));
                let d = at(clamp(y as isize + r, h));
                for c in 0..dim {
                    acc[c] += u[c] + d[c];
                }
            }
            for v in acc.iter_mut() {
                *v /= norm;
            }
        }
    });
    FeatureImage::new(h, w, dim, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cube_from_fn(h: usize, w: usize, b: usize, f: impl Fn(usize, usize) -> f32) -> HsiCube {
        let mut s = Vec::with_capacity(h * w * b);
        for band in 0..b {
            for p in 0..h * w {
                s.push(f(band, p));
            }
        }
        HsiCube::from_bsq(h, w, b, s).unwrap()
    }

    #[test]
    fn scope_positions() {
        let cube = cube_from_fn(1, 1, 6, |b, _| b as f32);
        assert_eq!(select_scope(&cube, SpectrumScope::Even).unwrap(), vec![0, 2, 4]);
        assert_eq!(select_scope(&cube, SpectrumScope::Odd).unwrap(), vec![1, 3, 5]);
        assert_eq!(select_scope(&cube, SpectrumScope::Whole).unwrap().len(), 6);
        let pruned = cube_from_fn(1, 1, 196, |b, _| b as f32);
        assert_eq!(select_scope(&pruned, SpectrumScope::Odd).unwrap().len(), 98);
        let single = cube_from_fn(1, 1, 1, |_, _| 1.0);
        assert!(select_scope(&single, SpectrumScope::Whole).is_err());
        let three = cube_from_fn(1, 1, 3, |_, _| 1.0);
        assert!(select_scope(&three, SpectrumScope::Odd).is_err());
    }

    #[test]
    fn gradient_examples() {
        assert_eq!(spectral_gradient(&[1.0, 1.0, 1.0, 1.0]).unwrap(), vec![0.0; 4]);
        assert_eq!(spectral_gradient(&[0.0, 1.0, 2.0, 3.0]).unwrap(), vec![1.0; 4]);
        assert_eq!(
            spectral_gradient(&[0.0, 1.0, 4.0, 9.0]).unwrap(),
            vec![1.0, 2.0, 4.0, 5.0]
        );
        assert!(spectral_gradient(&[1.0]).is_err());
    }

    #[test]
    fn moment_examples() {
        assert_eq!(spectral_moments(&[2.0, 2.0, 2.0]), (2.0, 0.0));
        assert_eq!(spectral_moments(&[0.0, 2.0]), (1.0, 1.0));
        let (m, s) = spectral_moments(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert_abs_diff_eq!(s, 1.25f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(s, 1.118034, epsilon = 1e-6);
    }

    #[test]
    fn constant_cube_features() {
        let c = 3.5f32;
        let cube = cube_from_fn(4, 5, 6, |_, _| c);
        let img = assemble_features(&cube, &FeatureParams::new(SpectrumScope::Whole, 1)).unwrap();
        assert_eq!(img.dim(), 14);
        let mut expected = vec![c as f64; 6];
        expected.extend(vec![0.0; 6]);
        expected.extend([c as f64, 0.0]);
        for p in 0..img.pixels() {
            assert_eq!(img.pixel(p), expected.as_slice());
        }
    }

    #[test]
    fn pruned_indian_pines_dimension() {
        let cube = cube_from_fn(3, 3, 196, |b, p| (b * p) as f32);
        let img = assemble_features(&cube, &FeatureParams::new(SpectrumScope::Whole, 3)).unwrap();
        assert_eq!(img.dim(), 394);
    }

    #[test]
    fn identity_only_equals_raw_bands() {
        let cube = cube_from_fn(3, 4, 5, |b, p| (b as f32) * 0.5 + p as f32);
        let img = assemble_features(&cube, &FeatureParams::identity_only(SpectrumScope::Whole, 1)).unwrap();
        assert_eq!(img.dim(), 5);
        for p in 0..12 {
            for b in 0..5 {
                assert_eq!(img.pixel(p)[b], cube.sample(b, p) as f64);
            }
        }
        let full = assemble_features(&cube, &FeatureParams::new(SpectrumScope::Whole, 1)).unwrap();
        assert_eq!(full.select_channels(0..5), img);
    }

    #[test]
    fn box_filter_examples() {
        let img = FeatureImage::new(3, 3, 1, vec![0., 0., 0., 0., 9., 0., 0., 0., 0.]).unwrap();
        let out = box_filter(&img, 3).unwrap();
        assert_eq!(out.pixel(4), &[1.0]);
        assert_eq!(box_filter(&img, 1).unwrap(), img);
        assert!(box_filter(&img, 2).is_err());
        assert!(box_filter(&img, 0).is_err());

        let flat = FeatureImage::new(4, 5, 2, vec![0.7; 40]).unwrap();
        for p in [3, 5, 7] {
            let out = box_filter(&flat, p).unwrap();
            for v in out.data() {
                assert_abs_diff_eq!(*v, 0.7, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn box_filter_clamps_borders() {
        // Corner of a 2x2 image with p = 3: window rows/cols {0,0,1}.
        let img = FeatureImage::new(2, 2, 1, vec![1., 2., 3., 4.]).unwrap();
        let out = box_filter(&img, 3).unwrap();
        let expected = (4.0 * 1.0 + 2.0 * 2.0 + 2.0 * 3.0 + 4.0) / 9.0;
        assert_abs_diff_eq!(out.pixel(0)[0], expected, epsilon = 1e-15);
    }
}
