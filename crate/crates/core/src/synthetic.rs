//! Synthetic scenes and point clouds for tests, examples and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::datacube::{HsiCube, Label, LabelMask};
use crate::error::{Error, Result};
use crate::features::FeatureImage;
use crate::lle::ManifoldCoords;
use crate::neighbors::euclidean_knn;

/// 8×8 scene with 8 bands: a rising spectrum on the left half (class 1)
/// and a falling one on the right half (class 2), each pixel slightly
/// perturbed.
pub fn two_blob_scene() -> (HsiCube, LabelMask) {
    let (h, w, bands) = (8usize, 8usize, 8usize);
    let mut samples = vec![0.0f32; h * w * bands];
    let mut labels = vec![0 as Label; h * w];
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let class = if x < w / 2 { 1 } else { 2 };
            labels[p] = class;
            for b in 0..bands {
                let t = b as f64 / (bands - 1) as f64;
                let base = if class == 1 { 1.0 + 2.0 * t } else { 3.0 - 2.0 * t };
                let wobble = 0.02 * ((p * 7 + b * 3) as f64).sin();
                samples[b * h * w + p] = (base + wobble) as f32;
            }
        }
    }
    let cube = HsiCube::from_bsq(h, w, bands, samples).expect("valid toy cube");
    let mask = LabelMask::new(h, w, labels).expect("valid toy mask");
    (cube, mask)
}

/// Layout of a generated field scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub classes: usize,
    /// Standard deviation of the multiplicative noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            height: 32,
            width: 32,
            bands: 24,
            classes: 4,
            noise: 0.04,
            seed: 11,
        }
    }
}

/// A scene of Voronoi "fields", one smooth reference spectrum per class,
/// crossed by an unlabeled road whose spectrum mixes all classes.
pub fn field_scene(spec: &SceneSpec) -> Result<(HsiCube, LabelMask)> {
    let SceneSpec {
        height: h,
        width: w,
        bands,
        classes,
        noise,
        seed,
    } = *spec;
    if h < 4 || w < 4 || bands < 4 || !(2..=64).contains(&classes) {
        return Err(Error::InvalidParameter(format!(
            "unsupported scene {h}x{w}, {bands} bands, {classes} classes"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sites = 2 * classes;
    let centers: Vec<(f64, f64, Label)> = (0..sites)
        .map(|i| {
            (
                rng.gen::<f64>() * h as f64,
                rng.gen::<f64>() * w as f64,
                (i % classes + 1) as Label,
            )
        })
        .collect();
    let spectra: Vec<Vec<f64>> = (0..classes)
        .map(|c| {
            let freq = 0.5 + 1.5 * rng.gen::<f64>();
            let phase = std::f64::consts::TAU * rng.gen::<f64>();
            let peak = rng.gen::<f64>();
            let level = 1.0 + c as f64 / classes as f64;
            (0..bands)
                .map(|b| {
                    let t = b as f64 / (bands - 1) as f64;
                    level
                        + 0.4 * (std::f64::consts::TAU * freq * t + phase).sin()
                        + 0.8 * (-((t - peak) / 0.08).powi(2)).exp()
                })
                .collect()
        })
        .collect();
    let road: Vec<f64> = (0..bands)
        .map(|b| spectra.iter().map(|s| s[b]).sum::<f64>() / classes as f64)
        .collect();

    let road_col = w / 2 + w / 8;
    let mut labels = vec![0 as Label; h * w];
    let mut samples = vec![0.0f32; h * w * bands];
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let on_road = x.abs_diff(road_col + y / 4) <= 1 || y.abs_diff(h / 3) == 0;
            let label = if on_road {
                0
            } else {
                let (cy, cx) = (y as f64 + 0.5, x as f64 + 0.5);
                centers
                    .iter()
                    .min_by(|a, b| {
                        let da = (a.0 - cy).powi(2) + (a.1 - cx).powi(2);
                        let db = (b.0 - cy).powi(2) + (b.1 - cx).powi(2);
                        da.total_cmp(&db)
                    })
                    .map(|c| c.2)
                    .unwrap_or(1)
            };
            labels[p] = label;
            let base = if label == 0 {
                &road
            } else {
                &spectra[label as usize - 1]
            };
            let gain = 1.0 + noise * gaussian(&mut rng);
            for b in 0..bands {
                let v = base[b] * gain * (1.0 + 0.5 * noise * gaussian(&mut rng));
                samples[b * h * w + p] = v as f32;
            }
        }
    }
    // Every class must occur for the mask to be valid.
    for c in 1..=classes as Label {
        if !labels.contains(&c) {
            let p = centers.iter().find(|s| s.2 == c).map(|s| {
                let y = (s.0 as usize).min(h - 1);
                let x = (s.1 as usize).min(w - 1);
                y * w + x
            });
            if let Some(p) = p {
                labels[p] = c;
            }
        }
    }
    let cube = HsiCube::from_bsq(h, w, bands, samples)?;
    let mask = LabelMask::new(h, w, labels)?;
    Ok((cube, mask))
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller, one branch.
    let u: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let v: f64 = rng.gen();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

/// `n` Swiss-roll points as a `1 × n` image of 3-D features, along with
/// each point's roll parameter `t`.
///
/// The points follow a low-discrepancy sequence, so the sample is fixed
/// without a random seed: `t = 1.5π (1 + 2 {iφ})`, height `21 {i√2}`.
pub fn swiss_roll(n: usize) -> Result<(FeatureImage, Vec<f64>)> {
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    let mut data = Vec::with_capacity(3 * n);
    let mut ts = Vec::with_capacity(n);
    for i in 0..n {
        let fi = i as f64;
        let t = 1.5 * std::f64::consts::PI * (1.0 + 2.0 * (fi * golden).fract());
        let height = 21.0 * (fi * std::f64::consts::SQRT_2).fract();
        data.extend([t * t.cos(), height, t * t.sin()]);
        ts.push(t);
    }
    Ok((FeatureImage::new(1, n, 3, data)?, ts))
}

/// Mean fraction of each sample's `k` nearest neighbors in `high` that are
/// also among its `k` nearest neighbors in `low`.
pub fn neighborhood_preservation(high: &FeatureImage, low: &ManifoldCoords, k: usize) -> Result<f64> {
    let n = high.pixels();
    if low.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} high-dimensional samples, {} embedded",
            low.n()
        )));
    }
    let flat: Vec<f64> = (0..n).flat_map(|j| low.sample(j).iter().copied()).collect();
    let low_img = FeatureImage::new(1, n, low.d(), flat)?;
    let a = euclidean_knn(high, k)?;
    let b = euclidean_knn(&low_img, k)?;
    let kept: usize = (0..n)
        .map(|j| a.of(j).iter().filter(|q| b.of(j).contains(q)).count())
        .sum();
    Ok(kept as f64 / (n * k) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_scene_shape() {
        let (cube, mask) = two_blob_scene();
        assert_eq!((cube.height(), cube.width(), cube.bands()), (8, 8, 8));
        assert_eq!(mask.class_sizes(), vec![32, 32]);
    }

    #[test]
    fn field_scene_is_reproducible() {
        let spec = SceneSpec::default();
        let (a, ma) = field_scene(&spec).unwrap();
        let (b, mb) = field_scene(&spec).unwrap();
        assert_eq!(a.samples(), b.samples());
        assert_eq!(ma, mb);
        assert_eq!(ma.num_classes(), spec.classes);
        assert!(ma.labels().contains(&0));
    }

    #[test]
    fn swiss_roll_lies_on_the_roll() {
        let (pts, ts) = swiss_roll(50).unwrap();
        for (j, t) in ts.iter().enumerate() {
            let p = pts.pixel(j);
            assert!(((p[0] * p[0] + p[2] * p[2]).sqrt() - t).abs() < 1e-9);
        }
    }
}
