//! Inputs shared by the benchmarks in `benches/`.

use hsi_manifold::features::{assemble_features, FeatureImage, FeatureParams, SpectrumScope};
use hsi_manifold::synthetic::{field_scene, SceneSpec};
use hsi_manifold::{HsiCube, Result};

/// A square field scene with `side × side` pixels and 48 bands.
pub fn scene(side: usize) -> Result<HsiCube> {
    let spec = SceneSpec {
        height: side,
        width: side,
        bands: 48,
        classes: 6,
        ..SceneSpec::default()
    };
    Ok(field_scene(&spec)?.0)
}

/// Whole-spectrum features of [`scene`] with a 3×3 box filter.
pub fn features(side: usize) -> Result<FeatureImage> {
    assemble_features(&scene(side)?, &FeatureParams::new(SpectrumScope::Whole, 3))
}
