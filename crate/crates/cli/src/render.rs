//! Binary PGM/PPM rendering of entropy and class maps.

use anyhow::{bail, Result};
use hsi_manifold::datacube::ClassInfo;
use hsi_manifold::{EntropyMap, LabelMap};
use serde::{Deserialize, Serialize};

/// Class colors plus the colors used for clutter and unlabeled pixels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderPalette {
    pub classes: Vec<[u8; 3]>,
    pub clutter: [u8; 3],
    pub unlabeled: [u8; 3],
}

impl RenderPalette {
    pub fn from_classes(classes: &[ClassInfo]) -> Self {
        Self {
            classes: classes.iter().map(|c| c.rgb).collect(),
            clutter: [0, 0, 0],
            unlabeled: [0, 0, 0],
        }
    }
}

/// Gray level `round(255 · H)` per pixel, as a binary PGM.
pub fn render_grayscale(map: &EntropyMap) -> Result<Vec<u8>> {
    let mut out = format!("P5\n{} {}\n255\n", map.width(), map.height()).into_bytes();
    for &h in map.values() {
        if !(0.0..=1.0).contains(&h) {
            bail!("entropy value {h} outside [0, 1]");
        }
        out.push((255.0 * h).round() as u8);
    }
    Ok(out)
}

/// Binary PPM of `labels`; pixels flagged in `clutter` and label-0 pixels
/// take the palette's clutter and unlabeled colors.
pub fn render_classmap(labels: &LabelMap, clutter: Option<&[bool]>, palette: &RenderPalette) -> Result<Vec<u8>> {
    let n = labels.height() * labels.width();
    if let Some(c) = clutter {
        if c.len() != n {
            bail!("clutter mask has {} pixels, label map {n}", c.len());
        }
    }
    let mut out = format!("P6\n{} {}\n255\n", labels.width(), labels.height()).into_bytes();
    for (p, &l) in labels.labels().iter().enumerate() {
        let rgb = if clutter.is_some_and(|c| c[p]) {
            palette.clutter
        } else if l == 0 {
            palette.unlabeled
        } else {
            match palette.classes.get(l as usize - 1) {
                Some(rgb) => *rgb,
                None => bail!("label {l} has no palette entry ({} colors)", palette.classes.len()),
            }
        };
        out.extend_from_slice(&rgb);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header_len(img: &[u8]) -> usize {
        let mut lines = 0;
        img.iter()
            .position(|&b| {
                lines += (b == b'\n') as usize;
                lines == 3
            })
            .unwrap()
            + 1
    }

    #[test]
    fn grayscale_levels() {
        let map = EntropyMap::new(1, 4, vec![0.0, 0.25, 1.0, 0.5]).unwrap();
        let img = render_grayscale(&map).unwrap();
        assert!(img.starts_with(b"P5\n4 1\n255\n"));
        assert_eq!(&img[header_len(&img)..], &[0, 64, 255, 128]);
    }

    #[test]
    fn classmap_colors() {
        let palette = RenderPalette {
            classes: vec![[10, 20, 30], [40, 50, 60]],
            clutter: [0, 0, 0],
            unlabeled: [0, 0, 0],
        };
        let labels = LabelMap::new(1, 3, 2, vec![1, 2, 2]).unwrap();
        let img = render_classmap(&labels, Some(&[false, true, false]), &palette).unwrap();
        assert!(img.starts_with(b"P6\n3 1\n255\n"));
        assert_eq!(&img[header_len(&img)..], &[10, 20, 30, 0, 0, 0, 40, 50, 60]);
        let solid = LabelMap::new(1, 2, 1, vec![1, 1]).unwrap();
        let img = render_classmap(&solid, None, &palette).unwrap();
        assert_eq!(&img[header_len(&img)..], &[10, 20, 30, 10, 20, 30]);
        let short = RenderPalette {
            classes: vec![[1, 1, 1]],
            ..palette
        };
        assert!(render_classmap(&labels, None, &short).is_err());
    }
}
