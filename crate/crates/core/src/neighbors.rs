//! Windowed k-nearest-neighbor search under cosine similarity.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::FeatureImage;

/// `k` most similar window-mates of every pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborList {
    height: usize,
    width: usize,
    k: usize,
    window: usize,
    neighbors: Vec<usize>,
    similarities: Vec<f64>,
    degenerate_pixels: usize,
}

impl NeighborList {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Neighbors of `p`, most similar first.
    pub fn of(&self, p: usize) -> &[usize] {
        &self.neighbors[p * self.k..(p + 1) * self.k]
    }

    pub fn similarities_of(&self, p: usize) -> &[f64] {
        &self.similarities[p * self.k..(p + 1) * self.k]
    }

    /// Pixels whose feature vector had zero norm.
    pub fn degenerate_pixels(&self) -> usize {
        self.degenerate_pixels
    }

    /// The `k` best neighbors of every pixel, taken from a list computed for
    /// a larger `k`. Identical to a fresh search with the smaller `k`
    /// because ranking and tie-breaking do not depend on `k`.
    pub fn truncate(&self, k: usize) -> Result<NeighborList> {
        if k == 0 || k > self.k {
            return Err(Error::InvalidParameter(format!(
                "cannot truncate a {}-NN list to k = {k}",
                self.k
            )));
        }
        let mut neighbors = Vec::with_capacity(self.pixels() * k);
        let mut similarities = Vec::with_capacity(self.pixels() * k);
        for p in 0..self.pixels() {
            neighbors.extend_from_slice(&self.of(p)[..k]);
            similarities.extend_from_slice(&self.similarities_of(p)[..k]);
        }
        Ok(NeighborList {
            k,
            neighbors,
            similarities,
            ..self.clone()
        })
    }
}

/// `⟨a, b⟩ / (‖a‖ ‖b‖)`, or `0` when either vector has zero norm.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "cosine similarity of unequal lengths");
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return 0.0;
    }
    (ab / (aa * bb).sqrt()).clamp(-1.0, 1.0)
}

/// Dot product with four independent accumulators, combined in a fixed order.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0;
    for j in 4 * chunks..a.len() {
        tail += a[j] * b[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Finds, for each pixel, the `k` pixels of highest cosine similarity
/// inside the `window × window` neighborhood centered on it (clipped at the
/// image border, center excluded). Ties go to the smaller pixel index.
pub fn windowed_knn(img: &FeatureImage, k: usize, window: usize) -> Result<NeighborList> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if window == 0 || window % 2 == 0 {
        return Err(Error::InvalidParameter(format!(
            "search window must be odd, got {window}"
        )));
    }
    let (h, w, dim) = (img.height(), img.width(), img.dim());
    let half = window / 2;

    // Candidate count is smallest at a corner pixel.
    for p in [0, w - 1, (h - 1) * w, h * w - 1] {
        let available = window_extent(p / w, half, h).len() * window_extent(p % w, half, w).len() - 1;
        if available < k {
            return Err(Error::TooFewCandidates {
                pixel: p,
                available,
                requested: k,
            });
        }
    }

    let mut unit = vec![0.0; img.data().len()];
    let degenerate: usize = unit
        .par_chunks_mut(dim)
        .enumerate()
        .map(|(p, u)| {
            let v = img.pixel(p);
            let norm = dot(v, v).sqrt();
            if norm == 0.0 {
                1
            } else {
                for (o, x) in u.iter_mut().zip(v) {
                    *o = x / norm;
                }
                0
            }
        })
        .sum();
    if degenerate > 0 {
        log::warn!("{degenerate} pixel(s) with zero-norm features; their similarities are 0");
    }

    let per_pixel: Vec<Vec<(f64, usize)>> = (0..h * w)
        .into_par_iter()
        .map(|p| {
            let (y, x) = (p / w, p % w);
            let me = &unit[p * dim..(p + 1) * dim];
            let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
            for yy in window_extent(y, half, h) {
                for xx in window_extent(x, half, w) {
                    let q = yy * w + xx;
                    if q == p {
                        continue;
                    }
                    let s = dot(me, &unit[q * dim..(q + 1) * dim]).clamp(-1.0, 1.0);
                    push_candidate(&mut best, k, s, q);
                }
            }
            best
        })
        .collect();

    let mut neighbors = Vec::with_capacity(h * w * k);
    let mut similarities = Vec::with_capacity(h * w * k);
    for best in per_pixel {
        for (s, q) in best {
            neighbors.push(q);
            similarities.push(s);
        }
    }
    Ok(NeighborList {
        height: h,
        width: w,
        k,
        window,
        neighbors,
        similarities,
        degenerate_pixels: degenerate,
    })
}

/// Exhaustive k-nearest-neighbor search under Euclidean distance over all
/// pixels of `img`, treated as an unordered point cloud. The stored
/// similarities are negated distances; ties go to the smaller index.
pub fn euclidean_knn(img: &FeatureImage, k: usize) -> Result<NeighborList> {
    let n = img.pixels();
    if k == 0 || k >= n {
        return Err(Error::TooFewCandidates {
            pixel: 0,
            available: n.saturating_sub(1),
            requested: k,
        });
    }
    let per_point: Vec<Vec<(f64, usize)>> = (0..n)
        .into_par_iter()
        .map(|p| {
            let me = img.pixel(p);
            let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
            for q in (0..n).filter(|&q| q != p) {
                let d2: f64 = me.iter().zip(img.pixel(q)).map(|(a, b)| (a - b) * (a - b)).sum();
                push_candidate(&mut best, k, -d2, q);
            }
            best
        })
        .collect();
    let mut neighbors = Vec::with_capacity(n * k);
    let mut similarities = Vec::with_capacity(n * k);
    for (s, q) in per_point.into_iter().flatten() {
        neighbors.push(q);
        similarities.push(-(-s).sqrt());
    }
    Ok(NeighborList {
        height: img.height(),
        width: img.width(),
        k,
        window: 0,
        neighbors,
        similarities,
        degenerate_pixels: 0,
    })
}

fn window_extent(c: usize, half: usize, n: usize) -> std::ops::Range<usize> {
    c.saturating_sub(half)..(c + half + 1).min(n)
}

/// Keeps `best` sorted by (similarity desc, index asc) and at most `k` long.
#[inline]
fn push_candidate(best: &mut Vec<(f64, usize)>, k: usize, s: f64, q: usize) {
    let ranks_before = |a: &(f64, usize)| s > a.0 || (s == a.0 && q < a.1);
    if best.len() == k && !ranks_before(&best[k - 1]) {
        return;
    }
    let pos = best.iter().position(ranks_before).unwrap_or(best.len());
    best.insert(pos, (s, q));
    best.truncate(k);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_examples() {
        let a = [0.3, -1.2, 2.0];
        assert_eq!(cosine_similarity(&a, &a), 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 2.0]), 0.0);
        let b: Vec<f64> = a.iter().map(|v| 3.0 * v).collect();
        assert!((cosine_similarity(&a, &b) - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[1.0, 1.0]), 0.0);
    }

    #[test]
    fn identical_vectors_pick_lowest_indices() {
        let img = FeatureImage::new(3, 3, 2, vec![1.0; 18]).unwrap();
        let nl = windowed_knn(&img, 2, 3).unwrap();
        assert_eq!(nl.of(0), &[1, 3]);
        assert_eq!(nl.of(4), &[0, 1]);
        assert_eq!(nl.of(8), &[4, 5]);
        assert!(nl.similarities_of(4).iter().all(|&s| (s - 1.0).abs() < 1e-15));
    }

    #[test]
    fn picks_most_similar_candidate() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let img = FeatureImage::new(1, 4, 2, vec![1., 0., 1., 0., 0., 1., r, r]).unwrap();
        let nl = windowed_knn(&img, 1, 51).unwrap();
        assert_eq!(nl.of(2), &[3]);
        assert!((nl.similarities_of(2)[0] - r).abs() < 1e-12);
    }

    #[test]
    fn too_few_candidates_names_pixel() {
        let img = FeatureImage::new(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        match windowed_knn(&img, 4, 3) {
            Err(Error::TooFewCandidates {
                available: 3,
                requested: 4,
                ..
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(windowed_knn(&img, 3, 3).is_ok());
        assert!(windowed_knn(&img, 1, 4).is_err());
    }

    #[test]
    fn zero_vectors_are_counted() {
        let img = FeatureImage::new(1, 3, 2, vec![0., 0., 1., 0., 0., 1.]).unwrap();
        let nl = windowed_knn(&img, 1, 3).unwrap();
        assert_eq!(nl.degenerate_pixels(), 1);
        assert_eq!(nl.similarities_of(0), &[0.0]);
    }

    #[test]
    fn truncation_matches_fresh_search() {
        let data: Vec<f64> = (0..6 * 7 * 3).map(|i| ((i * 37 % 11) as f64).sin()).collect();
        let img = FeatureImage::new(6, 7, 3, data).unwrap();
        let big = windowed_knn(&img, 6, 5).unwrap();
        assert_eq!(big.truncate(3).unwrap(), windowed_knn(&img, 3, 5).unwrap());
    }
}
