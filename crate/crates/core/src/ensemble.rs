//! Trial ensembles, classification entropy and clutter detection.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{nn_classify, LabelMap};
use crate::datacube::{HsiCube, Label, ReferenceSet};
use crate::error::{Error, Result};
use crate::features::{assemble_features, FeatureParams, FilterBank, SpectrumScope};
use crate::lle::{assemble_weight_matrix, reduce_dimension, ManifoldCoords};
use crate::neighbors::windowed_knn;

/// Parameter lists whose Cartesian product forms an ensemble.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialGrid {
    pub scopes: Vec<SpectrumScope>,
    pub box_sizes: Vec<usize>,
    pub neighbors: Vec<usize>,
    pub dims: Vec<usize>,
    pub bank: FilterBank,
}

impl TrialGrid {
    /// Whole/odd/even scopes, `p ∈ {3, 5}`, `k ∈ {5, 10, 15}`,
    /// `d ∈ {10, 20, 30}`: 54 trials.
    pub fn standard() -> Self {
        Self {
            scopes: SpectrumScope::ALL.to_vec(),
            box_sizes: vec![3, 5],
            neighbors: vec![5, 10, 15],
            dims: vec![10, 20, 30],
            bank: FilterBank::Full,
        }
    }

    /// Raw bands without spatial smoothing: 9 trials.
    pub fn ablation() -> Self {
        Self {
            scopes: vec![SpectrumScope::Whole],
            box_sizes: vec![1],
            bank: FilterBank::IdentityOnly,
            ..Self::standard()
        }
    }

    pub fn len(&self) -> usize {
        self.scopes.len() * self.box_sizes.len() * self.neighbors.len() * self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One point of a [`TrialGrid`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub trial_id: usize,
    pub scope: SpectrumScope,
    pub box_size: usize,
    pub k: usize,
    pub d: usize,
    pub bank: FilterBank,
}

impl TrialConfig {
    pub fn feature_params(&self) -> FeatureParams {
        FeatureParams {
            scope: self.scope,
            box_size: self.box_size,
            bank: self.bank,
        }
    }
}

/// Lists the grid in lexicographic order of (scope, p, k, d), numbering
/// trials from 0.
pub fn enumerate_trials(grid: &TrialGrid) -> Result<Vec<TrialConfig>> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("every grid list must be nonempty".into()));
    }
    let mut trials = Vec::with_capacity(grid.len());
    for &scope in &grid.scopes {
        for &box_size in &grid.box_sizes {
            for &k in &grid.neighbors {
                for &d in &grid.dims {
                    trials.push(TrialConfig {
                        trial_id: trials.len(),
                        scope,
                        box_size,
                        k,
                        d,
                        bank: grid.bank,
                    });
                }
            }
        }
    }
    Ok(trials)
}

/// Features, embedding and nearest-reference labeling for one trial.
pub fn run_trial(
    cube: &HsiCube,
    config: &TrialConfig,
    refs: &ReferenceSet,
    num_classes: usize,
    window: usize,
    seed: u64,
) -> Result<LabelMap> {
    let features = assemble_features(cube, &config.feature_params())?;
    let coords = crate::lle::embed_pipeline(&features, config.k, config.d, window, seed)?;
    nn_classify(&coords, refs, cube.height(), cube.width(), num_classes)
}

/// Runs many trials, sharing the work they have in common.
///
/// Trials with equal scope and box size share one feature image and one
/// neighbor search (at their largest `k`); trials that also share `k` share
/// one embedding, computed at their largest `d` and truncated. `on_done` is
/// called once per finished trial, from worker threads. Results come back
/// in the order of `trials`.
pub fn run_trials<F>(
    cube: &HsiCube,
    trials: &[TrialConfig],
    refs: &ReferenceSet,
    num_classes: usize,
    window: usize,
    seed: u64,
    on_done: F,
) -> std::result::Result<Vec<LabelMap>, (TrialConfig, Error)>
where
    F: Fn(&TrialConfig, &LabelMap) -> Result<()> + Sync,
{
    let mut groups: BTreeMap<(SpectrumScope, usize, FilterBank), Vec<usize>> = BTreeMap::new();
    for (i, t) in trials.iter().enumerate() {
        groups.entry((t.scope, t.box_size, t.bank)).or_default().push(i);
    }
    let groups: Vec<Vec<usize>> = groups.into_values().collect();

    let run_group = |members: &Vec<usize>| -> std::result::Result<Vec<(usize, LabelMap)>, (TrialConfig, Error)> {
        let first = trials[members[0]];
        let fail = |t: TrialConfig| move |e: Error| (t, e);
        let features = assemble_features(cube, &first.feature_params()).map_err(fail(first))?;
        let k_max = members.iter().map(|&i| trials[i].k).max().unwrap_or(1);
        let all_nbrs = windowed_knn(&features, k_max, window).map_err(fail(first))?;

        let mut by_k: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &i in members {
            by_k.entry(trials[i].k).or_default().push(i);
        }
        let mut out = Vec::with_capacity(members.len());
        for (k, same_k) in by_k {
            let lead = trials[same_k[0]];
            let nbrs = all_nbrs.truncate(k).map_err(fail(lead))?;
            let w = assemble_weight_matrix(&features, &nbrs).map_err(fail(lead))?;
            let d_max = same_k.iter().map(|&i| trials[i].d).max().unwrap_or(1);
            let lead = trials[*same_k.iter().find(|&&i| trials[i].d == d_max).expect("nonempty")];
            let coords: ManifoldCoords = reduce_dimension(&w, d_max, seed).map_err(fail(lead))?;
            log::info!(
                "embedded scope={} p={} k={k} up to d={d_max}",
                lead.scope.name(),
                lead.box_size
            );
            for &i in &same_k {
                let t = trials[i];
                let map = coords
                    .truncate(t.d)
                    .and_then(|c| nn_classify(&c, refs, cube.height(), cube.width(), num_classes))
                    .map_err(fail(t))?;
                on_done(&t, &map).map_err(fail(t))?;
                out.push((i, map));
            }
        }
        Ok(out)
    };

    let per_group: Vec<Vec<(usize, LabelMap)>> = groups
        .par_iter()
        .map(run_group)
        .collect::<std::result::Result<_, _>>()?;
    let mut slots: Vec<Option<LabelMap>> = vec![None; trials.len()];
    for (i, map) in per_group.into_iter().flatten() {
        slots[i] = Some(map);
    }
    Ok(slots.into_iter().map(|m| m.expect("every trial ran")).collect())
}

/// Per-pixel label counts `n_jℓ` over `T` trials.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnsembleTally {
    height: usize,
    width: usize,
    num_classes: usize,
    trials: u32,
    counts: Vec<u32>,
}

impl EnsembleTally {
    /// Checks that every pixel's counts sum to the same positive total.
    pub fn from_counts(height: usize, width: usize, num_classes: usize, counts: Vec<u32>) -> Result<Self> {
        if num_classes == 0 || counts.len() != height * width * num_classes || counts.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "{} counts for {height}x{width} pixels and {num_classes} classes",
                counts.len()
            )));
        }
        let mut totals = counts
            .chunks_exact(num_classes)
            .map(|c| c.iter().map(|&v| v as u64).sum::<u64>());
        let trials = totals.next().unwrap_or(0);
        if trials == 0 || trials > u32::MAX as u64 {
            return Err(Error::InvalidData(format!("invalid trial count {trials}")));
        }
        if let Some(p) = totals.position(|t| t != trials) {
            return Err(Error::InvalidData(format!(
                "pixel {} counts do not sum to {trials} trials",
                p + 1
            )));
        }
        Ok(Self {
            height,
            width,
            num_classes,
            trials: trials as u32,
            counts,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// `T`.
    pub fn trials(&self) -> u32 {
        self.trials
    }

    /// Counts of classes `1..=L` at pixel `p`.
    pub fn counts_of(&self, p: usize) -> &[u32] {
        &self.counts[p * self.num_classes..(p + 1) * self.num_classes]
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Little-endian `u32` counts, pixel-major.
    pub fn write_bin(&self, mut out: impl Write) -> std::io::Result<()> {
        let mut buf = Vec::with_capacity(self.counts.len() * 4);
        for c in &self.counts {
            buf.extend_from_slice(&c.to_le_bytes());
        }
        out.write_all(&buf)
    }

    pub fn read_bin(mut input: impl Read, height: usize, width: usize, num_classes: usize) -> Result<Self> {
        let mut bytes = Vec::new();
        input
            .read_to_end(&mut bytes)
            .map_err(|e| Error::InvalidData(format!("reading tally: {e}")))?;
        let expected = height * width * num_classes * 4;
        if bytes.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "tally has {} bytes, expected {expected}",
                bytes.len()
            )));
        }
        let counts = bytes
            .chunks_exact(4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Self::from_counts(height, width, num_classes, counts)
    }
}

/// Counts how often each pixel received each class.
pub fn tally(maps: &[LabelMap]) -> Result<EnsembleTally> {
    let first = maps
        .first()
        .ok_or_else(|| Error::InvalidParameter("cannot tally an empty ensemble".into()))?;
    let (h, w, l) = (first.height(), first.width(), first.num_classes());
    if let Some(bad) = maps
        .iter()
        .find(|m| (m.height(), m.width(), m.num_classes()) != (h, w, l))
    {
        return Err(Error::DimensionMismatch(format!(
            "trial map is {}x{} with {} classes, expected {h}x{w} with {l}",
            bad.height(),
            bad.width(),
            bad.num_classes()
        )));
    }
    if l == 0 {
        return Err(Error::InvalidData("trial maps declare no classes".into()));
    }
    let mut counts = vec![0u32; h * w * l];
    for map in maps {
        for (p, &label) in map.labels().iter().enumerate() {
            if label == 0 {
                return Err(Error::InvalidData(format!("trial map leaves pixel {p} unlabeled")));
            }
            counts[p * l + label as usize - 1] += 1;
        }
    }
    EnsembleTally::from_counts(h, w, l, counts)
}

/// Per-pixel classification entropy in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl EntropyMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "{} entropy values for {height}x{width} pixels",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidData(format!("entropy value {v} outside [0, 1]")));
        }
        Ok(Self { height, width, values })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, p: usize) -> f64 {
        self.values[p]
    }
}

/// `−Σ f log_L f` of the frequencies `f = n / T`.
///
/// Evaluated as `Σ n ln(T/n) / (T ln L)` with equal counts grouped, so one
/// class gives exactly 0 and equal counts over all `L` classes exactly 1.
pub fn pixel_entropy(counts: &[u32]) -> Result<f64> {
    let l = counts.len();
    if l < 2 {
        return Err(Error::InvalidParameter(format!(
            "entropy needs at least 2 classes, got {l}"
        )));
    }
    let total: u64 = counts.iter().map(|&c| c as u64).sum();
    if total == 0 {
        return Err(Error::InvalidData("entropy of an empty count vector".into()));
    }
    let mut nonzero: Vec<u32> = counts.iter().copied().filter(|&c| c > 0).collect();
    nonzero.sort_unstable();
    let t = total as f64;
    let mut acc = 0.0;
    for run in nonzero.chunk_by(|a, b| a == b) {
        let c = run[0] as u64;
        let mass = (c * run.len() as u64) as f64;
        acc += mass * (t / c as f64).ln();
    }
    Ok(acc / (t * (l as f64).ln()))
}

pub fn entropy(tally: &EnsembleTally) -> Result<EntropyMap> {
    let values = (0..tally.height * tally.width)
        .map(|p| pixel_entropy(tally.counts_of(p)))
        .collect::<Result<Vec<_>>>()?;
    EntropyMap::new(tally.height, tally.width, values)
}

/// Most frequent class per pixel; ties go to the smallest class.
pub fn consensus(tally: &EnsembleTally) -> Result<LabelMap> {
    let labels = (0..tally.height * tally.width)
        .map(|p| {
            let counts = tally.counts_of(p);
            let mut best = 0;
            for (c, &n) in counts.iter().enumerate() {
                if n > counts[best] {
                    best = c;
                }
            }
            (best + 1) as Label
        })
        .collect();
    LabelMap::new(tally.height, tally.width, tally.num_classes, labels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClutterResult {
    pub threshold: f64,
    pub clutter: Vec<bool>,
    /// Consensus labels with clutter pixels set to 0.
    pub consensus: LabelMap,
}

impl ClutterResult {
    pub fn clutter_count(&self) -> usize {
        self.clutter.iter().filter(|&&c| c).count()
    }
}

/// Marks non-reference pixels with `H ≥ τ` as clutter.
pub fn clutter_split(
    entropy: &EntropyMap,
    consensus: &LabelMap,
    threshold: f64,
    refs: &ReferenceSet,
) -> Result<ClutterResult> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidParameter(format!(
            "clutter threshold {threshold} outside [0, 1]"
        )));
    }
    if (entropy.height, entropy.width) != (consensus.height(), consensus.width()) {
        return Err(Error::DimensionMismatch(format!(
            "entropy map is {}x{}, consensus is {}x{}",
            entropy.height,
            entropy.width,
            consensus.height(),
            consensus.width()
        )));
    }
    let n = entropy.values.len();
    let is_ref = refs.mask(n);
    let clutter: Vec<bool> = (0..n).map(|p| !is_ref[p] && entropy.values[p] >= threshold).collect();
    let labels = consensus
        .labels()
        .iter()
        .zip(&clutter)
        .map(|(&l, &c)| if c { 0 } else { l })
        .collect();
    Ok(ClutterResult {
        threshold,
        clutter,
        consensus: LabelMap::new(consensus.height(), consensus.width(), consensus.num_classes(), labels)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_refs() -> ReferenceSet {
        ReferenceSet::from_entries(vec![], 0.1, 0).unwrap()
    }

    #[test]
    fn grid_sizes() {
        assert_eq!(enumerate_trials(&TrialGrid::standard()).unwrap().len(), 54);
        assert_eq!(enumerate_trials(&TrialGrid::ablation()).unwrap().len(), 9);
        let single = TrialGrid {
            scopes: vec![SpectrumScope::Odd],
            box_sizes: vec![3],
            neighbors: vec![5],
            dims: vec![10],
            bank: FilterBank::Full,
        };
        assert_eq!(enumerate_trials(&single).unwrap().len(), 1);
        let empty = TrialGrid { dims: vec![], ..single };
        assert!(enumerate_trials(&empty).is_err());
    }

    #[test]
    fn grid_order_is_lexicographic() {
        let t = enumerate_trials(&TrialGrid::standard()).unwrap();
        assert_eq!(
            (t[0].scope, t[0].box_size, t[0].k, t[0].d),
            (SpectrumScope::Whole, 3, 5, 10)
        );
        assert_eq!((t[1].k, t[1].d), (5, 20));
        assert_eq!((t[3].k, t[3].d), (10, 10));
        assert_eq!(t[9].box_size, 5);
        assert_eq!(t[18].scope, SpectrumScope::Odd);
        assert_eq!(t[53].trial_id, 53);
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(pixel_entropy(&[0, 7, 0]).unwrap(), 0.0);
        assert_eq!(pixel_entropy(&[3, 3, 3]).unwrap(), 1.0);
        assert_eq!(pixel_entropy(&[18, 18, 18]).unwrap(), 1.0);
        let mut split = vec![0u32; 16];
        split[0] = 27;
        split[1] = 27;
        let h = pixel_entropy(&split).unwrap();
        assert!((h - 0.25).abs() < 1e-15);
        assert!(pixel_entropy(&[5]).is_err());
    }

    #[test]
    fn consensus_and_tally() {
        let a = LabelMap::new(1, 3, 3, vec![1, 2, 3]).unwrap();
        let b = LabelMap::new(1, 3, 3, vec![2, 2, 3]).unwrap();
        let t = tally(&[a.clone(), b]).unwrap();
        assert_eq!(t.counts_of(0), &[1, 1, 0]);
        assert_eq!(t.counts_of(1), &[0, 2, 0]);
        assert_eq!(consensus(&t).unwrap().labels(), &[1, 2, 3]);
        assert_eq!(consensus(&tally(std::slice::from_ref(&a)).unwrap()).unwrap(), a);

        let c = EnsembleTally::from_counts(1, 1, 3, vec![10, 30, 14]).unwrap();
        assert_eq!(consensus(&c).unwrap().get(0), 2);
    }

    #[test]
    fn tally_rejects_mismatches() {
        let a = LabelMap::new(1, 3, 3, vec![1, 2, 3]).unwrap();
        let b = LabelMap::new(3, 1, 3, vec![1, 2, 3]).unwrap();
        assert!(tally(&[a.clone(), b]).is_err());
        assert!(tally(&[]).is_err());
        let unlabeled = LabelMap::new(1, 3, 3, vec![1, 0, 3]).unwrap();
        assert!(tally(&[a, unlabeled]).is_err());
    }

    #[test]
    fn tally_bin_roundtrip() {
        let t = EnsembleTally::from_counts(1, 2, 2, vec![3, 1, 0, 4]).unwrap();
        let mut buf = Vec::new();
        t.write_bin(&mut buf).unwrap();
        assert_eq!(&buf[..8], &[3, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(EnsembleTally::read_bin(&buf[..], 1, 2, 2).unwrap(), t);
        assert!(EnsembleTally::read_bin(&buf[..12], 1, 2, 2).is_err());
    }

    #[test]
    fn clutter_boundaries() {
        let h = EntropyMap::new(1, 4, vec![0.0, 0.3, 1.0, 0.7]).unwrap();
        let c = LabelMap::new(1, 4, 2, vec![1, 2, 1, 2]).unwrap();
        let all = clutter_split(&h, &c, 0.0, &no_refs()).unwrap();
        assert_eq!(all.clutter_count(), 4);
        assert!(all.consensus.labels().iter().all(|&l| l == 0));
        let top = clutter_split(&h, &c, 1.0, &no_refs()).unwrap();
        assert_eq!(top.clutter, vec![false, false, true, false]);
        assert_eq!(top.consensus.labels(), &[1, 2, 0, 2]);
        assert!(clutter_split(&h, &c, 1.0 + 1e-9, &no_refs()).is_err());
        let refs = ReferenceSet::from_entries(vec![(2, 1)], 0.1, 0).unwrap();
        assert_eq!(
            clutter_split(&h, &c, 0.25, &refs).unwrap().clutter,
            vec![false, true, false, true]
        );
    }
}
