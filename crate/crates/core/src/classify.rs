//! Nearest-reference labeling and accuracy metrics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datacube::{Label, LabelMask, ReferenceSet};
use crate::error::{Error, Result};
use crate::lle::ManifoldCoords;

/// Per-pixel labels of a scene; `0` means clutter / no label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    num_classes: usize,
    labels: Vec<Label>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, num_classes: usize, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for a {height}x{width} map",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize > num_classes) {
            return Err(Error::InvalidData(format!(
                "label {bad} exceeds the class count {num_classes}"
            )));
        }
        Ok(Self {
            height,
            width,
            num_classes,
            labels,
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

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn get(&self, p: usize) -> Label {
        self.labels[p]
    }
}

/// Accuracy figures in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub overall: f64,
    pub average: f64,
    /// Recall per class `1..=L`; `None` for classes with no eligible pixel.
    pub per_class: Vec<Option<f64>>,
    /// `confusion[t][p]`: eligible pixels of true class `t + 1` predicted as
    /// class `p + 1`.
    pub confusion: Vec<Vec<u64>>,
    /// Eligible pixels per true class that received no label (clutter).
    pub unassigned: Vec<u64>,
    pub eligible: u64,
}

/// Labels every pixel with the class of its Euclidean-nearest reference
/// pixel in `coords`. Reference pixels keep their own label; distance ties
/// go to the reference with the smaller pixel index.
pub fn nn_classify(
    coords: &ManifoldCoords,
    refs: &ReferenceSet,
    height: usize,
    width: usize,
    num_classes: usize,
) -> Result<LabelMap> {
    if refs.is_empty() {
        return Err(Error::InvalidParameter("empty reference set".into()));
    }
    let n = height * width;
    if coords.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} embedded samples for a {height}x{width} scene",
            coords.n()
        )));
    }
    if let Some(&(p, l)) = refs
        .entries()
        .iter()
        .find(|&&(p, l)| p >= n || l as usize > num_classes)
    {
        return Err(Error::InvalidData(format!(
            "reference ({p}, {l}) outside the scene or class range"
        )));
    }
    let d = coords.d();
    let anchors: Vec<f64> = refs
        .entries()
        .iter()
        .flat_map(|&(p, _)| coords.sample(p).iter().copied())
        .collect();
    let labels: Vec<Label> = (0..n)
        .into_par_iter()
        .map(|j| {
            if let Some(l) = refs.label_of(j) {
                return l;
            }
            let x = coords.sample(j);
            let mut best = (f64::INFINITY, 0);
            for (r, a) in anchors.chunks_exact(d).enumerate() {
                let dist: f64 = a.iter().zip(x).map(|(u, v)| (u - v) * (u - v)).sum();
                if dist < best.0 {
                    best = (dist, r);
                }
            }
            refs.entries()[best.1].1
        })
        .collect();
    LabelMap::new(height, width, num_classes, labels)
}

fn check_dims(pred: &LabelMap, truth: &LabelMask) -> Result<()> {
    if pred.height != truth.height() || pred.width != truth.width() {
        return Err(Error::DimensionMismatch(format!(
            "prediction is {}x{}, reference mask is {}x{}",
            pred.height,
            pred.width,
            truth.height(),
            truth.width()
        )));
    }
    Ok(())
}

/// Confusion statistics over pixels with a nonzero true label that are not
/// reference pixels.
pub fn accuracy_report(pred: &LabelMap, truth: &LabelMask, exclude: &ReferenceSet) -> Result<AccuracyReport> {
    check_dims(pred, truth)?;
    let l = truth.num_classes();
    let excluded = exclude.mask(truth.labels().len());
    let mut confusion = vec![vec![0u64; l]; l];
    let mut unassigned = vec![0u64; l];
    for (p, (&t, &y)) in truth.labels().iter().zip(pred.labels()).enumerate() {
        if t == 0 || excluded[p] {
            continue;
        }
        let ti = t as usize - 1;
        match y as usize {
            0 => unassigned[ti] += 1,
            yi if yi <= l => confusion[ti][yi - 1] += 1,
            _ => {
                return Err(Error::InvalidData(format!(
                    "predicted label {y} exceeds the class count {l}"
                )))
            }
        }
    }
    let eligible: u64 = confusion.iter().flatten().sum::<u64>() + unassigned.iter().sum::<u64>();
    if eligible == 0 {
        return Err(Error::InvalidData("no eligible pixels to score".into()));
    }
    let correct: u64 = (0..l).map(|c| confusion[c][c]).sum();
    let per_class: Vec<Option<f64>> = (0..l)
        .map(|c| {
            let total = confusion[c].iter().sum::<u64>() + unassigned[c];
            (total > 0).then(|| 100.0 * confusion[c][c] as f64 / total as f64)
        })
        .collect();
    let scored: Vec<f64> = per_class.iter().flatten().copied().collect();
    let skipped = l - scored.len();
    if skipped > 0 {
        log::warn!("{skipped} class(es) have no eligible pixels and are left out of the average accuracy");
    }
    Ok(AccuracyReport {
        overall: 100.0 * correct as f64 / eligible as f64,
        average: scored.iter().sum::<f64>() / scored.len() as f64,
        per_class,
        confusion,
        unassigned,
        eligible,
    })
}

/// Percentage of eligible pixels labeled correctly.
pub fn overall_accuracy(pred: &LabelMap, truth: &LabelMask, exclude: &ReferenceSet) -> Result<f64> {
    accuracy_report(pred, truth, exclude).map(|r| r.overall)
}

/// Mean per-class recall, in percent, over classes with eligible pixels.
pub fn average_accuracy(pred: &LabelMap, truth: &LabelMask, exclude: &ReferenceSet) -> Result<f64> {
    accuracy_report(pred, truth, exclude).map(|r| r.average)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty_refs() -> ReferenceSet {
        ReferenceSet::from_entries(vec![], 0.1, 0).unwrap()
    }

    #[test]
    fn one_dimensional_nearest_reference() {
        let coords = ManifoldCoords::from_rows(&[vec![0.0, 1.0, 2.0, 10.0]]).unwrap();
        let refs = ReferenceSet::from_entries(vec![(0, 1), (3, 2)], 0.5, 0).unwrap();
        let map = nn_classify(&coords, &refs, 1, 4, 2).unwrap();
        assert_eq!(map.labels(), &[1, 1, 1, 2]);
    }

    #[test]
    fn single_reference_labels_everything() {
        let coords = ManifoldCoords::from_rows(&[vec![0.3, -1.0, 5.0], vec![1.0, 2.0, 3.0]]).unwrap();
        let refs = ReferenceSet::from_entries(vec![(1, 4)], 0.5, 0).unwrap();
        let map = nn_classify(&coords, &refs, 1, 3, 4).unwrap();
        assert_eq!(map.labels(), &[4, 4, 4]);
        assert!(nn_classify(&coords, &empty_refs(), 1, 3, 4).is_err());
    }

    #[test]
    fn ties_prefer_smaller_reference_index() {
        let coords = ManifoldCoords::from_rows(&[vec![-1.0, 0.0, 1.0]]).unwrap();
        let refs = ReferenceSet::from_entries(vec![(2, 2), (0, 1)], 0.5, 0).unwrap();
        let map = nn_classify(&coords, &refs, 1, 3, 2).unwrap();
        assert_eq!(map.get(1), 1);
    }

    /// Builds truth/pred pairs realizing a given confusion matrix.
    fn from_confusion(conf: &[[usize; 3]; 3]) -> (LabelMap, LabelMask) {
        let mut t = Vec::new();
        let mut p = Vec::new();
        for (ti, row) in conf.iter().enumerate() {
            for (pi, &count) in row.iter().enumerate() {
                for _ in 0..count {
                    t.push(ti as Label + 1);
                    p.push(pi as Label + 1);
                }
            }
        }
        let n = t.len();
        (LabelMap::new(1, n, 3, p).unwrap(), LabelMask::new(1, n, t).unwrap())
    }

    #[test]
    fn toy_confusion_metrics() {
        let (pred, truth) = from_confusion(&[[2, 1, 0], [0, 3, 0], [1, 0, 3]]);
        let r = accuracy_report(&pred, &truth, &empty_refs()).unwrap();
        assert!((r.overall - 80.0).abs() < 1e-12);
        let aa = (2.0 / 3.0 + 1.0 + 0.75) / 3.0 * 100.0;
        assert!((r.average - aa).abs() < 1e-12);
        assert!((r.average - 80.56).abs() < 0.01);
        assert_eq!(r.confusion[2], vec![1, 0, 3]);
    }

    #[test]
    fn perfect_and_half() {
        let truth = LabelMask::new(1, 4, vec![1, 1, 2, 2]).unwrap();
        let perfect = LabelMap::new(1, 4, 2, vec![1, 1, 2, 2]).unwrap();
        assert_eq!(overall_accuracy(&perfect, &truth, &empty_refs()).unwrap(), 100.0);
        assert_eq!(average_accuracy(&perfect, &truth, &empty_refs()).unwrap(), 100.0);
        let half = LabelMap::new(1, 4, 2, vec![1, 1, 1, 1]).unwrap();
        assert_eq!(overall_accuracy(&half, &truth, &empty_refs()).unwrap(), 50.0);
        assert_eq!(average_accuracy(&half, &truth, &empty_refs()).unwrap(), 50.0);
    }

    #[test]
    fn references_and_unlabeled_are_excluded() {
        let truth = LabelMask::new(1, 4, vec![0, 1, 2, 2]).unwrap();
        let pred = LabelMap::new(1, 4, 2, vec![2, 2, 2, 2]).unwrap();
        let refs = ReferenceSet::from_entries(vec![(1, 1)], 0.5, 0).unwrap();
        let r = accuracy_report(&pred, &truth, &refs).unwrap();
        assert_eq!(r.eligible, 2);
        assert_eq!(r.overall, 100.0);
        assert_eq!(r.per_class[0], None);
        let all = ReferenceSet::from_entries(vec![(1, 1), (2, 2), (3, 2)], 0.5, 0).unwrap();
        assert!(accuracy_report(&pred, &truth, &all).is_err());
    }

    #[test]
    fn clutter_predictions_count_as_misses() {
        let truth = LabelMask::new(1, 2, vec![1, 1]).unwrap();
        let pred = LabelMap::new(1, 2, 1, vec![0, 1]).unwrap();
        let r = accuracy_report(&pred, &truth, &empty_refs()).unwrap();
        assert_eq!(r.overall, 50.0);
        assert_eq!(r.unassigned, vec![1]);
    }
}
