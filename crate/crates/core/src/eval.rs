//! Per-class average precision at IoU 0.5.
//!
//! Predictions of a class are ranked by confidence (ties: larger instance,
//! then smaller id) and greedily matched to the unmatched ground-truth
//! instance of the same class with the highest IoU. A match at IoU ≥ 0.5 is a
//! true positive, anything else a false positive. AP is the area under the
//! precision-recall curve after replacing each precision by the maximum
//! precision at any equal or higher recall.
//!
//! Unannotated vertices (ground-truth instance 0) take no part in IoU.

use std::fmt::Write as _;

use rustc_hash::FxHashMap;

use crate::classes::ClassTable;
use crate::error::{Error, Result};
use crate::instance::InstanceSegmentation;
use crate::mesh::LabelSet;

pub const IOU_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct ClassReport {
    pub class_id: u32,
    pub name: String,
    /// `None` when the class has no ground-truth instance.
    pub ap: Option<f64>,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub classes: Vec<ClassReport>,
    /// Mean over classes with a defined AP; `None` if there are none.
    pub mean_ap: Option<f64>,
}

impl EvalReport {
    pub fn class(&self, class_id: u32) -> Option<&ClassReport> {
        self.classes.iter().find(|c| c.class_id == class_id)
    }

    /// `class_name AP` rows followed by `mean AP`.
    pub fn table(&self) -> String {
        let width = self
            .classes
            .iter()
            .map(|c| c.name.len())
            .max()
            .unwrap_or(0)
            .max(7);
        let mut out = String::new();
        for c in &self.classes {
            let ap = c.ap.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
            let _ = writeln!(out, "{:<width$} {ap}", c.name);
        }
        let mean = self
            .mean_ap
            .map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
        let _ = writeln!(out, "{:<width$} {mean}", "mean AP");
        out
    }

    /// `<class_id> <AP>` lines, `nan` for undefined classes.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for c in &self.classes {
            match c.ap {
                Some(v) => {
                    let _ = writeln!(out, "{} {v}", c.class_id);
                }
                None => {
                    let _ = writeln!(out, "{} nan", c.class_id);
                }
            }
        }
        out
    }
}

/// Area under the interpolated precision-recall curve for a ranked list of
/// hits (`true` = TP) against `num_gt` ground-truth instances.
pub fn average_precision(hits: &[bool], num_gt: usize) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    let mut recall = Vec::with_capacity(hits.len() + 2);
    let mut precision = Vec::with_capacity(hits.len() + 2);
    recall.push(0.0);
    precision.push(0.0);
    let mut tp = 0usize;
    for (k, &hit) in hits.iter().enumerate() {
        tp += hit as usize;
        recall.push(tp as f64 / num_gt as f64);
        precision.push(tp as f64 / (k + 1) as f64);
    }
    recall.push(1.0);
    precision.push(0.0);
    for i in (0..precision.len() - 1).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    (1..recall.len())
        .filter(|&i| recall[i] != recall[i - 1])
        .map(|i| (recall[i] - recall[i - 1]) * precision[i])
        .sum()
}

pub fn evaluate(pred: &InstanceSegmentation, gt: &LabelSet, classes: &ClassTable) -> Result<EvalReport> {
    if pred.point_instance.len() != gt.len() {
        return Err(Error::Alignment {
            expected: gt.len(),
            found: pred.point_instance.len(),
        });
    }
    if let Some(bad) = pred
        .instances
        .iter()
        .flat_map(|i| &i.members)
        .find(|&&m| m as usize >= gt.len())
    {
        return Err(Error::Validation(format!("predicted member {bad} out of range")));
    }
    let gt_instances = gt.instances();
    let mut reports = Vec::new();
    for class in classes.instance_classes() {
        let gts: Vec<&Vec<u32>> = gt_instances
            .iter()
            .filter(|(_, c, _)| *c == class.id)
            .map(|(_, _, m)| m)
            .collect();
        let mut owner: FxHashMap<u32, usize> = FxHashMap::default();
        for (g, members) in gts.iter().enumerate() {
            for &v in members.iter() {
                owner.insert(v, g);
            }
        }

        let mut preds: Vec<_> = pred.instances.iter().filter(|i| i.class_id == class.id).collect();
        preds.sort_by(|a, b| {
            b.confidence
                .total_cmp(&a.confidence)
                .then(b.members.len().cmp(&a.members.len()))
                .then(a.id.cmp(&b.id))
        });

        let mut matched = vec![false; gts.len()];
        let mut hits = Vec::with_capacity(preds.len());
        for p in preds {
            let mut overlap: FxHashMap<usize, usize> = FxHashMap::default();
            let mut annotated = 0usize;
            for &v in &p.members {
                if gt.instance[v as usize] == 0 {
                    continue;
                }
                annotated += 1;
                if let Some(&g) = owner.get(&v) {
                    *overlap.entry(g).or_default() += 1;
                }
            }
            let mut best: Option<(f64, usize)> = None;
            for g in 0..gts.len() {
                if matched[g] {
                    continue;
                }
                let inter = overlap.get(&g).copied().unwrap_or(0);
                let union = annotated + gts[g].len() - inter;
                let iou = if union == 0 {
                    0.0
                } else {
                    inter as f64 / union as f64
                };
                if best.is_none_or(|(b, _)| iou > b) {
                    best = Some((iou, g));
                }
            }
            match best {
                Some((iou, g)) if iou >= IOU_THRESHOLD => {
                    matched[g] = true;
                    hits.push(true);
                }
                _ => hits.push(false),
            }
        }
        let tp = hits.iter().filter(|&&h| h).count();
        reports.push(ClassReport {
            class_id: class.id,
            name: class.name.clone(),
            ap: (!gts.is_empty()).then(|| average_precision(&hits, gts.len())),
            true_positives: tp,
            false_positives: hits.len() - tp,
            false_negatives: gts.len() - tp,
        });
    }
    let defined: Vec<f64> = reports.iter().filter_map(|r| r.ap).collect();
    let mean_ap = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(EvalReport {
        classes: reports,
        mean_ap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CHAIR: u32 = 5;

    fn gt(instances: &[u32]) -> LabelSet {
        LabelSet::new(vec![CHAIR; instances.len()], instances.to_vec()).unwrap()
    }

    fn seg(n: usize, preds: &[(f64, Vec<u32>)]) -> InstanceSegmentation {
        let mut s = InstanceSegmentation::empty(n);
        for (conf, members) in preds {
            s.push(CHAIR, *conf, members.clone());
        }
        s
    }

    fn chair_ap(pred: &InstanceSegmentation, labels: &LabelSet) -> Option<f64> {
        evaluate(pred, labels, &ClassTable::default())
            .unwrap()
            .class(CHAIR)
            .unwrap()
            .ap
    }

    #[test]
    fn perfect_prediction() {
        let labels = gt(&[1, 1, 1, 1, 0]);
        assert_eq!(chair_ap(&seg(5, &[(0.9, vec![0, 1, 2, 3])]), &labels), Some(1.0));
    }

    #[test]
    fn half_recall() {
        let labels = gt(&[1, 1, 2, 2]);
        assert_eq!(chair_ap(&seg(4, &[(0.9, vec![0, 1])]), &labels), Some(0.5));
    }

    #[test]
    fn duplicate_after_true_positive() {
        // IoU 3/5 = 0.6 for both predictions; vertex 4 belongs to a wall
        let mut labels2 = gt(&[1, 1, 1, 1, 2, 0, 0, 0]);
        labels2.semantic[4] = 1;
        let p2 = seg(8, &[(0.9, vec![0, 1, 2, 4]), (0.1, vec![1, 2, 3, 4])]);
        let report = evaluate(&p2, &labels2, &ClassTable::default()).unwrap();
        let chair = report.class(CHAIR).unwrap();
        assert_eq!(chair.ap, Some(1.0));
        assert_eq!(
            (chair.true_positives, chair.false_positives, chair.false_negatives),
            (1, 1, 0)
        );
    }

    #[test]
    fn unannotated_vertices_do_not_count() {
        // prediction spills over unannotated vertices; IoU stays 1
        let labels = gt(&[1, 1, 0, 0, 0, 0]);
        assert_eq!(
            chair_ap(&seg(6, &[(0.5, vec![0, 1, 2, 3, 4, 5])]), &labels),
            Some(1.0)
        );
    }

    #[test]
    fn absent_class_is_undefined_and_excluded_from_mean() {
        let labels = gt(&[1, 1, 1]);
        let report = evaluate(&seg(3, &[(1.0, vec![0, 1, 2])]), &labels, &ClassTable::default()).unwrap();
        assert_eq!(report.class(7).unwrap().ap, None);
        assert_eq!(report.mean_ap, Some(1.0));
        assert!(report.table().contains("mean AP"));
        assert!(report.dump().contains("7 nan"));
    }

    #[test]
    fn misaligned_inputs() {
        assert!(matches!(
            evaluate(&seg(3, &[]), &gt(&[1, 1]), &ClassTable::default()),
            Err(Error::Alignment { .. })
        ));
    }

    #[test]
    fn ap_curve_shapes() {
        assert_eq!(average_precision(&[], 3), 0.0);
        assert_eq!(average_precision(&[false, true], 1), 0.5);
        // TP FP TP with 2 GT: 0.5*1 + 0.5*(2/3)
        assert!((average_precision(&[true, false, true], 2) - (0.5 + 1.0 / 3.0)).abs() < 1e-15);
    }
}
