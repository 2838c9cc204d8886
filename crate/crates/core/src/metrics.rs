//! Agreement measures between the surrogate and the black box, and their
//! aggregation over many explained instances.
//!
//! The f1 score treats label index 1 (the second schema label) as the
//! positive class. Measures that are undefined for an instance (an empty
//! cover, no counterfactual) are `None` and skipped when aggregating.

use serde::Serialize;
use thiserror::Error;

use crate::blackbox::{BlackBox, BlackBoxError};
use crate::data::{Instance, Label};
use crate::explanation::Explanation;
use crate::genetic::Neighborhood;
use crate::rules::{Premise, Rule};
use crate::tree::DecisionTree;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("label lists differ in length: {predicted} predicted, {reference} reference")]
    LengthMismatch { predicted: usize, reference: usize },
    #[error("cannot score empty label lists")]
    Empty,
}

/// Binary f1 of `predicted` against `reference` with label 1 as positive.
/// Lists without any positive on either side score 1.0.
pub fn f1(predicted: &[Label], reference: &[Label]) -> Result<f64, MetricError> {
    if predicted.len() != reference.len() {
        return Err(MetricError::LengthMismatch {
            predicted: predicted.len(),
            reference: reference.len(),
        });
    }
    if predicted.is_empty() {
        return Err(MetricError::Empty);
    }
    let (mut tp, mut fp, mut fnn) = (0usize, 0usize, 0usize);
    for (&p, &r) in predicted.iter().zip(reference) {
        match (p == 1, r == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fnn += 1,
            (false, false) => {}
        }
    }
    if tp + fp + fnn == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * tp as f64 / (2 * tp + fp + fnn) as f64)
}

/// 1.0 when the surrogate reproduces the black-box label of `x`.
pub fn hit(c: &DecisionTree, bx: Label, x: &Instance) -> f64 {
    f64::from(u8::from(c.predict(x) == bx))
}

fn f1_on<'a>(c: &DecisionTree, z: impl Iterator<Item = (&'a Instance, &'a Label)>) -> Option<f64> {
    let (pred, reference): (Vec<Label>, Vec<Label>) = z.map(|(inst, &l)| (c.predict(inst), l)).unzip();
    f1(&pred, &reference).ok()
}

/// f1 between surrogate and black box over the whole neighborhood.
pub fn fidelity(c: &DecisionTree, z: &Neighborhood) -> Option<f64> {
    f1_on(c, z.instances.iter().zip(&z.labels))
}

/// Fidelity restricted to neighbors satisfying `premise`; `None` when no
/// neighbor does.
pub fn l_fidelity(c: &DecisionTree, z: &Neighborhood, premise: &Premise) -> Option<f64> {
    f1_on(c, z.instances.iter().zip(&z.labels).filter(|(inst, _)| premise.satisfied_by(inst)))
}

/// Fidelity over neighbors covered by at least one of `rules`.
pub fn cl_fidelity(c: &DecisionTree, z: &Neighborhood, rules: &[Rule]) -> Option<f64> {
    f1_on(
        c,
        z.instances
            .iter()
            .zip(&z.labels)
            .filter(|(inst, _)| rules.iter().any(|r| r.premise.satisfied_by(inst))),
    )
}

/// Fraction of counterfactual instances whose black-box label equals the
/// outcome of their rule; `None` without counterfactuals.
pub fn c_hit(bb: &BlackBox, explanation: &Explanation) -> Result<Option<f64>, BlackBoxError> {
    let (xs, outcomes): (Vec<Instance>, Vec<Label>) = explanation
        .counterfactuals
        .iter()
        .map(|cf| (cf.instance.clone(), cf.rule.outcome))
        .unzip();
    c_hit_labels(&bb.predict_batch(&xs)?, &outcomes).map_or(Ok(None), |v| Ok(Some(v)))
}

/// Mean agreement of black-box labels with the expected outcomes.
pub fn c_hit_labels(observed: &[Label], expected: &[Label]) -> Option<f64> {
    if expected.is_empty() || observed.len() != expected.len() {
        return None;
    }
    let agree = observed.iter().zip(expected).filter(|(a, b)| a == b).count();
    Some(agree as f64 / expected.len() as f64)
}

/// Scores of one explained instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRecord {
    pub index: usize,
    pub hit: f64,
    pub fidelity: Option<f64>,
    pub l_fidelity: Option<f64>,
    pub c_hit: Option<f64>,
    pub cl_fidelity: Option<f64>,
    pub tree_depth: usize,
    pub premise_length: usize,
    /// Falsified conditions of the counterfactual rules, when any exist.
    pub nf: Option<usize>,
    pub counterfactual_rules: usize,
}

/// Mean and population standard deviation of the defined values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
    pub skipped: usize,
}

impl Aggregate {
    pub fn of(values: impl IntoIterator<Item = Option<f64>>) -> Aggregate {
        let mut defined = Vec::new();
        let mut skipped = 0;
        for v in values {
            match v {
                Some(v) => defined.push(v),
                None => skipped += 1,
            }
        }
        let count = defined.len();
        if count == 0 {
            return Aggregate {
                mean: f64::NAN,
                std: f64::NAN,
                count,
                skipped,
            };
        }
        let mean = defined.iter().sum::<f64>() / count as f64;
        let var = defined.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count as f64;
        Aggregate {
            mean,
            std: var.sqrt(),
            count,
            skipped,
        }
    }

    /// `mean ± std`, or `n/a` when nothing was defined.
    pub fn display(&self) -> String {
        if self.count == 0 {
            "n/a".into()
        } else {
            format!("{:.3} ± {:.3}", self.mean, self.std)
        }
    }
}

/// Column names of [`Summary`], in report order.
pub const SUMMARY_COLUMNS: [&str; 8] = [
    "hit",
    "fidelity",
    "l_fidelity",
    "c_hit",
    "cl_fidelity",
    "tree_depth",
    "premise_length",
    "nf",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub instances: usize,
    pub hit: Aggregate,
    pub fidelity: Aggregate,
    pub l_fidelity: Aggregate,
    pub c_hit: Aggregate,
    pub cl_fidelity: Aggregate,
    pub tree_depth: Aggregate,
    pub premise_length: Aggregate,
    pub nf: Aggregate,
}

impl Summary {
    pub fn of(records: &[EvalRecord]) -> Summary {
        let agg = |f: &dyn Fn(&EvalRecord) -> Option<f64>| Aggregate::of(records.iter().map(f));
        Summary {
            instances: records.len(),
            hit: agg(&|r| Some(r.hit)),
            fidelity: agg(&|r| r.fidelity),
            l_fidelity: agg(&|r| r.l_fidelity),
            c_hit: agg(&|r| r.c_hit),
            cl_fidelity: agg(&|r| r.cl_fidelity),
            tree_depth: agg(&|r| Some(r.tree_depth as f64)),
            premise_length: agg(&|r| Some(r.premise_length as f64)),
            nf: agg(&|r| r.nf.map(|n| n as f64)),
        }
    }

    /// Aggregates in [`SUMMARY_COLUMNS`] order.
    pub fn columns(&self) -> [&Aggregate; 8] {
        [
            &self.hit,
            &self.fidelity,
            &self.l_fidelity,
            &self.c_hit,
            &self.cl_fidelity,
            &self.tree_depth,
            &self.premise_length,
            &self.nf,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureValue;
    use crate::rules::{Interval, SplitCondition};
    use crate::tree::NodeSpec;

    #[test]
    fn f1_reference_values() {
        assert_eq!(f1(&[0, 1, 1, 0], &[0, 1, 1, 0]).unwrap(), 1.0);
        assert!((f1(&[1, 1, 1, 1], &[1, 1, 0, 0]).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(f1(&[1, 0], &[0, 1]).unwrap(), 0.0);
        assert_eq!(f1(&[0, 0], &[0, 0]).unwrap(), 1.0);
        assert_eq!(
            f1(&[0], &[0, 1]),
            Err(MetricError::LengthMismatch {
                predicted: 1,
                reference: 2
            })
        );
        assert_eq!(f1(&[], &[]), Err(MetricError::Empty));
    }

    fn num(v: f64) -> Instance {
        Instance::new(vec![FeatureValue::Number(v)])
    }

    // v <= 5 -> 0, else 1
    fn stump() -> DecisionTree {
        DecisionTree::from_spec(&NodeSpec::Threshold {
            feature: 0,
            threshold: 5.0,
            le: Box::new(NodeSpec::Leaf(0)),
            gt: Box::new(NodeSpec::Leaf(1)),
        })
    }

    #[test]
    fn neighborhood_measures() {
        let c = stump();
        let z = Neighborhood::new(
            vec![num(1.0), num(2.0), num(6.0), num(7.0), num(8.0), num(3.0)],
            vec![0, 1, 1, 1, 0, 0],
            "fixture",
        );
        // c: 0 0 1 1 1 0 vs b: 0 1 1 1 0 0 -> tp 2, fp 1, fn 1
        assert!((fidelity(&c, &z).unwrap() - 4.0 / 6.0).abs() < 1e-12);
        let left = Premise::from_conditions(vec![SplitCondition::interval(0, Interval::at_most(5.0))]);
        // covered: 1,2,3 -> c 0 0 0, b 0 1 0 -> tp 0, fn 1
        assert_eq!(l_fidelity(&c, &z, &left).unwrap(), 0.0);
        let right = Rule::new(
            Premise::from_conditions(vec![SplitCondition::interval(0, Interval::greater_than(5.0))]),
            1,
        );
        // covered: 6,7,8 -> c 1 1 1, b 1 1 0 -> 2tp / (4 + 1)
        assert!((cl_fidelity(&c, &z, &[right]).unwrap() - 0.8).abs() < 1e-12);
        let nowhere = Premise::from_conditions(vec![SplitCondition::interval(0, Interval::greater_than(100.0))]);
        assert_eq!(l_fidelity(&c, &z, &nowhere), None);
        assert_eq!(cl_fidelity(&c, &z, &[]), None);
    }

    #[test]
    fn hit_and_c_hit() {
        let c = stump();
        assert_eq!(hit(&c, 0, &num(2.0)), 1.0);
        assert_eq!(hit(&c, 1, &num(2.0)), 0.0);
        assert_eq!(c_hit_labels(&[1, 0, 1], &[1, 1, 1]), Some(2.0 / 3.0));
        assert_eq!(c_hit_labels(&[], &[]), None);
    }

    #[test]
    fn aggregation_skips_undefined() {
        let a = Aggregate::of([Some(1.0), None, Some(0.0), Some(0.5)]);
        assert_eq!(a.count, 3);
        assert_eq!(a.skipped, 1);
        assert!((a.mean - 0.5).abs() < 1e-12);
        assert!((a.std - (1.0f64 / 6.0).sqrt()).abs() < 1e-12);
        assert_eq!(a.display(), "0.500 ± 0.408");
        let none = Aggregate::of([None, None]);
        assert_eq!((none.count, none.skipped), (0, 2));
        assert_eq!(none.display(), "n/a");
    }
}
