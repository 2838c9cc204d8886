//! Local explanations: the decision rule followed by the surrogate for `x`,
//! the minimal-change counterfactual rules, and concrete counterfactual
//! instances.

use std::fmt::Write as _;

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::blackbox::{BlackBox, BlackBoxError};
use crate::data::{DataError, FeatureSchema, FeatureValue, Instance, Label};
use crate::distance::DistanceKind;
use crate::genetic::{build_neighborhood, GaParams, Neighborhood, NeighborhoodStats};
use crate::metrics;
use crate::rules::{count_falsified, Interval, Premise, Rule, SplitCondition, SplitTest};
use crate::tree::{DecisionTree, TreeError, TreeParams};

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error(transparent)]
    BlackBox(#[from] BlackBoxError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("internal error: {0}")]
    Internal(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ExplainParams {
    pub ga: GaParams,
    pub distance: DistanceKind,
    pub tree: TreeParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Counterfactual {
    pub rule: Rule,
    /// Conditions of the rule falsified by the explained instance.
    pub nf: usize,
    pub instance: Instance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub fidelity: Option<f64>,
    pub l_fidelity: Option<f64>,
    pub premise_length: usize,
    pub tree_depth: usize,
    pub tree_leaves: usize,
    pub neighborhood: NeighborhoodStats,
    /// `false` only when `x` reached its leaf through an unseen category.
    pub rule_covers_x: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub instance: Instance,
    pub black_box_label: Label,
    pub rule: Rule,
    pub counterfactuals: Vec<Counterfactual>,
    pub diagnostics: Diagnostics,
}

impl Explanation {
    pub fn counterfactual_rules(&self) -> Vec<Rule> {
        self.counterfactuals.iter().map(|c| c.rule.clone()).collect()
    }

    pub fn min_nf(&self) -> Option<usize> {
        self.counterfactuals.first().map(|c| c.nf)
    }
}

/// An explanation together with the surrogate and neighborhood behind it.
#[derive(Debug, Clone)]
pub struct LocalModel {
    pub explanation: Explanation,
    pub tree: DecisionTree,
    pub neighborhood: Neighborhood,
}

/// Root-to-leaf premise of the leaf reached by `x`, with that leaf's label.
pub fn extract_rule(c: &DecisionTree, x: &Instance) -> Rule {
    let leaf = c.leaf_of(x);
    Rule::new(c.path_premise(leaf), c.leaf_label(leaf))
}

/// Opposite-label leaf premises with the fewest conditions falsified by
/// `x`, left to right.
pub fn extract_counterfactuals(c: &DecisionTree, r: &Rule, x: &Instance) -> Vec<Rule> {
    let candidates: Vec<(Premise, Label, usize)> = c
        .enumerate_leaves(None)
        .into_iter()
        .filter(|(_, label)| *label != r.outcome)
        .map(|(q, label)| {
            let nf = count_falsified(&q, x);
            (q, label, nf)
        })
        .collect();
    let Some(best) = candidates.iter().map(|(_, _, nf)| *nf).min() else {
        return Vec::new();
    };
    candidates
        .into_iter()
        .filter(|(_, _, nf)| *nf == best)
        .map(|(q, label, _)| Rule::new(q, label))
        .collect()
}

fn move_inside(iv: &Interval, v: f64, eps: f64) -> f64 {
    if iv.contains(v) {
        return v;
    }
    let below = v < iv.lower || (v == iv.lower && !iv.lower_closed);
    let (bound, closed, step, nudge): (f64, bool, f64, fn(f64) -> f64) = if below {
        (iv.lower, iv.lower_closed, eps, f64::next_up)
    } else {
        (iv.upper, iv.upper_closed, -eps, f64::next_down)
    };
    let candidates = [
        if closed { bound } else { bound + step },
        if iv.lower.is_finite() && iv.upper.is_finite() {
            iv.lower + (iv.upper - iv.lower) / 2.0
        } else {
            f64::NAN
        },
        nudge(bound),
    ];
    candidates.into_iter().find(|&c| iv.contains(c)).unwrap_or(f64::NAN)
}

/// Copy of `x` adjusted to satisfy `q`'s premise with minimal change:
/// categorical conditions take the required value, continuous ones move to
/// the nearest violated bound (stepped inside by `1e-4 * range` when the
/// bound is open).
pub fn counterfactual_instance(q: &Rule, x: &Instance, schema: &FeatureSchema) -> Result<Instance, ExplainError> {
    let mut out = x.clone();
    for sc in q.premise.conditions() {
        if sc.holds(x) {
            continue;
        }
        match sc.test {
            SplitTest::Equals(c) => out.set(sc.feature, FeatureValue::Category(c)),
            SplitTest::Interval(iv) => {
                let eps = 1e-4 * schema.features[sc.feature].range();
                let v = move_inside(&iv, x.get(sc.feature).as_number(), eps);
                out.set(sc.feature, FeatureValue::Number(v));
            }
        }
    }
    if !q.premise.satisfied_by(&out) {
        return Err(ExplainError::Internal(format!(
            "no instance satisfies {}",
            q.premise.display(schema)
        )));
    }
    Ok(out)
}

/// Fits the surrogate on a labeled neighborhood.
pub fn fit_surrogate(schema: &FeatureSchema, z: &Neighborhood, params: TreeParams) -> Result<DecisionTree, TreeError> {
    DecisionTree::fit(schema, &z.instances, &z.labels, params)
}

/// Builds the explanation of `x` from an already trained surrogate.
pub fn explain_with_tree(
    x: &Instance,
    black_box_label: Label,
    tree: &DecisionTree,
    z: &Neighborhood,
    schema: &FeatureSchema,
    distance_kind: DistanceKind,
) -> Result<Explanation, ExplainError> {
    let rule = extract_rule(tree, x);
    let counterfactuals = extract_counterfactuals(tree, &rule, x)
        .into_iter()
        .map(|q| {
            let instance = counterfactual_instance(&q, x, schema)?;
            Ok(Counterfactual {
                nf: count_falsified(&q.premise, x),
                rule: q,
                instance,
            })
        })
        .collect::<Result<Vec<_>, ExplainError>>()?;
    let diagnostics = Diagnostics {
        fidelity: metrics::fidelity(tree, z),
        l_fidelity: metrics::l_fidelity(tree, z, &rule.premise),
        premise_length: rule.premise.len(),
        tree_depth: tree.depth(),
        tree_leaves: tree.leaf_count(),
        neighborhood: z.stats(x, black_box_label, schema, distance_kind),
        rule_covers_x: !tree.routes_through_fallback(x),
    };
    Ok(Explanation {
        instance: x.clone(),
        black_box_label,
        rule,
        counterfactuals,
        diagnostics,
    })
}

/// Full pipeline: genetic neighborhood, surrogate tree, rule and
/// counterfactuals.
pub fn explain(x: &Instance, bb: &BlackBox, schema: &FeatureSchema, params: &ExplainParams) -> Result<LocalModel, ExplainError> {
    schema.validate(x)?;
    let z = build_neighborhood(x, bb, &params.ga, schema, params.distance)?;
    let bx = bb.predict_one(x)?;
    explain_neighborhood(x, bx, z, schema, params)
}

/// Surrogate and explanation for a neighborhood produced elsewhere.
pub fn explain_neighborhood(
    x: &Instance,
    bx: Label,
    z: Neighborhood,
    schema: &FeatureSchema,
    params: &ExplainParams,
) -> Result<LocalModel, ExplainError> {
    let tree = fit_surrogate(schema, &z, params.tree)?;
    let explanation = explain_with_tree(x, bx, &tree, &z, schema, params.distance)?;
    Ok(LocalModel {
        explanation,
        tree,
        neighborhood: z,
    })
}

fn value_json(schema: &FeatureSchema, i: usize, v: &FeatureValue) -> Value {
    match v {
        FeatureValue::Category(c) => Value::String(schema.features[i].category_name(*c).to_string()),
        FeatureValue::Number(n) => json!(n),
    }
}

fn instance_json(schema: &FeatureSchema, x: &Instance) -> Value {
    let mut m = Map::new();
    for (i, v) in x.values().iter().enumerate() {
        m.insert(schema.features[i].name.clone(), value_json(schema, i, v));
    }
    Value::Object(m)
}

fn bound_json(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

fn condition_json(schema: &FeatureSchema, sc: &SplitCondition) -> Value {
    let spec = &schema.features[sc.feature];
    let mut m = Map::new();
    m.insert("feature".into(), json!(spec.name));
    match sc.test {
        SplitTest::Equals(c) => {
            m.insert("equals".into(), json!(spec.category_name(c)));
        }
        SplitTest::Interval(iv) => {
            m.insert("lower".into(), bound_json(iv.lower));
            m.insert("lower_inclusive".into(), json!(iv.lower_closed && iv.has_lower()));
            m.insert("upper".into(), bound_json(iv.upper));
            m.insert("upper_inclusive".into(), json!(iv.upper_closed && iv.has_upper()));
        }
    }
    m.insert("text".into(), json!(sc.display(schema).to_string()));
    Value::Object(m)
}

fn rule_json(schema: &FeatureSchema, r: &Rule) -> Value {
    json!({
        "premise": r.premise.conditions().iter().map(|sc| condition_json(schema, sc)).collect::<Vec<_>>(),
        "outcome": schema.label_name(r.outcome),
        "text": r.display(schema).to_string(),
    })
}

fn changes(schema: &FeatureSchema, x: &Instance, xp: &Instance) -> Vec<(usize, String, String)> {
    (0..x.len())
        .filter(|&i| x.get(i) != xp.get(i))
        .map(|i| (i, schema.format_value(i, x.get(i)), schema.format_value(i, xp.get(i))))
        .collect()
}

fn class_counts_json(schema: &FeatureSchema, counts: [usize; 2]) -> Value {
    let mut m = Map::new();
    for (l, c) in counts.iter().enumerate() {
        m.insert(schema.label_name(l).to_string(), json!(c));
    }
    Value::Object(m)
}

fn opt(v: Option<f64>) -> Value {
    v.map_or(Value::Null, |v| json!(v))
}

impl Explanation {
    /// Structured output document with stable field names.
    pub fn to_document(&self, schema: &FeatureSchema, index: Option<usize>) -> Value {
        let mut doc = Map::new();
        if let Some(i) = index {
            doc.insert("index".into(), json!(i));
        }
        doc.insert("instance".into(), instance_json(schema, &self.instance));
        doc.insert("black_box_label".into(), json!(schema.label_name(self.black_box_label)));
        doc.insert("rule".into(), rule_json(schema, &self.rule));
        let cfs: Vec<Value> = self
            .counterfactuals
            .iter()
            .map(|cf| {
                let mut changed = Map::new();
                for (i, _, _) in changes(schema, &self.instance, &cf.instance) {
                    changed.insert(schema.features[i].name.clone(), value_json(schema, i, cf.instance.get(i)));
                }
                json!({
                    "rule": rule_json(schema, &cf.rule),
                    "nf": cf.nf,
                    "instance": instance_json(schema, &cf.instance),
                    "changes": Value::Object(changed),
                })
            })
            .collect();
        doc.insert("counterfactuals".into(), Value::Array(cfs));
        let d = &self.diagnostics;
        let n = &d.neighborhood;
        doc.insert(
            "diagnostics".into(),
            json!({
                "fidelity": opt(d.fidelity),
                "l_fidelity": opt(d.l_fidelity),
                "premise_length": d.premise_length,
                "tree_depth": d.tree_depth,
                "tree_leaves": d.tree_leaves,
                "rule_covers_instance": d.rule_covers_x,
                "neighborhood": {
                    "size": n.size,
                    "class_counts": class_counts_json(schema, n.class_counts),
                    "same_label": n.same_label,
                    "mean_distance": n.mean_distance,
                },
            }),
        );
        Value::Object(doc)
    }

    /// Human-readable rendering.
    pub fn to_text(&self, schema: &FeatureSchema, index: Option<usize>) -> String {
        let mut s = String::new();
        match index {
            Some(i) => writeln!(s, "instance #{i}: {}", self.instance.display(schema)),
            None => writeln!(s, "instance: {}", self.instance.display(schema)),
        }
        .unwrap();
        writeln!(
            s,
            "black box: {} = {}",
            schema.target.name,
            schema.label_name(self.black_box_label)
        )
        .unwrap();
        writeln!(s, "rule: {}", self.rule.display(schema)).unwrap();
        if self.counterfactuals.is_empty() {
            writeln!(s, "counterfactuals: none").unwrap();
        } else {
            writeln!(s, "counterfactuals:").unwrap();
            for cf in &self.counterfactuals {
                writeln!(s, "  [nf = {}] {}", cf.nf, cf.rule.display(schema)).unwrap();
                let moved: Vec<String> = changes(schema, &self.instance, &cf.instance)
                    .into_iter()
                    .map(|(i, from, to)| format!("{}: {from} -> {to}", schema.features[i].name))
                    .collect();
                writeln!(s, "    change: {}", moved.join(", ")).unwrap();
            }
        }
        let d = &self.diagnostics;
        let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.3}"));
        writeln!(
            s,
            "diagnostics: fidelity {}, l-fidelity {}, premise length {}, tree depth {}, tree leaves {}",
            fmt(d.fidelity),
            fmt(d.l_fidelity),
            d.premise_length,
            d.tree_depth,
            d.tree_leaves
        )
        .unwrap();
        writeln!(
            s,
            "neighborhood: {} instances ({} {}, {} {}), mean distance {:.4}",
            d.neighborhood.size,
            schema.label_name(0),
            d.neighborhood.class_counts[0],
            schema.label_name(1),
            d.neighborhood.class_counts[1],
            d.neighborhood.mean_distance
        )
        .unwrap();
        if !d.rule_covers_x {
            writeln!(s, "note: instance reached its leaf through an unseen category").unwrap();
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::rules::satisfies;

    #[test]
    fn worked_example_rule() {
        let schema = fixtures::credit_schema();
        let tree = fixtures::credit_tree();
        let x = fixtures::credit_instance();
        let r = extract_rule(&tree, &x);
        assert_eq!(
            r.display(&schema).to_string(),
            "{age <= 25, job = clerk, income <= 900} -> decision = deny"
        );
        let phi = extract_counterfactuals(&tree, &r, &x);
        let texts: Vec<String> = phi.iter().map(|q| q.display(&schema).to_string()).collect();
        assert_eq!(
            texts,
            vec![
                "{age <= 25, job = clerk, income > 900} -> decision = grant",
                "{17 < age <= 25, job = other} -> decision = grant",
            ]
        );
    }

    #[test]
    fn worked_example_counterfactual_instances() {
        let schema = fixtures::credit_schema();
        let tree = fixtures::credit_tree();
        let x = fixtures::credit_instance();
        let r = extract_rule(&tree, &x);
        let phi = extract_counterfactuals(&tree, &r, &x);
        let eps = 1e-4 * schema.features[2].range();
        let x1 = counterfactual_instance(&phi[0], &x, &schema).unwrap();
        assert_eq!(x1, Instance::from_pairs(&schema, &[("age", "22"), ("job", "clerk"), ("income", &(900.0 + eps).to_string())]).unwrap());
        let x2 = counterfactual_instance(&phi[1], &x, &schema).unwrap();
        assert_eq!(x2, Instance::from_pairs(&schema, &[("age", "22"), ("job", "other"), ("income", "800")]).unwrap());
        assert_eq!(counterfactual_instance(&r, &x, &schema).unwrap(), x);
    }

    #[test]
    fn single_leaf_tree_gives_empty_premise() {
        let tree = DecisionTree::from_spec(&crate::tree::NodeSpec::Leaf(1));
        let x = fixtures::credit_instance();
        let r = extract_rule(&tree, &x);
        assert!(r.premise.is_empty());
        assert_eq!(r.outcome, 1);
        assert!(extract_counterfactuals(&tree, &r, &x).is_empty());
    }

    #[test]
    fn moving_inside_intervals() {
        let open = Interval::greater_than(900.0);
        assert_eq!(move_inside(&open, 800.0, 0.5), 900.5);
        let closed = Interval::at_most(25.0);
        assert_eq!(move_inside(&closed, 30.0, 0.5), 25.0);
        let narrow = Interval {
            lower: 1.0,
            lower_closed: false,
            upper: 1.1,
            upper_closed: true,
        };
        let v = move_inside(&narrow, 0.0, 5.0);
        assert!(narrow.contains(v));
        let zero_eps = move_inside(&Interval::greater_than(3.0), 1.0, 0.0);
        assert!(zero_eps > 3.0);
    }

    #[test]
    fn constant_black_box_has_no_counterfactuals() {
        let schema = fixtures::credit_schema_with_empirical();
        let x = fixtures::credit_instance();
        let bb = BlackBox::constant(1);
        let params = ExplainParams {
            ga: GaParams {
                population: 60,
                generations: 3,
                ..GaParams::default()
            },
            ..ExplainParams::default()
        };
        let m = explain(&x, &bb, &schema, &params).unwrap();
        assert!(m.explanation.rule.premise.is_empty());
        assert_eq!(m.explanation.rule.outcome, 1);
        assert!(m.explanation.counterfactuals.is_empty());
        assert_eq!(m.explanation.diagnostics.fidelity, Some(1.0));
    }

    #[test]
    fn pipeline_output_is_consistent() {
        let schema = fixtures::credit_schema_with_empirical();
        let x = fixtures::credit_instance();
        let bb = BlackBox::new(fixtures::credit_tree());
        let params = ExplainParams {
            ga: GaParams {
                population: 400,
                seed: 11,
                ..GaParams::default()
            },
            ..ExplainParams::default()
        };
        let m = explain(&x, &bb, &schema, &params).unwrap();
        let e = &m.explanation;
        assert!(satisfies(&x, &e.rule.premise));
        assert_eq!(m.tree.predict(&x), e.rule.outcome);
        for cf in &e.counterfactuals {
            assert_ne!(cf.rule.outcome, e.rule.outcome);
            assert!(satisfies(&cf.instance, &cf.rule.premise));
            assert_eq!(m.tree.predict(&cf.instance), cf.rule.outcome);
            assert_eq!(cf.nf, e.min_nf().unwrap());
        }
        let doc = e.to_document(&schema, Some(3));
        assert_eq!(doc["index"], 3);
        assert_eq!(doc["instance"]["job"], "clerk");
        let again = explain(&x, &bb, &schema, &params).unwrap();
        assert_eq!(
            serde_json::to_string(&doc).unwrap(),
            serde_json::to_string(&again.explanation.to_document(&schema, Some(3))).unwrap()
        );
    }
}
