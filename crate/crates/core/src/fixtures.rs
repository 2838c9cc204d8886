//! Small hand-built credit example: three features (age, job, income), a
//! known decision tree over them, and an applicant to explain.
//!
//! ```text
//! age <= 25
//!   job = clerk:  income <= 900 -> deny,  else grant
//!   job = other:  age <= 17     -> deny,  else grant
//! age > 25
//!   income <= 1500: job = clerk -> deny,  job = other -> grant
//!   income > 1500:  grant
//! ```

use crate::data::{build_empirical_distributions, Dataset, FeatureSchema, FeatureValue, Instance};
use crate::tree::{DecisionTree, NodeSpec};

pub const AGE: usize = 0;
pub const JOB: usize = 1;
pub const INCOME: usize = 2;
pub const CLERK: usize = 0;
pub const OTHER: usize = 1;

pub fn credit_schema() -> FeatureSchema {
    FeatureSchema::from_json(
        r#"{"features":[
            {"name":"age","kind":"continuous","min":16,"max":80},
            {"name":"job","kind":"categorical","values":["clerk","other"]},
            {"name":"income","kind":"continuous","min":0,"max":5000}
        ],"target":{"name":"decision","labels":["deny","grant"]}}"#,
    )
    .expect("fixture schema parses")
}

pub fn credit_tree_spec() -> NodeSpec {
    use NodeSpec::*;
    let t = |feature, threshold, le, gt| Threshold {
        feature,
        threshold,
        le: Box::new(le),
        gt: Box::new(gt),
    };
    let job = |clerk, other| Categorical {
        feature: JOB,
        branches: vec![(CLERK, clerk), (OTHER, other)],
    };
    t(
        AGE,
        25.0,
        job(t(INCOME, 900.0, Leaf(0), Leaf(1)), t(AGE, 17.0, Leaf(0), Leaf(1))),
        t(INCOME, 1500.0, job(Leaf(0), Leaf(1)), Leaf(1)),
    )
}

pub fn credit_tree() -> DecisionTree {
    DecisionTree::from_spec(&credit_tree_spec())
}

pub fn applicant(age: f64, job: usize, income: f64) -> Instance {
    Instance::new(vec![
        FeatureValue::Number(age),
        FeatureValue::Category(job),
        FeatureValue::Number(income),
    ])
}

/// `{age = 22, job = clerk, income = 800}`, denied by [`credit_tree`].
pub fn credit_instance() -> Instance {
    applicant(22.0, CLERK, 800.0)
}

/// A grid of applicants spanning the fixture's feature space, labeled by
/// [`credit_tree`].
pub fn credit_dataset() -> Dataset {
    let tree = credit_tree();
    let mut rows = Vec::new();
    for age in [16.0, 18.0, 20.0, 22.0, 24.0, 27.0, 31.0, 38.0, 45.0, 60.0] {
        for job in [CLERK, OTHER] {
            for income in [300.0, 700.0, 850.0, 950.0, 1200.0, 1400.0, 1700.0, 2500.0] {
                rows.push(applicant(age, job, income));
            }
        }
    }
    let labels = rows.iter().map(|x| Some(tree.predict(x))).collect();
    Dataset::new(credit_schema(), rows, labels)
}

pub fn credit_schema_with_empirical() -> FeatureSchema {
    build_empirical_distributions(&credit_dataset()).expect("fixture dataset is non-empty")
}
