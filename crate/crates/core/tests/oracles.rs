//! Explanations and metrics checked against hand values and direct
//! recomputation on random trees.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use localrules::blackbox::BlackBox;
use localrules::data::{FeatureSchema, FeatureValue, Instance};
use localrules::distance::DistanceKind;
use localrules::explanation::{explain_with_tree, extract_rule};
use localrules::fixtures::{self, CLERK, OTHER};
use localrules::genetic::Neighborhood;
use localrules::metrics::{c_hit, fidelity, l_fidelity};
use localrules::rules::satisfies;
use localrules::tree::{DecisionTree, NodeSpec, TreeParams};

fn mixed_schema() -> FeatureSchema {
    FeatureSchema::from_json(
        r#"{"features":[
            {"name":"a","kind":"continuous","min":0,"max":10},
            {"name":"b","kind":"categorical","values":["p","q","r"]},
            {"name":"c","kind":"continuous","min":0,"max":10},
            {"name":"d","kind":"categorical","values":["s","t"]}
        ],"target":{"name":"y","labels":["n","y"]}}"#,
    )
    .unwrap()
}

// Every leaf is reachable: thresholds fall strictly inside the interval
// already imposed on their feature along the path.
fn random_spec(rng: &mut ChaCha8Rng, depth: usize, used: &mut Vec<usize>, bounds: [(f64, f64); 2]) -> NodeSpec {
    if depth == 0 || rng.gen_bool(0.25) {
        return NodeSpec::Leaf(rng.gen_range(0..2));
    }
    let feature = rng.gen_range(0..4);
    if (feature == 1 || feature == 3) && !used.contains(&feature) {
        let arity = if feature == 1 { 3 } else { 2 };
        used.push(feature);
        let branches = (0..arity).map(|c| (c, random_spec(rng, depth - 1, used, bounds))).collect();
        used.pop();
        return NodeSpec::Categorical { feature, branches };
    }
    let slot = usize::from(rng.gen_bool(0.5));
    let (lo, hi) = bounds[slot];
    let grid: Vec<f64> = (0..=20).map(|t| t as f64 / 2.0).filter(|&t| t > lo && t < hi).collect();
    if grid.is_empty() {
        return NodeSpec::Leaf(rng.gen_range(0..2));
    }
    let threshold = grid[rng.gen_range(0..grid.len())];
    let (mut left, mut right) = (bounds, bounds);
    left[slot].1 = threshold;
    right[slot].0 = threshold;
    NodeSpec::Threshold {
        feature: slot * 2,
        threshold,
        le: Box::new(random_spec(rng, depth - 1, used, left)),
        gt: Box::new(random_spec(rng, depth - 1, used, right)),
    }
}

fn random_tree(rng: &mut ChaCha8Rng, depth: usize) -> DecisionTree {
    DecisionTree::from_spec(&random_spec(rng, depth, &mut Vec::new(), [(-0.5, 10.5); 2]))
}

fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    Instance::new(vec![
        FeatureValue::Number(rng.gen_range(0.0..=10.0)),
        FeatureValue::Category(rng.gen_range(0..3)),
        FeatureValue::Number(rng.gen_range(0.0..=10.0)),
        FeatureValue::Category(rng.gen_range(0..2)),
    ])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn rule_covers_x_and_matches_the_prediction(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = random_tree(&mut rng, 6);
        let x = random_instance(&mut rng);
        let r = extract_rule(&tree, &x);
        prop_assert!(satisfies(&x, &r.premise));
        prop_assert_eq!(tree.predict(&x), r.outcome);
    }
}

#[test]
fn c_hit_matches_direct_recomputation() {
    let schema = mixed_schema();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut with_counterfactuals = 0;
    for _ in 0..300 {
        let c = random_tree(&mut rng, 5);
        let b_tree = random_tree(&mut rng, 5);
        let zs: Vec<Instance> = (0..40).map(|_| random_instance(&mut rng)).collect();
        let labels = zs.iter().map(|z| b_tree.predict(z)).collect();
        let z = Neighborhood::new(zs, labels, "random");
        let x = random_instance(&mut rng);
        let bb = BlackBox::new(b_tree.clone());
        let e = explain_with_tree(&x, b_tree.predict(&x), &c, &z, &schema, DistanceKind::Neuclid).unwrap();

        for q in &e.counterfactuals {
            assert!(satisfies(&q.instance, &q.rule.premise));
            assert_eq!(c.predict(&q.instance), q.rule.outcome);
        }
        let hits: Vec<f64> = e
            .counterfactuals
            .iter()
            .map(|q| f64::from(u8::from(b_tree.predict(&q.instance) == q.rule.outcome)))
            .collect();
        let want = (!hits.is_empty()).then(|| hits.iter().sum::<f64>() / hits.len() as f64);
        assert_eq!(c_hit(&bb, &e).unwrap(), want);
        with_counterfactuals += usize::from(want.is_some());
    }
    assert!(with_counterfactuals > 100);
}

#[test]
fn refitting_the_credit_grid_reproduces_its_tree() {
    let ds = fixtures::credit_dataset();
    let labels: Vec<_> = ds.labels.iter().map(|l| l.unwrap()).collect();
    let params = TreeParams {
        min_leaf: 1,
        ..TreeParams::default()
    };
    let fitted = DecisionTree::fit(&ds.schema, &ds.rows, &labels, params).unwrap();
    let reference = fixtures::credit_tree();
    for x in &ds.rows {
        assert_eq!(fitted.predict(x), reference.predict(x), "{x:?}");
    }
    let z = Neighborhood::new(ds.rows.clone(), labels, "credit");
    assert_eq!(fidelity(&fitted, &z), Some(1.0));
}

#[test]
fn l_fidelity_on_credit_leaves() {
    let ds = fixtures::credit_dataset();
    let c = fixtures::credit_tree();
    let leaves = c.enumerate_leaves(None);
    // leftmost leaf: age <= 25, job = clerk, income <= 900 -> deny (15 grid points)
    let (deny_leaf, _) = &leaves[0];
    // age in (17, 25], job = other -> grant (4 ages x 8 incomes = 32 grid points)
    let grant_leaf = &leaves
        .iter()
        .find(|(p, l)| *l == 1 && p.satisfied_by(&fixtures::applicant(20.0, OTHER, 300.0)))
        .unwrap()
        .0;
    let labeled = |b: &dyn Fn(&Instance) -> usize| {
        let labels = ds.rows.iter().map(b).collect();
        Neighborhood::new(ds.rows.clone(), labels, "credit")
    };
    let same = labeled(&|x| c.predict(x));
    assert_eq!(l_fidelity(&c, &same, deny_leaf), Some(1.0));
    assert_eq!(l_fidelity(&c, &same, grant_leaf), Some(1.0));

    // b grants clerks above 800: 5 of the 15 deny-leaf points flip, and c
    // predicts no positives there, so f1 = 0
    let generous = labeled(&|x| {
        if x.get(1).as_category() == CLERK && x.get(2).as_number() > 800.0 {
            1
        } else {
            c.predict(x)
        }
    });
    assert_eq!(l_fidelity(&c, &generous, deny_leaf), Some(0.0));

    // b denies incomes above 2000: 4 of the 32 grant-leaf points flip;
    // precision 28/32, recall 1, f1 = 56/60
    let strict = labeled(&|x| if x.get(2).as_number() > 2000.0 { 0 } else { c.predict(x) });
    let got = l_fidelity(&c, &strict, grant_leaf).unwrap();
    assert!((got - 56.0 / 60.0).abs() < 1e-12, "{got}");
}
