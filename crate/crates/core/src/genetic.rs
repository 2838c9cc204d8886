//! Genetic neighborhood generation around the instance to explain.
//!
//! Two populations are evolved from copies of `x`: one rewarding instances
//! close to `x` with the same black-box outcome, one rewarding close
//! instances with the opposite outcome. Their union is the training set of
//! the local surrogate.

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::blackbox::{BlackBox, BlackBoxError};
use crate::data::{FeatureSchema, Instance, Label};
use crate::distance::{distance, DistanceKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaParams {
    /// Total neighborhood size; each of the two runs evolves half of it.
    pub population: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    /// Per-feature mutation probability.
    pub mutation_prob: f64,
    pub seed: u64,
}

impl Default for GaParams {
    fn default() -> Self {
        GaParams {
            population: 1000,
            generations: 10,
            crossover_prob: 0.5,
            mutation_prob: 0.2,
            seed: 0,
        }
    }
}

impl GaParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.population < 2 {
            return Err("population must be at least 2".into());
        }
        if self.generations < 1 {
            return Err("generations must be at least 1".into());
        }
        for (name, p) in [("crossover", self.crossover_prob), ("mutation", self.mutation_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} probability must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FitnessKind {
    /// Reward instances sharing `b(x)`.
    Same,
    /// Reward instances with the other outcome.
    Different,
}

/// `I_outcome + (1 - d) - I_{x = z}`.
pub fn fitness(kind: FitnessKind, x: &Instance, z: &Instance, bx: Label, bz: Label, d: f64) -> f64 {
    let outcome = match kind {
        FitnessKind::Same => bx == bz,
        FitnessKind::Different => bx != bz,
    };
    f64::from(u8::from(outcome)) + (1.0 - d) - f64::from(u8::from(x == z))
}

/// Swaps the value segment `[i, j)` between two parents, with cut points
/// `i < j` drawn from `0..=m`.
pub fn crossover_two_point<R: Rng + ?Sized>(a: &Instance, b: &Instance, rng: &mut R) -> (Instance, Instance) {
    let m = a.len();
    if m < 2 {
        return (a.clone(), b.clone());
    }
    let cuts = sample(rng, m + 1, 2);
    let (i, j) = {
        let (p, q) = (cuts.index(0), cuts.index(1));
        (p.min(q), p.max(q))
    };
    crossover_at(a, b, i, j)
}

/// Deterministic core of [`crossover_two_point`].
pub fn crossover_at(a: &Instance, b: &Instance, i: usize, j: usize) -> (Instance, Instance) {
    let mut c1 = a.clone();
    let mut c2 = b.clone();
    c1.values_mut()[i..j].copy_from_slice(&b.values()[i..j]);
    c2.values_mut()[i..j].copy_from_slice(&a.values()[i..j]);
    (c1, c2)
}

/// Resamples each feature independently with probability `pm` from the
/// schema's empirical distribution.
pub fn mutate<R: Rng + ?Sized>(z: &Instance, schema: &FeatureSchema, pm: f64, rng: &mut R) -> Instance {
    let mut out = z.clone();
    if pm <= 0.0 {
        return out;
    }
    for (i, spec) in schema.features.iter().enumerate() {
        if rng.gen_bool(pm.min(1.0)) {
            out.set(i, spec.sample(rng));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NeighborhoodStats {
    pub size: usize,
    /// Instances per target label.
    pub class_counts: [usize; 2],
    /// Instances sharing the reference label (usually `b(x)`).
    pub same_label: usize,
    pub mean_distance: f64,
}

/// Labeled instances used to train the surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhood {
    pub instances: Vec<Instance>,
    pub labels: Vec<Label>,
    pub provenance: String,
}

impl Neighborhood {
    pub fn new(instances: Vec<Instance>, labels: Vec<Label>, provenance: impl Into<String>) -> Self {
        assert_eq!(instances.len(), labels.len(), "one cached label per instance");
        Neighborhood {
            instances,
            labels,
            provenance: provenance.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let mut c = [0usize; 2];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    /// Appends another neighborhood, keeping duplicates.
    pub fn extend(&mut self, other: Neighborhood) {
        self.instances.extend(other.instances);
        self.labels.extend(other.labels);
    }

    pub fn stats(&self, x: &Instance, reference: Label, schema: &FeatureSchema, kind: DistanceKind) -> NeighborhoodStats {
        let total: f64 = self.instances.iter().map(|z| distance(kind, schema, x, z)).sum();
        NeighborhoodStats {
            size: self.len(),
            class_counts: self.class_counts(),
            same_label: self.labels.iter().filter(|&&l| l == reference).count(),
            mean_distance: if self.is_empty() { 0.0 } else { total / self.len() as f64 },
        }
    }
}

/// Population produced by one GA run plus the mean fitness of every
/// evaluated generation (generation 0 first).
#[derive(Debug, Clone)]
pub struct GaRun {
    pub neighborhood: Neighborhood,
    pub mean_fitness: Vec<f64>,
}

struct Evaluator<'a> {
    x: &'a Instance,
    kind: FitnessKind,
    schema: &'a FeatureSchema,
    distance: DistanceKind,
}

impl Evaluator<'_> {
    fn score(&self, pop: &[Instance], labels: &[Label], bx: Label) -> Vec<f64> {
        pop.iter()
            .zip(labels)
            .map(|(z, &bz)| {
                let d = distance(self.distance, self.schema, self.x, z);
                fitness(self.kind, self.x, z, bx, bz, d)
            })
            .collect()
    }
}

fn tournament<R: Rng + ?Sized>(fit: &[f64], rng: &mut R) -> usize {
    let mut best = rng.gen_range(0..fit.len());
    for _ in 1..3 {
        let c = rng.gen_range(0..fit.len());
        if fit[c] > fit[best] {
            best = c;
        }
    }
    best
}

/// Evolves `size` individuals for `params.generations` generations.
/// Generation 0 is `size` copies of `x`; every generation costs one batch
/// of `size` black-box queries.
#[allow(clippy::too_many_arguments)]
pub fn genetic_neigh<R: Rng + ?Sized>(
    x: &Instance,
    kind: FitnessKind,
    bb: &BlackBox,
    size: usize,
    params: &GaParams,
    schema: &FeatureSchema,
    distance_kind: DistanceKind,
    rng: &mut R,
) -> Result<GaRun, BlackBoxError> {
    let eval = Evaluator {
        x,
        kind,
        schema,
        distance: distance_kind,
    };
    let mut pop = vec![x.clone(); size];
    let mut labels = bb.predict_batch(&pop)?;
    let bx = labels.first().copied().unwrap_or(0);
    let mut fit = eval.score(&pop, &labels, bx);
    let mut trace = vec![mean(&fit)];

    for _ in 0..params.generations {
        let mut next: Vec<Instance> = (0..size).map(|_| pop[tournament(&fit, rng)].clone()).collect();

        let mut order: Vec<usize> = (0..size).collect();
        order.shuffle(rng);
        for pair in order.chunks_exact(2) {
            if rng.gen_bool(params.crossover_prob) {
                let (c1, c2) = crossover_two_point(&next[pair[0]], &next[pair[1]], rng);
                next[pair[0]] = c1;
                next[pair[1]] = c2;
            }
        }
        for z in next.iter_mut() {
            *z = mutate(z, schema, params.mutation_prob, rng);
        }

        pop = next;
        labels = bb.predict_batch(&pop)?;
        fit = eval.score(&pop, &labels, bx);
        trace.push(mean(&fit));
    }

    Ok(GaRun {
        neighborhood: Neighborhood::new(pop, labels, format!("genetic-{}", kind_name(kind))),
        mean_fitness: trace,
    })
}

fn kind_name(kind: FitnessKind) -> &'static str {
    match kind {
        FitnessKind::Same => "same",
        FitnessKind::Different => "different",
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Runs the same-outcome and different-outcome searches with half the
/// population each and concatenates them.
pub fn build_neighborhood(
    x: &Instance,
    bb: &BlackBox,
    params: &GaParams,
    schema: &FeatureSchema,
    distance_kind: DistanceKind,
) -> Result<Neighborhood, BlackBoxError> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let half = params.population / 2;
    let same = genetic_neigh(x, FitnessKind::Same, bb, half, params, schema, distance_kind, &mut rng)?;
    let different = genetic_neigh(x, FitnessKind::Different, bb, half, params, schema, distance_kind, &mut rng)?;
    let mut z = same.neighborhood;
    z.extend(different.neighborhood);
    z.provenance = "lore".into();
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_empirical_distributions, Dataset, FeatureSchema, FeatureValue};
    use proptest::prelude::*;

    fn schema() -> FeatureSchema {
        FeatureSchema::from_json(
            r#"{"features":[
                {"name":"age","kind":"continuous","min":18,"max":70},
                {"name":"job","kind":"categorical","values":["clerk","other"]},
                {"name":"income","kind":"continuous","min":1000,"max":20000},
                {"name":"car","kind":"categorical","values":["yes","no"]}
            ],"target":{"name":"d","labels":["deny","grant"]}}"#,
        )
        .unwrap()
    }

    fn row(age: f64, job: usize, income: f64, car: usize) -> Instance {
        Instance::new(vec![
            FeatureValue::Number(age),
            FeatureValue::Category(job),
            FeatureValue::Number(income),
            FeatureValue::Category(car),
        ])
    }

    fn schema_with_empirical() -> FeatureSchema {
        let rows = vec![
            row(25.0, 0, 10000.0, 0),
            row(30.0, 1, 5000.0, 1),
            row(27.0, 0, 7000.0, 0),
            row(45.0, 1, 15000.0, 1),
        ];
        let n = rows.len();
        build_empirical_distributions(&Dataset::new(schema(), rows, vec![None; n])).unwrap()
    }

    #[test]
    fn fitness_anchor_values() {
        let x = row(25.0, 0, 10000.0, 0);
        let z = row(26.0, 0, 10000.0, 0);
        assert_eq!(fitness(FitnessKind::Same, &x, &x, 1, 1, 0.0), 1.0);
        assert!((fitness(FitnessKind::Same, &x, &z, 1, 1, 0.2) - 1.8).abs() < 1e-12);
        assert!((fitness(FitnessKind::Same, &x, &z, 1, 0, 0.2) - 0.8).abs() < 1e-12);
        assert!((fitness(FitnessKind::Different, &x, &z, 1, 0, 0.2) - 1.8).abs() < 1e-12);
    }

    #[test]
    fn crossover_worked_example() {
        let a = row(25.0, 0, 10000.0, 0);
        let b = row(30.0, 1, 5000.0, 1);
        let (c1, c2) = crossover_at(&a, &b, 1, 3);
        assert_eq!(c1, row(25.0, 1, 5000.0, 0));
        assert_eq!(c2, row(30.0, 0, 10000.0, 1));
        let (f1, f2) = crossover_at(&a, &b, 0, 4);
        assert_eq!((f1, f2), (b.clone(), a.clone()));
    }

    #[test]
    fn crossover_of_identical_parents_is_identity() {
        let a = row(25.0, 0, 10000.0, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            assert_eq!(crossover_two_point(&a, &a, &mut rng), (a.clone(), a.clone()));
        }
    }

    #[test]
    fn crossover_on_single_feature_copies_parents() {
        let a = Instance::new(vec![FeatureValue::Number(1.0)]);
        let b = Instance::new(vec![FeatureValue::Number(2.0)]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(crossover_two_point(&a, &b, &mut rng), (a, b));
    }

    proptest! {
        #[test]
        fn crossover_swaps_one_contiguous_segment(seed in any::<u64>()) {
            let a = row(25.0, 0, 10000.0, 0);
            let b = row(30.0, 1, 5000.0, 1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (c1, c2) = crossover_two_point(&a, &b, &mut rng);
            let from_b: Vec<bool> = (0..4).map(|i| c1.get(i) == b.get(i)).collect();
            let first = from_b.iter().position(|&t| t);
            let last = from_b.iter().rposition(|&t| t);
            prop_assert!(first.is_some());
            let (f, l) = (first.unwrap(), last.unwrap());
            prop_assert!(from_b[f..=l].iter().all(|&t| t));
            for i in 0..4 {
                let swapped = i >= f && i <= l;
                prop_assert_eq!(c1.get(i), if swapped { b.get(i) } else { a.get(i) });
                prop_assert_eq!(c2.get(i), if swapped { a.get(i) } else { b.get(i) });
            }
        }
    }

    #[test]
    fn mutation_rates() {
        let s = schema_with_empirical();
        let x = row(99.0, 1, 1.0, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(mutate(&x, &s, 0.0, &mut rng), x);
        let ages = [25.0, 30.0, 27.0, 45.0];
        let incomes = [10000.0, 5000.0, 7000.0, 15000.0];
        for _ in 0..1000 {
            let z = mutate(&x, &s, 1.0, &mut rng);
            assert!(ages.contains(&z.get(0).as_number()));
            assert!(incomes.contains(&z.get(2).as_number()));
            s.validate(&z).unwrap();
        }
    }

    #[test]
    fn mutation_only_touches_mutated_slots() {
        let s = schema_with_empirical();
        let x = row(99.0, 1, 1.0, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let z = mutate(&x, &s, 0.5, &mut rng);
            for i in [0, 2] {
                // continuous slots either keep 99/1 or take an observed value
                let v = z.get(i).as_number();
                assert!(v == x.get(i).as_number() || ![99.0, 1.0].contains(&v));
            }
        }
    }

    #[test]
    fn degenerate_run_returns_copies() {
        let s = schema_with_empirical();
        let x = row(25.0, 0, 10000.0, 0);
        let bb = BlackBox::from_fn(|z| usize::from(z.get(0).as_number() > 28.0));
        let params = GaParams {
            population: 10,
            generations: 1,
            crossover_prob: 0.0,
            mutation_prob: 0.0,
            seed: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let run = genetic_neigh(&x, FitnessKind::Same, &bb, 10, &params, &s, DistanceKind::Neuclid, &mut rng).unwrap();
        assert!(run.neighborhood.instances.iter().all(|z| z == &x));
        assert_eq!(bb.query_count(), 20);
    }

    #[test]
    fn query_accounting_and_sizes() {
        let s = schema_with_empirical();
        let x = row(25.0, 0, 10000.0, 0);
        let bb = BlackBox::from_fn(|z| usize::from(z.get(2).as_number() > 8000.0));
        for (n, g) in [(2usize, 1usize), (40, 3), (1000, 10)] {
            let before = bb.query_count();
            let params = GaParams {
                population: n,
                generations: g,
                seed: 5,
                ..GaParams::default()
            };
            let z = build_neighborhood(&x, &bb, &params, &s, DistanceKind::Neuclid).unwrap();
            assert_eq!(z.len(), n);
            assert_eq!(bb.query_count() - before, (2 * (n / 2) * (g + 1)) as u64);
            for inst in &z.instances {
                s.validate(inst).unwrap();
            }
        }
    }

    #[test]
    fn seeded_runs_replay() {
        let s = schema_with_empirical();
        let x = row(25.0, 0, 10000.0, 0);
        let bb = BlackBox::from_fn(|z| usize::from(z.get(2).as_number() > 8000.0));
        let params = GaParams {
            population: 200,
            seed: 99,
            ..GaParams::default()
        };
        let a = build_neighborhood(&x, &bb, &params, &s, DistanceKind::Neuclid).unwrap();
        let b = build_neighborhood(&x, &bb, &params, &s, DistanceKind::Neuclid).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn params_validation() {
        assert!(GaParams::default().validate().is_ok());
        assert!(GaParams { population: 1, ..GaParams::default() }.validate().is_err());
        assert!(GaParams { generations: 0, ..GaParams::default() }.validate().is_err());
        assert!(GaParams { mutation_prob: 1.5, ..GaParams::default() }.validate().is_err());
    }
}
