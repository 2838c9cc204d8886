//! Alternative neighborhood generators used for comparison: nearest real
//! instances, stratified random sampling, random oversampling, and a single
//! global surrogate trained on the whole test set.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::blackbox::{BlackBox, BlackBoxError};
use crate::data::{Dataset, FeatureSchema, Instance};
use crate::distance::{distance, DistanceKind};
use crate::genetic::Neighborhood;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Lore,
    Crn,
    Rnd,
    Ros,
    Global,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Lore, Method::Crn, Method::Rnd, Method::Ros, Method::Global];

    pub fn name(self) -> &'static str {
        match self {
            Method::Lore => "lore",
            Method::Crn => "crn",
            Method::Rnd => "rnd",
            Method::Ros => "ros",
            Method::Global => "global",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method `{s}` (expected lore, crn, rnd, ros or global)"))
    }
}

/// Default number of nearest real instances.
pub const CRN_K: usize = 100;

/// Random draws allowed per requested neighborhood instance.
pub const RND_DRAW_FACTOR: usize = 50;

/// A generated neighborhood and whether the generator gave up early.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub neighborhood: Neighborhood,
    /// Set when the random-draw cap was hit before both classes filled up.
    pub cap_hit: bool,
}

/// The `k` instances of `data` nearest to `x`, ties broken by row order.
pub fn gen_crn(
    x: &Instance,
    data: &Dataset,
    bb: &BlackBox,
    k: usize,
    distance_kind: DistanceKind,
) -> Result<Neighborhood, BlackBoxError> {
    let mut order: Vec<(f64, usize)> = data
        .rows
        .iter()
        .enumerate()
        .map(|(i, z)| (distance(distance_kind, &data.schema, x, z), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let instances: Vec<Instance> = order.iter().take(k).map(|&(_, i)| data.rows[i].clone()).collect();
    let labels = bb.predict_batch(&instances)?;
    Ok(Neighborhood::new(instances, labels, "crn"))
}

fn sample_instance<R: Rng + ?Sized>(schema: &FeatureSchema, rng: &mut R) -> Instance {
    Instance::new(schema.features.iter().map(|f| f.sample(rng)).collect())
}

/// Nearest real instances topped up with instances drawn feature-wise from
/// the empirical distributions. A drawn instance is kept only while its
/// black-box class holds fewer than `n / 2` instances; drawing stops when
/// both classes are full or after `50 * n` draws.
#[allow(clippy::too_many_arguments)]
pub fn gen_rnd(
    x: &Instance,
    data: &Dataset,
    bb: &BlackBox,
    schema: &FeatureSchema,
    n: usize,
    k: usize,
    distance_kind: DistanceKind,
    seed: u64,
) -> Result<Generated, BlackBoxError> {
    let mut z = gen_crn(x, data, bb, k, distance_kind)?;
    z.provenance = "rnd".into();
    let target = n / 2;
    let mut counts = z.class_counts();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cap = RND_DRAW_FACTOR * n;
    let mut drawn = 0;
    while counts.iter().any(|&c| c < target) && drawn < cap {
        let batch_size = n.max(1).min(cap - drawn);
        let batch: Vec<Instance> = (0..batch_size).map(|_| sample_instance(schema, &mut rng)).collect();
        drawn += batch_size;
        let labels = bb.predict_batch(&batch)?;
        for (inst, l) in batch.into_iter().zip(labels) {
            if counts[l] < target {
                counts[l] += 1;
                z.instances.push(inst);
                z.labels.push(l);
            }
        }
    }
    let cap_hit = counts.iter().any(|&c| c < target);
    Ok(Generated { neighborhood: z, cap_hit })
}

/// Balances class counts by duplicating minority-class instances chosen
/// uniformly at random.
pub fn oversample<R: Rng + ?Sized>(z: &Neighborhood, rng: &mut R) -> Neighborhood {
    let mut out = z.clone();
    out.provenance = "ros".into();
    let counts = z.class_counts();
    let minority = if counts[0] < counts[1] { 0 } else { 1 };
    let pool: Vec<usize> = (0..z.len()).filter(|&i| z.labels[i] == minority).collect();
    if pool.is_empty() {
        return out;
    }
    for _ in 0..counts[1 - minority] - counts[minority] {
        let i = pool[rng.gen_range(0..pool.len())];
        out.instances.push(z.instances[i].clone());
        out.labels.push(minority);
    }
    out
}

/// [`gen_rnd`] followed by random oversampling of the minority class.
#[allow(clippy::too_many_arguments)]
pub fn gen_ros(
    x: &Instance,
    data: &Dataset,
    bb: &BlackBox,
    schema: &FeatureSchema,
    n: usize,
    k: usize,
    distance_kind: DistanceKind,
    seed: u64,
) -> Result<Generated, BlackBoxError> {
    let rnd = gen_rnd(x, data, bb, schema, n, k, distance_kind, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    Ok(Generated {
        neighborhood: oversample(&rnd.neighborhood, &mut rng),
        cap_hit: rnd.cap_hit,
    })
}

/// Every row of `data`, labeled by the black box.
pub fn gen_global(data: &Dataset, bb: &BlackBox) -> Result<Neighborhood, BlackBoxError> {
    let labels = bb.predict_batch(&data.rows)?;
    Ok(Neighborhood::new(data.rows.clone(), labels, "global"))
}
