//! Split conditions, premises (conjunctions of conditions) and rules.

use std::fmt;

use crate::data::{FeatureSchema, FeatureValue, Instance, Label};

/// A numeric interval with explicit open/closed ends. Infinite ends are
/// always treated as open.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lower: f64,
    pub lower_closed: bool,
    pub upper: f64,
    pub upper_closed: bool,
}

impl Interval {
    pub const UNBOUNDED: Interval = Interval {
        lower: f64::NEG_INFINITY,
        lower_closed: false,
        upper: f64::INFINITY,
        upper_closed: false,
    };

    /// `a <= t`
    pub fn at_most(t: f64) -> Self {
        Interval {
            upper: t,
            upper_closed: true,
            ..Self::UNBOUNDED
        }
    }

    /// `a > t`
    pub fn greater_than(t: f64) -> Self {
        Interval {
            lower: t,
            lower_closed: false,
            ..Self::UNBOUNDED
        }
    }

    pub fn closed(lower: f64, upper: f64) -> Self {
        Interval {
            lower,
            lower_closed: true,
            upper,
            upper_closed: true,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        let above = if self.lower_closed { v >= self.lower } else { v > self.lower };
        let below = if self.upper_closed { v <= self.upper } else { v < self.upper };
        above && below
    }

    pub fn is_empty(&self) -> bool {
        self.lower > self.upper || (self.lower == self.upper && !(self.lower_closed && self.upper_closed))
    }

    pub fn has_lower(&self) -> bool {
        self.lower.is_finite()
    }

    pub fn has_upper(&self) -> bool {
        self.upper.is_finite()
    }

    pub fn intersect(&self, other: &Interval) -> Interval {
        let (lower, lower_closed) = if self.lower > other.lower {
            (self.lower, self.lower_closed)
        } else if other.lower > self.lower {
            (other.lower, other.lower_closed)
        } else {
            (self.lower, self.lower_closed && other.lower_closed)
        };
        let (upper, upper_closed) = if self.upper < other.upper {
            (self.upper, self.upper_closed)
        } else if other.upper < self.upper {
            (other.upper, other.upper_closed)
        } else {
            (self.upper, self.upper_closed && other.upper_closed)
        };
        Interval {
            lower,
            lower_closed,
            upper,
            upper_closed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitTest {
    /// Categorical equality, by category index.
    Equals(usize),
    Interval(Interval),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCondition {
    pub feature: usize,
    pub test: SplitTest,
}

impl SplitCondition {
    pub fn equals(feature: usize, category: usize) -> Self {
        SplitCondition {
            feature,
            test: SplitTest::Equals(category),
        }
    }

    pub fn interval(feature: usize, interval: Interval) -> Self {
        SplitCondition {
            feature,
            test: SplitTest::Interval(interval),
        }
    }

    pub fn holds(&self, x: &Instance) -> bool {
        match (&self.test, x.get(self.feature)) {
            (SplitTest::Equals(c), FeatureValue::Category(v)) => c == v,
            (SplitTest::Interval(iv), FeatureValue::Number(v)) => iv.contains(*v),
            _ => false,
        }
    }

    pub fn display<'a>(&'a self, schema: &'a FeatureSchema) -> ConditionDisplay<'a> {
        ConditionDisplay { sc: self, schema }
    }
}

pub struct ConditionDisplay<'a> {
    sc: &'a SplitCondition,
    schema: &'a FeatureSchema,
}

impl fmt::Display for ConditionDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let spec = &self.schema.features[self.sc.feature];
        let name = &spec.name;
        match &self.sc.test {
            SplitTest::Equals(c) => write!(f, "{name} = {}", spec.category_name(*c)),
            SplitTest::Interval(iv) => {
                let lo_op = if iv.lower_closed { "<=" } else { "<" };
                let hi_op = if iv.upper_closed { "<=" } else { "<" };
                match (iv.has_lower(), iv.has_upper()) {
                    (true, true) if iv.lower == iv.upper => write!(f, "{name} = {}", iv.lower),
                    (true, true) => write!(f, "{} {lo_op} {name} {hi_op} {}", iv.lower, iv.upper),
                    (true, false) => {
                        let op = if iv.lower_closed { ">=" } else { ">" };
                        write!(f, "{name} {op} {}", iv.lower)
                    }
                    (false, true) => write!(f, "{name} {hi_op} {}", iv.upper),
                    (false, false) => write!(f, "{name} unbounded"),
                }
            }
        }
    }
}

/// Conjunction of split conditions with at most one condition per feature.
/// Conditions keep their insertion order (root-to-leaf for tree paths).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Premise {
    conditions: Vec<SplitCondition>,
}

impl Premise {
    pub fn new() -> Self {
        Premise::default()
    }

    /// Builds a premise, panicking on a repeated feature.
    pub fn from_conditions(conditions: Vec<SplitCondition>) -> Self {
        let mut p = Premise::new();
        for sc in conditions {
            assert!(p.get(sc.feature).is_none(), "feature {} constrained twice", sc.feature);
            p.conditions.push(sc);
        }
        p
    }

    pub fn conditions(&self) -> &[SplitCondition] {
        &self.conditions
    }

    pub fn len(&self) -> usize {
        self.conditions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conditions.is_empty()
    }

    pub fn get(&self, feature: usize) -> Option<&SplitCondition> {
        self.conditions.iter().find(|sc| sc.feature == feature)
    }

    /// Adds a condition, intersecting it with an existing interval on the
    /// same feature. A categorical condition replaces any earlier one.
    pub fn constrain(&mut self, sc: SplitCondition) {
        match self.conditions.iter_mut().find(|c| c.feature == sc.feature) {
            None => self.conditions.push(sc),
            Some(existing) => match (&mut existing.test, sc.test) {
                (SplitTest::Interval(a), SplitTest::Interval(b)) => *a = a.intersect(&b),
                (slot, new) => *slot = new,
            },
        }
    }

    pub fn satisfied_by(&self, x: &Instance) -> bool {
        self.conditions.iter().all(|sc| sc.holds(x))
    }

    pub fn display<'a>(&'a self, schema: &'a FeatureSchema) -> PremiseDisplay<'a> {
        PremiseDisplay { p: self, schema }
    }
}

pub struct PremiseDisplay<'a> {
    p: &'a Premise,
    schema: &'a FeatureSchema,
}

impl fmt::Display for PremiseDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, sc) in self.p.conditions.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}", sc.display(self.schema))?;
        }
        write!(f, "}}")
    }
}

/// `premise -> outcome`
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub premise: Premise,
    pub outcome: Label,
}

impl Rule {
    pub fn new(premise: Premise, outcome: Label) -> Self {
        Rule { premise, outcome }
    }

    pub fn display<'a>(&'a self, schema: &'a FeatureSchema) -> RuleDisplay<'a> {
        RuleDisplay { r: self, schema }
    }
}

pub struct RuleDisplay<'a> {
    r: &'a Rule,
    schema: &'a FeatureSchema,
}

impl fmt::Display for RuleDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} -> {} = {}",
            self.r.premise.display(self.schema),
            self.schema.target.name,
            self.schema.label_name(self.r.outcome)
        )
    }
}

pub fn satisfies(x: &Instance, p: &Premise) -> bool {
    p.satisfied_by(x)
}

/// `p[delta]`: conditions of `delta` overwrite same-feature conditions of
/// `p` in place; conditions on new features are appended.
pub fn update_premise(p: &Premise, delta: &[SplitCondition]) -> Premise {
    let mut out = p.clone();
    for sc in delta {
        match out.conditions.iter_mut().find(|c| c.feature == sc.feature) {
            Some(slot) => *slot = *sc,
            None => out.conditions.push(*sc),
        }
    }
    out
}

/// Number of conditions of `p` that `x` falsifies.
pub fn count_falsified(p: &Premise, x: &Instance) -> usize {
    p.conditions.iter().filter(|sc| !sc.holds(x)).count()
}
