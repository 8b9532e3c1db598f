//! Model parameter types shared by the sampler and the inference routines.

use serde::{Deserialize, Serialize};

use crate::data::CategoricalSchema;
use crate::error::{Error, Result};
use crate::scalar::{abs, is_probability_vector, sum, Real, Scalar};

/// Default CRP concentration.
pub const DEFAULT_ALPHA: f64 = 0.25;

/// Upper bound on dense joint-table cells.
pub const DEFAULT_CELL_LIMIT: u128 = 10_000_000;

/// Tolerance applied when loading a model document.
pub const LOAD_TOLERANCE: f64 = 1e-8;

/// CRP concentration and per-variable Dirichlet concentrations.
///
/// `beta[j]` has length `d_j + 1`; entry 0 belongs to the missing category.
#[derive(Debug, Clone, PartialEq)]
pub struct Priors<F> {
    alpha: F,
    beta: Vec<Vec<F>>,
}

impl<F: Real> Priors<F> {
    pub fn new(schema: &CategoricalSchema, alpha: F, beta: Vec<Vec<F>>) -> Result<Self> {
        if !(alpha > F::zero()) || !alpha.is_finite() {
            return Err(Error::Invalid(format!("alpha must be positive, got {alpha:?}")));
        }
        if beta.len() != schema.p() {
            return Err(Error::Invalid(format!(
                "beta has {} vectors for {} variables",
                beta.len(),
                schema.p()
            )));
        }
        for (j, b) in beta.iter().enumerate() {
            if b.len() != schema.cardinality(j) as usize + 1 {
                return Err(Error::Invalid(format!(
                    "beta for variable {} has length {}, expected {}",
                    j + 1,
                    b.len(),
                    schema.cardinality(j) + 1
                )));
            }
            if b.iter().any(|x| !(*x > F::zero()) || !x.is_finite()) {
                return Err(Error::Invalid(format!(
                    "beta for variable {} has a non-positive entry",
                    j + 1
                )));
            }
        }
        Ok(Self { alpha, beta })
    }

    /// Flat Dirichlet(1, ..., 1) for every variable with the given alpha.
    pub fn flat(schema: &CategoricalSchema, alpha: F) -> Result<Self> {
        let beta = schema
            .cardinalities()
            .iter()
            .map(|&d| vec![F::one(); d as usize + 1])
            .collect();
        Self::new(schema, alpha, beta)
    }

    /// Flat priors with `alpha = 0.25`.
    pub fn default_for(schema: &CategoricalSchema) -> Self {
        Self::flat(schema, F::from_f64(DEFAULT_ALPHA).unwrap()).expect("defaults are valid")
    }

    pub fn alpha(&self) -> F {
        self.alpha
    }

    pub fn beta(&self, j: usize) -> &[F] {
        &self.beta[j]
    }
}

/// Gibbs chain state: assignments, occupancy counts and the augmented
/// per-component multinomials `psi[h][j]` over `{missing, 1, ..., d_j}`.
///
/// Components are 0-based internally.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState<F> {
    pub(crate) assignments: Vec<usize>,
    pub(crate) counts: Vec<usize>,
    pub(crate) psi: Vec<Vec<Vec<F>>>,
    pub(crate) seed: u64,
}

impl<F: Real> ModelState<F> {
    pub fn from_parts(
        assignments: Vec<usize>,
        counts: Vec<usize>,
        psi: Vec<Vec<Vec<F>>>,
        seed: u64,
    ) -> Self {
        Self {
            assignments,
            counts,
            psi,
            seed,
        }
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn psi(&self, h: usize, j: usize) -> &[F] {
        &self.psi[h][j]
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Checks count consistency, non-empty components and psi normalisation.
    pub fn check_invariants(&self, schema: &CategoricalSchema) -> Result<()> {
        let k = self.k();
        if self.psi.len() != k {
            return Err(Error::Contract(format!("{} psi blocks for k = {}", self.psi.len(), k)));
        }
        let mut tally = vec![0usize; k];
        for &z in &self.assignments {
            if z >= k {
                return Err(Error::Contract(format!("assignment {z} out of range k = {k}")));
            }
            tally[z] += 1;
        }
        if tally != self.counts {
            return Err(Error::Contract("counts disagree with assignments".into()));
        }
        if self.counts.iter().any(|&c| c == 0) {
            return Err(Error::Contract("empty component present".into()));
        }
        let tol = F::from_f64(1e-10).unwrap().max(F::sum_tolerance());
        for (h, block) in self.psi.iter().enumerate() {
            for (j, v) in block.iter().enumerate() {
                if v.len() != schema.cardinality(j) as usize + 1 || !is_probability_vector(v, &tol) {
                    return Err(Error::Contract(format!(
                        "psi for component {}, variable {} is not a probability vector",
                        h + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Mixture weights and rescaled per-category probabilities with the missing
/// category removed. `tilde_psi[h][j]` has length `d_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CollapsedModel<T> {
    schema: CategoricalSchema,
    theta: Vec<T>,
    tilde_psi: Vec<Vec<Vec<T>>>,
}

impl<T: Scalar> CollapsedModel<T> {
    pub fn new(
        schema: CategoricalSchema,
        theta: Vec<T>,
        tilde_psi: Vec<Vec<Vec<T>>>,
    ) -> Result<Self> {
        Self::with_tolerance(schema, theta, tilde_psi, T::sum_tolerance())
    }

    pub fn with_tolerance(
        schema: CategoricalSchema,
        theta: Vec<T>,
        tilde_psi: Vec<Vec<Vec<T>>>,
        tolerance: T,
    ) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::Invalid("model has no components".into()));
        }
        if theta.len() != tilde_psi.len() {
            return Err(Error::Invalid(format!(
                "{} weights for {} components",
                theta.len(),
                tilde_psi.len()
            )));
        }
        if !is_probability_vector(&theta, &tolerance) {
            return Err(Error::Invalid(format!(
                "theta sums to {:?}, not 1",
                sum(&theta).to_f64()
            )));
        }
        for (h, block) in tilde_psi.iter().enumerate() {
            if block.len() != schema.p() {
                return Err(Error::Invalid(format!(
                    "component {} has {} variables, expected {}",
                    h + 1,
                    block.len(),
                    schema.p()
                )));
            }
            for (j, v) in block.iter().enumerate() {
                if v.len() != schema.cardinality(j) as usize {
                    return Err(Error::Invalid(format!(
                        "component {}, variable {}: {} probabilities for d = {}",
                        h + 1,
                        j + 1,
                        v.len(),
                        schema.cardinality(j)
                    )));
                }
                if !is_probability_vector(v, &tolerance) {
                    return Err(Error::Invalid(format!(
                        "component {}, variable {}: probabilities sum to {:?}",
                        h + 1,
                        j + 1,
                        sum(v).to_f64()
                    )));
                }
            }
        }
        Ok(Self {
            schema,
            theta,
            tilde_psi,
        })
    }

    pub fn k(&self) -> usize {
        self.theta.len()
    }

    pub fn schema(&self) -> &CategoricalSchema {
        &self.schema
    }

    pub fn theta(&self) -> &[T] {
        &self.theta
    }

    /// Probabilities of categories `1..=d_j` for component `h`, variable `j`.
    pub fn tilde_psi(&self, h: usize, j: usize) -> &[T] {
        &self.tilde_psi[h][j]
    }

    /// Probability of code `c` (1-based) for component `h`, variable `j`.
    pub fn prob(&self, h: usize, j: usize, c: u32) -> &T {
        &self.tilde_psi[h][j][c as usize - 1]
    }

    /// Returns the same model with component labels permuted: new component
    /// `i` is old component `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            schema: self.schema.clone(),
            theta: order.iter().map(|&h| self.theta[h].clone()).collect(),
            tilde_psi: order.iter().map(|&h| self.tilde_psi[h].clone()).collect(),
        }
    }

    /// Single-variable marginal `sum_h theta_h * tilde_psi[h][j]`.
    pub fn marginal(&self, j: usize) -> Vec<T> {
        let d = self.schema.cardinality(j) as usize;
        let mut out = vec![T::zero(); d];
        for (h, th) in self.theta.iter().enumerate() {
            for (o, p) in out.iter_mut().zip(&self.tilde_psi[h][j]) {
                *o = o.clone() + th.clone() * p.clone();
            }
        }
        out
    }

    /// Pools several models into one mixture, each contributing with equal
    /// weight. This is the posterior-mean distribution over retained draws.
    pub fn pooled(models: &[Self]) -> Result<Self> {
        let first = models
            .first()
            .ok_or_else(|| Error::Invalid("no models to pool".into()))?;
        let weight = T::one() / T::from_usize_exact(models.len());
        let mut theta = Vec::new();
        let mut tilde_psi = Vec::new();
        for m in models {
            if m.schema != first.schema {
                return Err(Error::Contract("pooled models disagree on schema".into()));
            }
            theta.extend(m.theta.iter().map(|t| t.clone() * weight.clone()));
            tilde_psi.extend(m.tilde_psi.iter().cloned());
        }
        let tol = T::sum_tolerance() * T::from_usize_exact(models.len().max(1));
        Self::with_tolerance(first.schema.clone(), theta, tilde_psi, tol)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDocument<T> {
    k: usize,
    theta: Vec<T>,
    #[serde(rename = "tildePsi")]
    tilde_psi: Vec<Vec<Vec<T>>>,
    cardinalities: Vec<u32>,
}

impl<T: Real> Serialize for CollapsedModel<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ModelDocument {
            k: self.k(),
            theta: self.theta.clone(),
            tilde_psi: self.tilde_psi.clone(),
            cardinalities: self.schema.cardinalities().to_vec(),
        }
        .serialize(s)
    }
}

impl<'de, T: Real> Deserialize<'de> for CollapsedModel<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = ModelDocument::<T>::deserialize(d)?;
        model_from_document(doc).map_err(serde::de::Error::custom)
    }
}

fn model_from_document<T: Real>(doc: ModelDocument<T>) -> Result<CollapsedModel<T>> {
    if doc.k != doc.theta.len() {
        return Err(Error::Model(format!(
            "k = {} but theta has {} entries",
            doc.k,
            doc.theta.len()
        )));
    }
    let schema = CategoricalSchema::new(doc.cardinalities).map_err(|e| Error::Model(e.to_string()))?;
    let tol = T::from_f64(LOAD_TOLERANCE).unwrap().max(T::sum_tolerance());
    CollapsedModel::with_tolerance(schema, doc.theta, doc.tilde_psi, tol)
        .map_err(|e| Error::Model(e.to_string()))
}

/// JSON with fields `k`, `theta`, `tildePsi`, `cardinalities`.
pub fn serialize_model<T: Real>(m: &CollapsedModel<T>) -> String {
    serde_json::to_string_pretty(m).expect("model serialisation cannot fail")
}

pub fn deserialize_model<T: Real>(text: &str) -> Result<CollapsedModel<T>> {
    let doc: ModelDocument<T> =
        serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))?;
    model_from_document(doc)
}

/// Visits every category combination of `schema` in row-major order
/// (variable 1 slowest). Codes are 1-based.
pub fn for_each_combination(schema: &CategoricalSchema, mut f: impl FnMut(usize, &[u32])) {
    let p = schema.p();
    let mut combo = vec![1u32; p];
    let mut idx = 0usize;
    loop {
        f(idx, &combo);
        idx += 1;
        let mut j = p;
        loop {
            if j == 0 {
                return;
            }
            j -= 1;
            if combo[j] < schema.cardinality(j) {
                combo[j] += 1;
                break;
            }
            combo[j] = 1;
        }
    }
}

/// Row-major index of a combination of 1-based codes.
pub fn combination_index(schema: &CategoricalSchema, combo: &[u32]) -> usize {
    combo
        .iter()
        .zip(schema.cardinalities())
        .fold(0usize, |acc, (&c, &d)| acc * d as usize + (c as usize - 1))
}

fn check_table_size(schema: &CategoricalSchema, limit: u128) -> Result<usize> {
    let cells = schema.table_size();
    if cells > limit {
        return Err(Error::TableTooLarge { cells, limit });
    }
    Ok(cells as usize)
}

/// Dense probability table over all category combinations.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution<T> {
    schema: CategoricalSchema,
    table: Vec<T>,
}

impl<T: Scalar> JointDistribution<T> {
    pub fn new(schema: CategoricalSchema, table: Vec<T>) -> Result<Self> {
        Self::with_limit(schema, table, DEFAULT_CELL_LIMIT)
    }

    pub fn with_limit(schema: CategoricalSchema, table: Vec<T>, limit: u128) -> Result<Self> {
        let cells = check_table_size(&schema, limit)?;
        if table.len() != cells {
            return Err(Error::Invalid(format!(
                "table has {} entries, schema needs {}",
                table.len(),
                cells
            )));
        }
        let tol = T::from_f64(1e-9).unwrap();
        let tol = if T::sum_tolerance() == T::zero() { T::zero() } else { tol };
        if !is_probability_vector(&table, &tol) {
            return Err(Error::Invalid("joint table is not a probability distribution".into()));
        }
        Ok(Self { schema, table })
    }

    pub fn schema(&self) -> &CategoricalSchema {
        &self.schema
    }

    pub fn table(&self) -> &[T] {
        &self.table
    }

    pub fn prob(&self, combo: &[u32]) -> &T {
        &self.table[combination_index(&self.schema, combo)]
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.table
            .iter()
            .zip(&other.table)
            .map(|(a, b)| abs(a.clone() - b.clone()))
            .fold(T::zero(), |m, x| if x > m { x } else { m })
    }
}

/// Per-variable missing rates `q[j][cell]` indexed by the full combination.
#[derive(Debug, Clone, PartialEq)]
pub struct MissingnessTable<T> {
    schema: CategoricalSchema,
    q: Vec<Vec<T>>,
}

impl<T: Scalar> MissingnessTable<T> {
    pub fn new(schema: CategoricalSchema, q: Vec<Vec<T>>) -> Result<Self> {
        let cells = check_table_size(&schema, DEFAULT_CELL_LIMIT)?;
        if q.len() != schema.p() || q.iter().any(|v| v.len() != cells) {
            return Err(Error::Invalid("missingness table has the wrong shape".into()));
        }
        if q.iter().flatten().any(|x| *x < T::zero() || *x > T::one()) {
            return Err(Error::Invalid("missing rates must lie in [0, 1]".into()));
        }
        Ok(Self { schema, q })
    }

    /// Table built from `rate(j, combo)`.
    pub fn from_fn(schema: CategoricalSchema, mut rate: impl FnMut(usize, &[u32]) -> T) -> Result<Self> {
        let cells = check_table_size(&schema, DEFAULT_CELL_LIMIT)?;
        let mut q = vec![Vec::with_capacity(cells); schema.p()];
        for_each_combination(&schema, |_, combo| {
            for (j, col) in q.iter_mut().enumerate() {
                col.push(rate(j, combo));
            }
        });
        Self::new(schema, q)
    }

    pub fn schema(&self) -> &CategoricalSchema {
        &self.schema
    }

    pub fn rate(&self, j: usize, cell: usize) -> &T {
        &self.q[j][cell]
    }
}
