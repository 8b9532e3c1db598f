//! Synthetic data generators, missingness masks and ratings preprocessing.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::index;
use rand::Rng;

use crate::data::{CategoricalSchema, Dataset, MISSING};
use crate::error::{Error, Result};
use crate::model::{for_each_combination, CollapsedModel, JointDistribution};
use crate::rng::{seeded, split_seed};
use crate::sampler::sample_dirichlet;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub theta_concentration: f64,
    pub psi_concentration: f64,
    /// Categories per variable, shared by all variables.
    pub categories: u32,
}

impl Default for MixtureSpec {
    fn default() -> Self {
        Self {
            n: 50,
            p: 20,
            k: 3,
            theta_concentration: 10.0,
            psi_concentration: 0.5,
            categories: 2,
        }
    }
}

fn categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Draws a product-multinomial mixture and `n` complete rows from it.
pub fn sample_mixture_dataset(spec: &MixtureSpec, seed: u64) -> Result<(Dataset, CollapsedModel<f64>)> {
    if spec.n == 0 || spec.p == 0 || spec.k == 0 {
        return Err(Error::Invalid("n, p and k must be positive".into()));
    }
    if !(spec.theta_concentration > 0.0) || !(spec.psi_concentration > 0.0) {
        return Err(Error::Invalid("Dirichlet concentrations must be positive".into()));
    }
    let schema = CategoricalSchema::new(vec![spec.categories; spec.p])?;
    let mut rng = seeded(seed);
    let theta = sample_dirichlet(&vec![spec.theta_concentration; spec.k], &mut rng);
    let psi: Vec<Vec<Vec<f64>>> = (0..spec.k)
        .map(|_| {
            (0..spec.p)
                .map(|_| sample_dirichlet(&vec![spec.psi_concentration; spec.categories as usize], &mut rng))
                .collect()
        })
        .collect();
    let truth = CollapsedModel::new(schema.clone(), theta, psi)?;
    let mut cells = Vec::with_capacity(spec.n * spec.p);
    for _ in 0..spec.n {
        let h = categorical(truth.theta(), &mut rng);
        for j in 0..spec.p {
            cells.push(categorical(truth.tilde_psi(h, j), &mut rng) as u32 + 1);
        }
    }
    let names = (1..=spec.p).map(|j| format!("V{j}")).collect();
    Ok((Dataset::new(schema, names, cells)?, truth))
}

/// Exact joint table of the three-bit exclusive-or model with codes
/// `bit + 1`: `V1 ~ Bern(0.3)`, `V2 ~ Bern(0.5)`, and `V3 = V1 xor V2` with
/// probability 0.95, otherwise an independent fair bit.
pub fn xor_truth<T: Scalar>() -> JointDistribution<T> {
    let frac = |a: usize, b: usize| T::from_usize_exact(a) / T::from_usize_exact(b);
    let schema = CategoricalSchema::binary(3);
    let mut table = Vec::with_capacity(8);
    for_each_combination(&schema, |_, combo| {
        let [v1, v2, v3] = [combo[0] - 1, combo[1] - 1, combo[2] - 1];
        let p1 = if v1 == 1 { frac(3, 10) } else { frac(7, 10) };
        let p2 = frac(1, 2);
        let noise = frac(5, 100) * frac(1, 2);
        let p3 = if v3 == v1 ^ v2 { frac(95, 100) + noise } else { noise };
        table.push(p1 * p2 * p3);
    });
    JointDistribution::new(schema, table).expect("xor truth is a distribution")
}

pub fn sample_xor_dataset(n: usize, seed: u64) -> Result<(Dataset, JointDistribution<f64>)> {
    if n == 0 {
        return Err(Error::Invalid("n must be positive".into()));
    }
    let mut rng = seeded(seed);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let v1 = u32::from(rng.random::<f64>() < 0.3);
        let v2 = u32::from(rng.random::<f64>() < 0.5);
        let v3 = if rng.random::<f64>() < 0.95 {
            v1 ^ v2
        } else {
            u32::from(rng.random::<f64>() < 0.5)
        };
        rows.push(vec![v1 + 1, v2 + 1, v3 + 1]);
    }
    Ok((Dataset::from_rows(CategoricalSchema::binary(3), &rows)?, xor_truth()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mechanism {
    Mcar,
    Mar,
    Mnar,
}

impl std::str::FromStr for Mechanism {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mcar" => Ok(Self::Mcar),
            "mar" => Ok(Self::Mar),
            "mnar" => Ok(Self::Mnar),
            other => Err(Error::Invalid(format!("unknown mechanism '{other}'"))),
        }
    }
}

impl std::fmt::Display for Mechanism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Mcar => "mcar",
            Self::Mar => "mar",
            Self::Mnar => "mnar",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MechanismSpec {
    pub kind: Mechanism,
    pub mcar_rate: f64,
    /// Rates for columns 2.. when `x_1 = 1` and `x_1 = 2`.
    pub mar_rates: (f64, f64),
    /// Rates when the true value is 1 and 2.
    pub mnar_rates: (f64, f64),
}

impl MechanismSpec {
    pub fn new(kind: Mechanism) -> Self {
        Self {
            kind,
            mcar_rate: 0.2,
            mar_rates: (0.1, 0.3),
            mnar_rates: (0.1, 0.3),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            self.mcar_rate,
            self.mar_rates.0,
            self.mar_rates.1,
            self.mnar_rates.0,
            self.mnar_rates.1,
        ];
        if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Invalid("missing rates must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct MaskedCell {
    pub row: usize,
    pub col: usize,
    pub original: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Masked {
    pub data: Dataset,
    pub cells: Vec<MaskedCell>,
}

fn apply_mask(data: &Dataset, chosen: Vec<(usize, usize)>) -> Result<Masked> {
    let p = data.p();
    let mut cells = data.cells().to_vec();
    let mut record = Vec::with_capacity(chosen.len());
    for (i, j) in chosen {
        record.push(MaskedCell {
            row: i,
            col: j,
            original: cells[i * p + j],
        });
        cells[i * p + j] = MISSING;
    }
    record.sort();
    Ok(Masked {
        data: data.with_cells(cells)?,
        cells: record,
    })
}

/// Masks each eligible cell independently at its mechanism rate.
pub fn mask(data: &Dataset, spec: &MechanismSpec, seed: u64) -> Result<Masked> {
    spec.validate()?;
    if !data.is_complete() {
        return Err(Error::Contract("mechanism masking expects complete data".into()));
    }
    let schema = data.schema();
    match spec.kind {
        Mechanism::Mcar => {}
        Mechanism::Mar => {
            if schema.cardinality(0) != 2 {
                return Err(Error::Contract(format!(
                    "MAR keys on a binary first variable; it has {} categories",
                    schema.cardinality(0)
                )));
            }
        }
        Mechanism::Mnar => {
            if let Some(j) = (0..schema.p()).find(|&j| schema.cardinality(j) != 2) {
                return Err(Error::Contract(format!(
                    "MNAR rates are keyed on binary values; variable {} has {} categories",
                    j + 1,
                    schema.cardinality(j)
                )));
            }
        }
    }
    let mut rng = seeded(seed);
    let mut chosen = Vec::new();
    for i in 0..data.n() {
        for j in 0..data.p() {
            let rate = match spec.kind {
                Mechanism::Mcar => spec.mcar_rate,
                Mechanism::Mar if j == 0 => continue,
                Mechanism::Mar => {
                    if data.get(i, 0) == 1 {
                        spec.mar_rates.0
                    } else {
                        spec.mar_rates.1
                    }
                }
                Mechanism::Mnar => {
                    if data.get(i, j) == 1 {
                        spec.mnar_rates.0
                    } else {
                        spec.mnar_rates.1
                    }
                }
            };
            if rng.random::<f64>() < rate {
                chosen.push((i, j));
            }
        }
    }
    apply_mask(data, chosen)
}

/// Masks exactly `round(fraction * observed)` observed cells, chosen
/// uniformly without replacement.
pub fn mask_fraction(data: &Dataset, fraction: f64, seed: u64) -> Result<Masked> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Invalid(format!("fraction {fraction} is outside [0, 1]")));
    }
    let observed: Vec<(usize, usize)> = (0..data.n())
        .flat_map(|i| (0..data.p()).map(move |j| (i, j)))
        .filter(|&(i, j)| data.is_observed(i, j))
        .collect();
    let amount = (fraction * observed.len() as f64).round() as usize;
    let mut rng = seeded(seed);
    let picks = index::sample(&mut rng, observed.len(), amount);
    apply_mask(data, picks.into_iter().map(|ix| observed[ix]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rating {
    pub user: u64,
    pub item: u64,
    pub rating: f64,
}

/// Reads `userId,movieId,rating[,...]` with a header row.
pub fn parse_ratings_csv(text: &str) -> Result<Vec<Rating>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let mut out = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| -> Result<&str> {
            rec.get(k).ok_or_else(|| Error::Parse {
                row: r + 1,
                column: headers.get(k).unwrap_or("?").to_string(),
                message: "missing field".into(),
            })
        };
        let parse_err = |k: usize, what: &str| Error::Parse {
            row: r + 1,
            column: headers.get(k).unwrap_or("?").to_string(),
            message: format!("not a valid {what}"),
        };
        let user = field(0)?.parse().map_err(|_| parse_err(0, "user id"))?;
        let item = field(1)?.parse().map_err(|_| parse_err(1, "item id"))?;
        let rating: f64 = field(2)?.parse().map_err(|_| parse_err(2, "rating"))?;
        if !(0.5..=5.0).contains(&rating) || (rating * 2.0).fract() != 0.0 {
            return Err(Error::Parse {
                row: r + 1,
                column: headers.get(2).unwrap_or("?").to_string(),
                message: format!("rating {rating} is not a half-star step in 0.5..=5.0"),
            });
        }
        out.push(Rating { user, item, rating });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RatingCoding {
    /// `rating >= cutoff` becomes 2, otherwise 1.
    Binary { cutoff: f64 },
    /// Half stars rounded up to 1..=5.
    FiveCategory,
}

impl RatingCoding {
    pub fn code(&self, rating: f64) -> u32 {
        match *self {
            Self::Binary { cutoff } => {
                if rating >= cutoff {
                    2
                } else {
                    1
                }
            }
            Self::FiveCategory => (rating.ceil() as u32).clamp(1, 5),
        }
    }

    fn categories(&self) -> u32 {
        match self {
            Self::Binary { .. } => 2,
            Self::FiveCategory => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessOptions {
    pub item_threshold: f64,
    pub user_threshold: f64,
    pub coding: RatingCoding,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        Self {
            item_threshold: 0.25,
            user_threshold: 0.95,
            coding: RatingCoding::Binary { cutoff: 4.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatingMatrix {
    pub data: Dataset,
    pub users: Vec<u64>,
    pub items: Vec<u64>,
}

/// Keeps items rated by more than `item_threshold` of all users, then users
/// who rated more than `user_threshold` of the kept items. Both comparisons
/// are strict. Repeated (user, item) pairs keep the last rating.
pub fn preprocess_ratings(ratings: &[Rating], opts: &PreprocessOptions) -> Result<RatingMatrix> {
    let mut by_pair: BTreeMap<(u64, u64), f64> = BTreeMap::new();
    for r in ratings {
        by_pair.insert((r.user, r.item), r.rating);
    }
    let all_users: BTreeSet<u64> = by_pair.keys().map(|&(u, _)| u).collect();
    let mut raters: HashMap<u64, usize> = HashMap::new();
    for &(_, item) in by_pair.keys() {
        *raters.entry(item).or_insert(0) += 1;
    }
    let user_count = all_users.len() as f64;
    let items: Vec<u64> = raters
        .iter()
        .filter(|&(_, &c)| c as f64 > opts.item_threshold * user_count)
        .map(|(&i, _)| i)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if items.is_empty() {
        return Err(Error::EmptyAfterFilter("no item passes the item threshold".into()));
    }
    let item_pos: HashMap<u64, usize> = items.iter().enumerate().map(|(i, &it)| (it, i)).collect();
    let mut per_user: BTreeMap<u64, usize> = BTreeMap::new();
    for &(u, it) in by_pair.keys() {
        if item_pos.contains_key(&it) {
            *per_user.entry(u).or_insert(0) += 1;
        }
    }
    let needed = opts.user_threshold * items.len() as f64;
    let users: Vec<u64> = per_user
        .iter()
        .filter(|&(_, &c)| c as f64 > needed)
        .map(|(&u, _)| u)
        .collect();
    if users.is_empty() {
        return Err(Error::EmptyAfterFilter("no user passes the user threshold".into()));
    }
    let user_pos: HashMap<u64, usize> = users.iter().enumerate().map(|(i, &u)| (u, i)).collect();
    let p = items.len();
    let mut cells = vec![MISSING; users.len() * p];
    for (&(u, it), &rating) in &by_pair {
        if let (Some(&ui), Some(&ii)) = (user_pos.get(&u), item_pos.get(&it)) {
            cells[ui * p + ii] = opts.coding.code(rating);
        }
    }
    let schema = CategoricalSchema::new(vec![opts.coding.categories(); p])?;
    let names = items.iter().map(|i| i.to_string()).collect();
    Ok(RatingMatrix {
        data: Dataset::new(schema, names, cells)?,
        users,
        items,
    })
}

/// Seed for the `stage`-th generator of replication `rep`.
pub fn stage_seed(master: u64, rep: u64, stage: u64) -> u64 {
    split_seed(split_seed(master, rep), stage)
}
