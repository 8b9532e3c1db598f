//! Post-fit inference: class posteriors, predictive imputation, joint and
//! pairwise distributions, independence tests and the saturated construction.

mod fisher;
mod joint;
mod saturated;

pub use fisher::{fisher_exact_2x2, pairwise_independence, round_to_counts, PairTest};
pub use joint::{correlation_matrix, joint_distribution, joint_distribution_with_limit, pair_marginal};
pub use saturated::{
    construct_saturated_model, implied_missing_rates, verify_construction, AugmentedModel,
    ConstructionReport,
};

use rand::Rng;

use crate::data::{Dataset, MISSING};
use crate::error::{Error, Result};
use crate::model::CollapsedModel;
use crate::rng::seeded;
use crate::sampler::PosteriorSample;
use crate::scalar::{normalize_log_weights, Real};

/// `P(z = h | x_obs)`; missing entries (code 0) carry no evidence.
pub fn class_posterior<F: Real>(row: &[u32], m: &CollapsedModel<F>) -> Result<Vec<F>> {
    check_row(row, m)?;
    let mut log_w: Vec<F> = (0..m.k())
        .map(|h| {
            row.iter()
                .enumerate()
                .filter(|(_, &x)| x != MISSING)
                .fold(m.theta()[h].ln(), |acc, (j, &x)| acc + m.prob(h, j, x).ln())
        })
        .collect();
    if !normalize_log_weights(&mut log_w) {
        return Err(Error::Numerical(
            "every component assigns zero likelihood to the observed row".into(),
        ));
    }
    Ok(log_w)
}

fn check_row<F: Real>(row: &[u32], m: &CollapsedModel<F>) -> Result<()> {
    let schema = m.schema();
    if row.len() != schema.p() {
        return Err(Error::Contract(format!(
            "row has {} entries, model has {} variables",
            row.len(),
            schema.p()
        )));
    }
    if let Some(j) = (0..row.len()).find(|&j| row[j] > schema.cardinality(j)) {
        return Err(Error::Contract(format!(
            "code {} exceeds d = {} for variable {}",
            row[j],
            schema.cardinality(j),
            j + 1
        )));
    }
    Ok(())
}

fn mix_cell<F: Real>(posterior: &[F], j: usize, m: &CollapsedModel<F>) -> Vec<F> {
    let d = m.schema().cardinality(j) as usize;
    let mut out = vec![F::zero(); d];
    for (h, &w) in posterior.iter().enumerate() {
        for (o, &p) in out.iter_mut().zip(m.tilde_psi(h, j)) {
            *o = *o + w * p;
        }
    }
    out
}

/// `P(x_j = c | x_obs) = sum_h P(z = h | x_obs) * tilde_psi[h][j][c]`.
pub fn predictive_cell<F: Real>(row: &[u32], j: usize, m: &CollapsedModel<F>) -> Result<Vec<F>> {
    if j >= row.len() || row[j] != MISSING {
        return Err(Error::Contract(format!(
            "variable {} is observed; predictive is defined for missing cells",
            j + 1
        )));
    }
    let post = class_posterior(row, m)?;
    Ok(mix_cell(&post, j, m))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImputeRule {
    /// Most probable category; ties go to the lowest code.
    Argmax,
    /// Draw from the predictive with a seeded generator.
    Sample { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellPosterior<F> {
    pub row: usize,
    pub col: usize,
    /// Probabilities of codes `1..=d_j`.
    pub probs: Vec<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImputationResult<F> {
    pub completed: Dataset,
    pub cell_posteriors: Vec<CellPosterior<F>>,
}

/// Index of the largest entry, first one on ties.
pub fn argmax<F: Real>(probs: &[F]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

fn draw_category<F: Real, R: Rng + ?Sized>(probs: &[F], rng: &mut R) -> usize {
    let u = F::sample_unit(rng);
    let mut acc = F::zero();
    for (i, &p) in probs.iter().enumerate() {
        acc = acc + p;
        if u < acc {
            return i;
        }
    }
    argmax(probs)
}

/// Imputes every missing cell from the predictive averaged over `draws`.
pub fn impute_with_draws<F: Real>(
    data: &Dataset,
    draws: &[CollapsedModel<F>],
    rule: ImputeRule,
) -> Result<ImputationResult<F>> {
    if draws.is_empty() {
        return Err(Error::Contract("no posterior draws to impute from".into()));
    }
    for m in draws {
        if m.schema() != data.schema() {
            return Err(Error::Contract(format!(
                "model schema {:?} does not match data schema {:?}",
                m.schema().cardinalities(),
                data.schema().cardinalities()
            )));
        }
    }
    let mut rng = match rule {
        ImputeRule::Sample { seed } => Some(seeded(seed)),
        ImputeRule::Argmax => None,
    };
    let scale = F::one() / F::from_usize_exact(draws.len());
    let mut cells = data.cells().to_vec();
    let mut cell_posteriors = Vec::new();
    for (i, row) in data.rows().enumerate() {
        let missing: Vec<usize> = (0..row.len()).filter(|&j| row[j] == MISSING).collect();
        if missing.is_empty() {
            continue;
        }
        let mut acc: Vec<Vec<F>> = missing
            .iter()
            .map(|&j| vec![F::zero(); data.schema().cardinality(j) as usize])
            .collect();
        for m in draws {
            let post = class_posterior(row, m)?;
            for (slot, &j) in acc.iter_mut().zip(&missing) {
                for (a, p) in slot.iter_mut().zip(mix_cell(&post, j, m)) {
                    *a = *a + p * scale;
                }
            }
        }
        for (probs, &j) in acc.into_iter().zip(&missing) {
            let pick = match rng.as_mut() {
                Some(r) => draw_category(&probs, r),
                None => argmax(&probs),
            };
            cells[i * data.p() + j] = pick as u32 + 1;
            cell_posteriors.push(CellPosterior {
                row: i,
                col: j,
                probs,
            });
        }
    }
    Ok(ImputationResult {
        completed: data.with_cells(cells)?,
        cell_posteriors,
    })
}

pub fn impute<F: Real>(
    data: &Dataset,
    posterior: &PosteriorSample<F>,
    rule: ImputeRule,
) -> Result<ImputationResult<F>> {
    impute_with_draws(data, &posterior.draws, rule)
}
