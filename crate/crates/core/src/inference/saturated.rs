//! Saturated latent-class construction: one class per category combination
//! with positive probability, carrying that combination's missing rates in
//! the extra category. Collapsing it reproduces the joint table, and its
//! implied missing rates reproduce the missingness table, for any mechanism.

use crate::data::CategoricalSchema;
use crate::error::{Error, Result};
use crate::model::{for_each_combination, CollapsedModel, JointDistribution, MissingnessTable};
use crate::scalar::{abs, Scalar};

use super::joint::joint_distribution_with_limit;

/// Mixture over the augmented categories `{missing, 1, ..., d_j}`;
/// `psi[h][j][0]` is the missing cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedModel<T> {
    pub schema: CategoricalSchema,
    /// Defining combination of each class (1-based codes).
    pub classes: Vec<Vec<u32>>,
    pub theta: Vec<T>,
    pub psi: Vec<Vec<Vec<T>>>,
}

impl<T: Scalar> AugmentedModel<T> {
    /// Drops the missing category: `psi_c / (1 - psi_0)` for `c >= 1`.
    pub fn collapse(&self) -> Result<CollapsedModel<T>> {
        let mut tilde = Vec::with_capacity(self.psi.len());
        for (h, block) in self.psi.iter().enumerate() {
            let mut vars = Vec::with_capacity(block.len());
            for (j, v) in block.iter().enumerate() {
                let keep = T::one() - v[0].clone();
                if keep <= T::zero() {
                    return Err(Error::Rescale {
                        component: h + 1,
                        variable: j + 1,
                    });
                }
                vars.push(v[1..].iter().map(|x| x.clone() / keep.clone()).collect());
            }
            tilde.push(vars);
        }
        let tol = if T::sum_tolerance() == T::zero() {
            T::zero()
        } else {
            T::from_f64(1e-9).unwrap()
        };
        CollapsedModel::with_tolerance(self.schema.clone(), self.theta.clone(), tilde, tol)
    }
}

pub fn construct_saturated_model<T: Scalar>(
    pi: &JointDistribution<T>,
    q: &MissingnessTable<T>,
) -> Result<AugmentedModel<T>> {
    let schema = pi.schema();
    if schema != q.schema() {
        return Err(Error::Contract("joint table and missingness table disagree on schema".into()));
    }
    let mut classes = Vec::new();
    let mut theta = Vec::new();
    let mut psi = Vec::new();
    for_each_combination(schema, |idx, combo| {
        let mass = pi.table()[idx].clone();
        if mass <= T::zero() {
            return;
        }
        let block = combo
            .iter()
            .enumerate()
            .map(|(j, &c)| {
                let rate = q.rate(j, idx).clone();
                let mut v = vec![T::zero(); schema.cardinality(j) as usize + 1];
                v[c as usize] = T::one() - rate.clone();
                v[0] = rate;
                v
            })
            .collect();
        classes.push(combo.to_vec());
        theta.push(mass);
        psi.push(block);
    });
    Ok(AugmentedModel {
        schema: schema.clone(),
        classes,
        theta,
        psi,
    })
}

/// `p(r_j = 0 | x = c)` for every combination with positive probability,
/// integrating over the latent class; `None` where the combination has
/// zero probability under the model.
pub fn implied_missing_rates<T: Scalar>(aug: &AugmentedModel<T>) -> Result<Vec<Vec<Option<T>>>> {
    let collapsed = aug.collapse()?;
    let schema = &aug.schema;
    let mut out = vec![Vec::new(); schema.p()];
    for_each_combination(schema, |_, combo| {
        let joint: Vec<T> = (0..collapsed.k())
            .map(|h| {
                combo
                    .iter()
                    .enumerate()
                    .fold(collapsed.theta()[h].clone(), |acc, (j, &c)| {
                        acc * collapsed.prob(h, j, c).clone()
                    })
            })
            .collect();
        let total = joint.iter().cloned().fold(T::zero(), |a, b| a + b);
        for (j, col) in out.iter_mut().enumerate() {
            if total <= T::zero() {
                col.push(None);
                continue;
            }
            let rate = joint
                .iter()
                .zip(&aug.psi)
                .fold(T::zero(), |acc, (w, block)| acc + w.clone() * block[j][0].clone());
            col.push(Some(rate / total.clone()));
        }
    });
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstructionReport<T> {
    /// Max-abs deviation of the rebuilt joint table from `pi`.
    pub pi_error: T,
    /// Max-abs deviation of the implied missing rates from `q`, over
    /// combinations with positive probability.
    pub q_error: T,
}

pub fn verify_construction<T: Scalar>(
    aug: &AugmentedModel<T>,
    pi: &JointDistribution<T>,
    q: &MissingnessTable<T>,
) -> Result<ConstructionReport<T>> {
    let collapsed = aug.collapse()?;
    let rebuilt = joint_distribution_with_limit(&collapsed, u128::MAX)?;
    let pi_error = rebuilt.max_abs_diff(pi);
    let implied = implied_missing_rates(aug)?;
    let mut q_error = T::zero();
    for (j, col) in implied.iter().enumerate() {
        for (idx, rate) in col.iter().enumerate() {
            if pi.table()[idx] <= T::zero() {
                continue;
            }
            let Some(rate) = rate else {
                return Err(Error::Numerical(format!(
                    "combination {} has positive probability but zero model mass",
                    idx
                )));
            };
            let e = abs(rate.clone() - q.rate(j, idx).clone());
            if e > q_error {
                q_error = e;
            }
        }
    }
    Ok(ConstructionReport { pi_error, q_error })
}
