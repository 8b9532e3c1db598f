use crate::error::{Error, Result};
use crate::model::{for_each_combination, CollapsedModel, JointDistribution, DEFAULT_CELL_LIMIT};
use crate::scalar::{Real, Scalar};

/// Dense joint table `pi_c = sum_h theta_h prod_j tilde_psi[h][j][c_j]`.
pub fn joint_distribution<T: Scalar>(m: &CollapsedModel<T>) -> Result<JointDistribution<T>> {
    joint_distribution_with_limit(m, DEFAULT_CELL_LIMIT)
}

pub fn joint_distribution_with_limit<T: Scalar>(
    m: &CollapsedModel<T>,
    limit: u128,
) -> Result<JointDistribution<T>> {
    let schema = m.schema();
    let cells = schema.table_size();
    if cells > limit {
        return Err(Error::TableTooLarge { cells, limit });
    }
    let mut table = Vec::with_capacity(cells as usize);
    for_each_combination(schema, |_, combo| {
        let mut total = T::zero();
        for (h, th) in m.theta().iter().enumerate() {
            let term = combo
                .iter()
                .enumerate()
                .fold(th.clone(), |acc, (j, &c)| acc * m.prob(h, j, c).clone());
            total = total + term;
        }
        table.push(total);
    });
    JointDistribution::with_limit(schema.clone(), table, limit)
}

/// `d_{j1} x d_{j2}` table `sum_h theta_h tilde_psi[h][j1] (x) tilde_psi[h][j2]`.
pub fn pair_marginal<T: Scalar>(m: &CollapsedModel<T>, j1: usize, j2: usize) -> Result<Vec<Vec<T>>> {
    let p = m.schema().p();
    if j1 == j2 || j1 >= p || j2 >= p {
        return Err(Error::Contract(format!(
            "pair ({}, {}) must name two distinct variables out of {}",
            j1 + 1,
            j2 + 1,
            p
        )));
    }
    let d1 = m.schema().cardinality(j1) as usize;
    let d2 = m.schema().cardinality(j2) as usize;
    let mut out = vec![vec![T::zero(); d2]; d1];
    for (h, th) in m.theta().iter().enumerate() {
        for (a, pa) in m.tilde_psi(h, j1).iter().enumerate() {
            let w = th.clone() * pa.clone();
            for (b, pb) in m.tilde_psi(h, j2).iter().enumerate() {
                out[a][b] = out[a][b].clone() + w.clone() * pb.clone();
            }
        }
    }
    Ok(out)
}

/// Pearson correlation of the integer codes under the model, one pair
/// marginal at a time. Zero-variance variables get off-diagonal 0.
pub fn correlation_matrix<F: Real>(m: &CollapsedModel<F>) -> Vec<Vec<F>> {
    let p = m.schema().p();
    let moments: Vec<(F, F)> = (0..p)
        .map(|j| {
            let marg = m.marginal(j);
            let (mean, second) = marg.iter().enumerate().fold((F::zero(), F::zero()), |(a, b), (c, &q)| {
                let code = F::from_usize_exact(c + 1);
                (a + code * q, b + code * code * q)
            });
            (mean, second - mean * mean)
        })
        .collect();
    let eps = F::from_f64(1e-14).unwrap();
    let mut out = vec![vec![F::zero(); p]; p];
    for j1 in 0..p {
        out[j1][j1] = F::one();
        for j2 in (j1 + 1)..p {
            let (mu1, v1) = moments[j1];
            let (mu2, v2) = moments[j2];
            let r = if v1 <= eps || v2 <= eps {
                F::zero()
            } else {
                let table = pair_marginal(m, j1, j2).expect("distinct in-range pair");
                let mut cov = F::zero();
                for (a, row) in table.iter().enumerate() {
                    let xa = F::from_usize_exact(a + 1) - mu1;
                    for (b, &q) in row.iter().enumerate() {
                        cov = cov + q * xa * (F::from_usize_exact(b + 1) - mu2);
                    }
                }
                let r = cov / (v1 * v2).sqrt();
                r.max(-F::one()).min(F::one())
            };
            out[j1][j2] = r;
            out[j2][j1] = r;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CategoricalSchema;
    use crate::model::combination_index;

    fn model(theta: Vec<f64>, psi: Vec<Vec<Vec<f64>>>, d: &[u32]) -> CollapsedModel<f64> {
        CollapsedModel::new(CategoricalSchema::new(d.to_vec()).unwrap(), theta, psi).unwrap()
    }

    fn coupled() -> CollapsedModel<f64> {
        model(
            vec![0.5, 0.5],
            vec![vec![vec![1.0, 0.0], vec![1.0, 0.0]], vec![vec![0.0, 1.0], vec![0.0, 1.0]]],
            &[2, 2],
        )
    }

    #[test]
    fn single_component_is_outer_product() {
        let m = model(vec![1.0], vec![vec![vec![0.3, 0.7], vec![0.5, 0.5]]], &[2, 2]);
        let j = joint_distribution(&m).unwrap();
        let expected = [0.15, 0.15, 0.35, 0.35];
        for (a, b) in j.table().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        let pm = pair_marginal(&m, 0, 1).unwrap();
        assert!((pm[1][0] - 0.35).abs() < 1e-15);
    }

    #[test]
    fn point_masses() {
        let j = joint_distribution(&coupled()).unwrap();
        assert_eq!(j.table(), &[0.5, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn pair_marginal_matches_summed_joint() {
        let m = model(
            vec![0.2, 0.5, 0.3],
            vec![
                vec![vec![0.1, 0.9], vec![0.2, 0.3, 0.5], vec![0.6, 0.4]],
                vec![vec![0.7, 0.3], vec![0.3, 0.3, 0.4], vec![0.5, 0.5]],
                vec![vec![0.4, 0.6], vec![0.9, 0.05, 0.05], vec![0.2, 0.8]],
            ],
            &[2, 3, 2],
        );
        let joint = joint_distribution(&m).unwrap();
        let schema = m.schema().clone();
        for (j1, j2) in [(0, 1), (0, 2), (1, 2), (2, 0)] {
            let pm = pair_marginal(&m, j1, j2).unwrap();
            let mut summed = vec![vec![0.0; pm[0].len()]; pm.len()];
            for_each_combination(&schema, |idx, combo| {
                summed[combo[j1] as usize - 1][combo[j2] as usize - 1] += joint.table()[idx];
                assert_eq!(combination_index(&schema, combo), idx);
            });
            for (ra, rb) in pm.iter().zip(&summed) {
                for (a, b) in ra.iter().zip(rb) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
            // rows sum to the single-variable marginal
            let marg = m.marginal(j1);
            for (row, mg) in pm.iter().zip(&marg) {
                assert!((row.iter().sum::<f64>() - mg).abs() < 1e-12);
            }
        }
        assert!(pair_marginal(&m, 1, 1).is_err());
    }

    #[test]
    fn correlation_examples() {
        let indep = model(vec![1.0], vec![vec![vec![0.3, 0.7], vec![0.6, 0.4], vec![0.1, 0.9]]], &[2, 2, 2]);
        let c = correlation_matrix(&indep);
        for (a, row) in c.iter().enumerate() {
            for (b, &v) in row.iter().enumerate() {
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 1e-12);
            }
        }
        let c = correlation_matrix(&coupled());
        assert!((c[0][1] - 1.0).abs() < 1e-12);

        // Pair table [[0.4, 0.1], [0.1, 0.4]] as a two-component mixture:
        // phi = (0.16 - 0.01) / 0.25 = 0.6
        let phi = model(
            vec![0.5, 0.5],
            vec![vec![vec![1.0, 0.0], vec![0.8, 0.2]], vec![vec![0.0, 1.0], vec![0.2, 0.8]]],
            &[2, 2],
        );
        let pm = pair_marginal(&phi, 0, 1).unwrap();
        assert!((pm[0][0] - 0.4).abs() < 1e-15 && (pm[0][1] - 0.1).abs() < 1e-15);
        let c = correlation_matrix(&phi);
        assert!((c[0][1] - 0.6).abs() < 1e-12);
        assert_eq!(c[0][1], c[1][0]);
    }

    #[test]
    fn zero_variance_correlation_is_zero() {
        let m = model(vec![1.0], vec![vec![vec![1.0, 0.0], vec![0.5, 0.5]]], &[2, 2]);
        let c = correlation_matrix(&m);
        assert_eq!(c[0][1], 0.0);
        assert_eq!(c[0][0], 1.0);
    }

    #[test]
    fn too_large_table_is_refused() {
        let m = model(vec![1.0], vec![vec![vec![0.5, 0.5]; 4]], &[2, 2, 2, 2]);
        assert!(matches!(
            joint_distribution_with_limit(&m, 8),
            Err(Error::TableTooLarge { cells: 16, limit: 8 })
        ));
    }
}
