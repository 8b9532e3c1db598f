use crate::error::{Error, Result};
use crate::model::CollapsedModel;
use crate::scalar::{Real, Scalar};

use super::joint::pair_marginal;

/// Two-sided Fisher exact test for a 2x2 table `[[a, b], [c, d]]`.
///
/// Sums the hypergeometric probabilities of every table with the observed
/// margins that is no more likely than the observed one. Probabilities are
/// built by the ratio recurrence outward from the mode, so no factorials
/// appear and the float path never overflows. With an exact scalar the
/// result is exact.
pub fn fisher_exact_2x2<T: Scalar>(table: [[u64; 2]; 2]) -> T {
    let [[a, b], [c, d]] = table;
    let r1 = a + b;
    let r2 = c + d;
    let c1 = a + c;
    let c2 = b + d;
    let total = r1 + r2;
    if r1 == 0 || r2 == 0 || c1 == 0 || c2 == 0 {
        return T::one();
    }
    let lo = c1.saturating_sub(r2);
    let hi = r1.min(c1);
    let mode = (((r1 + 1) as u128 * (c1 + 1) as u128) / (total + 2) as u128) as u64;
    let mode = mode.clamp(lo, hi);

    let t = |v: u64| T::from_u64(v).expect("count representable");
    let len = (hi - lo + 1) as usize;
    let mut w = vec![T::zero(); len];
    w[(mode - lo) as usize] = T::one();
    for x in mode..hi {
        // P(x + 1) / P(x)
        let num = t(r1 - x) * t(c1 - x);
        let den = t(x + 1) * t(r2 + x + 1 - c1);
        w[(x + 1 - lo) as usize] = w[(x - lo) as usize].clone() * num / den;
    }
    for x in (lo + 1..=mode).rev() {
        // P(x - 1) / P(x)
        let num = t(x) * t(r2 + x - c1);
        let den = t(r1 - x + 1) * t(c1 - x + 1);
        w[(x - 1 - lo) as usize] = w[(x - lo) as usize].clone() * num / den;
    }

    let observed = w[(a - lo) as usize].clone();
    let cutoff = observed.clone() + observed * T::tie_slack();
    let mut tail = T::zero();
    let mut norm = T::zero();
    for v in w {
        if v <= cutoff {
            tail = tail + v.clone();
        }
        norm = norm + v;
    }
    let p = tail / norm;
    if p > T::one() {
        T::one()
    } else {
        p
    }
}

/// Largest-remainder rounding of `n * probs` to integers summing to `n`.
/// Remainder ties go to the lower index.
pub fn round_to_counts<F: Real>(probs: &[F], n: u64) -> Vec<u64> {
    let nf = F::from_u64(n).unwrap();
    let scaled: Vec<F> = probs.iter().map(|&p| (p.max(F::zero())) * nf).collect();
    let mut counts: Vec<u64> = scaled.iter().map(|x| x.floor().to_u64().unwrap_or(0)).collect();
    let assigned: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&x, &y| {
        let rx = scaled[x] - scaled[x].floor();
        let ry = scaled[y] - scaled[y].floor();
        ry.partial_cmp(&rx).unwrap().then(x.cmp(&y))
    });
    if assigned <= n {
        for &idx in order.iter().cycle().take((n - assigned) as usize) {
            counts[idx] += 1;
        }
    } else {
        let mut excess = assigned - n;
        for &idx in order.iter().rev().cycle() {
            if excess == 0 {
                break;
            }
            if counts[idx] > 0 {
                counts[idx] -= 1;
                excess -= 1;
            }
        }
    }
    counts
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairTest<F> {
    /// 0-based variable indices.
    pub j1: usize,
    pub j2: usize,
    pub counts: [[u64; 2]; 2],
    pub p_value: F,
}

/// Fisher tests of every variable pair on count tables built from the
/// model's pair marginals at sample size `n`; sorted by ascending p-value.
pub fn pairwise_independence<F: Real>(m: &CollapsedModel<F>, n: u64) -> Result<Vec<PairTest<F>>> {
    let schema = m.schema();
    if let Some(j) = (0..schema.p()).find(|&j| schema.cardinality(j) != 2) {
        return Err(Error::Contract(format!(
            "variable {} has {} categories; the 2x2 test needs binary variables",
            j + 1,
            schema.cardinality(j)
        )));
    }
    if n == 0 {
        return Err(Error::Contract("effective sample size must be positive".into()));
    }
    let p = schema.p();
    let mut out = Vec::with_capacity(p * p.saturating_sub(1) / 2);
    for j1 in 0..p {
        for j2 in (j1 + 1)..p {
            let pm = pair_marginal(m, j1, j2)?;
            let flat = [pm[0][0], pm[0][1], pm[1][0], pm[1][1]];
            let c = round_to_counts(&flat, n);
            let counts = [[c[0], c[1]], [c[2], c[3]]];
            out.push(PairTest {
                j1,
                j2,
                counts,
                p_value: fisher_exact_2x2::<F>(counts),
            });
        }
    }
    out.sort_by(|x, y| x.p_value.partial_cmp(&y.p_value).unwrap());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CategoricalSchema;
    use num_rational::BigRational;

    fn ratio(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn known_tables() {
        assert_eq!(fisher_exact_2x2::<BigRational>([[3, 1], [1, 3]]), ratio(34, 70));
        assert!((fisher_exact_2x2::<f64>([[3, 1], [1, 3]]) - 34.0 / 70.0).abs() < 1e-15);
        assert_eq!(fisher_exact_2x2::<BigRational>([[2, 2], [2, 2]]), ratio(1, 1));
        // 2 / C(20, 10)
        assert_eq!(fisher_exact_2x2::<BigRational>([[10, 0], [0, 10]]), ratio(2, 184_756));
        let p = fisher_exact_2x2::<f64>([[10, 0], [0, 10]]);
        assert!((p - 1.0825088224e-5).abs() < 1e-14);
    }

    #[test]
    fn zero_margin_is_one() {
        assert_eq!(fisher_exact_2x2::<f64>([[0, 0], [3, 4]]), 1.0);
        assert_eq!(fisher_exact_2x2::<f64>([[0, 5], [0, 4]]), 1.0);
    }

    #[test]
    fn large_tables_do_not_overflow() {
        let p = fisher_exact_2x2::<f64>([[900, 100], [100, 900]]);
        assert!(p >= 0.0 && p < 1e-100);
        let q = fisher_exact_2x2::<f64>([[500, 500], [500, 500]]);
        assert!((q - 1.0).abs() < 1e-12);
    }

    #[test]
    fn largest_remainder_rounding() {
        assert_eq!(round_to_counts(&[0.25, 0.25, 0.25, 0.25], 10), vec![3, 3, 2, 2]);
        assert_eq!(round_to_counts(&[0.5, 0.0, 0.0, 0.5], 20), vec![10, 0, 0, 10]);
        assert_eq!(round_to_counts(&[0.33, 0.33, 0.34], 7).iter().sum::<u64>(), 7);
    }

    fn coupled() -> CollapsedModel<f64> {
        CollapsedModel::new(
            CategoricalSchema::binary(2),
            vec![0.5, 0.5],
            vec![vec![vec![1.0, 0.0], vec![1.0, 0.0]], vec![vec![0.0, 1.0], vec![0.0, 1.0]]],
        )
        .unwrap()
    }

    #[test]
    fn coupled_pair_matches_enumeration() {
        let tests = pairwise_independence(&coupled(), 20).unwrap();
        assert_eq!(tests.len(), 1);
        assert_eq!(tests[0].counts, [[10, 0], [0, 10]]);
        assert!((tests[0].p_value - 2.0 / 184_756.0).abs() < 1e-15);
    }

    #[test]
    fn non_binary_rejected() {
        let m = CollapsedModel::new(
            CategoricalSchema::new(vec![2, 3]).unwrap(),
            vec![1.0],
            vec![vec![vec![0.5, 0.5], vec![0.2, 0.3, 0.5]]],
        )
        .unwrap();
        let err = pairwise_independence(&m, 10).unwrap_err();
        assert!(err.to_string().contains("variable 2"), "{err}");
    }
}
