//! Chinese-restaurant-process Gibbs sampler over product-multinomial mixtures
//! with the missing category modelled as an extra cell.
//!
//! One sweep reassigns every row (existing component in proportion to its
//! size times the row likelihood, or a new component in proportion to
//! `alpha` times the prior predictive), then sorts and prunes components,
//! then redraws every component's multinomials from their Dirichlet
//! posteriors. Retained states are collapsed by dropping the missing cell
//! and renormalising.

use std::collections::BTreeMap;

use log::{debug, info};
use rand::Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{CollapsedModel, ModelState, Priors};
use crate::rng::{seeded, ChainRng};
use crate::scalar::{normalize_log_weights, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsConfig {
    pub burnin: usize,
    pub samples: usize,
    pub thin: usize,
    pub seed: u64,
    pub alpha_override: Option<f64>,
    pub beta_override: Option<Vec<Vec<f64>>>,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            burnin: 200,
            samples: 100,
            thin: 2,
            seed: 0,
            alpha_override: None,
            beta_override: None,
        }
    }
}

impl GibbsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Invalid("samples must be at least 1".into()));
        }
        if self.thin == 0 {
            return Err(Error::Invalid("thin must be at least 1".into()));
        }
        if let Some(a) = self.alpha_override {
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::Invalid(format!("alpha must be positive, got {a}")));
            }
        }
        Ok(())
    }

    pub fn total_sweeps(&self) -> usize {
        self.burnin + self.samples * self.thin
    }

    fn resolve_priors<F: Real>(&self, data: &Dataset, priors: &Priors<F>) -> Result<Priors<F>> {
        let schema = data.schema();
        let alpha = match self.alpha_override {
            Some(a) => F::from_f64(a).unwrap(),
            None => priors.alpha(),
        };
        let beta = match &self.beta_override {
            Some(b) => b
                .iter()
                .map(|v| v.iter().map(|x| F::from_f64(*x).unwrap()).collect())
                .collect(),
            None => (0..schema.p()).map(|j| priors.beta(j).to_vec()).collect(),
        };
        Priors::new(schema, alpha, beta)
    }
}

/// Retained collapsed draws and the occupied-component histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSample<F> {
    pub draws: Vec<CollapsedModel<F>>,
    pub k_histogram: BTreeMap<usize, usize>,
    /// Component labels of the final state, 0-based, sorted by size.
    pub last_assignments: Vec<usize>,
}

impl<F: Real> PosteriorSample<F> {
    pub fn from_draws(draws: Vec<CollapsedModel<F>>) -> Self {
        let mut k_histogram = BTreeMap::new();
        for d in &draws {
            *k_histogram.entry(d.k()).or_insert(0) += 1;
        }
        Self {
            draws,
            k_histogram,
            last_assignments: Vec::new(),
        }
    }

    /// Modal number of occupied components; ties go to the smaller k.
    pub fn estimated_k(&self) -> usize {
        let mut best = (0usize, 0usize);
        for (&k, &count) in &self.k_histogram {
            if count > best.1 {
                best = (k, count);
            }
        }
        best.0
    }

    /// Equal-weight mixture of all retained draws.
    pub fn pooled_model(&self) -> Result<CollapsedModel<F>> {
        CollapsedModel::pooled(&self.draws)
    }
}

/// Draws from Dirichlet(`alpha`) by normalising independent gamma variates.
pub fn sample_dirichlet<F: Real, R: Rng + ?Sized>(alpha: &[F], rng: &mut R) -> Vec<F> {
    for _ in 0..16 {
        let mut v: Vec<F> = alpha.iter().map(|&a| F::sample_gamma(a, rng)).collect();
        let total = v.iter().fold(F::zero(), |s, &x| s + x);
        if total > F::zero() && total.is_finite() {
            for x in v.iter_mut() {
                *x = *x / total;
            }
            return v;
        }
    }
    // Every variate underflowed: only possible for tiny concentrations, where
    // the draw is a vertex of the simplex with overwhelming probability.
    let top = (0..alpha.len())
        .max_by(|&a, &b| alpha[a].partial_cmp(&alpha[b]).unwrap())
        .unwrap_or(0);
    let mut v = vec![F::zero(); alpha.len()];
    v[top] = F::one();
    v
}

fn check_schema<F: Real>(data: &Dataset, priors: &Priors<F>) -> Result<()> {
    for j in 0..data.p() {
        if priors.beta(j).len() != data.schema().cardinality(j) as usize + 1 {
            return Err(Error::Contract(format!(
                "priors do not match the dataset schema at variable {}",
                j + 1
            )));
        }
    }
    Ok(())
}

/// Step 1: every row in its own component, each psi from the prior.
pub fn init_state<F: Real>(data: &Dataset, priors: &Priors<F>, seed: u64) -> Result<ModelState<F>> {
    let mut rng = seeded(seed);
    init_state_with_rng(data, priors, seed, &mut rng)
}

pub(crate) fn init_state_with_rng<F: Real, R: Rng + ?Sized>(
    data: &Dataset,
    priors: &Priors<F>,
    seed: u64,
    rng: &mut R,
) -> Result<ModelState<F>> {
    check_schema(data, priors)?;
    let n = data.n();
    let psi = (0..n)
        .map(|_| {
            (0..data.p())
                .map(|j| sample_dirichlet(priors.beta(j), rng))
                .collect()
        })
        .collect();
    Ok(ModelState::from_parts((0..n).collect(), vec![1; n], psi, seed))
}

/// Normalised reassignment probabilities for row `i`.
///
/// `components` lists the existing components with `n_{h,-i} > 0`, in state
/// order; `probs` has one more entry than `components`, the last being the
/// new-component probability.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentWeights<F> {
    pub components: Vec<usize>,
    pub probs: Vec<F>,
}

/// Log of the exact single-draw Dirichlet-multinomial prior predictive
/// `prod_j beta_{j,x_ij} / sum_c beta_jc`.
fn log_prior_predictive<F: Real>(row: &[u32], priors: &Priors<F>) -> F {
    row.iter().enumerate().fold(F::zero(), |acc, (j, &x)| {
        let b = priors.beta(j);
        let total = b.iter().fold(F::zero(), |s, &v| s + v);
        acc + (b[x as usize] / total).ln()
    })
}

pub fn assignment_weights<F: Real>(
    i: usize,
    state: &ModelState<F>,
    data: &Dataset,
    priors: &Priors<F>,
) -> Result<AssignmentWeights<F>> {
    let row = data.row(i);
    let own = state.assignments[i];
    let mut components = Vec::with_capacity(state.k());
    let mut log_w = Vec::with_capacity(state.k() + 1);
    for (h, &count) in state.counts.iter().enumerate() {
        let others = count - usize::from(h == own);
        if others == 0 {
            continue;
        }
        let ll = row
            .iter()
            .enumerate()
            .fold(F::zero(), |acc, (j, &x)| acc + state.psi[h][j][x as usize].ln());
        components.push(h);
        log_w.push(F::from_usize_exact(others).ln() + ll);
    }
    // The common 1 / (n + alpha - 1) factor cancels in the normalisation.
    log_w.push(priors.alpha().ln() + log_prior_predictive(row, priors));
    if !normalize_log_weights(&mut log_w) {
        return Err(Error::Numerical(format!(
            "all assignment weights vanished for row {}",
            i + 1
        )));
    }
    Ok(AssignmentWeights {
        components,
        probs: log_w,
    })
}

fn sample_index<F: Real, R: Rng + ?Sized>(probs: &[F], rng: &mut R) -> usize {
    let u = F::sample_unit(rng);
    let mut acc = F::zero();
    let mut last_positive = 0;
    for (idx, &p) in probs.iter().enumerate() {
        if p > F::zero() {
            last_positive = idx;
        }
        acc = acc + p;
        if u < acc {
            return idx;
        }
    }
    last_positive
}

/// Redraws `z_i` from `weights`. A new component gets psi drawn from the
/// Dirichlet posterior given row `i` alone. The old component may be left
/// empty; [`prune_and_relabel`] removes it.
pub fn sample_assignment<F: Real, R: Rng + ?Sized>(
    i: usize,
    weights: &AssignmentWeights<F>,
    state: &mut ModelState<F>,
    data: &Dataset,
    priors: &Priors<F>,
    rng: &mut R,
) {
    let pick = sample_index(&weights.probs, rng);
    let old = state.assignments[i];
    let target = if pick == weights.components.len() {
        let row = data.row(i);
        let psi = row
            .iter()
            .enumerate()
            .map(|(j, &x)| {
                let mut conc = priors.beta(j).to_vec();
                conc[x as usize] = conc[x as usize] + F::one();
                sample_dirichlet(&conc, rng)
            })
            .collect();
        state.psi.push(psi);
        state.counts.push(0);
        state.counts.len() - 1
    } else {
        weights.components[pick]
    };
    state.counts[old] -= 1;
    state.counts[target] += 1;
    state.assignments[i] = target;
}

/// Step 3: sort components by decreasing size (stable on the previous
/// index), drop empty ones and remap assignments.
pub fn prune_and_relabel<F: Real>(state: &mut ModelState<F>) {
    let mut order: Vec<usize> = (0..state.counts.len())
        .filter(|&h| state.counts[h] > 0)
        .collect();
    order.sort_by(|&a, &b| state.counts[b].cmp(&state.counts[a]));
    let mut remap = vec![usize::MAX; state.counts.len()];
    for (new, &old) in order.iter().enumerate() {
        remap[old] = new;
    }
    let mut old_psi: Vec<Option<Vec<Vec<F>>>> = std::mem::take(&mut state.psi).into_iter().map(Some).collect();
    state.psi = order.iter().map(|&h| old_psi[h].take().unwrap()).collect();
    state.counts = order.iter().map(|&h| state.counts[h]).collect();
    for z in state.assignments.iter_mut() {
        *z = remap[*z];
    }
}

/// Step 4: redraw each psi from its Dirichlet posterior.
pub fn update_psi<F: Real, R: Rng + ?Sized>(
    state: &mut ModelState<F>,
    data: &Dataset,
    priors: &Priors<F>,
    rng: &mut R,
) {
    let p = data.p();
    let k = state.k();
    let mut tallies: Vec<Vec<Vec<usize>>> = (0..k)
        .map(|_| {
            (0..p)
                .map(|j| vec![0usize; data.schema().cardinality(j) as usize + 1])
                .collect()
        })
        .collect();
    for (i, row) in data.rows().enumerate() {
        let h = state.assignments[i];
        for (j, &x) in row.iter().enumerate() {
            tallies[h][j][x as usize] += 1;
        }
    }
    for (h, block) in tallies.iter().enumerate() {
        for (j, counts) in block.iter().enumerate() {
            let conc: Vec<F> = counts
                .iter()
                .zip(priors.beta(j))
                .map(|(&c, &b)| F::from_usize_exact(c) + b)
                .collect();
            state.psi[h][j] = sample_dirichlet(&conc, rng);
        }
    }
}

/// Step 6: `theta_h = n_h / n`, and each psi rescaled without the missing cell.
pub fn collapse_state<F: Real>(state: &ModelState<F>, data: &Dataset) -> Result<CollapsedModel<F>> {
    let n = F::from_usize_exact(data.n());
    let limit = F::one() - F::from_f64(1e-12).unwrap();
    let theta = state
        .counts
        .iter()
        .map(|&c| F::from_usize_exact(c) / n)
        .collect();
    let mut tilde = Vec::with_capacity(state.k());
    for (h, block) in state.psi.iter().enumerate() {
        let mut vars = Vec::with_capacity(block.len());
        for (j, v) in block.iter().enumerate() {
            if v[0] >= limit {
                return Err(Error::Rescale {
                    component: h + 1,
                    variable: j + 1,
                });
            }
            // Equal to 1 - psi_0 up to rounding, and exactly normalising.
            let observed = v[1..].iter().fold(F::zero(), |s, &x| s + x);
            vars.push(v[1..].iter().map(|&x| x / observed).collect());
        }
        tilde.push(vars);
    }
    CollapsedModel::new(data.schema().clone(), theta, tilde)
}

/// One full sweep: reassign every row, prune, redraw psi.
pub fn sweep<F: Real, R: Rng + ?Sized>(
    state: &mut ModelState<F>,
    data: &Dataset,
    priors: &Priors<F>,
    rng: &mut R,
) -> Result<()> {
    for i in 0..data.n() {
        let w = assignment_weights(i, state, data, priors)?;
        sample_assignment(i, &w, state, data, priors, rng);
    }
    prune_and_relabel(state);
    update_psi(state, data, priors, rng);
    Ok(())
}

/// Runs the full chain and keeps every `thin`-th post-burn-in state.
pub fn run_gibbs<F: Real>(
    data: &Dataset,
    priors: &Priors<F>,
    config: &GibbsConfig,
) -> Result<PosteriorSample<F>> {
    config.validate()?;
    let priors = config.resolve_priors(data, priors)?;
    let mut rng: ChainRng = seeded(config.seed);
    let mut state = init_state_with_rng(data, &priors, config.seed, &mut rng)?;
    let total = config.total_sweeps();
    let mut draws = Vec::with_capacity(config.samples);
    for t in 1..=total {
        sweep(&mut state, data, &priors, &mut rng)?;
        debug!("sweep {}/{} k={}", t, total, state.k());
        if t % 50 == 0 || t == total {
            info!("sweep {}/{} k={}", t, total, state.k());
        }
        if t > config.burnin && (t - config.burnin) % config.thin == 0 {
            draws.push(collapse_state(&state, data)?);
        }
    }
    let mut sample = PosteriorSample::from_draws(draws);
    sample.last_assignments = state.assignments.clone();
    Ok(sample)
}
