//! Imputation scoring and the replication harness for the simulation studies.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::inference::{correlation_matrix, impute, ImputeRule};
use crate::model::Priors;
use crate::sampler::{run_gibbs, GibbsConfig};
use crate::synth::{
    mask, sample_mixture_dataset, sample_xor_dataset, stage_seed, MaskedCell, MechanismSpec,
    MixtureSpec,
};

/// Fraction of masked cells whose imputed code equals the truth.
pub fn imputation_accuracy(imputed: &Dataset, truth: &Dataset, masked: &[MaskedCell]) -> Result<f64> {
    if masked.is_empty() {
        return Err(Error::Contract("accuracy is undefined for an empty mask".into()));
    }
    if imputed.schema() != truth.schema() || imputed.n() != truth.n() {
        return Err(Error::Contract("imputed and true datasets differ in shape".into()));
    }
    let hits = masked
        .iter()
        .filter(|c| imputed.get(c.row, c.col) == truth.get(c.row, c.col))
        .count();
    Ok(hits as f64 / masked.len() as f64)
}

/// Sum of squared entrywise differences.
pub fn correlation_gap(estimated: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<f64> {
    if estimated.len() != truth.len() || estimated.iter().zip(truth).any(|(a, b)| a.len() != b.len()) {
        return Err(Error::Contract("correlation matrices differ in dimension".into()));
    }
    Ok(estimated
        .iter()
        .zip(truth)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)))
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Mixture,
    Xor,
}

impl std::str::FromStr for Protocol {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mixture" => Ok(Self::Mixture),
            "xor" => Ok(Self::Xor),
            other => Err(Error::Invalid(format!("unknown protocol '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationConfig {
    pub protocol: Protocol,
    pub mechanism: MechanismSpec,
    pub reps: usize,
    pub gibbs: GibbsConfig,
    pub seed: u64,
    pub mixture: MixtureSpec,
    pub xor_n: usize,
    /// Worker threads; `None` uses the available parallelism.
    pub jobs: Option<usize>,
}

impl ReplicationConfig {
    pub fn new(protocol: Protocol, mechanism: MechanismSpec, reps: usize, seed: u64) -> Self {
        Self {
            protocol,
            mechanism,
            reps,
            gibbs: GibbsConfig::default(),
            seed,
            mixture: MixtureSpec::default(),
            xor_n: 300,
            jobs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationOutcome {
    pub replication: usize,
    pub accuracy: f64,
    /// Only for the mixture protocol, which has a true correlation matrix.
    pub correlation_gap: Option<f64>,
    pub estimated_k: usize,
    pub masked_cells: usize,
}

/// Mean and across-replication standard deviation (`None` with one value).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub sd_across_replications: Option<f64>,
    pub min: f64,
    pub max: f64,
}

impl MetricSummary {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = (values.len() > 1).then(|| {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        });
        Some(Self {
            mean,
            sd_across_replications: sd,
            min: values.iter().cloned().fold(f64::INFINITY, f64::min),
            max: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSummary {
    pub accuracy: Option<MetricSummary>,
    pub correlation_gap: Option<MetricSummary>,
    pub estimated_k: Option<MetricSummary>,
    /// Estimated k -> number of replications.
    pub k_histogram: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub protocol: Protocol,
    pub mechanism: String,
    pub reps: usize,
    pub seed: u64,
    pub burnin: usize,
    pub samples: usize,
    pub thin: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationFailure {
    pub replication: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationReport {
    pub config: ConfigEcho,
    pub per_replication: Vec<ReplicationOutcome>,
    pub failures: Vec<ReplicationFailure>,
    pub summary: ReportSummary,
}

impl ReplicationReport {
    /// One row per successful replication.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("replication,accuracy,correlation_gap,estimated_k,masked_cells\n");
        for o in &self.per_replication {
            let gap = o.correlation_gap.map(|g| g.to_string()).unwrap_or_else(|| "NA".into());
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                o.replication, o.accuracy, gap, o.estimated_k, o.masked_cells
            ));
        }
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialisation cannot fail")
    }

    /// `k,replications` rows for plotting the estimated-k histogram.
    pub fn k_histogram_csv(&self) -> String {
        let mut out = String::from("k,replications\n");
        for (k, c) in &self.summary.k_histogram {
            out.push_str(&format!("{k},{c}\n"));
        }
        out
    }
}

/// Synthesize, mask, fit, impute and score one replication.
pub fn run_replication(cfg: &ReplicationConfig, rep: usize) -> Result<ReplicationOutcome> {
    let r = rep as u64;
    let (complete, truth_corr) = match cfg.protocol {
        Protocol::Mixture => {
            let (d, truth) = sample_mixture_dataset(&cfg.mixture, stage_seed(cfg.seed, r, 0))?;
            (d, Some(correlation_matrix(&truth)))
        }
        Protocol::Xor => (sample_xor_dataset(cfg.xor_n, stage_seed(cfg.seed, r, 0))?.0, None),
    };
    let masked = mask(&complete, &cfg.mechanism, stage_seed(cfg.seed, r, 1))?;
    let gibbs = GibbsConfig {
        seed: stage_seed(cfg.seed, r, 2),
        ..cfg.gibbs.clone()
    };
    let priors = Priors::<f64>::default_for(complete.schema());
    let posterior = run_gibbs(&masked.data, &priors, &gibbs)?;
    let imputed = impute(&masked.data, &posterior, ImputeRule::Argmax)?;
    let accuracy = imputation_accuracy(&imputed.completed, &complete, &masked.cells)?;
    let correlation_gap = match truth_corr {
        Some(truth) => {
            let est = correlation_matrix(&posterior.pooled_model()?);
            Some(correlation_gap(&est, &truth)?)
        }
        None => None,
    };
    Ok(ReplicationOutcome {
        replication: rep,
        accuracy,
        correlation_gap,
        estimated_k: posterior.estimated_k(),
        masked_cells: masked.cells.len(),
    })
}

/// Runs `cfg.reps` independent replications concurrently. Failed
/// replications are listed in the report rather than aborting the run.
pub fn run_replications(cfg: &ReplicationConfig) -> Result<ReplicationReport> {
    if cfg.reps == 0 {
        return Err(Error::Invalid("reps must be at least 1".into()));
    }
    cfg.mechanism.validate()?;
    cfg.gibbs.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cfg.jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Invalid(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<ReplicationOutcome>> =
        pool.install(|| (0..cfg.reps).into_par_iter().map(|r| run_replication(cfg, r)).collect());

    let mut per_replication = Vec::new();
    let mut failures = Vec::new();
    for (rep, res) in results.into_iter().enumerate() {
        match res {
            Ok(o) => per_replication.push(o),
            Err(e) => failures.push(ReplicationFailure {
                replication: rep,
                error: e.to_string(),
            }),
        }
    }
    let acc: Vec<f64> = per_replication.iter().map(|o| o.accuracy).collect();
    let gaps: Vec<f64> = per_replication.iter().filter_map(|o| o.correlation_gap).collect();
    let ks: Vec<f64> = per_replication.iter().map(|o| o.estimated_k as f64).collect();
    let mut k_histogram = BTreeMap::new();
    for o in &per_replication {
        *k_histogram.entry(o.estimated_k).or_insert(0) += 1;
    }
    Ok(ReplicationReport {
        config: ConfigEcho {
            protocol: cfg.protocol,
            mechanism: cfg.mechanism.kind.to_string(),
            reps: cfg.reps,
            seed: cfg.seed,
            burnin: cfg.gibbs.burnin,
            samples: cfg.gibbs.samples,
            thin: cfg.gibbs.thin,
            alpha: cfg.gibbs.alpha_override.unwrap_or(crate::model::DEFAULT_ALPHA),
        },
        per_replication,
        failures,
        summary: ReportSummary {
            accuracy: MetricSummary::from_values(&acc),
            correlation_gap: MetricSummary::from_values(&gaps),
            estimated_k: MetricSummary::from_values(&ks),
            k_histogram,
        },
    })
}
