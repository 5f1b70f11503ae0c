//! Results files and the cross-trial comparison table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::grid::GridOutcome;
use super::metrics::relative_improvement;
use super::protocol::{ExperimentResult, Protocol};
use super::stats::{paired_t_test, TTest};
use crate::error::{Error, Result};
use crate::params::Variant;
use crate::synth::SyntheticConfig;
use crate::CODE_VERSION;

/// What is needed to regenerate a result.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub code_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bundle_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<SyntheticConfig>,
}

impl Provenance {
    pub fn new(bundle_seed: Option<u64>, generator: Option<SyntheticConfig>) -> Self {
        Self {
            code_version: CODE_VERSION.to_string(),
            bundle_seed,
            generator,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub provenance: Provenance,
    pub records: Vec<ExperimentResult>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweeps: Vec<GridOutcome>,
}

impl ResultsFile {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// One line of the comparison table: a variant against the baseline on
/// one protocol, paired by seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub protocol: Protocol,
    pub variant: Variant,
    pub trials: usize,
    pub mean_rmse: f64,
    pub baseline_mean_rmse: f64,
    /// Mean over trials of `100 · (baseline - model) / baseline`.
    pub mean_improvement_pct: f64,
    /// Baseline minus variant; `None` with fewer than two trials or
    /// constant differences.
    pub t_test: Option<TTest>,
}

/// Compares every non-baseline variant with `baseline`, per protocol.
/// Records are paired on `seed`; unpaired records are ignored.
pub fn compare(records: &[ExperimentResult], baseline: Variant) -> Result<Vec<ComparisonRow>> {
    let mut by_key: BTreeMap<(Protocol, Variant), BTreeMap<u64, f64>> = BTreeMap::new();
    for r in records {
        if by_key
            .entry((r.protocol, r.variant))
            .or_default()
            .insert(r.seed, r.rmse)
            .is_some()
        {
            return Err(Error::invalid(format!(
                "duplicate {} record for {} with seed {}",
                r.protocol.as_str(),
                r.variant,
                r.seed
            )));
        }
    }
    let mut rows = Vec::new();
    for ((protocol, variant), runs) in &by_key {
        if *variant == baseline {
            continue;
        }
        let Some(base_runs) = by_key.get(&(*protocol, baseline)) else {
            continue;
        };
        let (mut base, mut model) = (Vec::new(), Vec::new());
        for (seed, &r) in runs {
            if let Some(&b) = base_runs.get(seed) {
                base.push(b);
                model.push(r);
            }
        }
        if base.is_empty() {
            continue;
        }
        let n = base.len() as f64;
        let mut improvement = 0.0;
        for (&b, &m) in base.iter().zip(&model) {
            improvement += relative_improvement(b, m)?;
        }
        let t_test = if base.len() >= 2 {
            paired_t_test(&base, &model).ok()
        } else {
            None
        };
        rows.push(ComparisonRow {
            protocol: *protocol,
            variant: *variant,
            trials: base.len(),
            mean_rmse: model.iter().sum::<f64>() / n,
            baseline_mean_rmse: base.iter().sum::<f64>() / n,
            mean_improvement_pct: improvement / n,
            t_test,
        });
    }
    Ok(rows)
}

/// Tab-separated rendering of [`compare`], one header line.
pub fn comparison_tsv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from(
        "protocol\tvariant\ttrials\tmean_rmse\tbaseline_mean_rmse\tmean_improvement_pct\tt_stat\tp_value\tsignificant\n",
    );
    for r in rows {
        let (t, p, sig) = match &r.t_test {
            Some(t) => (t.t_stat.to_string(), t.p_value.to_string(), t.significant.to_string()),
            None => ("NA".into(), "NA".into(), "NA".into()),
        };
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{t}\t{p}\t{sig}",
            r.protocol.as_str(),
            r.variant,
            r.trials,
            r.mean_rmse,
            r.baseline_mean_rmse,
            r.mean_improvement_pct
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Hyperparams;

    fn rec(variant: Variant, protocol: Protocol, seed: u64, rmse: f64) -> ExperimentResult {
        ExperimentResult {
            variant,
            protocol,
            rmse,
            n_test: 10,
            seed,
            hyper: Hyperparams::default(),
        }
    }

    #[test]
    fn pairs_by_seed_and_reports_improvement() {
        let mut records = Vec::new();
        for (seed, (b, m)) in [(1.0, 0.9), (1.1, 0.95), (1.05, 0.97)].into_iter().enumerate() {
            records.push(rec(Variant::Pmf, Protocol::Realistic, seed as u64, b));
            records.push(rec(Variant::RapmfR, Protocol::Realistic, seed as u64, m));
        }
        // unpaired: ignored
        records.push(rec(Variant::RapmfR, Protocol::Realistic, 99, 0.1));
        let rows = compare(&records, Variant::Pmf).unwrap();
        assert_eq!(rows.len(), 1);
        let r = &rows[0];
        assert_eq!(r.trials, 3);
        let expected = 100.0 * ((0.1 / 1.0) + (0.15 / 1.1) + (0.08 / 1.05)) / 3.0;
        assert!((r.mean_improvement_pct - expected).abs() < 1e-12);
        assert!(r.t_test.unwrap().t_stat > 0.0);
        let tsv = comparison_tsv(&rows);
        assert_eq!(tsv.lines().count(), 2);
        assert!(tsv.lines().nth(1).unwrap().starts_with("realistic\trapmf-r\t3\t"));
    }

    #[test]
    fn duplicate_records_are_rejected() {
        let r = rec(Variant::Pmf, Protocol::Traditional, 1, 1.0);
        assert!(compare(&[r.clone(), r], Variant::Pmf).is_err());
    }
}
