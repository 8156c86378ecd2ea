//! JSON configuration files. Every key mirrors a command-line flag (with `-`
//! written as `_`); all keys are optional and unknown keys are rejected.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::adaptation::ScoreStatistic;
use crate::error::{Error, Result};
use crate::evaluation::PredictivePool;
use crate::kernels::KernelKind;
use crate::particles::Resampler;
use crate::samplers::Method;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub dataset: Option<usize>,
    pub data: Option<PathBuf>,
    pub components: Option<usize>,
    pub target: Option<String>,
    pub n: Option<usize>,
    pub method: Option<Method>,
    pub methods: Option<Vec<Method>>,
    pub runs: Option<usize>,
    pub particles: Option<usize>,
    pub ess_threshold_fraction: Option<f64>,
    pub a: Option<f64>,
    pub jitter_sd: Option<f64>,
    pub resampler: Option<Resampler>,
    pub force_final_move: Option<bool>,
    pub shuffle_observations: Option<bool>,
    pub moves_per_step: Option<usize>,
    pub score_statistic: Option<ScoreStatistic>,
    pub predictive_pool: Option<PredictivePool>,
    pub amcmc_iterations: Option<usize>,
    pub h_lower: Option<f64>,
    pub h_upper: Option<f64>,
    pub kernel: Option<KernelKind>,
    pub hmin: Option<f64>,
    pub hmax: Option<f64>,
    pub steps: Option<usize>,
    pub out: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub final_particles: Option<PathBuf>,
    pub population_log: Option<PathBuf>,
}

pub fn parse_config(text: &str) -> Result<ConfigFile> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })
}

/// Parses one enum-valued setting (e.g. `multinomial`, `lambda_tilde`, `rw`)
/// with the same spelling accepted in configuration files.
pub fn parse_setting<T: serde::de::DeserializeOwned>(s: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(s.trim().to_string()))
        .map_err(|e| Error::InvalidConfig(format!("'{}': {e}", s.trim())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_known_keys() {
        let c = parse_config(
            r#"{"seed": 7, "method": "Kmix", "methods": ["lwmean", "LWvariance"], "resampler": "multinomial",
                "score_statistic": "lambda", "predictive_pool": "acceptance_weighted", "kernel": "lw"}"#,
        )
        .unwrap();
        assert_eq!(c.seed, Some(7));
        assert_eq!(c.method, Some(Method::Kmix));
        assert_eq!(c.methods, Some(vec![Method::LwMean, Method::LwVariance]));
        assert_eq!(c.resampler, Some(Resampler::Multinomial));
        assert_eq!(c.score_statistic, Some(ScoreStatistic::Lambda));
        assert_eq!(c.predictive_pool, Some(PredictivePool::AcceptanceWeighted));
        assert_eq!(c.kernel, Some(KernelKind::LiuWest));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(matches!(parse_config(r#"{"sed": 1}"#), Err(Error::Parse { .. })));
        assert!(parse_config(r#"{"method": "nope"}"#).is_err());
        assert!(parse_config("").is_err());
        assert_eq!(parse_config("{}").unwrap(), ConfigFile::default());
    }

    #[test]
    fn single_settings() {
        assert_eq!(parse_setting::<Resampler>("residual").unwrap(), Resampler::Residual);
        assert_eq!(parse_setting::<KernelKind>("rw").unwrap(), KernelKind::RandomWalk);
        assert_eq!(parse_setting::<Method>("AMCMC").unwrap(), Method::Amcmc);
        assert!(parse_setting::<PredictivePool>("both").is_err());
    }
}
