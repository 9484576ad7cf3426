use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{CovariateSchema, DgpConfig};
use crate::marginal::Marginalization;
use crate::sampler::{McmcConfig, PriorSpec};
use crate::{Error, Result};

/// Paths of the two survey CSV files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvInput {
    pub s1: PathBuf,
    pub s2: PathBuf,
}

/// One JSON document describing a whole run. Every field has a default so a
/// partial document is enough; exactly one of `csv` and `synthetic` must be
/// set for commands that need data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub csv: Option<CsvInput>,
    pub synthetic: Option<DgpConfig>,
    /// Calendar years of survey 1 and survey 2.
    pub survey_years: [i32; 2],
    pub schema: CovariateSchema,
    pub prior: PriorSpec,
    /// `seed` and `chain` inside are overwritten by the run.
    pub mcmc: McmcConfig,
    /// Decomposition order of the column groups; defaults to the intercept
    /// followed by the schema order.
    pub order: Option<Vec<String>>,
    pub marginalization: Marginalization,
    pub output_dir: PathBuf,
    /// Master seed for simulation and sampling.
    pub seed: u64,
    /// Wealth-rank cut-off of the centering reference population.
    pub poor_quantile: f64,
    /// Refit once with doubled thinning when a chain misses the ESS target.
    pub auto_extend: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            csv: None,
            synthetic: None,
            survey_years: [2000, 2010],
            schema: CovariateSchema::default(),
            prior: PriorSpec::default(),
            mcmc: McmcConfig::default(),
            order: None,
            marginalization: Marginalization::default(),
            output_dir: PathBuf::from("output"),
            seed: 1,
            poor_quantile: 0.2,
            auto_extend: true,
        }
    }
}

/// Command-line values that override the document.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub order: Option<Vec<String>>,
    pub marginalization: Option<Marginalization>,
}

/// Where the data for a run comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputMode {
    Csv,
    Synthetic,
}

impl RunConfig {
    /// Parse a JSON document. An empty or whitespace-only document is
    /// rejected so that a stray empty file does not silently mean "defaults".
    pub fn from_json(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Err(Error::Config("configuration document is empty".into()));
        }
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid configuration: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_json(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(out) = &o.out {
            self.output_dir = out.clone();
        }
        if let Some(order) = &o.order {
            self.order = Some(order.clone());
        }
        if let Some(m) = o.marginalization {
            self.marginalization = m;
        }
    }

    pub fn years_between(&self) -> f64 {
        f64::from(self.survey_years[1] - self.survey_years[0])
    }

    /// Checks that need no data: input exclusivity, years, schema, prior and
    /// chain settings.
    pub fn validate(&self) -> Result<InputMode> {
        let mode = match (&self.csv, &self.synthetic) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "set exactly one of `csv` and `synthetic`, not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Config(
                    "one of `csv` and `synthetic` must be set".into(),
                ))
            }
            (Some(_), None) => InputMode::Csv,
            (None, Some(_)) => InputMode::Synthetic,
        };
        if self.survey_years[1] <= self.survey_years[0] {
            return Err(Error::Config(format!(
                "survey 2 year {} must be after survey 1 year {}",
                self.survey_years[1], self.survey_years[0]
            )));
        }
        if !(self.poor_quantile > 0.0 && self.poor_quantile <= 1.0) {
            return Err(Error::Config(format!(
                "poor_quantile must lie in (0, 1], got {}",
                self.poor_quantile
            )));
        }
        self.schema.validate()?;
        self.prior.validate()?;
        self.mcmc.validate()?;
        if let Some(order) = &self.order {
            let mut seen = std::collections::HashSet::new();
            if let Some(dup) = order.iter().find(|g| !seen.insert(g.as_str())) {
                return Err(Error::Config(format!("group `{dup}` repeated in order")));
            }
        }
        Ok(mode)
    }

    /// Chain settings for survey `index` (0 or 1) derived from the master seed.
    pub fn chain_config(&self, index: usize) -> McmcConfig {
        McmcConfig {
            seed: self.seed ^ SAMPLER_SEED_MIX,
            chain: index as u64,
            ..self.mcmc
        }
    }
}

/// Mixed into the master seed for the sampler so that its streams never
/// coincide with those of the simulator, which uses the seed as is.
const SAMPLER_SEED_MIX: u64 = 0x9e37_79b9_7f4a_7c15;

/// Parse `--order a,b,c`.
pub fn parse_order(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|g| !g.is_empty())
        .map(String::from)
        .collect()
}
