//! Draw files: one CSV row per retained draw (`beta_0..beta_{p-1},sigma2`)
//! and a JSON sidecar carrying the column layout and the fit settings.

use std::fs;
use std::ops::Range;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{McmcConfig, PosteriorDraws, PriorSpec, SamplerError};
use crate::dataset::SurveyId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawsSidecar {
    pub survey_id: SurveyId,
    pub n_draws: usize,
    pub column_names: Vec<String>,
    pub column_groups: IndexMap<String, Range<usize>>,
    pub prior: PriorSpec,
    pub mcmc: McmcConfig,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> SamplerError + '_ {
    move |source| SamplerError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Render the CSV body. Floats use the shortest round-trip representation.
pub(crate) fn draws_csv(draws: &PosteriorDraws) -> String {
    let p = draws.n_coefficients();
    let mut s = String::new();
    let header: Vec<String> = (0..p)
        .map(|j| format!("beta_{j}"))
        .chain(std::iter::once("sigma2".to_string()))
        .collect();
    s.push_str(&header.join(","));
    s.push('\n');
    for (b, s2) in draws.beta.iter().zip(&draws.sigma2) {
        let cells: Vec<String> = b
            .iter()
            .chain(std::iter::once(s2))
            .map(|v| v.to_string())
            .collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub(crate) fn sidecar_json(draws: &PosteriorDraws, prior: &PriorSpec, mcmc: &McmcConfig) -> String {
    let sidecar = DrawsSidecar {
        survey_id: draws.survey_id,
        n_draws: draws.len(),
        column_names: draws.column_names.clone(),
        column_groups: draws.column_groups.clone(),
        prior: *prior,
        mcmc: *mcmc,
    };
    serde_json::to_string_pretty(&sidecar).expect("sidecar serializes") + "\n"
}

pub fn write_draws(
    draws: &PosteriorDraws,
    csv_path: &Path,
    sidecar_path: &Path,
    prior: &PriorSpec,
    mcmc: &McmcConfig,
) -> Result<(), SamplerError> {
    fs::write(csv_path, draws_csv(draws)).map_err(io_err(csv_path))?;
    fs::write(sidecar_path, sidecar_json(draws, prior, mcmc)).map_err(io_err(sidecar_path))
}

pub fn read_draws(csv_path: &Path, sidecar_path: &Path) -> Result<PosteriorDraws, SamplerError> {
    let sidecar: DrawsSidecar =
        serde_json::from_str(&fs::read_to_string(sidecar_path).map_err(io_err(sidecar_path))?)
            .map_err(|e| SamplerError::Format(format!("{}: {e}", sidecar_path.display())))?;
    let p = sidecar.column_names.len();

    let text = fs::read_to_string(csv_path).map_err(io_err(csv_path))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| SamplerError::Format(format!("{} is empty", csv_path.display())))?;
    if header.split(',').count() != p + 1 {
        return Err(SamplerError::Format(format!(
            "{}: header has {} columns, sidecar describes {p} coefficients",
            csv_path.display(),
            header.split(',').count()
        )));
    }

    let mut beta = Vec::new();
    let mut sigma2 = Vec::new();
    for (k, line) in lines.enumerate() {
        let values: Result<Vec<f64>, _> = line.split(',').map(str::parse::<f64>).collect();
        let values = values.map_err(|e| {
            SamplerError::Format(format!("{} line {}: {e}", csv_path.display(), k + 2))
        })?;
        if values.len() != p + 1 {
            return Err(SamplerError::Format(format!(
                "{} line {}: expected {} values",
                csv_path.display(),
                k + 2,
                p + 1
            )));
        }
        sigma2.push(values[p]);
        beta.push(values[..p].to_vec());
    }
    if beta.len() != sidecar.n_draws {
        return Err(SamplerError::Format(format!(
            "{} has {} draws, sidecar says {}",
            csv_path.display(),
            beta.len(),
            sidecar.n_draws
        )));
    }
    Ok(PosteriorDraws {
        survey_id: sidecar.survey_id,
        beta,
        sigma2,
        column_names: sidecar.column_names,
        column_groups: sidecar.column_groups,
    })
}
