use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::config::{InputMode, RunConfig};
use super::report;
use crate::dataset::{
    build_design, compute_centering, ingest_csv, synthesize, to_csv_string, CenteringConstants,
    DesignMatrix, SurveyId, SurveySample,
};
use crate::decompose::{
    default_order, posterior_decompose, DecompositionSummary, PosteriorDecomposition,
};
use crate::diagnostics::{variance_collapse, VarianceCollapseProfile};
use crate::marginal::Marginalization;
use crate::sampler::{
    draws_csv, fit_to_target, read_draws, sidecar_json, FitOutcome, PosteriorDraws,
};
use crate::{Error, Result};

/// Both surveys, read from CSV or simulated.
pub fn load_surveys(config: &RunConfig, mode: InputMode) -> Result<(SurveySample, SurveySample)> {
    let [y1, y2] = config.survey_years;
    match mode {
        InputMode::Csv => {
            let csv = config.csv.as_ref().expect("mode checked");
            let s1 = ingest_csv(&csv.s1, &config.schema, SurveyId::S1, y1)?;
            let s2 = ingest_csv(&csv.s2, &config.schema, SurveyId::S2, y2)?;
            Ok((s1, s2))
        }
        InputMode::Synthetic => {
            let dgp = config.synthetic.as_ref().expect("mode checked");
            let (mut s1, mut s2) = synthesize(dgp, config.seed)?;
            s1.survey_year = y1;
            s2.survey_year = y2;
            Ok((s1, s2))
        }
    }
}

/// Design matrices of both surveys on one basis: centering from the poorest
/// households of survey 1, knots from the pooled surveys.
pub struct Designs {
    pub d1: DesignMatrix,
    pub d2: DesignMatrix,
    pub centering: CenteringConstants,
}

pub fn build_designs(config: &RunConfig, s1: &SurveySample, s2: &SurveySample) -> Result<Designs> {
    let centering = compute_centering(s1, &config.schema, config.poor_quantile)?;
    let pooled = SurveySample::pooled(&[s1, s2]);
    let d1 = build_design(s1, &config.schema, &centering, &pooled)?;
    let d2 = build_design(s2, &config.schema, &centering, &pooled)?;
    Ok(Designs { d1, d2, centering })
}

/// Fit both surveys concurrently, survey 1 on chain 0 and survey 2 on chain 1.
pub fn fit_both(config: &RunConfig, designs: &Designs) -> Result<[FitOutcome; 2]> {
    let (c1, c2) = (config.chain_config(0), config.chain_config(1));
    let (r1, r2) = std::thread::scope(|scope| {
        let h = scope.spawn(|| fit_to_target(&designs.d2, &config.prior, &c2, config.auto_extend));
        let r1 = fit_to_target(&designs.d1, &config.prior, &c1, config.auto_extend);
        (r1, h.join().expect("survey 2 fit panicked"))
    });
    Ok([r1?, r2?])
}

pub fn resolve_order(config: &RunConfig, designs: &Designs) -> Vec<String> {
    config
        .order
        .clone()
        .unwrap_or_else(|| default_order(&designs.d2))
}

/// Decomposition and variance profile of a pair of posterior samples.
pub fn decompose_stage(
    config: &RunConfig,
    designs: &Designs,
    draws: [&PosteriorDraws; 2],
) -> Result<(PosteriorDecomposition, VarianceCollapseProfile)> {
    let order = resolve_order(config, designs);
    let post = posterior_decompose(
        &designs.d1,
        &designs.d2,
        draws[0],
        draws[1],
        &order,
        config.years_between(),
        config.marginalization,
    )?;
    let profile = variance_collapse(
        &designs.d2,
        draws[0],
        draws[1],
        &order,
        config.marginalization,
    )?;
    Ok((post, profile))
}

/// Files written by one command. Dropping an unfinished set removes every
/// file it wrote, so a failed run leaves no partial outputs behind.
pub struct OutputSet {
    dir: PathBuf,
    files: Vec<(String, String, usize)>,
    finished: bool,
}

impl OutputSet {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        Ok(OutputSet {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            finished: false,
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        // Record first so a half-written file is still cleaned up.
        let hash = hex::encode(Sha256::digest(contents.as_bytes()));
        self.files.push((name.to_string(), hash, contents.len()));
        fs::write(&path, contents).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value).expect("output serializes") + "\n";
        self.write(name, &text)
    }

    /// Write the manifest listing every file with its SHA-256 and close the
    /// set.
    pub fn finish(mut self, command: &str, config: &RunConfig) -> Result<PathBuf> {
        let mut echo = serde_json::to_value(config).expect("config serializes");
        // The destination is not part of the result; leaving it out keeps
        // manifests of identical runs identical wherever they are written.
        if let Value::Object(map) = &mut echo {
            map.remove("output_dir");
        }
        let files: Vec<Value> = self
            .files
            .iter()
            .map(|(name, hash, bytes)| json!({"file": name, "sha256": hash, "bytes": bytes}))
            .collect();
        let manifest = json!({
            "command": command,
            "package": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "seed": config.seed,
            "config": echo,
            "files": files,
        });
        let name = manifest_name(command);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        let path = self.dir.join(&name);
        fs::write(&path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        self.finished = true;
        Ok(path)
    }
}

impl Drop for OutputSet {
    fn drop(&mut self) {
        if !self.finished {
            for (name, _, _) in &self.files {
                let _ = fs::remove_file(self.dir.join(name));
            }
        }
    }
}

pub fn manifest_name(command: &str) -> String {
    if command == "run" {
        "run_manifest.json".to_string()
    } else {
        format!("{command}_manifest.json")
    }
}

/// The saved decomposition, read back by `report`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedDecomposition {
    pub survey_years: [i32; 2],
    pub marginalization: Marginalization,
    pub summary: DecompositionSummary,
}

pub const DECOMPOSITION_FILE: &str = "decomposition.json";

fn sample_summary(s: &SurveySample) -> Value {
    json!({
        "survey_year": s.survey_year,
        "births": s.n_births(),
        "clusters": s.n_clusters(),
        "dropped_rows": s.dropped,
        "observed_death_rate": s.death_rate(),
    })
}

fn fit_summary(o: &FitOutcome) -> Value {
    json!({
        "retained_draws": o.draws.len(),
        "total_iterations": o.config.total_iterations,
        "burn_in": o.config.burn_in,
        "thinning": o.config.effective_thinning(),
        "extended": o.extended,
        "meets_target": o.diagnostics.meets_target(o.config.target_draws),
        "column_names": o.draws.column_names,
        "mixing": o.diagnostics,
    })
}

fn write_fit_outputs(
    out: &mut OutputSet,
    config: &RunConfig,
    fits: &[FitOutcome; 2],
) -> Result<()> {
    for (k, f) in fits.iter().enumerate() {
        out.write(&format!("draws_s{}.csv", k + 1), &draws_csv(&f.draws))?;
        out.write(
            &format!("draws_s{}.json", k + 1),
            &sidecar_json(&f.draws, &config.prior, &f.config),
        )?;
    }
    Ok(())
}

fn write_decomposition_outputs(
    out: &mut OutputSet,
    config: &RunConfig,
    post: &PosteriorDecomposition,
    profile: &VarianceCollapseProfile,
) -> Result<()> {
    let s = &post.summary;
    out.write(
        "mortality.csv",
        &report::mortality_csv(s, config.survey_years),
    )?;
    out.write("overall_decomp.csv", &report::overall_csv(s))?;
    out.write("coef_decomp.csv", &report::coefficient_csv(s))?;
    out.write("variance_profile.csv", &profile.to_csv())?;
    out.write_json(
        DECOMPOSITION_FILE,
        &SavedDecomposition {
            survey_years: config.survey_years,
            marginalization: config.marginalization,
            summary: s.clone(),
        },
    )
}

/// Full pipeline. Returns the manifest path.
pub fn run(config: &RunConfig) -> Result<PathBuf> {
    let mode = config.validate()?;
    let (s1, s2) = load_surveys(config, mode)?;
    let designs = build_designs(config, &s1, &s2)?;
    let fits = fit_both(config, &designs)?;
    let (post, profile) = decompose_stage(config, &designs, [&fits[0].draws, &fits[1].draws])?;

    let mut out = OutputSet::create(&config.output_dir)?;
    write_fit_outputs(&mut out, config, &fits)?;
    write_decomposition_outputs(&mut out, config, &post, &profile)?;
    out.write_json(
        "diagnostics.json",
        &json!({
            "surveys": [sample_summary(&s1), sample_summary(&s2)],
            "centering": designs.centering,
            "fits": [fit_summary(&fits[0]), fit_summary(&fits[1])],
            "variance_profile": profile,
        }),
    )?;
    out.finish("run", config)
}

/// Write the simulated surveys as CSV.
pub fn simulate(config: &RunConfig) -> Result<PathBuf> {
    let mode = config.validate()?;
    if mode != InputMode::Synthetic {
        return Err(Error::Config("`simulate` needs a `synthetic` input".into()));
    }
    let (s1, s2) = load_surveys(config, mode)?;
    let mut out = OutputSet::create(&config.output_dir)?;
    out.write("s1.csv", &to_csv_string(&s1))?;
    out.write("s2.csv", &to_csv_string(&s2))?;
    out.finish("simulate", config)
}

/// Fit both surveys and write the draw files and diagnostics.
pub fn fit(config: &RunConfig) -> Result<PathBuf> {
    let mode = config.validate()?;
    let (s1, s2) = load_surveys(config, mode)?;
    let designs = build_designs(config, &s1, &s2)?;
    let fits = fit_both(config, &designs)?;
    let mut out = OutputSet::create(&config.output_dir)?;
    write_fit_outputs(&mut out, config, &fits)?;
    out.write_json(
        "diagnostics.json",
        &json!({
            "surveys": [sample_summary(&s1), sample_summary(&s2)],
            "centering": designs.centering,
            "fits": [fit_summary(&fits[0]), fit_summary(&fits[1])],
        }),
    )?;
    out.finish("fit", config)
}

/// Decompose previously written draws, e.g. under another order.
pub fn decompose(config: &RunConfig, draws_dir: &Path) -> Result<PathBuf> {
    let mode = config.validate()?;
    let (s1, s2) = load_surveys(config, mode)?;
    let designs = build_designs(config, &s1, &s2)?;
    let read = |k: usize| {
        read_draws(
            &draws_dir.join(format!("draws_s{k}.csv")),
            &draws_dir.join(format!("draws_s{k}.json")),
        )
    };
    let (dr1, dr2) = (read(1)?, read(2)?);
    for (d, dr) in [(&designs.d1, &dr1), (&designs.d2, &dr2)] {
        if dr.column_names != d.column_names {
            return Err(Error::Config(format!(
                "draw file columns {:?} do not match the design {:?}",
                dr.column_names, d.column_names
            )));
        }
    }
    let (post, profile) = decompose_stage(config, &designs, [&dr1, &dr2])?;
    let mut out = OutputSet::create(&config.output_dir)?;
    write_decomposition_outputs(&mut out, config, &post, &profile)?;
    out.finish("decompose", config)
}

/// Text tables from a saved decomposition.
pub fn report(dir: &Path) -> Result<String> {
    let path = dir.join(DECOMPOSITION_FILE);
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let saved: SavedDecomposition = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(report::text_report(&saved.summary, saved.survey_years))
}
