use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use super::{
    BirthRecord, Covariate, CovariateSchema, DatasetError, Residence, Sex, SurveyId, SurveySample,
    MATERNAL_AGE_RANGE,
};

/// Column order used when writing samples back out.
const COLUMNS: [&str; 9] = [
    "outcome",
    "maternal_age",
    "maternal_education",
    "birth_order",
    "birth_interval",
    "sex",
    "residence",
    "wealth_rank",
    "cluster_id",
];

/// Columns every input file needs regardless of schema: the outcome, the
/// cluster, and the fields used for age filtering and centering.
const REQUIRED: [&str; 4] = ["outcome", "cluster_id", "maternal_age", "wealth_rank"];

struct Row<'a> {
    line: u64,
    record: &'a csv::StringRecord,
    index: &'a HashMap<String, usize>,
}

impl Row<'_> {
    fn err(&self, message: impl Into<String>) -> DatasetError {
        DatasetError::Row {
            line: self.line,
            message: message.into(),
        }
    }

    fn raw(&self, column: &str) -> Option<&str> {
        self.index
            .get(column)
            .and_then(|&i| self.record.get(i))
            .map(str::trim)
    }

    fn number(&self, column: &str) -> Result<Option<f64>, DatasetError> {
        match self.raw(column) {
            None => Ok(None),
            Some(s) => s
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(Some)
                .ok_or_else(|| self.err(format!("`{column}`: cannot parse `{s}` as a number"))),
        }
    }
}

fn parse_record(row: &Row<'_>, survey_id: SurveyId) -> Result<BirthRecord, DatasetError> {
    let outcome = match row.raw("outcome") {
        Some("0") => 0,
        Some("1") => 1,
        other => {
            return Err(row.err(format!(
                "`outcome` must be 0 or 1, got `{}`",
                other.unwrap_or("")
            )))
        }
    };
    let maternal_age = row.number("maternal_age")?.unwrap_or(f64::NAN);
    let maternal_education = row.number("maternal_education")?.unwrap_or(0.0);
    if maternal_education < 0.0 {
        return Err(row.err("`maternal_education` must be non-negative"));
    }
    let birth_order = match row.raw("birth_order") {
        None => 1,
        Some(s) => match s.parse::<u32>() {
            Ok(v) if v >= 1 => v,
            _ => return Err(row.err(format!("`birth_order` must be an integer >= 1, got `{s}`"))),
        },
    };
    let birth_interval = match row.raw("birth_interval") {
        None | Some("") => None,
        Some(_) => row.number("birth_interval")?,
    };
    let sex = match row.raw("sex") {
        None | Some("female") => Sex::Female,
        Some("male") => Sex::Male,
        Some(s) => return Err(row.err(format!("`sex` must be female or male, got `{s}`"))),
    };
    let residence = match row.raw("residence") {
        None | Some("rural") => Residence::Rural,
        Some("urban") => Residence::Urban,
        Some(s) => return Err(row.err(format!("`residence` must be rural or urban, got `{s}`"))),
    };
    let wealth_rank = row.number("wealth_rank")?.unwrap_or(f64::NAN);
    if !(0.0..=1.0).contains(&wealth_rank) {
        return Err(row.err(format!(
            "`wealth_rank` must lie in [0, 1], got {wealth_rank}"
        )));
    }
    let cluster_id = row.raw("cluster_id").unwrap_or("").to_string();
    if cluster_id.is_empty() {
        return Err(row.err("empty `cluster_id`"));
    }
    Ok(BirthRecord {
        outcome,
        maternal_age,
        maternal_education,
        birth_order,
        birth_interval,
        sex,
        residence,
        wealth_rank,
        cluster_id,
        survey_id,
    })
}

/// Read one survey from CSV.
///
/// Rows with maternal age outside [15, 45] are dropped and counted in
/// [`SurveySample::dropped`]. Covariate columns outside the schema are
/// optional; when absent they take placeholder values and are left out of
/// [`SurveySample::present`].
pub fn ingest_csv(
    path: &Path,
    schema: &CovariateSchema,
    survey_id: SurveyId,
    survey_year: i32,
) -> Result<SurveySample, DatasetError> {
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(file);

    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        return Err(DatasetError::EmptyFile(path.display().to_string()));
    }
    let index: HashMap<String, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim().to_string(), i))
        .collect();
    let needed = REQUIRED
        .iter()
        .copied()
        .chain(schema.covariates.iter().map(|c| c.name.name()));
    for column in needed {
        if !index.contains_key(column) {
            return Err(DatasetError::MissingColumn(column.to_string()));
        }
    }

    let mut sample = SurveySample::new(survey_id, survey_year);
    sample.present = Covariate::ALL
        .into_iter()
        .filter(|c| index.contains_key(c.name()))
        .collect();

    let mut rows = 0usize;
    let mut record = csv::StringRecord::new();
    while reader.read_record(&mut record)? {
        rows += 1;
        let line = record.position().map_or(0, |p| p.line());
        let row = Row {
            line,
            record: &record,
            index: &index,
        };
        let parsed = parse_record(&row, survey_id)?;
        let (lo, hi) = MATERNAL_AGE_RANGE;
        if !(lo..=hi).contains(&parsed.maternal_age) {
            sample.dropped += 1;
            continue;
        }
        sample.push(parsed);
    }
    if rows == 0 {
        return Err(DatasetError::EmptyFile(path.display().to_string()));
    }
    if sample.n_births() == 0 {
        return Err(DatasetError::NoRecords);
    }
    Ok(sample)
}

/// Render a sample in the ingestion format.
pub fn to_csv_string(sample: &SurveySample) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    writeln!(out, "{}", COLUMNS.join(",")).unwrap();
    for r in sample.records() {
        let interval = r.birth_interval.map(|v| v.to_string()).unwrap_or_default();
        let sex = Covariate::Sex.level(r).unwrap();
        let residence = Covariate::Residence.level(r).unwrap();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.outcome,
            r.maternal_age,
            r.maternal_education,
            r.birth_order,
            interval,
            sex,
            residence,
            r.wealth_rank,
            r.cluster_id
        )
        .unwrap();
    }
    out
}

/// Write a sample in the ingestion format.
pub fn write_csv(sample: &SurveySample, path: &Path) -> Result<(), DatasetError> {
    std::fs::write(path, to_csv_string(sample)).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::CovariateSpec;
    use std::io::Write as _;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    const HEADER: &str = "outcome,maternal_age,maternal_education,birth_order,birth_interval,sex,residence,wealth_rank,cluster_id\n";

    #[test]
    fn parses_well_formed_file() {
        let f = file(&format!(
            "{HEADER}0,25,6,1,,female,rural,0.2,c1\n1,31,0,3,28,male,urban,0.7,c2\n0,19,8,2,15.5,male,rural,0.1,c1\n"
        ));
        let s = ingest_csv(f.path(), &CovariateSchema::default(), SurveyId::S1, 2000).unwrap();
        assert_eq!(s.n_clusters(), 2);
        assert_eq!(s.n_births(), 3);
        assert_eq!(s.clusters["c1"].len(), 2);
        assert_eq!(s.clusters["c1"][0].birth_interval, None);
        assert_eq!(s.clusters["c1"][1].birth_interval, Some(15.5));
        assert_eq!(s.clusters["c2"][0].sex, Sex::Male);
        assert_eq!(s.dropped, 0);
    }

    #[test]
    fn missing_cluster_column_is_named() {
        let f = file("outcome,maternal_age,wealth_rank\n0,20,0.5\n");
        let schema = CovariateSchema::new(vec![]).unwrap();
        match ingest_csv(f.path(), &schema, SurveyId::S1, 2000) {
            Err(DatasetError::MissingColumn(c)) => assert_eq!(c, "cluster_id"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schema_covariate_column_is_required() {
        let f = file("outcome,maternal_age,wealth_rank,cluster_id\n0,20,0.5,a\n");
        let schema =
            CovariateSchema::new(vec![CovariateSpec::binary(Covariate::Sex, "female")]).unwrap();
        assert!(matches!(
            ingest_csv(f.path(), &schema, SurveyId::S1, 2000),
            Err(DatasetError::MissingColumn(c)) if c == "sex"
        ));
    }

    #[test]
    fn underage_mother_is_dropped_and_counted() {
        let f = file(&format!(
            "{HEADER}0,14,6,1,,female,rural,0.2,c1\n1,31,0,3,28,male,urban,0.7,c2\n"
        ));
        let s = ingest_csv(f.path(), &CovariateSchema::default(), SurveyId::S1, 2000).unwrap();
        assert_eq!(s.n_births(), 1);
        assert_eq!(s.dropped, 1);
        assert!(!s.clusters.contains_key("c1"));
    }

    #[test]
    fn bad_cell_reports_line_number() {
        let f = file(&format!(
            "{HEADER}0,25,6,1,,female,rural,0.2,c1\n0,abc,6,1,,female,rural,0.2,c1\n"
        ));
        match ingest_csv(f.path(), &CovariateSchema::default(), SurveyId::S1, 2000) {
            Err(DatasetError::Row { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("maternal_age"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_files_are_distinct_errors() {
        let f = file("");
        assert!(matches!(
            ingest_csv(f.path(), &CovariateSchema::default(), SurveyId::S1, 2000),
            Err(DatasetError::EmptyFile(_))
        ));
        let f = file(HEADER);
        assert!(matches!(
            ingest_csv(f.path(), &CovariateSchema::default(), SurveyId::S1, 2000),
            Err(DatasetError::EmptyFile(_))
        ));
    }

    #[test]
    fn write_then_read_preserves_records() {
        let f = file(&format!(
            "{HEADER}0,25.5,6,1,,female,rural,0.2,c1\n1,31,0,3,28.25,male,urban,0.7,c2\n"
        ));
        let s = ingest_csv(f.path(), &CovariateSchema::default(), SurveyId::S2, 2010).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_csv(&s, out.path()).unwrap();
        let back = ingest_csv(out.path(), &CovariateSchema::default(), SurveyId::S2, 2010).unwrap();
        assert_eq!(s, back);
    }
}
