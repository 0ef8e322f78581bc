//! File formats: subject records, population tables, assay specifications,
//! calibration panels, run manifests. All CSV, UTF-8, comma-separated,
//! header row required; an empty cell is a missing value, booleans and
//! covariates are integer-coded.

use crate::assay::{CalibrationPanel, PanelSubject, PanelVisit, PhiSpec, RecencyAssay};
use crate::error::{Error, Result};
use crate::gamma::GammaParams;
use crate::records::{Covariates, Population, SubjectRecord, SubtypeId};
use crate::simulate::{PopulationRow, PopulationTable, SubtypeAssays};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Maps subtype labels (file text) to the compact ids records carry.
/// Thread one registry through every parse of a run so ids agree across
/// files whatever their order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SubtypeRegistry {
    labels: Vec<String>,
}

impl SubtypeRegistry {
    pub fn intern(&mut self, label: &str) -> Result<SubtypeId> {
        if let Some(i) = self.labels.iter().position(|l| l == label) {
            return Ok(i as SubtypeId);
        }
        if self.labels.len() > SubtypeId::MAX as usize {
            return Err(Error::Precondition(format!(
                "more than {} distinct subtype labels",
                SubtypeId::MAX as usize + 1
            )));
        }
        self.labels.push(label.to_string());
        Ok((self.labels.len() - 1) as SubtypeId)
    }

    pub fn id(&self, label: &str) -> Option<SubtypeId> {
        self.labels.iter().position(|l| l == label).map(|i| i as SubtypeId)
    }

    pub fn label(&self, id: SubtypeId) -> Result<&str> {
        self.labels
            .get(id as usize)
            .map(String::as_str)
            .ok_or_else(|| Error::Precondition(format!("subtype id {id} is not registered")))
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

fn schema(path: &Path, detail: impl Into<String>, message: impl Into<String>) -> Error {
    let detail = detail.into();
    let location = if detail.is_empty() {
        path.display().to_string()
    } else {
        format!("{} {detail}", path.display())
    };
    Error::Schema { location, message: message.into() }
}

fn cell_location(row: usize, column: &str) -> String {
    format!("row {row} column {column}")
}

fn parse_bool_cell(cell: &str) -> std::result::Result<Option<bool>, String> {
    match cell {
        "" => Ok(None),
        "0" => Ok(Some(false)),
        "1" => Ok(Some(true)),
        other => Err(format!("expected 0, 1, or empty, got {other:?}")),
    }
}

fn parse_f64_cell(cell: &str) -> std::result::Result<f64, String> {
    cell.trim().parse::<f64>().map_err(|_| format!("expected a number, got {cell:?}"))
}

const RECORD_RESERVED: [&str; 7] =
    ["id", "subtype", "hiv_positive", "recency_tested", "recent", "in_target", "population"];

const POPULATION_TOKENS: [(&str, Population); 2] = [
    ("cross_sectional", Population::CrossSectional),
    ("external_target", Population::ExternalTarget),
];

struct Header {
    covariate_idx: Vec<usize>,
    named_idx: BTreeMap<String, usize>,
}

fn split_header(path: &Path, headers: &csv::StringRecord, reserved: &[&str], required: &[&str]) -> Result<Header> {
    let mut covariate_idx = Vec::new();
    let mut named_idx = BTreeMap::new();
    for (i, name) in headers.iter().enumerate() {
        if reserved.contains(&name) {
            if named_idx.insert(name.to_string(), i).is_some() {
                return Err(schema(path, "header", format!("duplicate column {name:?}")));
            }
        } else {
            covariate_idx.push(i);
        }
    }
    let missing: Vec<String> =
        required.iter().filter(|n| !named_idx.contains_key(**n)).map(|n| format!("{n:?}")).collect();
    if !missing.is_empty() {
        return Err(schema(
            path,
            "header",
            format!("missing required column(s) {}", missing.join(", ")),
        ));
    }
    Ok(Header { covariate_idx, named_idx })
}

fn named_cell<'a>(record: &'a csv::StringRecord, header: &Header, name: &str) -> &'a str {
    header.named_idx.get(name).and_then(|&i| record.get(i)).unwrap_or("").trim()
}

/// Subject records: `id`, one integer-coded column per covariate, then
/// `subtype`, `hiv_positive`, `recency_tested`, `recent`, `in_target`,
/// `population`. Covariate columns are every non-reserved column, in
/// header order.
pub fn read_subject_records(path: &Path, registry: &mut SubtypeRegistry) -> Result<Vec<SubjectRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    // Every reserved column must be present; missing VALUES are empty cells.
    let header = split_header(path, &reader.headers()?.clone(), &RECORD_RESERVED, &RECORD_RESERVED)?;
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 2; // 1-based, after the header line
        let mut cov = Vec::with_capacity(header.covariate_idx.len());
        for &c in &header.covariate_idx {
            let cell = record.get(c).unwrap_or("").trim();
            let value: u8 = cell.parse().map_err(|_| {
                schema(path, cell_location(row, &format!("{}", c + 1)), format!("covariate cell must be a small integer, got {cell:?}"))
            })?;
            cov.push(value);
        }
        let covariates = Covariates::from_slice(&cov)
            .map_err(|e| schema(path, cell_location(row, "covariates"), e.to_string()))?;

        let subtype_cell = named_cell(&record, &header, "subtype");
        let subtype =
            if subtype_cell.is_empty() { None } else { Some(registry.intern(subtype_cell)?) };

        let mut bools = [None; 4];
        for (slot, name) in ["hiv_positive", "recency_tested", "recent", "in_target"].iter().enumerate() {
            bools[slot] = parse_bool_cell(named_cell(&record, &header, name))
                .map_err(|m| schema(path, cell_location(row, name), m))?;
        }

        let pop_cell = named_cell(&record, &header, "population");
        let population = POPULATION_TOKENS
            .iter()
            .find(|(token, _)| *token == pop_cell)
            .map(|&(_, p)| p)
            .ok_or_else(||

                schema(path, cell_location(row, "population"), format!("expected cross_sectional or external_target, got {pop_cell:?}")))?;

        let subject = SubjectRecord {
            covariates,
            subtype,
            hiv_positive: bools[0],
            recency_tested: bools[1],
            recent: bools[2],
            in_target: bools[3],
            population,
        };
        subject
            .validate()
            .map_err(|e| schema(path, format!("row {row}"), e.to_string()))?;
        out.push(subject);
    }
    Ok(out)
}

fn bool_cell(v: Option<bool>) -> &'static str {
    match v {
        None => "",
        Some(false) => "0",
        Some(true) => "1",
    }
}

pub fn write_subject_records(
    path: &Path,
    records: &[SubjectRecord],
    registry: &SubtypeRegistry,
) -> Result<()> {
    let k = records.first().map_or(0, |r| r.covariates.len());
    if records.iter().any(|r| r.covariates.len() != k) {
        return Err(Error::Precondition("records disagree on the covariate count".into()));
    }
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["id".to_string()];
    header.extend((1..=k).map(|i| format!("x{i}")));
    header.extend(RECORD_RESERVED[1..].iter().map(|s| s.to_string()));
    writer.write_record(&header)?;
    for (i, r) in records.iter().enumerate() {
        let mut row = vec![(i + 1).to_string()];
        row.extend(r.covariates.values().iter().map(u8::to_string));
        row.push(match r.subtype {
            None => String::new(),
            Some(id) => registry.label(id)?.to_string(),
        });
        for v in [r.hiv_positive, r.recency_tested, r.recent, r.in_target] {
            row.push(bool_cell(v).to_string());
        }
        row.push(
            POPULATION_TOKENS.iter().find(|(_, p)| *p == r.population).expect("token table covers both").0.to_string(),
        );
        writer.write_record(&row)?;
    }
    writer.flush().map_err(Error::from)?;
    Ok(())
}

const TABLE_RESERVED: [&str; 7] = [
    "subtype",
    "incidence",
    "prevalence",
    "prop_cross",
    "prop_target",
    "enroll_setting1",
    "enroll_setting2",
];

/// Population tables: one row per covariate cell (per subtype when the
/// `subtype` column is present), share columns rescaled to sum to one.
/// Returns the table plus the covariate column names in file order.
pub fn read_population_table(
    path: &Path,
    registry: &mut SubtypeRegistry,
) -> Result<(PopulationTable, Vec<String>)> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let header = split_header(
        path,
        &headers,
        &TABLE_RESERVED,
        &["incidence", "prevalence", "prop_cross", "prop_target"],
    )?;
    let covariate_names: Vec<String> =
        header.covariate_idx.iter().map(|&i| headers.get(i).unwrap_or("").to_string()).collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 2;
        let mut cov = Vec::with_capacity(header.covariate_idx.len());
        for (&c, name) in header.covariate_idx.iter().zip(&covariate_names) {
            let cell = record.get(c).unwrap_or("").trim();
            let value: u8 = cell.parse().map_err(|_| {
                schema(path, cell_location(row, name), format!("covariate cell must be a small integer, got {cell:?}"))
            })?;
            cov.push(value);
        }
        let covariates = Covariates::from_slice(&cov)
            .map_err(|e| schema(path, cell_location(row, "covariates"), e.to_string()))?;
        let subtype_cell = named_cell(&record, &header, "subtype");
        let subtype =
            if subtype_cell.is_empty() { None } else { Some(registry.intern(subtype_cell)?) };

        let mut numbers = [0.0; 4];
        for (slot, name) in ["incidence", "prevalence", "prop_cross", "prop_target"].iter().enumerate() {
            numbers[slot] = parse_f64_cell(named_cell(&record, &header, name))
                .map_err(|m| schema(path, cell_location(row, name), m))?;
        }
        // The enrollment columns are published reference values; absent
        // columns read as zero and the generator never consults them.
        let mut enroll = [0.0; 2];
        for (slot, name) in ["enroll_setting1", "enroll_setting2"].iter().enumerate() {
            let cell = named_cell(&record, &header, name);
            if !cell.is_empty() {
                enroll[slot] = parse_f64_cell(cell)
                    .map_err(|m| schema(path, cell_location(row, name), m))?;
            }
        }
        rows.push(PopulationRow {
            covariates,
            subtype,
            incidence: numbers[0],
            prevalence: numbers[1],
            prop_cross: numbers[2],
            prop_target: numbers[3],
            enroll_setting1: enroll[0],
            enroll_setting2: enroll[1],
        });
    }
    Ok((PopulationTable::new_normalized(rows)?, covariate_names))
}

/// Assay specifications: columns `subtype`, `model`, `shape`, `rate`,
/// `plateau`, `cut`, `t_star`. Models: `gamma_survival` (shape, rate),
/// `gamma_survival_plateau` (plus plateau, cut), `tabulated` (curve in a
/// companion file `<stem>.<subtype>.phi.csv` with columns
/// `duration_years`, `probability`). An empty subtype cell is the
/// single-assay case.
pub fn read_assays(path: &Path, registry: &mut SubtypeRegistry) -> Result<SubtypeAssays> {
    let mut reader = csv::Reader::from_path(path)?;
    let header = split_header(path, &reader.headers()?.clone(), &["subtype", "model", "shape", "rate", "plateau", "cut", "t_star"], &["model", "t_star"])?;
    let mut entries = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 2;
        let label_cell = named_cell(&record, &header, "subtype");
        let (key, label) = if label_cell.is_empty() {
            (None, "assay".to_string())
        } else {
            (Some(registry.intern(label_cell)?), label_cell.to_string())
        };
        let t_star = parse_f64_cell(named_cell(&record, &header, "t_star"))
            .map_err(|m| schema(path, cell_location(row, "t_star"), m))?;
        let number = |name: &str| -> Result<f64> {
            parse_f64_cell(named_cell(&record, &header, name))
                .map_err(|m| schema(path, cell_location(row, name), m))
        };
        let model_cell = named_cell(&record, &header, "model");
        let phi_spec = match model_cell {
            "gamma_survival" => {
                PhiSpec::GammaSurvival(GammaParams::new(number("shape")?, number("rate")?)?)
            }
            "gamma_survival_plateau" => PhiSpec::GammaSurvivalWithPlateau {
                params: GammaParams::new(number("shape")?, number("rate")?)?,
                plateau: number("plateau")?,
                cut: number("cut")?,
            },
            "tabulated" => PhiSpec::Tabulated(read_phi_curve(&phi_companion_path(path, &label))?),
            other => {
                return Err(schema(
                    path,
                    cell_location(row, "model"),
                    format!("unknown assay model {other:?}"),
                ))
            }
        };
        entries.push((key, RecencyAssay::new(label, phi_spec, t_star)?));
    }
    SubtypeAssays::new(entries)
}

fn phi_companion_path(assay_csv: &Path, label: &str) -> PathBuf {
    let stem = assay_csv.file_stem().and_then(|s| s.to_str()).unwrap_or("assays");
    assay_csv.with_file_name(format!("{stem}.{label}.phi.csv"))
}

fn read_phi_curve(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| schema(path, "", format!("cannot open tabulated curve: {e}")))?;
    let header = split_header(path, &reader.headers()?.clone(), &["duration_years", "probability"], &["duration_years", "probability"])?;
    let mut knots = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 2;
        let duration = parse_f64_cell(named_cell(&record, &header, "duration_years"))
            .map_err(|m| schema(path, cell_location(row, "duration_years"), m))?;
        let probability = parse_f64_cell(named_cell(&record, &header, "probability"))
            .map_err(|m| schema(path, cell_location(row, "probability"), m))?;
        knots.push((duration, probability));
    }
    Ok(knots)
}

/// Calibration panels: columns `subject_id`, `duration_years`, `recent`.
/// Rows with a duration are longitudinal visits; rows with an empty
/// duration are long-infected subjects.
pub fn read_calibration_panel(path: &Path) -> Result<CalibrationPanel> {
    let mut reader = csv::Reader::from_path(path)?;
    let header = split_header(path, &reader.headers()?.clone(), &["subject_id", "duration_years", "recent"], &["subject_id", "recent"])?;
    let mut panel = CalibrationPanel::default();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 2;
        let subject_id: u32 = named_cell(&record, &header, "subject_id")
            .parse()
            .map_err(|_| schema(path, cell_location(row, "subject_id"), "expected an integer id"))?;
        let recent = parse_bool_cell(named_cell(&record, &header, "recent"))
            .map_err(|m| schema(path, cell_location(row, "recent"), m))?
            .ok_or_else(|| schema(path, cell_location(row, "recent"), "result is required"))?;
        let duration_cell = named_cell(&record, &header, "duration_years");
        if duration_cell.is_empty() {
            panel.long_infected.push(PanelSubject { subject_id, recent });
        } else {
            let duration_years = parse_f64_cell(duration_cell)
                .map_err(|m| schema(path, cell_location(row, "duration_years"), m))?;
            panel.longitudinal.push(PanelVisit { subject_id, duration_years, recent });
        }
    }
    panel.validate()?;
    Ok(panel)
}

pub fn write_calibration_panel(path: &Path, panel: &CalibrationPanel) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["subject_id", "duration_years", "recent"])?;
    for v in &panel.longitudinal {
        writer.write_record(&[
            v.subject_id.to_string(),
            format!("{:.6}", v.duration_years),
            u8::from(v.recent).to_string(),
        ])?;
    }
    for s in &panel.long_infected {
        writer.write_record(&[s.subject_id.to_string(), String::new(), u8::from(s.recent).to_string()])?;
    }
    writer.flush().map_err(Error::from)?;
    Ok(())
}

/// Enrollment-probability report: the covariate cell, its subtype, and the
/// raw and truncated probabilities.
pub fn write_enrollment(
    path: &Path,
    table: &PopulationTable,
    covariate_names: &[String],
    registry: &SubtypeRegistry,
    raw: &[f64],
    truncated: &[f64],
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = covariate_names.to_vec();
    header.extend(["subtype", "raw", "truncated"].map(String::from));
    writer.write_record(&header)?;
    for ((row, &r), &t) in table.rows().iter().zip(raw).zip(truncated) {
        let mut cells: Vec<String> = row.covariates.values().iter().map(u8::to_string).collect();
        cells.push(match row.subtype {
            None => String::new(),
            Some(id) => registry.label(id)?.to_string(),
        });
        cells.push(format!("{r:.6}"));
        cells.push(format!("{t:.6}"));
        writer.write_record(&cells)?;
    }
    writer.flush().map_err(Error::from)?;
    Ok(())
}

/// Flat `key = value` manifest, one entry per line, in the given order.
pub fn write_manifest(path: &Path, entries: &[(&str, String)]) -> Result<()> {
    let mut text = String::new();
    for (key, value) in entries {
        writeln!(text, "{key} = {value}").expect("string write");
    }
    std::fs::write(path, text).map_err(Error::from)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// JSON-lines emission for machine-readable result rows.
pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut text = String::new();
    for row in rows {
        let line = serde_json::to_string(row)
            .map_err(|e| Error::Precondition(format!("cannot serialize result row: {e}")))?;
        text.push_str(&line);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(Error::from)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::enrollment_probabilities;

    fn temp() -> tempfile::TempDir {
        tempfile::tempdir().expect("tempdir")
    }

    fn sample_records() -> (Vec<SubjectRecord>, SubtypeRegistry) {
        let mut registry = SubtypeRegistry::default();
        let b = registry.intern("B").unwrap();
        let a = registry.intern("A").unwrap();
        let rec = |subtype, pos, tested, recent, target, population| SubjectRecord {
            covariates: Covariates::from_slice(&[1, 0, 2]).unwrap(),
            subtype,
            hiv_positive: pos,
            recency_tested: tested,
            recent,
            in_target: target,
            population,
        };
        let rows = vec![
            rec(Some(b), Some(true), Some(true), Some(true), None, Population::CrossSectional),
            rec(Some(a), Some(true), Some(false), None, None, Population::CrossSectional),
            rec(None, Some(false), None, None, Some(true), Population::CrossSectional),
            rec(Some(a), None, None, None, None, Population::ExternalTarget),
        ];
        (rows, registry)
    }

    #[test]
    fn subject_records_round_trip() {
        let dir = temp();
        let path = dir.path().join("records.csv");
        let (rows, registry) = sample_records();
        write_subject_records(&path, &rows, &registry).unwrap();
        let mut registry2 = SubtypeRegistry::default();
        let back = read_subject_records(&path, &mut registry2).unwrap();
        assert_eq!(back.len(), rows.len());
        // Ids may differ between registries; compare through labels.
        for (orig, read) in rows.iter().zip(&back) {
            let orig_label = orig.subtype.map(|id| registry.label(id).unwrap().to_string());
            let read_label = read.subtype.map(|id| registry2.label(id).unwrap().to_string());
            assert_eq!(orig_label, read_label);
            assert_eq!(orig.covariates, read.covariates);
            assert_eq!(orig.hiv_positive, read.hiv_positive);
            assert_eq!(orig.recency_tested, read.recency_tested);
            assert_eq!(orig.recent, read.recent);
            assert_eq!(orig.in_target, read.in_target);
            assert_eq!(orig.population, read.population);
        }
    }

    #[test]
    fn shared_registry_keeps_ids_consistent() {
        let dir = temp();
        let path = dir.path().join("records.csv");
        let (rows, registry) = sample_records();
        write_subject_records(&path, &rows, &registry).unwrap();
        // Pre-interning A first must flip the ids relative to file order.
        let mut registry2 = SubtypeRegistry::default();
        registry2.intern("A").unwrap();
        let back = read_subject_records(&path, &mut registry2).unwrap();
        assert_eq!(back[0].subtype, Some(1));
        assert_eq!(back[1].subtype, Some(0));
    }

    #[test]
    fn bad_cells_name_row_and_column() {
        let dir = temp();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "id,x1,subtype,hiv_positive,recency_tested,recent,in_target,population\n1,0,,2,,,,cross_sectional\n").unwrap();
        let err = read_subject_records(&path, &mut SubtypeRegistry::default()).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("row 2") && text.contains("hiv_positive"), "{text}");
        assert!(matches!(err, Error::Schema { .. }));

        std::fs::write(&path, "id,x1,subtype,hiv_positive,recency_tested,recent,in_target,population\n1,0,,1,,1,,lab\n").unwrap();
        let err = read_subject_records(&path, &mut SubtypeRegistry::default()).unwrap_err();
        assert!(err.to_string().contains("population"), "{err}");

        std::fs::write(&path, "id,x1,subtype\n1,0,\n").unwrap();
        let err = read_subject_records(&path, &mut SubtypeRegistry::default()).unwrap_err();
        assert!(err.to_string().contains("population"), "{err}");
    }

    #[test]
    fn inconsistent_rows_are_schema_errors() {
        let dir = temp();
        let path = dir.path().join("bad.csv");
        // A recency result on a record whose test was never taken.
        std::fs::write(&path, "id,x1,subtype,hiv_positive,recency_tested,recent,in_target,population\n1,0,,1,0,1,,cross_sectional\n").unwrap();
        let err = read_subject_records(&path, &mut SubtypeRegistry::default()).unwrap_err();
        assert!(matches!(err, Error::Schema { .. }), "{err}");
        assert!(err.to_string().contains("row 2"), "{err}");
    }

    #[test]
    fn population_table_reads_and_normalizes() {
        let dir = temp();
        let path = dir.path().join("table.csv");
        std::fs::write(
            &path,
            "x1,x2,subtype,incidence,prevalence,prop_cross,prop_target,enroll_setting1,enroll_setting2\n\
             0,0,B,0.02,0.25,0.5,0.299,0.4,0.3\n\
             0,0,A,0.05,0.15,0.499,0.7,0.5,0.4\n",
        )
        .unwrap();
        let mut registry = SubtypeRegistry::default();
        let (table, names) = read_population_table(&path, &mut registry).unwrap();
        assert_eq!(names, vec!["x1", "x2"]);
        assert_eq!(registry.labels(), ["B", "A"]);
        let g: f64 = table.rows().iter().map(|r| r.prop_cross).sum();
        let h: f64 = table.rows().iter().map(|r| r.prop_target).sum();
        assert!((g - 1.0).abs() < 1e-12 && (h - 1.0).abs() < 1e-12);
        assert_eq!(table.rows()[0].subtype, Some(0));
        assert!((table.rows()[0].enroll_setting1 - 0.4).abs() < 1e-15);
    }

    #[test]
    fn assay_file_models() {
        let dir = temp();
        let path = dir.path().join("assays.csv");
        std::fs::write(
            &path,
            "subtype,model,shape,rate,plateau,cut,t_star\n\
             B,gamma_survival,11.40,23.66,,,2.0\n\
             A,gamma_survival_plateau,0.84,1.66,0.026,2.0,2.0\n",
        )
        .unwrap();
        let mut registry = SubtypeRegistry::default();
        let assays = read_assays(&path, &mut registry).unwrap();
        assert_eq!(assays.entries().len(), 2);
        let b = assays.get(registry.id("B")).unwrap();
        assert!((b.mdri().unwrap() * 365.25 - 176.0).abs() < 1.0);
        let a = assays.get(registry.id("A")).unwrap();
        assert_eq!(a.frr().unwrap(), 0.026);
    }

    #[test]
    fn tabulated_assay_reads_companion_curve() {
        let dir = temp();
        let path = dir.path().join("assays.csv");
        std::fs::write(&path, "subtype,model,shape,rate,plateau,cut,t_star\n,tabulated,,,,,2.0\n")
            .unwrap();
        std::fs::write(
            dir.path().join("assays.assay.phi.csv"),
            "duration_years,probability\n0.0,1.0\n1.0,0.5\n3.0,0.1\n",
        )
        .unwrap();
        let assays = read_assays(&path, &mut SubtypeRegistry::default()).unwrap();
        let assay = assays.get(None).unwrap();
        assert!((assay.phi(0.5).unwrap() - 0.75).abs() < 1e-12);
        assert!((assay.mdri().unwrap() - 1.15).abs() < 1e-12);
    }

    #[test]
    fn missing_companion_curve_is_a_schema_error() {
        let dir = temp();
        let path = dir.path().join("assays.csv");
        std::fs::write(&path, "subtype,model,shape,rate,plateau,cut,t_star\nA,tabulated,,,,,2.0\n")
            .unwrap();
        let err = read_assays(&path, &mut SubtypeRegistry::default()).unwrap_err();
        assert!(matches!(err, Error::Schema { .. }), "{err}");
        assert!(err.to_string().contains("assays.A.phi.csv"), "{err}");
    }

    #[test]
    fn panel_round_trip_with_long_infected() {
        let dir = temp();
        let path = dir.path().join("panel.csv");
        let panel = CalibrationPanel {
            longitudinal: vec![
                PanelVisit { subject_id: 1, duration_years: 0.25, recent: true },
                PanelVisit { subject_id: 1, duration_years: 0.5, recent: false },
            ],
            long_infected: vec![PanelSubject { subject_id: 2, recent: false }],
        };
        write_calibration_panel(&path, &panel).unwrap();
        let back = read_calibration_panel(&path).unwrap();
        assert_eq!(back.longitudinal.len(), 2);
        assert_eq!(back.long_infected.len(), 1);
        assert_eq!(back.longitudinal[0].subject_id, 1);
        assert!((back.longitudinal[1].duration_years - 0.5).abs() < 1e-9);
        assert!(!back.long_infected[0].recent);
    }

    #[test]
    fn enrollment_report_columns() {
        let dir = temp();
        let path = dir.path().join("table.csv");
        std::fs::write(
            &path,
            "x1,incidence,prevalence,prop_cross,prop_target\n0,0.01,0.092,0.033,0.016\n1,0.01,0.1,0.967,0.984\n",
        )
        .unwrap();
        let mut registry = SubtypeRegistry::default();
        let (table, names) = read_population_table(&path, &mut registry).unwrap();
        let raw = enrollment_probabilities(&table, 5000, 2500).unwrap();
        let out = dir.path().join("enroll.csv");
        write_enrollment(&out, &table, &names, &registry, &raw, &raw).unwrap();
        let text = std::fs::read_to_string(&out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "x1,subtype,raw,truncated");
        assert!(lines.next().unwrap().starts_with("0,,0.26"));
    }

    #[test]
    fn manifest_and_hash() {
        let dir = temp();
        let path = dir.path().join("manifest.txt");
        write_manifest(&path, &[("seed", "7".into()), ("config_sha256", sha256_hex(b"abc"))]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "seed = 7\nconfig_sha256 = ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad\n"
        );
    }

    #[test]
    fn jsonl_rows() {
        #[derive(Serialize)]
        struct Row {
            name: &'static str,
            value: f64,
        }
        let dir = temp();
        let path = dir.path().join("rows.jsonl");
        write_jsonl(&path, &[Row { name: "a", value: 1.5 }, Row { name: "b", value: 2.0 }]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "{\"name\":\"a\",\"value\":1.5}\n{\"name\":\"b\",\"value\":2.0}\n");
    }
}
