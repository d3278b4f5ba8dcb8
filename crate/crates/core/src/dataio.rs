//! Ingestion of stratified administrative counts.
//!
//! A stratum is one (period, country, domain) cell carrying three counts:
//! apprehensions `m`, police-register count `n` and registered population
//! `N`. The model only applies to strata with `m > 0`, `n > 0` and `n < N`;
//! [`apply_model_conditions`] folds the remaining strata into a pseudo-country.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_PSEUDO_COUNTRY: &str = "other";

/// One observation row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StratumRecord {
    pub period: String,
    pub country: String,
    /// Domain levels in the order of [`Dataset::domain_names`].
    pub domain: Vec<String>,
    /// Foreigners apprehended exactly once (`m`).
    #[serde(rename = "m")]
    pub apprehended: u64,
    /// Police-register count (`n`).
    #[serde(rename = "n")]
    pub police: u64,
    /// Registered population (`N`).
    #[serde(rename = "N")]
    pub registered: u64,
}

impl StratumRecord {
    pub fn new(
        period: impl Into<String>,
        country: impl Into<String>,
        domain: Vec<String>,
        m: u64,
        n: u64,
        big_n: u64,
    ) -> Self {
        Self {
            period: period.into(),
            country: country.into(),
            domain,
            apprehended: m,
            police: n,
            registered: big_n,
        }
    }

    pub fn key(&self) -> RecordKey {
        RecordKey {
            period: self.period.clone(),
            country: self.country.clone(),
            domain: self.domain.clone(),
        }
    }

    /// `m > 0`, `n > 0` and `n / N < 1`.
    pub fn satisfies_model_conditions(&self) -> bool {
        self.apprehended > 0 && self.police > 0 && self.police < self.registered
    }

    pub fn counts(&self) -> Counts {
        Counts {
            m: self.apprehended,
            n: self.police,
            big_n: self.registered,
        }
    }
}

/// Unique identity of a stratum.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct RecordKey {
    pub period: String,
    pub country: String,
    pub domain: Vec<String>,
}

impl fmt::Display for RecordKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.period, self.country)?;
        for level in &self.domain {
            write!(f, ":{level}")?;
        }
        Ok(())
    }
}

impl RecordKey {
    pub fn new(period: &str, country: &str, domain: &[&str]) -> Self {
        Self {
            period: period.to_string(),
            country: country.to_string(),
            domain: domain.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Parses `period:country:level1:level2...`.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut parts = spec.split(':');
        let period = parts.next().filter(|s| !s.is_empty());
        let country = parts.next().filter(|s| !s.is_empty());
        match (period, country) {
            (Some(period), Some(country)) => Ok(Self {
                period: period.to_string(),
                country: country.to_string(),
                domain: parts.map(str::to_string).collect(),
            }),
            _ => Err(Error::Schema(format!(
                "key `{spec}` must look like <period>:<country>[:<domain level>...]"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub m: u64,
    pub n: u64,
    #[serde(rename = "N")]
    pub big_n: u64,
}

impl Counts {
    fn add(&mut self, other: Counts) {
        self.m += other.m;
        self.n += other.n;
        self.big_n += other.big_n;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<StratumRecord>,
    /// Ordered names of the domain variables (e.g. `["sex", "age"]`).
    pub domain_names: Vec<String>,
    pub provenance: String,
    pub pseudo_country_label: String,
}

impl Dataset {
    pub fn new(domain_names: Vec<String>, records: Vec<StratumRecord>) -> Result<Self> {
        let data = Self {
            records,
            domain_names,
            provenance: String::new(),
            pseudo_country_label: DEFAULT_PSEUDO_COUNTRY.to_string(),
        };
        data.validate()?;
        Ok(data)
    }

    /// Checks domain arity and key uniqueness.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.records.len());
        for (i, r) in self.records.iter().enumerate() {
            if r.domain.len() != self.domain_names.len() {
                return Err(Error::Parse {
                    row: i + 1,
                    message: format!(
                        "domain arity {} does not match {}",
                        r.domain.len(),
                        self.domain_names.len()
                    ),
                });
            }
            if !seen.insert(r.key()) {
                return Err(Error::DuplicateKey {
                    period: r.period.clone(),
                    country: r.country.clone(),
                    domain: r.domain.join("+"),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct periods in order of first appearance.
    pub fn periods(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.records {
            if !out.contains(&r.period) {
                out.push(r.period.clone());
            }
        }
        out
    }

    /// Records of a single period, keeping metadata.
    pub fn filter_period(&self, period: &str) -> Dataset {
        Dataset {
            records: self
                .records
                .iter()
                .filter(|r| r.period == period)
                .cloned()
                .collect(),
            domain_names: self.domain_names.clone(),
            provenance: self.provenance.clone(),
            pseudo_country_label: self.pseudo_country_label.clone(),
        }
    }

    pub fn domain_index(&self, variable: &str) -> Option<usize> {
        self.domain_names.iter().position(|d| d == variable)
    }

    pub fn totals(&self) -> Counts {
        let mut c = Counts::default();
        for r in &self.records {
            c.add(r.counts());
        }
        c
    }
}

/// Column mapping for [`parse_csv`]. When `domain` is `None` every header
/// column not mapped to another role is treated as a domain variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSchema {
    pub period: String,
    pub country: String,
    pub domain: Option<Vec<String>>,
    pub m: String,
    pub n: String,
    pub big_n: String,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self {
            period: "period".into(),
            country: "country".into(),
            domain: None,
            m: "m".into(),
            n: "n".into(),
            big_n: "N".into(),
        }
    }
}

impl ColumnSchema {
    /// Parses `period=<col>,country=<col>,domain=<c1+c2>,m=<col>,n=<col>,N=<col>`.
    /// Roles that are not mentioned keep their default column names.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut schema = Self::default();
        for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (role, col) = item
                .split_once('=')
                .ok_or_else(|| Error::Schema(format!("expected role=column, got `{item}`")))?;
            let col = col.trim().to_string();
            match role.trim() {
                "period" => schema.period = col,
                "country" => schema.country = col,
                "domain" => {
                    schema.domain = Some(if col.is_empty() {
                        Vec::new()
                    } else {
                        col.split('+').map(|s| s.trim().to_string()).collect()
                    })
                }
                "m" => schema.m = col,
                "n" => schema.n = col,
                "N" => schema.big_n = col,
                other => return Err(Error::Schema(format!("unknown schema role `{other}`"))),
            }
        }
        Ok(schema)
    }
}

pub fn parse_csv(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let mut data = parse_csv_reader(file, schema)?;
    data.provenance = format!("source: {}", path.display());
    Ok(data)
}

pub fn parse_csv_reader<R: Read>(reader: R, schema: &ColumnSchema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };

    let i_period = find(&schema.period)?;
    let i_country = find(&schema.country)?;
    let i_m = find(&schema.m)?;
    let i_n = find(&schema.n)?;
    let i_big_n = find(&schema.big_n)?;
    let mapped = [i_period, i_country, i_m, i_n, i_big_n];

    let (domain_names, domain_idx): (Vec<String>, Vec<usize>) = match &schema.domain {
        Some(cols) => {
            let idx = cols.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
            (cols.clone(), idx)
        }
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| !mapped.contains(i))
            .map(|(i, h)| (h.to_string(), i))
            .unzip(),
    };

    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| Error::Parse {
            row: row_no,
            message: e.to_string(),
        })?;
        let field = |idx: usize| row.get(idx).unwrap_or("");
        let count = |idx: usize, name: &str| parse_count(field(idx), name, row_no);
        records.push(StratumRecord {
            period: field(i_period).to_string(),
            country: field(i_country).to_string(),
            domain: domain_idx.iter().map(|&d| field(d).to_string()).collect(),
            apprehended: count(i_m, &schema.m)?,
            police: count(i_n, &schema.n)?,
            registered: count(i_big_n, &schema.big_n)?,
        });
    }
    Dataset::new(domain_names, records)
}

fn parse_count(raw: &str, column: &str, row: usize) -> Result<u64> {
    let value: i64 = raw.parse().map_err(|_| Error::Parse {
        row,
        message: format!("column `{column}`: `{raw}` is not a 64-bit integer count"),
    })?;
    if value < 0 {
        return Err(Error::Parse {
            row,
            message: format!("column `{column}`: negative count {value}"),
        });
    }
    Ok(value as u64)
}

/// A record moved into the pseudo-country.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MergedRecord {
    pub key: String,
    pub counts: Counts,
}

/// A pseudo-country record that still violated the conditions after aggregation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DroppedPseudoRecord {
    pub period: String,
    pub domain: Vec<String>,
    pub counts: Counts,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub merged: Vec<MergedRecord>,
    pub dropped: Vec<DroppedPseudoRecord>,
}

impl AuditReport {
    pub fn is_empty(&self) -> bool {
        self.merged.is_empty() && self.dropped.is_empty()
    }

    pub fn dropped_totals(&self) -> Counts {
        let mut c = Counts::default();
        for d in &self.dropped {
            c.add(d.counts);
        }
        c
    }
}

struct PseudoCell {
    counts: Counts,
    members: Vec<String>,
    has_violator: bool,
}

/// Folds strata that violate `m > 0`, `n > 0`, `n < N` into the pseudo-country
/// of their (period, domain). Existing pseudo-country records join the same
/// cell. Cells that still violate the conditions are dropped and reported.
pub fn apply_model_conditions(data: &Dataset) -> (Dataset, AuditReport) {
    let pseudo = data.pseudo_country_label.as_str();
    let mut audit = AuditReport::default();
    let mut kept = Vec::with_capacity(data.records.len());
    let mut cells: BTreeMap<(String, Vec<String>), PseudoCell> = BTreeMap::new();
    let mut cell_order: Vec<(String, Vec<String>)> = Vec::new();

    for r in &data.records {
        let violates = !r.satisfies_model_conditions();
        let is_pseudo = r.country == pseudo;
        if !violates && !is_pseudo {
            kept.push(r.clone());
            continue;
        }
        let cell_key = (r.period.clone(), r.domain.clone());
        let cell = cells.entry(cell_key.clone()).or_insert_with(|| {
            cell_order.push(cell_key);
            PseudoCell {
                counts: Counts::default(),
                members: Vec::new(),
                has_violator: false,
            }
        });
        cell.counts.add(r.counts());
        cell.members.push(r.country.clone());
        if violates {
            cell.has_violator = true;
            if !is_pseudo {
                audit.merged.push(MergedRecord {
                    key: r.key().to_string(),
                    counts: r.counts(),
                });
            }
        }
    }

    for cell_key in cell_order {
        let cell = cells.remove(&cell_key).expect("cell recorded in order list");
        let (period, domain) = cell_key;
        let record = StratumRecord {
            period,
            country: pseudo.to_string(),
            domain,
            apprehended: cell.counts.m,
            police: cell.counts.n,
            registered: cell.counts.big_n,
        };
        if record.satisfies_model_conditions() {
            kept.push(record);
        } else {
            audit.dropped.push(DroppedPseudoRecord {
                period: record.period,
                domain: record.domain,
                counts: cell.counts,
                members: cell.members,
            });
        }
        debug_assert!(cell.has_violator || cell.counts.m > 0);
    }

    let out = Dataset {
        records: kept,
        domain_names: data.domain_names.clone(),
        provenance: data.provenance.clone(),
        pseudo_country_label: data.pseudo_country_label.clone(),
    };
    (out, audit)
}

/// Sets `m = 1` for a stratum with no apprehensions but positive `n` and `N`.
pub fn pad_empty_domain(data: &Dataset, key: &RecordKey) -> Result<Dataset> {
    let mut out = data.clone();
    let record = out
        .records
        .iter_mut()
        .find(|r| r.period == key.period && r.country == key.country && r.domain == key.domain)
        .ok_or_else(|| Error::InvalidPadding(format!("no record with key {key}")))?;
    if record.apprehended != 0 {
        return Err(Error::InvalidPadding(format!(
            "record {key} has m = {}, padding requires m = 0",
            record.apprehended
        )));
    }
    if record.police == 0 || record.registered == 0 {
        return Err(Error::InvalidPadding(format!(
            "record {key} needs n > 0 and N > 0"
        )));
    }
    record.apprehended = 1;
    if !out.provenance.is_empty() {
        out.provenance.push('\n');
    }
    out.provenance
        .push_str(&format!("padded {key}: m set from 0 to 1"));
    Ok(out)
}
