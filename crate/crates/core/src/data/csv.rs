use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Group};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

/// Role a CSV column plays when building a [`Dataset`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Feature,
    Label,
    Sensitive,
    Drop,
}

/// Column-role schema, stored as JSON next to a CSV file.
///
/// Columns absent from `columns` are treated as features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: BTreeMap<String, Role>,
    /// Value of the sensitive column that marks the advantaged group.
    pub advantaged: String,
    /// Label value mapped to 1. When absent, numeric 0/1 labels are used as
    /// is and anything else is encoded by first appearance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive_label: Option<String>,
}

impl Schema {
    pub fn from_json_file(path: &Path) -> Result<Schema> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn role_of(&self, column: &str) -> Role {
        self.columns.get(column).copied().unwrap_or(Role::Feature)
    }

    fn single(&self, role: Role) -> Result<&str> {
        let mut names = self.columns.iter().filter(|(_, r)| **r == role).map(|(n, _)| n.as_str());
        let name = names
            .next()
            .ok_or_else(|| Error::invalid(format!("schema has no {role:?} column")))?;
        if names.next().is_some() {
            return Err(Error::invalid(format!("schema has more than one {role:?} column")));
        }
        Ok(name)
    }

    pub fn label_column(&self) -> Result<&str> {
        self.single(Role::Label)
    }

    pub fn sensitive_column(&self) -> Result<&str> {
        self.single(Role::Sensitive)
    }
}

/// Raw CSV contents. Cells are kept as text; numeric interpretation happens
/// during preprocessing.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    fn cells(&self, j: usize) -> impl Iterator<Item = &str> + Clone {
        self.rows.iter().map(move |r| r[j].as_str())
    }
}

pub fn load_csv(path: &Path, schema: &Schema) -> Result<RawTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let table = read_table(file)?;
    table.column_index(schema.label_column()?)?;
    table.column_index(schema.sensitive_column()?)?;
    Ok(table)
}

pub(crate) fn read_table(reader: impl std::io::Read) -> Result<RawTable> {
    let mut rdr = ::csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(::csv::Trim::All)
        .from_reader(reader);
    let columns: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != columns.len() {
            return Err(Error::RaggedRow {
                row: i + 1,
                expected: columns.len(),
                found: record.len(),
            });
        }
        rows.push(record.iter().map(str::to_string).collect());
    }
    Ok(RawTable { columns, rows })
}

fn parse_num(cell: &str) -> Option<f64> {
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn same_value(cell: &str, reference: &str) -> bool {
    if cell == reference {
        return true;
    }
    matches!((parse_num(cell), parse_num(reference)), (Some(a), Some(b)) if a == b)
}

/// Label-encodes by first appearance.
fn encode_first_appearance<'a>(cells: impl Iterator<Item = &'a str>) -> (Vec<f64>, usize) {
    let mut codes: HashMap<&str, usize> = HashMap::new();
    let values = cells
        .map(|c| {
            let next = codes.len();
            *codes.entry(c).or_insert(next) as f64
        })
        .collect();
    (values, codes.len())
}

fn distinct(cells: impl Iterator<Item = impl AsRef<str>>) -> usize {
    let mut seen = std::collections::HashSet::new();
    for c in cells {
        seen.insert(c.as_ref().to_string());
    }
    seen.len()
}

/// Encodes categorical columns, Z-scores every feature and mirrors the
/// sensitive column into group tags.
///
/// The sensitive column is encoded as 1 for the advantaged value and 0
/// otherwise before Z-scoring, so a positive weight on it favours s1.
pub fn preprocess(raw: &RawTable, schema: &Schema) -> Result<Dataset> {
    let label_name = schema.label_column()?;
    let sensitive_name = schema.sensitive_column()?;
    let label_idx = raw.column_index(label_name)?;
    let sens_idx = raw.column_index(sensitive_name)?;
    if raw.n_rows() < 2 {
        return Err(Error::invalid("need at least two rows"));
    }

    let labels = encode_labels(raw, label_idx, label_name, schema.positive_label.as_deref())?;

    let n_sens = distinct(raw.cells(sens_idx));
    if n_sens != 2 {
        return Err(Error::NotBinary {
            column: sensitive_name.to_string(),
            found: n_sens,
        });
    }
    let groups: Vec<Group> = raw
        .cells(sens_idx)
        .map(|c| {
            if same_value(c, &schema.advantaged) {
                Group::Advantaged
            } else {
                Group::Disadvantaged
            }
        })
        .collect();
    if !groups.contains(&Group::Advantaged) {
        return Err(Error::invalid(format!(
            "advantaged value `{}` does not occur in column `{sensitive_name}`",
            schema.advantaged
        )));
    }

    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut names = Vec::new();
    let mut sensitive_col = None;
    for (j, name) in raw.columns.iter().enumerate() {
        if j == label_idx {
            continue;
        }
        let role = schema.role_of(name);
        let values = match role {
            Role::Drop | Role::Label => continue,
            Role::Sensitive => {
                sensitive_col = Some(names.len());
                groups
                    .iter()
                    .map(|&g| if g == Group::Advantaged { 1.0 } else { 0.0 })
                    .collect()
            }
            Role::Feature => {
                let numeric: Option<Vec<f64>> = raw.cells(j).map(parse_num).collect();
                match numeric {
                    Some(v) => v,
                    None => encode_first_appearance(raw.cells(j)).0,
                }
            }
        };
        columns.push(values);
        names.push(name.clone());
    }

    let m = raw.n_rows();
    let d = columns.len();
    let mut features = vec![0.0; m * d];
    for (j, col) in columns.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            features[i * d + j] = *v;
        }
    }
    Ok(Dataset::new(features, d, labels, groups, sensitive_col, names, 0)?.standardized())
}

fn encode_labels(raw: &RawTable, idx: usize, name: &str, positive: Option<&str>) -> Result<Vec<u8>> {
    let n = distinct(raw.cells(idx));
    if n != 2 {
        return Err(Error::NotBinary {
            column: name.to_string(),
            found: n,
        });
    }
    if let Some(pos) = positive {
        let labels: Vec<u8> = raw.cells(idx).map(|c| same_value(c, pos) as u8).collect();
        if !labels.contains(&1) {
            return Err(Error::invalid(format!("positive label `{pos}` does not occur")));
        }
        return Ok(labels);
    }
    let numeric: Option<Vec<f64>> = raw.cells(idx).map(parse_num).collect();
    if let Some(v) = numeric {
        if v.iter().all(|&x| x == 0.0 || x == 1.0) {
            return Ok(v.into_iter().map(|x| x as u8).collect());
        }
    }
    Ok(encode_first_appearance(raw.cells(idx))
        .0
        .into_iter()
        .map(|x| x as u8)
        .collect())
}

/// Exports features plus a `label` column. A `group` column is added only
/// when the dataset carries no sensitive feature column.
pub fn write_csv(data: &Dataset, path: &Path) -> Result<()> {
    let mut wtr = ::csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = data.feature_names().to_vec();
    header.push("label".into());
    let with_group = data.sensitive_col().is_none();
    if with_group {
        header.push("group".into());
    }
    wtr.write_record(&header)?;
    for i in 0..data.n_rows() {
        let mut rec: Vec<String> = data.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(data.labels()[i].to_string());
        if with_group {
            rec.push(data.groups()[i].tag().to_string());
        }
        wtr.write_record(&rec)?;
    }
    let bytes = wtr.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    write_atomic(path, &bytes)
}

impl Dataset {
    /// Schema that reloads a file written by [`write_csv`].
    pub fn export_schema(&self) -> Schema {
        let mut columns: BTreeMap<String, Role> = self
            .feature_names()
            .iter()
            .map(|n| (n.clone(), Role::Feature))
            .collect();
        columns.insert("label".into(), Role::Label);
        let advantaged = match self.sensitive_col() {
            Some(c) => {
                columns.insert(self.feature_names()[c].clone(), Role::Sensitive);
                self.rows()
                    .zip(self.groups())
                    .find(|(_, g)| **g == Group::Advantaged)
                    .map(|(r, _)| r[c].to_string())
                    .unwrap_or_default()
            }
            None => {
                columns.insert("group".into(), Role::Sensitive);
                Group::Advantaged.tag().to_string()
            }
        };
        Schema {
            columns,
            advantaged,
            positive_label: Some("1".into()),
        }
    }
}
