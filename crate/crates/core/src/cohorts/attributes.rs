use std::collections::BTreeMap;
use std::io::Read;

pub const ATTRIBUTE_COLUMNS: [&str; 9] = [
    "team",
    "architecture_family",
    "unet_like",
    "foundation_model",
    "pretrained",
    "loss",
    "optimizer",
    "ensemble",
    "augmentation",
];

#[derive(Debug, thiserror::Error)]
pub enum AttributeError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("attribute table is missing column `{0}`")]
    MissingColumn(&'static str),
    #[error("team `{0}` appears more than once")]
    DuplicateTeam(String),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
}

/// Team → design attributes. Values are free-form and matched exactly.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AttributeTable {
    columns: Vec<String>,
    rows: BTreeMap<String, BTreeMap<String, String>>,
}

impl AttributeTable {
    pub fn teams(&self) -> impl Iterator<Item = &str> {
        self.rows.keys().map(String::as_str)
    }

    pub fn attributes(&self) -> &[String] {
        &self.columns
    }

    pub fn get(&self, team: &str, attribute: &str) -> Option<&str> {
        self.rows.get(team)?.get(attribute).map(String::as_str)
    }

    /// Team → value of `attribute`, usable as a grouping.
    pub fn grouping(&self, attribute: &str) -> Result<BTreeMap<String, String>, AttributeError> {
        if !self.columns.iter().any(|c| c == attribute) {
            return Err(AttributeError::UnknownAttribute(attribute.to_string()));
        }
        Ok(self
            .rows
            .iter()
            .filter_map(|(team, attrs)| attrs.get(attribute).map(|v| (team.clone(), v.clone())))
            .collect())
    }
}

/// Reads the attribute side table. Every standard column must be present;
/// extra columns are kept as further attributes.
pub fn read_attribute_table(reader: impl Read) -> Result<AttributeTable, AttributeError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    for col in ATTRIBUTE_COLUMNS {
        if !headers.iter().any(|h| h == col) {
            return Err(AttributeError::MissingColumn(col));
        }
    }
    let team_idx = headers.iter().position(|h| h == "team").expect("checked above");
    let columns: Vec<String> = headers.iter().filter(|h| *h != "team").map(str::to_string).collect();
    let mut rows = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let team = rec.get(team_idx).unwrap_or("").to_string();
        let attrs = headers
            .iter()
            .zip(rec.iter())
            .filter(|(h, _)| *h != "team")
            .map(|(h, v)| (h.to_string(), v.to_string()))
            .collect();
        if rows.insert(team.clone(), attrs).is_some() {
            return Err(AttributeError::DuplicateTeam(team));
        }
    }
    Ok(AttributeTable { columns, rows })
}

const SHIPPED: &str = include_str!("../../data/team_attributes.csv");

/// Design attributes of the eight challenge teams.
pub fn challenge_attribute_table() -> AttributeTable {
    read_attribute_table(SHIPPED.as_bytes()).expect("shipped attribute table parses")
}
