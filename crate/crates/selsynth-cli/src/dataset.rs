//! CSV ingestion against a declared schema, and CSV output for synthetic
//! tables.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use selsynth::table::{Cell, RawTable};
use selsynth::transform::{ColumnDecl, ColumnRole};

#[derive(Debug, Deserialize)]
struct SchemaDeclFile {
    version: u32,
    #[serde(rename = "column")]
    columns: Vec<ColumnDecl>,
}

pub const SCHEMA_DECL_VERSION: u32 = 1;

/// Parse the user-authored column declaration file.
pub fn load_schema_decl(path: &Path) -> Result<Vec<ColumnDecl>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading schema declaration {}", path.display()))?;
    let decl: SchemaDeclFile = toml::from_str(&text)
        .with_context(|| format!("parsing schema declaration {}", path.display()))?;
    if decl.version != SCHEMA_DECL_VERSION {
        bail!(
            "schema declaration version {} not supported (expected {SCHEMA_DECL_VERSION})",
            decl.version
        );
    }
    for c in &decl.columns {
        match c.role {
            ColumnRole::Continuous => {
                if !c.categories.is_empty() {
                    bail!("continuous column {:?} must not declare categories", c.name);
                }
            }
            ColumnRole::Ordinal | ColumnRole::Nominal => {
                if c.categories.is_empty() {
                    bail!("categorical column {:?} must declare its categories", c.name);
                }
                let mut seen = std::collections::HashSet::new();
                for cat in &c.categories {
                    if !seen.insert(cat) {
                        bail!("duplicate category {cat:?} in column {:?}", c.name);
                    }
                }
            }
        }
    }
    Ok(decl.columns)
}

/// Load a CSV dataset, typing and validating every cell against the declared
/// columns. Errors carry the (row, column) location.
pub fn load_dataset(csv_path: &Path, decls: &[ColumnDecl]) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(csv_path)
        .with_context(|| format!("opening dataset {}", csv_path.display()))?;

    let headers: Vec<String> = reader
        .headers()
        .context("reading csv header")?
        .iter()
        .map(str::to_owned)
        .collect();
    if headers.len() != decls.len() {
        bail!(
            "dataset has {} columns but the schema declares {}",
            headers.len(),
            decls.len()
        );
    }
    for (h, d) in headers.iter().zip(decls) {
        if *h != d.name {
            bail!("csv column {h:?} does not match declared column {:?}", d.name);
        }
    }

    let mut table = RawTable::new(headers);
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("reading csv row {}", row_idx + 1))?;
        let mut row = Vec::with_capacity(decls.len());
        for (col_idx, (field, decl)) in record.iter().zip(decls).enumerate() {
            let cell = match decl.role {
                ColumnRole::Continuous => {
                    let v: f64 = field.trim().parse().map_err(|_| {
                        anyhow::anyhow!(
                            "unparseable numeric cell {field:?} at row {}, column {} ({})",
                            row_idx + 1,
                            col_idx + 1,
                            decl.name
                        )
                    })?;
                    if !v.is_finite() {
                        bail!(
                            "non-finite value at row {}, column {} ({})",
                            row_idx + 1,
                            col_idx + 1,
                            decl.name
                        );
                    }
                    Cell::Real(v)
                }
                ColumnRole::Ordinal | ColumnRole::Nominal => {
                    let label = field.to_string();
                    if !decl.categories.iter().any(|c| *c == label) {
                        bail!(
                            "undeclared category {label:?} at row {}, column {} ({})",
                            row_idx + 1,
                            col_idx + 1,
                            decl.name
                        );
                    }
                    Cell::Cat(label)
                }
            };
            row.push(cell);
        }
        table
            .push_row(row)
            .with_context(|| format!("row {}", row_idx + 1))?;
    }
    Ok(table)
}

/// Write a raw table as CSV with the original column headers.
pub fn write_csv(table: &RawTable, path: &Path) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(true)
        .from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    writer.write_record(&table.columns)?;
    for row in &table.rows {
        writer.write_record(row.iter().map(Cell::render))?;
    }
    writer.flush()?;
    Ok(())
}
