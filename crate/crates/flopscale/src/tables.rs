//! Built-in model configuration tables and the accelerator registry.

use std::path::Path;

use flopscale_core::planner::ConfigTable;
use flopscale_core::runtime::AcceleratorSpec;
use flopscale_core::{ArchConfig, ArchKind};
use serde::{Deserialize, Serialize};

use crate::io::IoError;

/// One model of a configuration table with its reported size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableRow {
    pub name: String,
    /// Reported size in millions of parameters.
    pub params_m: u64,
    pub config: ArchConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigTableFile {
    pub table: String,
    /// Training context length shared by the table, if any.
    pub context: Option<u64>,
    pub entries: Vec<TableRow>,
}

impl ConfigTableFile {
    pub fn to_config_table(&self) -> ConfigTable {
        tables_to_config(std::slice::from_ref(self))
    }
}

const BUILTIN: [&str; 4] = [
    include_str!("../data/xlstm_tokenparam.json"),
    include_str!("../data/transformer_tokenparam.json"),
    include_str!("../data/xlstm_isoflop.json"),
    include_str!("../data/transformer_isoflop.json"),
];

const ACCELERATORS: &str = include_str!("../data/accelerators.json");

/// The Token/Param and IsoFLOP sweeps for both families.
pub fn builtin_tables() -> Vec<ConfigTableFile> {
    BUILTIN.iter().map(|s| serde_json::from_str(s).expect("built-in table parses")).collect()
}

/// Every built-in row, in table order.
pub fn builtin_rows() -> Vec<TableRow> {
    builtin_tables().into_iter().flat_map(|t| t.entries).collect()
}

/// All built-in configurations as one lookup table.
pub fn builtin_config_table() -> ConfigTable {
    tables_to_config(&builtin_tables())
}

/// Looks a row up by name across the built-in tables.
pub fn builtin_preset(name: &str) -> Option<ArchConfig> {
    builtin_rows().into_iter().find(|r| r.name == name).map(|r| r.config)
}

fn tables_to_config(tables: &[ConfigTableFile]) -> ConfigTable {
    let mut seen = std::collections::BTreeSet::new();
    let rows = tables
        .iter()
        .flat_map(|t| t.entries.iter())
        .filter(|r| seen.insert(r.name.clone()))
        .map(|r| (r.name.clone(), r.config.clone()));
    ConfigTable::new(rows).expect("table configurations are valid")
}

pub fn load_config_table(path: &Path) -> Result<ConfigTable, IoError> {
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Open { path: path.display().to_string(), source })?;
    let file: ConfigTableFile = serde_json::from_str(&text).map_err(|e| IoError::Format(format!("{}: {e}", path.display())))?;
    for row in &file.entries {
        row.config.validate().map_err(|e| IoError::Format(format!("{}: {}: {e}", path.display(), row.name)))?;
    }
    Ok(file.to_config_table())
}

/// The registry shipped with the tool.
pub fn accelerator_registry() -> Vec<AcceleratorSpec> {
    serde_json::from_str(ACCELERATORS).expect("built-in registry parses")
}

/// Built-in registry extended (or overridden by name) with a user file.
pub fn load_accelerators(path: &Path) -> Result<Vec<AcceleratorSpec>, IoError> {
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Open { path: path.display().to_string(), source })?;
    let extra: Vec<AcceleratorSpec> = serde_json::from_str(&text).map_err(|e| IoError::Format(format!("{}: {e}", path.display())))?;
    let mut registry = accelerator_registry();
    for a in extra {
        a.validate().map_err(|e| IoError::Format(e.to_string()))?;
        match registry.iter_mut().find(|r| r.name == a.name) {
            Some(slot) => *slot = a,
            None => registry.push(a),
        }
    }
    Ok(registry)
}

pub fn kind_name(kind: ArchKind) -> &'static str {
    match kind {
        ArchKind::Xlstm => "xlstm",
        ArchKind::Transformer => "transformer",
    }
}
