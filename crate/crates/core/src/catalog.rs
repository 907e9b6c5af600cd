//! Per-check configuration: the fixed prompt content (issue description and
//! fix rubric) an operator supplies for every static check the pipeline
//! handles, plus optional hints for pulling related code into the prompt.
//!
//! The catalog is a TOML document with one `[[check]]` table per check:
//!
//! ```toml
//! [[check]]
//! id = "py/missing-equals"
//! tool = "CodeQL"
//! title = "`__eq__` not overridden when adding attributes"
//! description = "A class that defines attributes ..."
//! fix_rubric = "Override __eq__ method ..."
//!
//! [[check.relevant_block]]
//! kind = "named_symbol_definition"
//! symbol_source = "from_warning_message"
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("failed to read catalog {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed catalog: {0}")]
    Parse(String),
    #[error("invalid catalog: {0}")]
    Validation(String),
    #[error("unknown check `{0}`")]
    UnknownCheck(String),
}

/// Which related block to fetch for a violation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HintKind {
    EnclosingClass,
    EnclosingFunction,
    NamedSymbolDefinition,
}

/// Where the symbol for a [`HintKind::NamedSymbolDefinition`] hint comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SymbolSource {
    /// Identifiers quoted in the analyzer's warning message.
    FromWarningMessage,
    FixedName(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelevantBlockHint {
    pub kind: HintKind,
    pub symbol_source: SymbolSource,
    /// Keys this version does not understand; kept so a rewrite loses nothing.
    pub extra: BTreeMap<String, toml::Value>,
}

impl RelevantBlockHint {
    pub fn new(kind: HintKind, symbol_source: SymbolSource) -> Self {
        Self {
            kind,
            symbol_source,
            extra: BTreeMap::new(),
        }
    }
}

/// One static check and the text that describes how to fix it.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckSpec {
    pub check_id: String,
    pub tool_name: String,
    pub title: String,
    pub description: String,
    pub fix_rubric: String,
    pub relevant_block_queries: Vec<RelevantBlockHint>,
    pub extra: BTreeMap<String, toml::Value>,
}

impl CheckSpec {
    pub fn new(
        check_id: impl Into<String>,
        tool_name: impl Into<String>,
        title: impl Into<String>,
        description: impl Into<String>,
        fix_rubric: impl Into<String>,
    ) -> Self {
        Self {
            check_id: check_id.into(),
            tool_name: tool_name.into(),
            title: title.into(),
            description: description.into(),
            fix_rubric: fix_rubric.into(),
            relevant_block_queries: Vec::new(),
            extra: BTreeMap::new(),
        }
    }

    /// The title shown in prompts; falls back to the check id.
    pub fn display_title(&self) -> &str {
        if self.title.trim().is_empty() {
            &self.check_id
        } else {
            &self.title
        }
    }

    fn validate(&self) -> Result<(), CatalogError> {
        if self.check_id.trim().is_empty() {
            return Err(CatalogError::Validation("check with empty id".into()));
        }
        if self.description.trim().is_empty() {
            return Err(CatalogError::Validation(format!(
                "check `{}` has an empty description",
                self.check_id
            )));
        }
        if self.fix_rubric.trim().is_empty() {
            return Err(CatalogError::Validation(format!(
                "check `{}` has an empty fix_rubric",
                self.check_id
            )));
        }
        Ok(())
    }
}

/// Immutable map of check id to [`CheckSpec`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    checks: BTreeMap<String, CheckSpec>,
}

impl Catalog {
    pub fn from_checks(checks: impl IntoIterator<Item = CheckSpec>) -> Result<Self, CatalogError> {
        let mut map = BTreeMap::new();
        for check in checks {
            check.validate()?;
            if map.contains_key(&check.check_id) {
                return Err(CatalogError::Validation(format!(
                    "duplicate check id `{}`",
                    check.check_id
                )));
            }
            map.insert(check.check_id.clone(), check);
        }
        Ok(Self { checks: map })
    }

    pub fn parse(text: &str) -> Result<Self, CatalogError> {
        let doc: RawCatalog =
            toml::from_str(text).map_err(|e| CatalogError::Parse(e.to_string()))?;
        let checks = doc
            .check
            .into_iter()
            .map(CheckSpec::try_from)
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_checks(checks)
    }

    pub fn to_toml(&self) -> String {
        let doc = RawCatalog {
            check: self.checks.values().map(RawCheck::from).collect(),
        };
        toml::to_string(&doc).expect("catalog values are always representable in TOML")
    }

    pub fn len(&self) -> usize {
        self.checks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checks.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CheckSpec> {
        self.checks.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.checks.keys().map(String::as_str)
    }
}

pub fn load_catalog(path: &Path) -> Result<Catalog, CatalogError> {
    let text = fs::read_to_string(path).map_err(|source| CatalogError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Catalog::parse(&text)
}

pub fn get_check<'a>(catalog: &'a Catalog, check_id: &str) -> Result<&'a CheckSpec, CatalogError> {
    catalog
        .checks
        .get(check_id)
        .ok_or_else(|| CatalogError::UnknownCheck(check_id.to_string()))
}

// On-disk representation.

#[derive(Debug, Default, Serialize, Deserialize)]
struct RawCatalog {
    #[serde(default)]
    check: Vec<RawCheck>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawCheck {
    id: String,
    tool: String,
    #[serde(default)]
    title: String,
    description: String,
    fix_rubric: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    relevant_block: Vec<RawHint>,
    #[serde(flatten)]
    extra: BTreeMap<String, toml::Value>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawHint {
    kind: HintKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    symbol_source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fixed_name: Option<String>,
    #[serde(flatten)]
    extra: BTreeMap<String, toml::Value>,
}

impl TryFrom<RawCheck> for CheckSpec {
    type Error = CatalogError;

    fn try_from(raw: RawCheck) -> Result<Self, Self::Error> {
        let hints = raw
            .relevant_block
            .into_iter()
            .map(|h| hint_from_raw(&raw.id, h))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(CheckSpec {
            check_id: raw.id,
            tool_name: raw.tool,
            title: raw.title,
            description: raw.description,
            fix_rubric: raw.fix_rubric,
            relevant_block_queries: hints,
            extra: raw.extra,
        })
    }
}

fn hint_from_raw(check_id: &str, raw: RawHint) -> Result<RelevantBlockHint, CatalogError> {
    let source = match (raw.symbol_source.as_deref(), raw.fixed_name) {
        (None | Some("from_warning_message"), None) => SymbolSource::FromWarningMessage,
        (Some("fixed_name"), Some(name)) if !name.trim().is_empty() => {
            SymbolSource::FixedName(name)
        }
        (Some("fixed_name"), _) => {
            return Err(CatalogError::Validation(format!(
                "check `{check_id}`: symbol_source = \"fixed_name\" requires a nonempty fixed_name"
            )))
        }
        (None | Some("from_warning_message"), Some(_)) => {
            return Err(CatalogError::Validation(format!(
                "check `{check_id}`: fixed_name is only allowed with symbol_source = \"fixed_name\""
            )))
        }
        (Some(other), _) => {
            return Err(CatalogError::Validation(format!(
                "check `{check_id}`: unknown symbol_source `{other}`"
            )))
        }
    };
    Ok(RelevantBlockHint {
        kind: raw.kind,
        symbol_source: source,
        extra: raw.extra,
    })
}

impl From<&CheckSpec> for RawCheck {
    fn from(spec: &CheckSpec) -> Self {
        RawCheck {
            id: spec.check_id.clone(),
            tool: spec.tool_name.clone(),
            title: spec.title.clone(),
            description: spec.description.clone(),
            fix_rubric: spec.fix_rubric.clone(),
            relevant_block: spec
                .relevant_block_queries
                .iter()
                .map(|h| {
                    let (symbol_source, fixed_name) = match &h.symbol_source {
                        SymbolSource::FromWarningMessage => {
                            (Some("from_warning_message".to_string()), None)
                        }
                        SymbolSource::FixedName(n) => {
                            (Some("fixed_name".to_string()), Some(n.clone()))
                        }
                    };
                    RawHint {
                        kind: h.kind,
                        symbol_source,
                        fixed_name,
                        extra: h.extra.clone(),
                    }
                })
                .collect(),
            extra: spec.extra.clone(),
        }
    }
}
