//! Ordered category sets defining the label space and bank column order.

use std::fmt;
use std::path::Path;

use thiserror::Error;

/// The category name that marks the neutral class.
///
/// Neutral is identified by this literal name only; there is no heuristic
/// matching of synonyms.
pub const NEUTRAL_NAME: &str = "neutral";

/// The eight categories used throughout the reference experiments.
pub const DEFAULT_CATEGORIES: [&str; 8] = [
    "surprise",
    "fear",
    "disgust",
    "happiness",
    "sadness",
    "anger",
    "contempt",
    "neutral",
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CategoryError {
    #[error("duplicate category {0:?}")]
    DuplicateCategory(String),
    #[error("category name {0:?} is empty or contains whitespace/commas")]
    InvalidName(String),
    #[error("category count {0} outside supported range 2..=64")]
    BadCount(usize),
    #[error("categories file is empty")]
    EmptyFile,
}

/// Ordered, unique category names with an optional neutral class.
///
/// The order defines both the label indices of manifests and the column
/// order of the text-embedding bank. Names are lowercase-normalized on
/// construction; the neutral class, when present, is the entry literally
/// named `"neutral"`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategorySet {
    names: Vec<String>,
    neutral_index: Option<usize>,
}

impl CategorySet {
    /// Builds a category set, lowercasing and validating every name.
    pub fn new<I, S>(names: I) -> Result<Self, CategoryError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut normalized = Vec::new();
        for raw in names {
            let name = raw.as_ref().trim().to_lowercase();
            if name.is_empty() || name.chars().any(|c| c.is_whitespace() || c == ',') {
                return Err(CategoryError::InvalidName(raw.as_ref().to_string()));
            }
            if normalized.contains(&name) {
                return Err(CategoryError::DuplicateCategory(name));
            }
            normalized.push(name);
        }
        if !(2..=64).contains(&normalized.len()) {
            return Err(CategoryError::BadCount(normalized.len()));
        }
        let neutral_index = normalized.iter().position(|n| n == NEUTRAL_NAME);
        Ok(Self {
            names: normalized,
            neutral_index,
        })
    }

    /// The eight-category reference set, neutral included.
    pub fn default_eight() -> Self {
        Self::new(DEFAULT_CATEGORIES).expect("builtin names are valid")
    }

    /// Parses a `categories.txt` body: one name per line, order defines
    /// label indices and bank column order.
    pub fn parse(text: &str) -> Result<Self, CategoryError> {
        let lines: Vec<&str> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        if lines.is_empty() {
            return Err(CategoryError::EmptyFile);
        }
        Self::new(lines)
    }

    pub fn load(path: &Path) -> Result<Self, std::io::Error> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    pub fn save(&self, path: &Path) -> Result<(), std::io::Error> {
        let mut body = self.names.join("\n");
        body.push('\n');
        std::fs::write(path, body)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Index of the `"neutral"` category, if present.
    pub fn neutral_index(&self) -> Option<usize> {
        self.neutral_index
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        let needle = name.trim().to_lowercase();
        self.names.iter().position(|n| *n == needle)
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }
}

impl fmt::Display for CategorySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.names.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_neutral_by_name() {
        let cats = CategorySet::default_eight();
        assert_eq!(cats.len(), 8);
        assert_eq!(cats.neutral_index(), Some(7));
        assert_eq!(cats.name(7), "neutral");
    }

    #[test]
    fn no_neutral_when_absent() {
        let cats = CategorySet::new(["happiness", "anger"]).unwrap();
        assert_eq!(cats.neutral_index(), None);
    }

    #[test]
    fn normalizes_case_and_rejects_duplicates() {
        let cats = CategorySet::new(["Happiness", "ANGER"]).unwrap();
        assert_eq!(cats.names(), ["happiness", "anger"]);
        let err = CategorySet::new(["fear", "Fear"]).unwrap_err();
        assert_eq!(err, CategoryError::DuplicateCategory("fear".into()));
    }

    #[test]
    fn rejects_bad_names_and_counts() {
        assert!(matches!(
            CategorySet::new(["a b", "c"]),
            Err(CategoryError::InvalidName(_))
        ));
        assert!(matches!(
            CategorySet::new(["with,comma", "c"]),
            Err(CategoryError::InvalidName(_))
        ));
        assert!(matches!(
            CategorySet::new(["only"]),
            Err(CategoryError::BadCount(1))
        ));
        let many: Vec<String> = (0..65).map(|i| format!("c{i}")).collect();
        assert!(matches!(
            CategorySet::new(&many),
            Err(CategoryError::BadCount(65))
        ));
    }

    #[test]
    fn parse_skips_blank_lines() {
        let cats = CategorySet::parse("happiness\n\nneutral\n").unwrap();
        assert_eq!(cats.len(), 2);
        assert_eq!(cats.neutral_index(), Some(1));
    }
}
