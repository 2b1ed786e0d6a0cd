//! Per-category prompt construction.

use thiserror::Error;

use crate::category::CategorySet;

/// The placeholder replaced by the category name.
pub const PLACEHOLDER: &str = "[CLS]";

/// The default template; best-performing of the nine built-ins.
pub const DEFAULT_TEMPLATE: &str = "A photo of a person making a [CLS] facial expression.";

/// The built-in template list, addressable as `t1`..`t9`.
pub const BUILTIN_TEMPLATES: [&str; 9] = [
    "This person is [CLS].",
    "A photo of a [CLS] face.",
    "This is a [CLS] facial expression.",
    "A person makes a [CLS] facial expression.",
    "An ID photo of a [CLS] facial expression.",
    "A person is feeling [CLS].",
    "A person feeling [CLS] on the face.",
    "A photo of a person with a [CLS] expression on the face.",
    "A photo of a person making a [CLS] facial expression.",
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("template must contain exactly one {PLACEHOLDER}, found {count} in {template:?}")]
    InvalidTemplate { template: String, count: usize },
    #[error("unknown builtin template id {0:?} (expected t1..t9)")]
    UnknownBuiltin(String),
}

/// A prompt template containing exactly one `[CLS]` placeholder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    template: String,
}

impl PromptTemplate {
    pub fn new(template: impl Into<String>) -> Result<Self, PromptError> {
        let template = template.into();
        let count = template.matches(PLACEHOLDER).count();
        if count != 1 {
            return Err(PromptError::InvalidTemplate { template, count });
        }
        Ok(Self { template })
    }

    /// Resolves a builtin id (`t1`..`t9`) to its template.
    pub fn builtin(id: &str) -> Result<Self, PromptError> {
        let ix: usize = id
            .strip_prefix('t')
            .and_then(|n| n.parse().ok())
            .filter(|n| (1..=BUILTIN_TEMPLATES.len()).contains(n))
            .ok_or_else(|| PromptError::UnknownBuiltin(id.to_string()))?;
        Self::new(BUILTIN_TEMPLATES[ix - 1])
    }

    /// Accepts either a builtin id or a literal template string.
    pub fn resolve(spec: &str) -> Result<Self, PromptError> {
        match Self::builtin(spec) {
            Ok(t) => Ok(t),
            Err(PromptError::UnknownBuiltin(_)) => Self::new(spec),
            Err(e) => Err(e),
        }
    }

    pub fn as_str(&self) -> &str {
        &self.template
    }

    pub fn fill(&self, category: &str) -> String {
        self.template.replace(PLACEHOLDER, category)
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::new(DEFAULT_TEMPLATE).expect("default template is valid")
    }
}

/// One prompt per category, in category (= bank column) order.
pub fn build_prompts(template: &PromptTemplate, categories: &CategorySet) -> Vec<String> {
    categories
        .names()
        .iter()
        .map(|name| template.fill(name))
        .collect()
}
