//! The frozen text-embedding bank and its `teb-v1` file format.

use std::path::Path;

use ndarray::{Array2, ArrayView1};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::category::{CategoryError, CategorySet};
use crate::prompts::{build_prompts, PromptError, PromptTemplate};
use crate::provider::{check_dimensions, EmbeddingProvider, ProviderError};

pub const FORMAT_TAG: &str = "teb-v1";

#[derive(Debug, Error)]
pub enum BankError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("provider returned an all-zero embedding for prompt {0:?}")]
    ZeroEmbedding(String),
    #[error("bank file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("bank file line {line}: row has {got} floats, expected {expected}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Category(#[from] CategoryError),
    #[error(transparent)]
    Template(#[from] PromptError),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Frozen matrix of text embeddings, one column per category.
///
/// Columns are stored exactly as the provider produced them, without
/// normalization; the similarity computation normalizes both sides. No
/// operation mutates the matrix after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEmbeddingBank {
    matrix: Array2<f64>, // d_t x C
    categories: CategorySet,
    provider_id: String,
    template: PromptTemplate,
}

impl TextEmbeddingBank {
    /// Assembles a bank from per-category column vectors.
    pub fn from_columns(
        columns: Vec<Vec<f64>>,
        categories: CategorySet,
        provider_id: impl Into<String>,
        template: PromptTemplate,
    ) -> Result<Self, BankError> {
        assert_eq!(
            columns.len(),
            categories.len(),
            "one embedding column per category"
        );
        let dim = columns.first().map_or(0, Vec::len);
        let mut matrix = Array2::<f64>::zeros((dim, columns.len()));
        for (c, col) in columns.iter().enumerate() {
            assert_eq!(col.len(), dim, "columns must share one dimension");
            if col.iter().all(|&x| x == 0.0) {
                return Err(BankError::ZeroEmbedding(categories.name(c).to_string()));
            }
            for (r, &x) in col.iter().enumerate() {
                matrix[[r, c]] = x;
            }
        }
        let provider_id = sanitize_provider_id(&provider_id.into());
        Ok(Self {
            matrix,
            categories,
            provider_id,
            template,
        })
    }

    /// `d_t x C` embedding matrix; column `c` is category `c`'s embedding.
    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn column(&self, c: usize) -> ArrayView1<'_, f64> {
        self.matrix.column(c)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_categories(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn categories(&self) -> &CategorySet {
        &self.categories
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn template(&self) -> &PromptTemplate {
        &self.template
    }

    /// Digest over the exact matrix bits; lets tests assert the bank was
    /// not touched by a training run.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for &x in self.matrix.iter() {
            hasher.update(x.to_le_bytes());
        }
        crate::to_hex(&hasher.finalize())
    }
}

fn sanitize_provider_id(raw: &str) -> String {
    let cleaned: String = raw
        .chars()
        .map(|c| if c.is_whitespace() { '-' } else { c })
        .collect();
    if cleaned.is_empty() {
        "unknown".to_string()
    } else {
        cleaned
    }
}

/// Builds a bank by embedding one prompt per category.
pub fn build_bank(
    provider: &dyn EmbeddingProvider,
    template: &PromptTemplate,
    categories: &CategorySet,
) -> Result<TextEmbeddingBank, BankError> {
    let prompts = build_prompts(template, categories);
    let vectors = provider.embed(&prompts)?;
    if vectors.len() != prompts.len() {
        return Err(BankError::Provider(ProviderError::Failed {
            provider: provider.id(),
            prompt: String::new(),
            message: format!(
                "expected {} embeddings, got {}",
                prompts.len(),
                vectors.len()
            ),
        }));
    }
    check_dimensions(&provider.id(), &prompts, &vectors)?;
    for (prompt, v) in prompts.iter().zip(&vectors) {
        if v.iter().all(|&x| x == 0.0) {
            return Err(BankError::ZeroEmbedding(prompt.clone()));
        }
    }
    TextEmbeddingBank::from_columns(vectors, categories.clone(), provider.id(), template.clone())
}

/// Serializes a bank in the `teb-v1` text format.
///
/// Line 1: `teb-v1 <C> <d_t> <provider_id>`; line 2: the template verbatim;
/// then one `<category> <f_1> ... <f_dt>` line per category with floats at
/// nine significant digits.
pub fn format_bank(bank: &TextEmbeddingBank) -> String {
    let mut out = format!(
        "{FORMAT_TAG} {} {} {}\n{}\n",
        bank.n_categories(),
        bank.dim(),
        bank.provider_id(),
        bank.template().as_str()
    );
    for c in 0..bank.n_categories() {
        out.push_str(bank.categories.name(c));
        for &x in bank.column(c).iter() {
            out.push(' ');
            out.push_str(&format!("{x:.8e}"));
        }
        out.push('\n');
    }
    out
}

pub fn save_bank(bank: &TextEmbeddingBank, path: &Path) -> Result<(), BankError> {
    std::fs::write(path, format_bank(bank)).map_err(|source| BankError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses a `teb-v1` body. Errors carry 1-based line numbers.
pub fn parse_bank(text: &str) -> Result<TextEmbeddingBank, BankError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(BankError::Format {
        line: 1,
        message: "empty file".into(),
    })?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != FORMAT_TAG {
        return Err(BankError::Format {
            line: 1,
            message: format!("expected `{FORMAT_TAG} <C> <d_t> <provider_id>`, got {header:?}"),
        });
    }
    let n_categories: usize = fields[1].parse().map_err(|_| BankError::Format {
        line: 1,
        message: format!("bad category count {:?}", fields[1]),
    })?;
    let dim: usize = fields[2].parse().map_err(|_| BankError::Format {
        line: 1,
        message: format!("bad dimension {:?}", fields[2]),
    })?;
    if !(2..=64).contains(&n_categories) || dim == 0 || dim > 1 << 20 {
        return Err(BankError::Format {
            line: 1,
            message: format!("unsupported shape {n_categories} x {dim}"),
        });
    }
    let provider_id = fields[3].to_string();
    let template_line = lines.next().ok_or(BankError::Format {
        line: 2,
        message: "missing template line".into(),
    })?;
    let template = PromptTemplate::new(template_line).map_err(|e| BankError::Format {
        line: 2,
        message: e.to_string(),
    })?;
    let mut names = Vec::with_capacity(n_categories);
    let mut columns = Vec::with_capacity(n_categories);
    for (ix, line) in lines.enumerate() {
        let line_no = ix + 3;
        if line.trim().is_empty() {
            continue;
        }
        if names.len() == n_categories {
            return Err(BankError::Format {
                line: line_no,
                message: format!("more than {n_categories} category rows"),
            });
        }
        let mut tokens = line.split_whitespace();
        let name = tokens.next().ok_or(BankError::Format {
            line: line_no,
            message: "missing category name".into(),
        })?;
        let mut col = Vec::with_capacity(dim);
        for tok in tokens {
            let x: f64 = tok.parse().map_err(|_| BankError::Format {
                line: line_no,
                message: format!("bad float {tok:?}"),
            })?;
            if !x.is_finite() {
                return Err(BankError::Format {
                    line: line_no,
                    message: format!("non-finite value {tok:?}"),
                });
            }
            col.push(x);
        }
        if col.len() != dim {
            return Err(BankError::DimensionMismatch {
                line: line_no,
                expected: dim,
                got: col.len(),
            });
        }
        if col.iter().all(|&x| x == 0.0) {
            return Err(BankError::Format {
                line: line_no,
                message: format!("category {name:?} has an all-zero embedding"),
            });
        }
        names.push(name.to_string());
        columns.push(col);
    }
    if names.len() != n_categories {
        return Err(BankError::Format {
            line: names.len() + 3,
            message: format!(
                "header declares {n_categories} categories but file has {}",
                names.len()
            ),
        });
    }
    let categories = CategorySet::new(&names)?;
    TextEmbeddingBank::from_columns(columns, categories, provider_id, template)
}

pub fn load_bank(path: &Path) -> Result<TextEmbeddingBank, BankError> {
    let text = std::fs::read_to_string(path).map_err(|source| BankError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_bank(&text)
}
