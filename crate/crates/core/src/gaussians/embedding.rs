use crate::error::{Error, Result};

/// Default embedding width.
pub const DEFAULT_EMBEDDING_DIM: usize = 32;

/// Global per-image appearance vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AppearanceEmbedding(Vec<f64>);

impl AppearanceEmbedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidConfig("embedding must have at least one component".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("embedding has non-finite components".into()));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim.max(1)])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// `(1 − t)·e1 + t·e2`.
pub fn interpolate_embedding(e1: &AppearanceEmbedding, e2: &AppearanceEmbedding, t: f64) -> Result<AppearanceEmbedding> {
    if e1.dim() != e2.dim() {
        return Err(Error::dims(e1.dim(), e2.dim()));
    }
    if !t.is_finite() {
        return Err(Error::InvalidConfig(format!("interpolation weight {t}")));
    }
    let values = e1.0.iter().zip(&e2.0).map(|(a, b)| (1.0 - t) * a + t * b).collect();
    AppearanceEmbedding::new(values)
}
