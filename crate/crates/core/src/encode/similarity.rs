use std::collections::HashMap;
use std::path::Path;

use crate::container::MatrixContainer;
use crate::error::{Error, Result};
use crate::labels::LabelSet;

/// `u·v / (|u| |v|)`, clamped to [-1, 1].
pub fn cosine_similarity(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!(
            "dimension mismatch: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    let (mut dot, mut uu, mut vv) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in u.iter().zip(v) {
        let (a, b) = (a as f64, b as f64);
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Err(Error::InvalidArgument("zero-norm vector".into()));
    }
    Ok((dot / (uu.sqrt() * vv.sqrt())).clamp(-1.0, 1.0))
}

/// Named embedding vectors of uniform dimension.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    ids: Vec<String>,
    vectors: MatrixContainer,
    index: HashMap<String, usize>,
}

impl EmbeddingSet {
    pub fn new(ids: Vec<String>, vectors: MatrixContainer) -> Result<Self> {
        if ids.len() != vectors.n_rows() {
            return Err(Error::Shape(format!(
                "{} ids for {} embedding rows",
                ids.len(),
                vectors.n_rows()
            )));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate embedding id {id:?}")));
            }
            if vectors.row(i).iter().all(|&x| x == 0.0) {
                return Err(Error::InvalidArgument(format!("zero-norm embedding for {id:?}")));
            }
        }
        Ok(Self { ids, vectors, index })
    }

    /// Vectors from a container, ids one per line from a text file.
    pub fn load(vectors: impl AsRef<Path>, ids: impl AsRef<Path>) -> Result<Self> {
        let ids_path = ids.as_ref();
        let text = std::fs::read_to_string(ids_path).map_err(|e| Error::io(ids_path, e))?;
        let ids = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect();
        Self::new(ids, MatrixContainer::read(vectors)?)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn dim(&self) -> usize {
        self.vectors.n_cols()
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.index.get(id).map(|&i| self.vectors.row(i))
    }
}

/// Stimuli (rows, in image-set order) × labels matrix of cosine similarities
/// between each image embedding and each label's text embedding.
pub fn feature_similarity_annotate(
    image_embeddings: &EmbeddingSet,
    text_embeddings: &EmbeddingSet,
    labels: &LabelSet,
) -> Result<MatrixContainer> {
    if image_embeddings.dim() != text_embeddings.dim() {
        return Err(Error::Shape(format!(
            "image embeddings have dimension {}, text embeddings {}",
            image_embeddings.dim(),
            text_embeddings.dim()
        )));
    }
    let text: Vec<&[f32]> = labels
        .iter()
        .map(|l| {
            text_embeddings
                .get(l)
                .ok_or_else(|| Error::MissingEmbedding(l.to_string()))
        })
        .collect::<Result<_>>()?;
    let mut values = Vec::with_capacity(image_embeddings.ids().len() * labels.len());
    for id in image_embeddings.ids() {
        let img = image_embeddings.get(id).expect("own id");
        for t in &text {
            values.push(cosine_similarity(img, t)? as f32);
        }
    }
    MatrixContainer::new(image_embeddings.ids().len(), labels.len(), values)
}
