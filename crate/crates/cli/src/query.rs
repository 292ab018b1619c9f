//! Query-by-sketch shared by `sbsr retrieve` and the HTTP service.

use serde::{Deserialize, Serialize};

use sbsr::dataset::{preprocess, GrayImage};
use sbsr::retrieval::{rank_models, FeatureIndex};
use sbsr::train::SiameseModel;
use sbsr::{Domain, Result};

pub const MAX_K: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub model_id: String,
    pub distance: f64,
    pub view_image_refs: [String; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub results: Vec<QueryResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
}

/// Service path of view `k` (1 or 2) of a model.
pub fn view_ref(model_id: &str, k: u8) -> String {
    format!("/api/models/{model_id}/views/{k}")
}

/// The `k` models nearest to the sketch `image`, nearest first.
pub fn query_models(
    model: &SiameseModel,
    index: &FeatureIndex,
    image: &GrayImage,
    k: usize,
) -> Result<Vec<QueryResult>> {
    let feature = model.embed(Domain::Sketch, &preprocess(image)?)?;
    let ranked = rank_models("query", &feature, index);
    Ok(ranked
        .hits
        .into_iter()
        .take(k)
        .map(|h| QueryResult {
            view_image_refs: [view_ref(&h.target_id, 1), view_ref(&h.target_id, 2)],
            model_id: h.target_id,
            distance: h.distance,
        })
        .collect())
}
