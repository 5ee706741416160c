//! Vision transformer checkpoints with parameter counts and output widths.

use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelInfo {
    pub id: &'static str,
    pub name: &'static str,
    /// Millions of parameters.
    pub params_m: f64,
    pub dim: usize,
    pub training: &'static str,
    pub fine_tuned: bool,
}

const fn model(
    id: &'static str,
    name: &'static str,
    params_m: f64,
    dim: usize,
    training: &'static str,
    fine_tuned: bool,
) -> ModelInfo {
    ModelInfo { id, name, params_m, dim, training, fine_tuned }
}

pub const MODELS: &[ModelInfo] = &[
    model("vit_t", "ViT-T", 5.7, 192, "standard", true),
    model("vit_s", "ViT-S", 22.1, 384, "standard", true),
    model("vit_b", "ViT-B", 86.6, 768, "standard", true),
    model("vit_l", "ViT-L", 304.3, 1024, "standard", true),
    model("vit_t_in21k", "ViT-T", 5.7, 192, "standard", false),
    model("vit_s_in21k", "ViT-S", 22.1, 384, "standard", false),
    model("vit_b_in21k", "ViT-B", 86.6, 768, "standard", false),
    model("vit_l_in21k", "ViT-L", 304.3, 1024, "standard", false),
    model("clip_vit_b", "ViT-B", 86.6, 512, "clip", false),
    model("clip_vit_l", "ViT-L", 304.3, 768, "clip", false),
];

pub fn lookup(id: &str) -> Option<&'static ModelInfo> {
    MODELS.iter().find(|m| m.id == id)
}

/// Parameter counts keyed by model id, as consumed by
/// [`improvement_table`](super::report::improvement_table).
pub fn param_counts() -> BTreeMap<String, f64> {
    MODELS.iter().map(|m| (m.id.to_string(), m.params_m)).collect()
}
