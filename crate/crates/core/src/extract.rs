//! Toy-model extraction: probe transform, byte tokenization, forward pass,
//! span alignment and pooling for every instance and side.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::align::{
    byte_tokenize, pool_vectors, resolve_span, POOLING_LAST_TOKEN, POOLING_MEAN_OVERLAP,
};
use crate::corpus::{instance_id, WicInstance};
use crate::error::{Error, Result};
use crate::store::{RepStore, StoreMeta};
use crate::toy_model::ToyModel;
use crate::transforms::{build_probe, ProbeSetting, SettingKind, Side};

/// Pooled vectors `[layer_count][dim]` for one side of one instance.
pub fn pooled_layers(
    model: &ToyModel,
    instance: &WicInstance,
    side: Side,
    setting: &ProbeSetting,
) -> Result<Vec<Vec<f64>>> {
    let probe = build_probe(instance, side, setting)?;
    let tokens = byte_tokenize(&probe.text)?;
    let span = resolve_span(&tokens, &probe.target_span)?;
    let ids: Vec<u32> = tokens.iter().map(|t| t.token_id).collect();
    let states = model.forward_collect(&ids)?;
    states
        .layers
        .iter()
        .map(|layer| pool_vectors(layer, span.clone()))
        .collect()
}

pub fn pooling_rule(kind: SettingKind) -> &'static str {
    match kind {
        SettingKind::Prompt => POOLING_LAST_TOKEN,
        _ => POOLING_MEAN_OVERLAP,
    }
}

/// Runs the toy model over a split. Instances are processed in parallel;
/// the payload is assembled in corpus order.
pub fn extract_toy_store(
    model: &ToyModel,
    instances: &[WicInstance],
    split: &str,
    setting: &ProbeSetting,
) -> Result<RepStore> {
    let cfg = model.config();
    let layer_count = cfg.n_layers + 1;
    let dim = cfg.d_model;

    let chunks = instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| {
            let mut out = Vec::with_capacity(2 * layer_count * dim);
            for side in [Side::A, Side::B] {
                let layers = pooled_layers(model, inst, side, setting).map_err(|e| {
                    let context = format!(
                        "instance {} ({}, side {side:?})",
                        instance_id(split, i),
                        setting.kind
                    );
                    match e {
                        Error::Alignment(m) => Error::Alignment(format!("{context}: {m}")),
                        Error::Capacity(m) => Error::Capacity(format!("{context}: {m}")),
                        Error::Validation(m) => Error::Validation(format!("{context}: {m}")),
                        other => other,
                    }
                })?;
                out.extend(layers.iter().flatten().map(|&v| v as f32));
            }
            Ok(out)
        })
        .collect::<Result<Vec<Vec<f32>>>>()?;

    let mut extra = BTreeMap::new();
    if setting.kind == SettingKind::Prompt {
        extra.insert(
            "prompt_template".to_string(),
            serde_json::Value::from(setting.prompt_template.as_str()),
        );
    }
    extra.insert("tokenizer".to_string(), serde_json::Value::from("byte"));

    let meta = StoreMeta {
        model_name: cfg.describe(),
        setting: setting.kind,
        split: split.to_string(),
        pooling: pooling_rule(setting.kind).to_string(),
        layer_count,
        dim,
        instance_ids: (0..instances.len())
            .map(|i| instance_id(split, i))
            .collect(),
        extra,
    };
    RepStore::new(meta, chunks.concat())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Label, Pos};
    use crate::toy_model::ToyConfig;

    fn model() -> ToyModel {
        ToyModel::init(ToyConfig {
            d_model: 16,
            n_layers: 2,
            n_heads: 2,
            seed: 3,
            ..ToyConfig::default()
        })
        .unwrap()
    }

    fn bank() -> WicInstance {
        WicInstance::new(
            "bank",
            Pos::Noun,
            1,
            1,
            "the bank of the river",
            "the bank to save money",
            Some(Label::Different),
        )
        .unwrap()
    }

    #[test]
    fn store_shape_and_meta() {
        let m = model();
        let store = extract_toy_store(
            &m,
            &[bank(), bank()],
            "dev",
            &ProbeSetting::new(SettingKind::Repeat),
        )
        .unwrap();
        assert_eq!(
            (store.n_instances(), store.layer_count(), store.dim()),
            (2, 3, 16)
        );
        assert_eq!(store.meta().pooling, "mean-overlap");
        assert_eq!(store.meta().instance_ids, vec!["dev-0", "dev-1"]);
        assert_eq!(store.vector(0, Side::A, 2), store.vector(1, Side::A, 2));
    }

    #[test]
    fn prompt_records_last_token_pooling() {
        let store = extract_toy_store(
            &model(),
            &[bank()],
            "dev",
            &ProbeSetting::new(SettingKind::Prompt),
        )
        .unwrap();
        assert_eq!(store.meta().pooling, "last-token");
        assert!(store.meta().extra.contains_key("prompt_template"));
    }

    #[test]
    fn base_pooling_matches_manual_mean() {
        let m = model();
        let layers =
            pooled_layers(&m, &bank(), Side::A, &ProbeSetting::new(SettingKind::Base)).unwrap();
        let ids: Vec<u32> = "the bank of the river".bytes().map(u32::from).collect();
        let states = m.forward_collect(&ids).unwrap();
        for (l, pooled) in layers.iter().enumerate() {
            for (d, &p) in pooled.iter().enumerate() {
                let mean = (4..8)
                    .map(|t| f64::from(states.layers[l][t][d]))
                    .sum::<f64>()
                    / 4.0;
                assert!((p - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn capacity_error_names_instance() {
        let small = ToyModel::init(ToyConfig {
            max_seq: 8,
            d_model: 8,
            n_heads: 2,
            n_layers: 1,
            ..ToyConfig::default()
        })
        .unwrap();
        let err = extract_toy_store(
            &small,
            &[bank()],
            "test",
            &ProbeSetting::new(SettingKind::Base),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Capacity(_)));
        assert!(err.to_string().contains("test-0"), "{err}");
    }
}
