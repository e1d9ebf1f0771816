use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sweepkit::simscene::{CompensationStudy, ScenarioScript};

/// Scenario files shipped with the binary, addressed as `@name`.
pub const BUNDLED: &[(&str, &str)] = &[
    ("baseline", include_str!("../scenarios/baseline.json")),
    ("depth-noise", include_str!("../scenarios/depth-noise.json")),
    ("vee", include_str!("../scenarios/vee.json")),
    ("crease", include_str!("../scenarios/crease.json")),
    ("occluded", include_str!("../scenarios/occluded.json")),
    ("gradient", include_str!("../scenarios/gradient.json")),
    ("shift", include_str!("../scenarios/shift.json")),
    (
        "shift-uncompensated",
        include_str!("../scenarios/shift-uncompensated.json"),
    ),
    (
        "compensation",
        include_str!("../scenarios/compensation.json"),
    ),
    (
        "translation-set",
        include_str!("../scenarios/translation-set.json"),
    ),
    (
        "rotation-set",
        include_str!("../scenarios/rotation-set.json"),
    ),
];

/// Top-level experiment file: exactly one of the two kinds.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum Experiment {
    Sweep(ScenarioScript),
    Compensation(CompensationStudy),
}

fn read_source(source: &str) -> Result<Value> {
    let text = match source.strip_prefix('@') {
        Some(name) => match BUNDLED.iter().find(|(n, _)| *n == name) {
            Some((_, text)) => text.to_string(),
            None => {
                let names: Vec<_> = BUNDLED.iter().map(|(n, _)| *n).collect();
                bail!(
                    "no bundled scenario named {name:?}; available: {}",
                    names.join(", ")
                )
            }
        },
        None => std::fs::read_to_string(source).with_context(|| format!("reading {source}"))?,
    };
    serde_json::from_str(&text).with_context(|| format!("parsing {source}"))
}

/// Loads an experiment from a file or `@bundled` name, then applies the seed
/// and `key=value` overrides to the inner payload.
pub fn load_experiment(source: &str, seed: Option<u64>, sets: &[String]) -> Result<Experiment> {
    let Value::Object(outer) = read_source(source)? else {
        bail!("{source}: expected an object with a \"sweep\" or \"compensation\" key");
    };
    if outer.len() != 1 {
        bail!("{source}: expected exactly one of \"sweep\" or \"compensation\"");
    }
    let (kind, inner) = outer.into_iter().next().expect("one entry");
    match kind.as_str() {
        "sweep" => Ok(Experiment::Sweep(configure(inner, seed, sets)?)),
        "compensation" => Ok(Experiment::Compensation(configure(inner, seed, sets)?)),
        other => bail!("{source}: unknown experiment kind {other:?}"),
    }
}

/// Deserializes with defaults filled in, applies overrides on the complete
/// document and deserializes again, so only existing keys can be set.
pub fn configure<T: DeserializeOwned + Serialize>(
    mut inner: Value,
    seed: Option<u64>,
    sets: &[String],
) -> Result<T> {
    if let (Some(seed), Value::Object(map)) = (seed, &mut inner) {
        map.insert("seed".into(), seed.into());
    }
    let typed: T = serde_json::from_value(inner).map_err(|e| {
        if e.to_string().contains("missing field `seed`") {
            anyhow::anyhow!(
                "the experiment has no seed; add \"seed\" or pass --seed / SWEEPKIT_SEED"
            )
        } else {
            anyhow::Error::new(e).context("invalid experiment")
        }
    })?;
    if sets.is_empty() {
        return Ok(typed);
    }
    let mut doc = serde_json::to_value(&typed)?;
    for set in sets {
        apply_override(&mut doc, set)?;
    }
    serde_json::from_value(doc).context("invalid value after overrides")
}

/// Parameters with defaults that are all optional in their JSON form.
pub fn parameters<T: DeserializeOwned + Serialize + Default>(
    file: Option<&Path>,
    sets: &[String],
) -> Result<T> {
    let base = match file {
        Some(path) => serde_json::from_str(
            &std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?,
        )
        .with_context(|| format!("parsing {}", path.display()))?,
        None => serde_json::to_value(T::default())?,
    };
    let mut doc = serde_json::to_value(serde_json::from_value::<T>(base)?)?;
    for set in sets {
        apply_override(&mut doc, set)?;
    }
    serde_json::from_value(doc).context("invalid value after overrides")
}

/// `a.b.0.c=value`; the value is parsed as JSON, falling back to a string.
pub fn apply_override(doc: &mut Value, set: &str) -> Result<()> {
    let Some((path, raw)) = set.split_once('=') else {
        bail!("override {set:?} is not of the form key=value");
    };
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    for key in path.split('.') {
        node = match node {
            Value::Object(map) => map.get_mut(key),
            Value::Array(items) => key.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        }
        .with_context(|| format!("override {set:?}: no key {key:?}"))?;
    }
    *node = value;
    Ok(())
}
