use serde::{Deserialize, Serialize};

use super::{build_model, CompressionRatio, Family, Model, ModelConfig};
use crate::channel_data::Dims;
use crate::error::{invalid, Result};
use crate::nn::{Parameters, Scalar};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentCount {
    pub name: String,
    pub count: u64,
}

/// Raw scalar parameter counts per component.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterCount {
    pub components: Vec<ComponentCount>,
    pub total: u64,
}

impl ParameterCount {
    pub fn get(&self, name: &str) -> Option<u64> {
        self.components.iter().find(|c| c.name == name).map(|c| c.count)
    }
}

/// Counts every named model. Shared-stem decoders are split into a
/// `<name>.shared` component and one `<name>.task<t>` component per task.
pub fn count_parameters<T: Scalar>(models: &[(&str, &Model<T>)]) -> ParameterCount {
    let mut components = Vec::new();
    for (name, model) in models {
        match model {
            Model::SharedStemDecoder(d) => {
                components.push(ComponentCount {
                    name: format!("{name}.shared"),
                    count: d.trunk.num_params() as u64,
                });
                for (t, stem) in d.stems.iter().enumerate() {
                    components.push(ComponentCount {
                        name: format!("{name}.task{t}"),
                        count: stem.num_params() as u64,
                    });
                }
            }
            other => components.push(ComponentCount {
                name: name.to_string(),
                count: other.num_params() as u64,
            }),
        }
    }
    let total = components.iter().map(|c| c.count).sum();
    ParameterCount { components, total }
}

/// Parameter totals of the three training regimes for one task set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeCounts {
    pub independent: ParameterCount,
    pub joint: ParameterCount,
    pub hard_sharing: ParameterCount,
}

impl RegimeCounts {
    /// Fractional reduction of `count` relative to the independent total.
    pub fn reduction(&self, count: &ParameterCount) -> f64 {
        1.0 - count.total as f64 / self.independent.total as f64
    }
}

/// Builds the models each regime needs for tasks with the given encoder
/// families and counts them:
///
/// * independent: one encoder and one same-family decoder per task;
/// * joint: one encoder per task and a single STNet-style decoder;
/// * hard sharing: one encoder per task and a shared-stem decoder.
pub fn regime_parameter_counts(
    families: &[Family],
    ratio: CompressionRatio,
    dims: &Dims,
) -> Result<RegimeCounts> {
    if families.is_empty() {
        return invalid("need at least one task");
    }
    let encoders: Vec<Model<f32>> = families
        .iter()
        .map(|&f| build_model(&ModelConfig::encoder(f, ratio, dims), 0))
        .collect::<Result<_>>()?;
    let names: Vec<String> = (0..families.len()).map(|t| format!("encoder{t}")).collect();

    let plain_decoders: Vec<Model<f32>> = families
        .iter()
        .map(|&f| build_model(&ModelConfig::decoder(f, ratio, dims), 0))
        .collect::<Result<_>>()?;
    let dec_names: Vec<String> = (0..families.len()).map(|t| format!("decoder{t}")).collect();
    let mut independent: Vec<(&str, &Model<f32>)> = Vec::new();
    for t in 0..families.len() {
        independent.push((&names[t], &encoders[t]));
        independent.push((&dec_names[t], &plain_decoders[t]));
    }

    let joint_decoder = build_model(&ModelConfig::decoder(Family::StNet, ratio, dims), 0)?;
    let mut joint: Vec<(&str, &Model<f32>)> = names.iter().map(String::as_str).zip(&encoders).collect();
    joint.push(("decoder", &joint_decoder));

    let shared = build_model(&ModelConfig::shared_stem_decoder(ratio, dims, families.len()), 0)?;
    let mut hard: Vec<(&str, &Model<f32>)> = names.iter().map(String::as_str).zip(&encoders).collect();
    hard.push(("decoder", &shared));

    Ok(RegimeCounts {
        independent: count_parameters(&independent),
        joint: count_parameters(&joint),
        hard_sharing: count_parameters(&hard),
    })
}
