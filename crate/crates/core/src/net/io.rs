//! `cogram-net-v1` model files.

use serde::{Deserialize, Serialize};
use std::path::Path;

use super::{Activation, DenseLayer, Network};
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "cogram-net-v1";

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    input_dim: usize,
    num_classes: usize,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    activation: Activation,
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
}

impl Network {
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            input_dim: self.input_dim(),
            num_classes: self.num_classes(),
            layers: self
                .layers()
                .iter()
                .map(|l| LayerFile {
                    activation: l.activation(),
                    weights: l.rows().map(<[f64]>::to_vec).collect(),
                    biases: l.biases().to_vec(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| {
            Error::format(
                format!("line {} column {}", e.line(), e.column()),
                e.to_string(),
            )
        })?;
        if file.format != MODEL_FORMAT {
            return Err(Error::format(
                "format",
                format!(
                    "unsupported model format {:?}, expected {MODEL_FORMAT:?}",
                    file.format
                ),
            ));
        }
        let mut layers = Vec::with_capacity(file.layers.len());
        for (k, l) in file.layers.into_iter().enumerate() {
            let layer = DenseLayer::from_rows(&l.weights, l.biases, l.activation)
                .map_err(|e| Error::format(format!("layer {k}"), e.to_string()))?;
            layers.push(layer);
        }
        let net = Network::new(layers).map_err(|e| Error::format("layers", e.to_string()))?;
        if net.input_dim() != file.input_dim {
            return Err(Error::format(
                "input_dim",
                format!(
                    "declared {} but layer 0 takes {}",
                    file.input_dim,
                    net.input_dim()
                ),
            ));
        }
        if net.num_classes() != file.num_classes {
            return Err(Error::format(
                "num_classes",
                format!(
                    "declared {} but the last layer has {} outputs",
                    file.num_classes,
                    net.num_classes()
                ),
            ));
        }
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Format { location, message } => Error::Format {
                location: format!("{}: {location}", path.display()),
                message,
            },
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn json_round_trip_is_bit_exact(seed in any::<u64>(), hidden in 1usize..9) {
            let mut net = Network::random(&[5, hidden, 3], seed).unwrap();
            // Exercise awkward magnitudes too.
            net.layers_mut()[1].biases_mut()[0] = 1e-300 * (seed % 7) as f64;
            net.layers_mut()[0].weights_mut()[0] = 0.1 + 0.2;
            let back = Network::from_json(&net.to_json()).unwrap();
            let a: Vec<u64> = net.parameters().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = back.parameters().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
            prop_assert_eq!(net, back);
        }
    }

    #[test]
    fn mismatched_row_count_names_the_layer() {
        let text = r#"{"format":"cogram-net-v1","input_dim":2,"num_classes":2,"layers":[
            {"activation":"relu","weights":[[1,2],[3,4]],"biases":[0,0]},
            {"activation":"identity","weights":[[1,2],[3,4]],"biases":[0,0,0]}]}"#;
        let err = Network::from_json(text).unwrap_err().to_string();
        assert!(err.contains("layer 1"), "{err}");
    }

    #[test]
    fn other_format_versions_are_rejected() {
        let net = Network::zeros(&[2, 2]).unwrap();
        let text = net.to_json().replace(MODEL_FORMAT, "cogram-net-v0");
        let err = Network::from_json(&text).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
        assert!(err.to_string().contains("cogram-net-v0"));
    }

    #[test]
    fn declared_dims_must_match_layers() {
        let net = Network::zeros(&[2, 3]).unwrap();
        let text = net
            .to_json()
            .replace("\"num_classes\": 3", "\"num_classes\": 4");
        assert!(Network::from_json(&text).is_err());
    }

    #[test]
    fn garbage_is_a_format_error() {
        assert!(matches!(
            Network::from_json("{not json"),
            Err(Error::Format { .. })
        ));
    }
}
