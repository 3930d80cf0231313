use serde::{Deserialize, Serialize};
use std::fmt;

use super::Network;
use crate::error::{Error, Result};

/// Size of the structure a merge decision is made about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Layer,
    Neuron,
    Weight,
}

impl Granularity {
    pub fn finer(self) -> Option<Granularity> {
        match self {
            Granularity::Layer => Some(Granularity::Neuron),
            Granularity::Neuron => Some(Granularity::Weight),
            Granularity::Weight => None,
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Granularity::Layer => "layer",
            Granularity::Neuron => "neuron",
            Granularity::Weight => "weight",
        })
    }
}

impl std::str::FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "layer" => Ok(Granularity::Layer),
            "neuron" => Ok(Granularity::Neuron),
            "weight" => Ok(Granularity::Weight),
            other => Err(Error::Config(format!(
                "granularity must be layer, neuron or weight, got {other:?}"
            ))),
        }
    }
}

/// Names a layer, a neuron (weight row plus bias) or a single parameter.
/// At weight granularity index `in_dim` is the neuron's bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StructureAddress {
    pub layer: usize,
    pub neuron: Option<usize>,
    pub weight: Option<usize>,
}

impl StructureAddress {
    pub fn layer(layer: usize) -> Self {
        Self {
            layer,
            neuron: None,
            weight: None,
        }
    }

    pub fn neuron(layer: usize, neuron: usize) -> Self {
        Self {
            layer,
            neuron: Some(neuron),
            weight: None,
        }
    }

    pub fn weight(layer: usize, neuron: usize, weight: usize) -> Self {
        Self {
            layer,
            neuron: Some(neuron),
            weight: Some(weight),
        }
    }

    pub fn granularity(&self) -> Granularity {
        match (self.neuron, self.weight) {
            (None, _) => Granularity::Layer,
            (Some(_), None) => Granularity::Neuron,
            (Some(_), Some(_)) => Granularity::Weight,
        }
    }

    pub fn validate(&self, net: &Network) -> Result<()> {
        let layer = net.layers().get(self.layer).ok_or_else(|| {
            Error::Address(format!(
                "layer {} out of range (network has {})",
                self.layer,
                net.num_layers()
            ))
        })?;
        match (self.neuron, self.weight) {
            (None, Some(_)) => Err(Error::Address("weight index without neuron index".into())),
            (Some(n), _) if n >= layer.out_dim() => Err(Error::Address(format!(
                "neuron {n} out of range in layer {} (width {})",
                self.layer,
                layer.out_dim()
            ))),
            (Some(_), Some(w)) if w > layer.in_dim() => Err(Error::Address(format!(
                "weight {w} out of range in layer {} (max {} = bias)",
                self.layer,
                layer.in_dim()
            ))),
            _ => Ok(()),
        }
    }

    /// Number of scalars in the block at this address.
    pub fn block_len(&self, net: &Network) -> Result<usize> {
        self.validate(net)?;
        let layer = &net.layers()[self.layer];
        Ok(match self.granularity() {
            Granularity::Layer => layer.num_params(),
            Granularity::Neuron => layer.in_dim() + 1,
            Granularity::Weight => 1,
        })
    }
}

impl fmt::Display for StructureAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "layer {}", self.layer)?;
        if let Some(n) = self.neuron {
            write!(f, " neuron {n}")?;
        }
        if let Some(w) = self.weight {
            write!(f, " weight {w}")?;
        }
        Ok(())
    }
}

/// Flat parameter block. Layout: a layer is its weights row-major followed by
/// its biases; a neuron is its weight row followed by its bias; a weight is
/// one scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock(pub Vec<f64>);

impl ParamBlock {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Network {
    pub fn get_structure(&self, addr: StructureAddress) -> Result<ParamBlock> {
        addr.validate(self)?;
        let layer = &self.layers()[addr.layer];
        let values = match (addr.neuron, addr.weight) {
            (None, _) => {
                let mut v = Vec::with_capacity(layer.num_params());
                v.extend_from_slice(layer.weights());
                v.extend_from_slice(layer.biases());
                v
            }
            (Some(n), None) => {
                let mut v = Vec::with_capacity(layer.in_dim() + 1);
                v.extend_from_slice(layer.row(n));
                v.push(layer.biases()[n]);
                v
            }
            (Some(n), Some(w)) => vec![weight_ref(layer, n, w)],
        };
        Ok(ParamBlock(values))
    }

    /// Writes `block` at `addr`; every other parameter is left untouched.
    pub fn set_structure(&mut self, addr: StructureAddress, block: &ParamBlock) -> Result<()> {
        let expected = addr.block_len(self)?;
        if block.len() != expected {
            return Err(Error::Shape(format!(
                "block for {addr} needs {expected} values, got {}",
                block.len()
            )));
        }
        if block.0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite value in block for {addr}"
            )));
        }
        let layer = &mut self.layers_mut()[addr.layer];
        match (addr.neuron, addr.weight) {
            (None, _) => {
                let nw = layer.weights().len();
                layer.weights_mut().copy_from_slice(&block.0[..nw]);
                layer.biases_mut().copy_from_slice(&block.0[nw..]);
            }
            (Some(n), None) => {
                let in_dim = layer.in_dim();
                layer.row_mut(n).copy_from_slice(&block.0[..in_dim]);
                layer.biases_mut()[n] = block.0[in_dim];
            }
            (Some(n), Some(w)) => {
                if w == layer.in_dim() {
                    layer.biases_mut()[n] = block.0[0];
                } else {
                    layer.row_mut(n)[w] = block.0[0];
                }
            }
        }
        Ok(())
    }

    /// Copies the block at `addr` from `source` into `self`.
    pub fn transplant(&mut self, addr: StructureAddress, source: &Network) -> Result<()> {
        let block = source.get_structure(addr)?;
        self.set_structure(addr, &block)
    }
}

fn weight_ref(layer: &super::DenseLayer, n: usize, w: usize) -> f64 {
    if w == layer.in_dim() {
        layer.biases()[n]
    } else {
        layer.row(n)[w]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bits(net: &Network) -> Vec<u64> {
        net.parameters().iter().map(|v| v.to_bits()).collect()
    }

    #[test]
    fn layer_transplant_is_local() {
        let mut m = Network::random(&[6, 5, 4, 3], 1).unwrap();
        let a = Network::random(&[6, 5, 4, 3], 2).unwrap();
        let original = m.clone();
        m.transplant(StructureAddress::layer(0), &a).unwrap();
        assert_eq!(m.layers()[0], a.layers()[0]);
        assert_eq!(m.layers()[1..], original.layers()[1..]);
    }

    #[test]
    fn bias_is_addressable_as_last_weight() {
        let mut net = Network::random(&[4, 5, 3], 9).unwrap();
        net.layers_mut()[1].biases_mut()[2] = 0.125;
        let in_dim = net.layers()[1].in_dim();
        let addr = StructureAddress::weight(1, 2, in_dim);
        assert_eq!(net.get_structure(addr).unwrap().0, vec![0.125]);
        net.set_structure(addr, &ParamBlock(vec![-4.5])).unwrap();
        assert_eq!(net.layers()[1].biases()[2], -4.5);
    }

    #[test]
    fn invalid_addresses_are_rejected() {
        let net = Network::zeros(&[4, 3, 2]).unwrap();
        assert!(net.get_structure(StructureAddress::layer(2)).is_err());
        assert!(net.get_structure(StructureAddress::neuron(0, 3)).is_err());
        assert!(net
            .get_structure(StructureAddress::weight(0, 0, 5))
            .is_err());
        assert!(net.get_structure(StructureAddress::weight(0, 0, 4)).is_ok());
        let bad = StructureAddress {
            layer: 0,
            neuron: None,
            weight: Some(0),
        };
        assert!(net.get_structure(bad).is_err());
    }

    #[test]
    fn wrong_block_length_is_rejected() {
        let mut net = Network::zeros(&[4, 3, 2]).unwrap();
        let err = net.set_structure(StructureAddress::neuron(0, 0), &ParamBlock(vec![0.0; 4]));
        assert!(matches!(err, Err(Error::Shape(_))));
    }

    fn arb_address(arch: Vec<usize>) -> impl Strategy<Value = StructureAddress> {
        let n_layers = arch.len() - 1;
        (
            0..n_layers,
            0..3usize,
            any::<prop::sample::Index>(),
            any::<prop::sample::Index>(),
        )
            .prop_map(move |(l, g, ni, wi)| {
                let out = arch[l + 1];
                let inp = arch[l];
                match g {
                    0 => StructureAddress::layer(l),
                    1 => StructureAddress::neuron(l, ni.index(out)),
                    _ => StructureAddress::weight(l, ni.index(out), wi.index(inp + 1)),
                }
            })
    }

    proptest! {
        #[test]
        fn get_set_round_trip(seed in 0u64..1000, addr in arb_address(vec![5, 4, 3])) {
            let mut net = Network::random(&[5, 4, 3], seed).unwrap();
            let before = bits(&net);
            let block = net.get_structure(addr).unwrap();
            net.set_structure(addr, &block).unwrap();
            prop_assert_eq!(before, bits(&net));
        }

        #[test]
        fn transplant_touches_only_the_block(seed in 0u64..1000, addr in arb_address(vec![5, 4, 3])) {
            let mut m = Network::random(&[5, 4, 3], seed).unwrap();
            let src = Network::random(&[5, 4, 3], seed + 10_000).unwrap();
            let original = m.clone();
            m.transplant(addr, &src).unwrap();
            prop_assert_eq!(m.get_structure(addr).unwrap(), src.get_structure(addr).unwrap());
            // Restoring the block must give back the original bit pattern.
            m.set_structure(addr, &original.get_structure(addr).unwrap()).unwrap();
            prop_assert_eq!(bits(&m), bits(&original));
        }
    }
}
