use super::{LayerSpec, Padding};
use crate::error::{invalid, Result};

pub const KERNELS: [usize; 4] = [5, 5, 3, 3];

/// Shape knobs of one region network.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchConfig {
    pub input_side: usize,
    pub region_len: usize,
    pub num_filters: usize,
    pub fc_width: usize,
    pub dropout: f64,
    pub padding: Padding,
}

impl ArchConfig {
    pub fn new(input_side: usize, region_len: usize, num_filters: usize) -> Self {
        Self { input_side, region_len, num_filters, fc_width: 1024, dropout: 0.5, padding: Padding::Valid }
    }

    /// Spatial side after the four convolutions.
    pub fn final_side(&self) -> Option<usize> {
        KERNELS.iter().try_fold(self.input_side, |side, &k| {
            let pad = self.padding.amount(k);
            (side + 2 * pad >= k).then(|| side + 2 * pad - k + 1)
        })
    }

    pub fn flatten_len(&self) -> Option<usize> {
        self.final_side().map(|s| s * s * self.num_filters)
    }
}

/// Four conv/normalization/ReLU stages, then fc, dropout, fc(L) and softmax.
pub fn build_deepmusic_network(cfg: &ArchConfig) -> Result<Vec<LayerSpec>> {
    if cfg.final_side().is_none_or(|s| s == 0) {
        return invalid(format!(
            "a {0}x{0} input is too small for 5,5,3,3 convolutions (needs at least 13)",
            cfg.input_side
        ));
    }
    if cfg.region_len == 0 || cfg.num_filters == 0 || cfg.fc_width == 0 {
        return invalid("region length, filter count and fc width must be positive");
    }
    let mut specs = Vec::with_capacity(16);
    for kernel in KERNELS {
        specs.push(LayerSpec::Conv { kernel, filters: cfg.num_filters, padding: cfg.padding });
        specs.push(LayerSpec::BatchNorm);
        specs.push(LayerSpec::Relu);
    }
    specs.push(LayerSpec::FullyConnected { units: cfg.fc_width });
    specs.push(LayerSpec::Dropout { p: cfg.dropout });
    specs.push(LayerSpec::FullyConnected { units: cfg.region_len });
    specs.push(LayerSpec::Softmax);
    for s in &specs {
        s.validate()?;
    }
    Ok(specs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Network;

    #[test]
    fn sixteen_element_shapes() {
        let cfg = ArchConfig::new(16, 512, 256);
        assert_eq!(cfg.final_side(), Some(4));
        assert_eq!(cfg.flatten_len(), Some(4096));
        let specs = build_deepmusic_network(&ArchConfig { fc_width: 8, num_filters: 4, ..cfg }).unwrap();
        assert_eq!(specs.len(), 16);
        let net: Network<f32> = Network::new([16, 16, 3], &specs, 0).unwrap();
        assert_eq!(net.output_shape().unwrap(), [1, 1, 512]);
        let Some(crate::nn::Layer::FullyConnected { fan_in, .. }) = net.layers.get(12) else { panic!() };
        assert_eq!(*fan_in, 4 * 4 * 4);
    }

    #[test]
    fn thirteen_is_the_minimum() {
        assert_eq!(ArchConfig::new(13, 4, 2).final_side(), Some(1));
        assert!(build_deepmusic_network(&ArchConfig::new(13, 4, 2)).is_ok());
        assert!(build_deepmusic_network(&ArchConfig::new(12, 4, 2)).is_err());
    }

    #[test]
    fn same_padding_keeps_side() {
        let cfg = ArchConfig { padding: Padding::Same, ..ArchConfig::new(4, 4, 2) };
        assert_eq!(cfg.final_side(), Some(4));
        assert!(build_deepmusic_network(&cfg).is_ok());
    }
}
