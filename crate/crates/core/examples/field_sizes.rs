//! Parameter accounting for the baseline and multi-space presets.

use mirrorfield::fields::{BackboneConfig, FieldConfig, FieldNetwork};
use mirrorfield::autodiff::ParamStore;
use mirrorfield::training::ModelConfig;
use rand::SeedableRng;

fn main() -> anyhow::Result<()> {
    println!("{:10} {:>9} {:>7} {:>7} {:>6} {:>9}", "preset", "backbone", "head", "decoder", "gate", "total");
    for name in ["baseline", "ms-avg", "ms-s", "ms-m", "ms-b"] {
        let model = ModelConfig::preset(name).expect("known preset");
        let mut store = ParamStore::<f64>::new();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let cfg = FieldConfig::new(BackboneConfig::full_size(), model.head);
        let net = FieldNetwork::new(&mut store, "net", cfg, &mut rng)?;
        let b = net.breakdown();
        println!(
            "{name:10} {:>9} {:>7} {:>7} {:>6} {:>9}",
            b.backbone,
            b.head_output,
            b.decoder,
            b.gate,
            b.total()
        );
    }
    Ok(())
}
