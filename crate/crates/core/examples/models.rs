//! Builds the three architectures at their default sizes and runs one
//! forward pass on a 24-channel, 4 s epoch.

use fingermi::model::{init_params, model_spec, ModelConfig, ModelKind};
use fingermi::{Result, Tensor};

fn main() -> Result<()> {
    let x = Tensor::from_fn([1, 1, 24, 1000], |i| ((i % 97) as f64 / 48.0) - 1.0);
    for kind in ModelKind::ALL {
        let spec = model_spec(kind, &ModelConfig::defaults(kind))?;
        let net = init_params(&spec, 0)?;
        println!("{} ({} parameters)", kind.name(), net.param_count());
        for (layer, shape) in spec.layers.iter().zip(spec.trace_shapes()?) {
            println!("  {:<22} -> {}x{}x{}", layer.kind.label(), shape.c, shape.h, shape.w);
        }
        println!("  logits {:?}", net.predict(&x)?.data());
    }
    Ok(())
}
