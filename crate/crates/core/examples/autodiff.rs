//! Records a tiny convolutional computation on a tape, differentiates it and
//! checks the result against central differences.

use fingermi::autodiff::{gradcheck, Padding2d, Tape};
use fingermi::{Result, Tensor};

fn main() -> Result<()> {
    let x = Tensor::from_fn([1, 1, 2, 6], |i| (i as f64 * 0.7).sin());
    let k = Tensor::new([2, 1, 1, 3], vec![0.5, -1.0, 0.25, 1.0, 0.0, -0.5])?;

    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let kv = tape.param(k.clone());
    let y = tape.conv2d(xv, kv, None, (1, 1), Padding2d::same(1, 3))?;
    let y = tape.elu(y)?;
    let loss = tape.sum(y);
    let grads = tape.backward(loss)?;
    println!("loss      {:.6}", tape.value(loss).item());
    println!("dloss/dk  {:?}", grads.get(kv).unwrap().data());

    let err = gradcheck(
        |t, v| {
            let y = t.conv2d(v[0], v[1], None, (1, 1), Padding2d::same(1, 3))?;
            let y = t.elu(y)?;
            Ok(t.sum(y))
        },
        &[x, k],
        1e-5,
    )?;
    println!("worst relative error vs finite differences: {err:.2e}");
    Ok(())
}
