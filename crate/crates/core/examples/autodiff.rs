//! Use the tape directly: a linear softmax classifier trained with
//! RMSprop on a toy two-class problem.

use remarnet::graph::{Graph, Group, ParamStore};
use remarnet::model::one_hot;
use remarnet::rng::Rng;
use remarnet::train::rmsprop_step;
use remarnet::Tensor;

fn main() -> remarnet::Result<()> {
    let mut rng = Rng::new(4);
    // Two Gaussian blobs in the plane.
    let labels: Vec<usize> = (0..64).map(|i| i % 2).collect();
    let x = Tensor::from_fn(&[64, 2], |i| {
        let centre = if labels[i / 2] == 0 { -1.0 } else { 1.0 };
        (centre + 0.5 * (rng.uniform() - 0.5)) as f32
    });
    let y = one_hot::<f32>(&labels, 2);

    let mut store = ParamStore::new();
    let w = store.add("w", Group::Fc, Tensor::from_fn(&[2, 2], |_| 0.1 * (rng.uniform() as f32 - 0.5)));
    let b = store.add("b", Group::Fc, Tensor::zeros(&[2]));
    let mut caches = vec![vec![0.0f32; 4], vec![0.0f32; 2]];

    for step in 0..=50 {
        let mut g = Graph::new();
        let input = g.input(x.clone());
        let (wn, bn) = (g.param(&store, w), g.param(&store, b));
        let logits = g.linear(input, wn, bn)?;
        let probs = g.softmax_rows(logits)?;
        let loss = g.cross_entropy(probs, &y)?;
        g.backward(loss, &mut store)?;
        if step % 10 == 0 {
            println!("step {step:>2}: loss {:.4}", g.value(loss).item());
        }
        for (id, cache) in [w, b].into_iter().zip(caches.iter_mut()) {
            rmsprop_step(store.get_mut(id), cache, 0.05, 0.9, 1e-8);
        }
    }
    Ok(())
}
