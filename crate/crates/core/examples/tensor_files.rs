//! Write named tensors to the little-endian TNS container and decode them
//! back.

use remarnet::data::{decode_tns, encode_tns, TensorMap};
use remarnet::Tensor;

fn main() -> remarnet::Result<()> {
    let mut map = TensorMap::new();
    map.insert("weights".into(), Tensor::from_fn(&[2, 3], |i| i as f32 * 0.5));
    map.insert("bias".into(), Tensor::new(&[3], vec![-1.0, 0.0, f32::INFINITY])?);

    let bytes = encode_tns(&map);
    println!("{} bytes, magic {:?}", bytes.len(), std::str::from_utf8(&bytes[..4]).unwrap());
    let back = decode_tns(&bytes)?;
    for (name, t) in &back {
        println!("{name}: shape {:?} values {:?}", t.shape(), t.data());
    }
    Ok(())
}
