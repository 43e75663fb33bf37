//! Generate the synthetic template-plus-noise dataset, write it as a TNS
//! file and read it back.
//!
//! ```text
//! cargo run --release --example generate_dataset
//! ```

use remarnet::data::{generate_synthetic, Dataset, SyntheticSpec};

fn main() -> remarnet::Result<()> {
    let spec = SyntheticSpec {
        classes: 4,
        per_class: 100,
        channels: 1,
        height: 32,
        width: 32,
        sigma: 0.25,
    };
    let ds = generate_synthetic(&spec, 0)?;
    let dir = std::env::temp_dir().join("remarnet-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("synthetic.tns");
    ds.save(&path)?;

    let back = Dataset::load(&path)?;
    assert_eq!(back.images(), ds.images());
    println!("wrote {} images of shape {:?} to {}", back.len(), back.image_shape(), path.display());
    for (name, count) in back.class_names().iter().zip(back.class_counts()) {
        println!("  class {name}: {count} images");
    }
    Ok(())
}
