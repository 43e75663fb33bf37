//! Build a dataset from NetPBM images listed in a CSV manifest.
//!
//! Writes a handful of tiny PGM files (two "classes": bright and dark
//! checkerboards), lists them in `manifest.csv` and loads the result.

use std::fmt::Write as _;

use remarnet::data::load_manifest;

fn pgm(bright: bool, phase: usize) -> String {
    let mut s = String::from("P2\n4 4\n255\n");
    for i in 0..16 {
        let on = (i / 4 + i % 4 + phase) % 2 == 0;
        let v = match (bright, on) {
            (true, true) => 255,
            (true, false) => 180,
            (false, true) => 80,
            (false, false) => 0,
        };
        write!(s, "{v} ").unwrap();
    }
    s
}

fn main() -> remarnet::Result<()> {
    let dir = std::env::temp_dir().join("remarnet-manifest-example");
    std::fs::create_dir_all(&dir)?;
    let mut manifest = String::from("path,label\n");
    for i in 0..6 {
        let (bright, label) = if i % 2 == 0 { (true, "bright") } else { (false, "dark") };
        let name = format!("img{i}.pgm");
        std::fs::write(dir.join(&name), pgm(bright, i / 2))?;
        writeln!(manifest, "{name},{label}").unwrap();
    }
    let path = dir.join("manifest.csv");
    std::fs::write(&path, manifest)?;

    let ds = load_manifest(&path)?;
    println!("{} images of shape {:?}, classes {:?}", ds.len(), ds.image_shape(), ds.class_names());
    println!("labels {:?}", ds.labels());
    Ok(())
}
