mod common;

use std::path::PathBuf;

use remarnet::data::{load_pnm, load_tns, parse_pnm, save_tns, Dataset, TensorMap};
use remarnet::rng::Rng;
use remarnet::{Error, Tensor};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn tns_round_trip_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = Rng::new(50);
    for i in 0..50 {
        let map = common::random_map(&mut rng);
        let path = dir.path().join(format!("{i}.tns"));
        save_tns(&path, &map).unwrap();
        assert_eq!(common::bits(&load_tns(&path).unwrap()), common::bits(&map), "map {i}");
    }
}

#[test]
fn tns_layout_is_little_endian() {
    let mut map = TensorMap::new();
    map.insert("ab".into(), Tensor::new(&[2], vec![1.0f32, -2.0]).unwrap());
    let bytes = remarnet::data::encode_tns(&map);
    let mut want = b"TNS1".to_vec();
    for v in [1u32, 2] {
        want.extend_from_slice(&v.to_le_bytes());
    }
    want.extend_from_slice(b"ab");
    for v in [1u32, 2] {
        want.extend_from_slice(&v.to_le_bytes());
    }
    want.extend_from_slice(&1.0f32.to_le_bytes());
    want.extend_from_slice(&(-2.0f32).to_le_bytes());
    assert_eq!(bytes, want);
}

#[test]
fn pnm_fixtures_parse_to_expected_values() {
    let g = load_pnm(&fixture("gray.pgm")).unwrap();
    assert_eq!(g.shape(), &[1, 2, 3]);
    assert_eq!(g.data(), &[0.0, 0.25, 0.5, 0.75, 1.0, 0.0]);

    let c = load_pnm(&fixture("color.ppm")).unwrap();
    assert_eq!(c.shape(), &[3, 1, 2]);
    assert_eq!(c.data(), &[1.0, 0.0, 0.0, 0.2, 0.0, 1.0]);

    let g = load_pnm(&fixture("gray_raw.pgm")).unwrap();
    assert_eq!(g.shape(), &[1, 2, 2]);
    assert_eq!(g.data(), &[0.0, 64.0 / 255.0, 128.0 / 255.0, 1.0]);

    let c = load_pnm(&fixture("color_raw.ppm")).unwrap();
    assert_eq!(c.shape(), &[3, 2, 1]);
    assert_eq!(c.data(), &[0.0, 1.0, 0.5, 0.0, 1.0, 0.1]);
}

fn parse_field(path: &str) -> String {
    match load_pnm(&fixture(path)) {
        Err(Error::Parse { field, .. }) => field,
        other => panic!("{path}: expected a parse error, got {other:?}"),
    }
}

#[test]
fn malformed_pnm_files_name_the_failing_field() {
    assert_eq!(parse_field("bad_magic.pgm"), "magic");
    assert_eq!(parse_field("truncated.pgm"), "payload");
    assert_eq!(parse_field("big_maxval.pgm"), "maxval");
    assert!(parse_pnm(b"").is_err());
}

#[test]
fn dataset_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ds = remarnet::data::generate_synthetic(
        &remarnet::data::SyntheticSpec {
            classes: 3,
            per_class: 4,
            channels: 2,
            height: 8,
            width: 8,
            sigma: 0.1,
        },
        17,
    )
    .unwrap();
    let path = dir.path().join("ds.tns");
    ds.save(&path).unwrap();
    let back = Dataset::load(&path).unwrap();
    assert_eq!(back.images(), ds.images());
    assert_eq!(back.labels(), ds.labels());
}
