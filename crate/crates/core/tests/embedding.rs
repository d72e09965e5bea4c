use horouf::corpus::{decode_label, Manifest, ManifestEntry, Provenance, SpeakerMeta, Split, CLASS_COUNT};
use horouf::embedding::{
    assemble, decode_hrf, encode_hrf, load_dataset, mean_pool, save_dataset, write_hrf, EmbeddingDataset,
    EmbeddingError, FrameEmbeddingMatrix,
};
use horouf::Matrix;
use proptest::prelude::*;

fn frames(max_t: usize, max_d: usize) -> impl Strategy<Value = Matrix<f32>> {
    (1..max_t, 1..max_d).prop_flat_map(|(t, d)| {
        prop::collection::vec(-1e6f32..1e6, t * d).prop_map(move |v| Matrix::from_vec(t, d, v).unwrap())
    })
}

#[test]
fn header_layout() {
    let m = FrameEmbeddingMatrix::new(Matrix::from_rows(&[[1.0f32, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap()).unwrap();
    let bytes = encode_hrf(&m);
    assert_eq!(&bytes[..4], b"HRF1");
    assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
    assert_eq!(u16::from_le_bytes([bytes[6], bytes[7]]), 0);
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
    assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 3);
    assert_eq!(bytes.len(), 16 + 4 * 6);
    assert_eq!(f32::from_le_bytes(bytes[16..20].try_into().unwrap()), 1.0);
    assert_eq!(f32::from_le_bytes(bytes[36..40].try_into().unwrap()), 6.0);
}

#[test]
fn corrupt_files_are_classified() {
    let m = FrameEmbeddingMatrix::new(Matrix::from_rows(&[[1.0f32, 2.0]]).unwrap()).unwrap();
    let good = encode_hrf(&m);
    assert!(matches!(decode_hrf(b"NOPE"), Err(EmbeddingError::BadMagic)));
    assert!(matches!(decode_hrf(&good[..10]), Err(EmbeddingError::Truncated)));
    assert!(matches!(decode_hrf(&good[..good.len() - 1]), Err(EmbeddingError::DimensionMismatch { .. })));
    let mut v2 = good.clone();
    v2[4] = 2;
    assert!(matches!(decode_hrf(&v2), Err(EmbeddingError::UnsupportedVersion(2))));
    let mut flagged = good.clone();
    flagged[6] = 1;
    assert!(matches!(decode_hrf(&flagged), Err(EmbeddingError::UnsupportedFlags(1))));
    let mut nan = good.clone();
    nan[16..20].copy_from_slice(&f32::NAN.to_le_bytes());
    assert!(matches!(decode_hrf(&nan), Err(EmbeddingError::NonFinitePayload)));
    let mut empty = good[..16].to_vec();
    empty[8..12].copy_from_slice(&0u32.to_le_bytes());
    assert!(matches!(decode_hrf(&empty), Err(EmbeddingError::EmptyMatrix { .. })));
}

#[test]
fn mean_pool_of_known_matrix() {
    let m = FrameEmbeddingMatrix::new(Matrix::from_rows(&[[1.0f32, -2.0], [3.0, 4.0], [5.0, 7.0]]).unwrap()).unwrap();
    assert_eq!(mean_pool(&m), vec![3.0, 3.0]);
}

fn entry(id: &str, class: i64, split: Split) -> ManifestEntry {
    ManifestEntry {
        id: id.into(),
        audio_path: None,
        embedding_path: Some(format!("emb/{id}.hrf")),
        label: decode_label(class).unwrap(),
        speaker: SpeakerMeta::default(),
        split: Some(split),
        provenance: Provenance::Original,
    }
}

#[test]
fn assemble_pools_each_split_in_manifest_order() {
    let dir = tempfile::tempdir().unwrap();
    let emb = dir.path().join("emb");
    std::fs::create_dir_all(&emb).unwrap();
    let specs = [("a", 3, Split::Train, 1.0f32), ("b", 50, Split::Test, 2.0), ("c", 111, Split::Train, 3.0)];
    for (id, _, _, v) in specs {
        let m = Matrix::from_fn(4, 5, |t, _| v + t as f32 - 1.5);
        write_hrf(&FrameEmbeddingMatrix::new(m).unwrap(), emb.join(format!("{id}.hrf"))).unwrap();
    }
    let manifest = Manifest::new(specs.iter().map(|&(id, c, s, _)| entry(id, c, s)).collect()).unwrap();
    let train = assemble(&manifest, Split::Train, dir.path()).unwrap();
    assert_eq!(train.ids(), ["a", "c"]);
    assert_eq!(train.y(), [3, 111]);
    assert_eq!(train.classes(), CLASS_COUNT);
    assert_eq!(train.x().row(0), [1.0; 5]);
    assert_eq!(train.x().row(1), [3.0; 5]);
    assert!(assemble(&manifest, Split::Val, dir.path()).unwrap().is_empty());

    std::fs::remove_file(emb.join("b.hrf")).unwrap();
    assert!(matches!(assemble(&manifest, Split::Test, dir.path()), Err(EmbeddingError::MissingFile { .. })));
}

#[test]
fn assemble_rejects_mixed_widths() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(dir.path().join("emb")).unwrap();
    for (id, w) in [("a", 4), ("b", 5)] {
        let m = Matrix::from_fn(2, w, |_, _| 0.5f32);
        write_hrf(&FrameEmbeddingMatrix::new(m).unwrap(), dir.path().join(format!("emb/{id}.hrf"))).unwrap();
    }
    let manifest = Manifest::new(vec![entry("a", 0, Split::Train), entry("b", 0, Split::Train)]).unwrap();
    assert!(matches!(assemble(&manifest, Split::Train, dir.path()), Err(EmbeddingError::MixedWidth { .. })));
}

#[test]
fn dataset_directory_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let x = Matrix::from_fn(6, 3, |r, c| (r * 3 + c) as f32 * 0.25 - 1.0);
    let ds = EmbeddingDataset::new(x, vec![0, 1, 2, 0, 1, 111], (0..6).map(|i| format!("id,{i}")).collect(), CLASS_COUNT)
        .unwrap();
    save_dataset(&ds, dir.path()).unwrap();
    let back = load_dataset(dir.path()).unwrap();
    assert_eq!(back.x(), ds.x());
    assert_eq!(back.y(), ds.y());
    assert_eq!(back.ids(), ds.ids());
    assert_eq!(back.classes(), ds.classes());

    let empty = EmbeddingDataset::empty(3, 4);
    let d2 = dir.path().join("empty");
    save_dataset(&empty, &d2).unwrap();
    assert!(load_dataset(&d2).unwrap().is_empty());
}

#[test]
fn dataset_rejects_bad_labels() {
    let x = Matrix::from_fn(2, 2, |_, _| 0.0f32);
    assert!(EmbeddingDataset::new(x.clone(), vec![0, 5], vec!["a".into(), "b".into()], 5).is_err());
    assert!(EmbeddingDataset::new(x, vec![0], vec!["a".into()], 5).is_err());
}

proptest! {
    #[test]
    fn hrf_round_trip_is_bit_exact(m in frames(40, 40)) {
        let f = FrameEmbeddingMatrix::new(m.clone()).unwrap();
        let back = decode_hrf(&encode_hrf(&f)).unwrap();
        prop_assert_eq!(back.as_matrix(), &m);
    }

    #[test]
    fn mean_pool_is_within_row_bounds(m in frames(30, 10)) {
        let f = FrameEmbeddingMatrix::new(m.clone()).unwrap();
        let p = mean_pool(&f);
        prop_assert_eq!(p.len(), m.cols());
        for (d, v) in p.iter().enumerate() {
            let col: Vec<f32> = (0..m.rows()).map(|r| m.get(r, d)).collect();
            let lo = col.iter().cloned().fold(f32::INFINITY, f32::min);
            let hi = col.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            prop_assert!(*v >= lo && *v <= hi);
        }
    }

    #[test]
    fn pooling_repeated_rows_is_identity(row in prop::collection::vec(-100f32..100.0, 1..20), t in 1usize..50) {
        let m = Matrix::from_fn(t, row.len(), |_, c| row[c]);
        let p = mean_pool(&FrameEmbeddingMatrix::new(m).unwrap());
        for (a, b) in p.iter().zip(&row) {
            prop_assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0));
        }
    }
}
