use std::fs;
use std::path::Path;

use earlyexit::harness::{gen_corpus, ingest, ingest_split, write_corpus, Split, SynthSpec, Utterance};
use earlyexit::{Error, Tensor};

fn spec() -> SynthSpec {
    SynthSpec {
        train_size: 6,
        dev_size: 3,
        test_size: 3,
        ..SynthSpec::default()
    }
}

fn manifest(dir: &Path) -> std::path::PathBuf {
    dir.join("train").join("manifest.tsv")
}

#[test]
fn generated_corpus_round_trips_through_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let generated = gen_corpus(&spec(), dir.path()).unwrap();
    for split in Split::ALL {
        let loaded = ingest_split(dir.path(), split).unwrap();
        assert_eq!(&loaded, generated.split(split));
        assert_eq!(loaded.split, split);
    }
}

#[test]
fn flipped_byte_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    gen_corpus(&spec(), dir.path()).unwrap();
    let victim = dir.path().join("train/feats/train-00002.f64");
    let mut bytes = fs::read(&victim).unwrap();
    bytes[17] ^= 0x01;
    fs::write(&victim, bytes).unwrap();
    match ingest(manifest(dir.path())) {
        Err(e @ Error::ChecksumMismatch { .. }) => {
            let Error::ChecksumMismatch { path, .. } = &e else { unreachable!() };
            assert_eq!(path, &victim);
            assert!(e.to_string().contains("train-00002.f64"));
        }
        other => panic!("expected checksum error, got {other:?}"),
    }
}

#[test]
fn absent_feature_file_is_a_missing_file_error() {
    let dir = tempfile::tempdir().unwrap();
    gen_corpus(&spec(), dir.path()).unwrap();
    let victim = dir.path().join("train/feats/train-00004.f64");
    fs::remove_file(&victim).unwrap();
    assert!(matches!(ingest(manifest(dir.path())), Err(Error::MissingFile { path }) if path == victim));
    assert!(matches!(
        ingest(dir.path().join("nowhere/manifest.tsv")),
        Err(Error::MissingFile { .. })
    ));
}

#[test]
fn malformed_rows_are_rejected_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    gen_corpus(&spec(), dir.path()).unwrap();
    let path = manifest(dir.path());
    let original = fs::read_to_string(&path).unwrap();

    let mut lines: Vec<String> = original.lines().map(String::from).collect();
    lines[3] = lines[3].replace('\t', " ");
    fs::write(&path, lines.join("\n")).unwrap();
    assert!(matches!(ingest(&path), Err(Error::MalformedManifest { line: 4, .. })));

    let mut lines: Vec<String> = original.lines().map(String::from).collect();
    let mut cols: Vec<&str> = lines[2].split('\t').collect();
    cols[2] = "many";
    lines[2] = cols.join("\t");
    fs::write(&path, lines.join("\n")).unwrap();
    assert!(matches!(ingest(&path), Err(Error::MalformedManifest { line: 3, .. })));

    fs::write(&path, original.replacen("split=train", "split=holdout", 1)).unwrap();
    assert!(matches!(ingest(&path), Err(Error::MalformedManifest { line: 1, .. })));

    let header_only: String = original.lines().take(2).map(|l| format!("{l}\n")).collect();
    fs::write(&path, header_only).unwrap();
    assert!(matches!(ingest(&path), Err(Error::MalformedManifest { .. })));
}

#[test]
fn recorded_shape_must_match_the_file() {
    let dir = tempfile::tempdir().unwrap();
    gen_corpus(&spec(), dir.path()).unwrap();
    let path = manifest(dir.path());
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cols: Vec<String> = lines[2].split('\t').map(String::from).collect();
    let frames: usize = cols[2].parse().unwrap();
    cols[2] = (frames + 1).to_string();
    lines[2] = cols.join("\t");
    fs::write(&path, lines.join("\n")).unwrap();
    assert!(matches!(ingest(&path), Err(Error::ShapeMismatch { .. })));
}

#[test]
fn manifest_checksum_tracks_content() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let u = |text: &str| Utterance {
        id: "u1".into(),
        features: Tensor::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
        text: text.into(),
    };
    let ca = write_corpus(a.path(), Split::Dev, vec![u("ab")]).unwrap();
    let cb = write_corpus(b.path(), Split::Dev, vec![u("ba")]).unwrap();
    assert_ne!(ca.manifest_checksum, cb.manifest_checksum);
    assert_eq!(ingest(a.path().join("manifest.tsv")).unwrap(), ca);
    assert!(write_corpus(a.path(), Split::Dev, vec![u("tab\there")]).is_err());
}
