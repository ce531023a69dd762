mod common;

use std::collections::BTreeMap;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use repalign::forge::{
    classify_candidate, compose, percentile, read_dataset_manifest, resize_for_overlay, sample_placement,
    verify_record, RecordType, AREA_FRACTION, DATASET_MANIFEST,
};
use repalign::saliency::SaliencyConfig;
use repalign::DistractorClass;

#[test]
fn three_targets_give_fifteen_verified_images() {
    let dir = tempfile::tempdir().unwrap();
    let c = forge_corpus(&dir.path().join("corpus"));
    let out = dir.path().join("out");
    let (t, result) = forge_corpus_dataset(&c, &out, CLOSED_LOOP_SEED);
    assert!(result.exhausted.is_empty(), "{:?}", result.exhausted);
    assert_eq!(result.records.len(), 15);

    let mut per_target: BTreeMap<&str, Vec<RecordType>> = BTreeMap::new();
    for r in &result.records {
        per_target.entry(&r.target_id).or_default().push(r.dtype);
    }
    let want: Vec<RecordType> = std::iter::once(RecordType::Baseline)
        .chain(DistractorClass::ALL.map(RecordType::Class))
        .collect();
    assert_eq!(per_target.len(), 3);
    for types in per_target.values() {
        assert_eq!(types, &want);
    }

    let stored = read_dataset_manifest(&out.join(DATASET_MANIFEST)).unwrap();
    assert_eq!(stored, result.records);
    let (m, e) = corpus_inputs(&c);
    let cfg = SaliencyConfig::default();
    for r in &stored {
        assert!(out.join(&r.composed_path).is_file());
        let (sal, sem) = verify_record(r, &m, &e, &t, &out, &cfg).unwrap();
        if let RecordType::Class(class) = r.dtype {
            assert_eq!(classify_candidate(sal, sem, &t), Some(class));
            assert_eq!(class.is_semantic(), r.distractor_id.as_deref().unwrap().ends_with("_b"));
        }
    }
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let c = forge_corpus(&dir.path().join("corpus"));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let (ta, ra) = forge_corpus_dataset(&c, &a, CLOSED_LOOP_SEED);
    let (tb, rb) = forge_corpus_dataset(&c, &b, CLOSED_LOOP_SEED);
    assert_eq!(ta, tb);
    assert_eq!(ra, rb);
    assert_eq!(
        std::fs::read(a.join(DATASET_MANIFEST)).unwrap(),
        std::fs::read(b.join(DATASET_MANIFEST)).unwrap()
    );
    for r in &ra.records {
        assert_eq!(sha256_file(&a.join(&r.composed_path)), sha256_file(&b.join(&r.composed_path)));
    }
}

#[test]
fn calibration_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let c = forge_corpus(dir.path());
    let a = calibrate_corpus(&c, 5);
    assert_eq!(a, calibrate_corpus(&c, 5));
    // caption distances are exactly 0 within a cluster and 1 across
    assert_eq!((a.sem_lo, a.sem_hi), (0.0, 1.0));
    assert_eq!(a.sal_lo, 0.0);
    assert!(a.sal_hi > 0.3, "{}", a.sal_hi);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn percentile_matches_integer_oracle(values in prop::collection::vec(-1000i64..1000, 1..60), p in 0u32..=100) {
        let mut sorted: Vec<f64> = values.iter().map(|&v| v as f64).collect();
        sorted.sort_by(f64::total_cmp);
        prop_assert_eq!(percentile(&sorted, p as f64), integer_oracle(&values, p));
    }
}

#[test]
fn overlay_area_is_a_tenth() {
    let mut r = rng(11);
    for _ in 0..100 {
        let (tw, th) = photo_dims(&mut r);
        let (sw, sh) = photo_dims(&mut r);
        let Ok((w, h)) = resize_for_overlay(tw, th, sw, sh) else {
            panic!("{tw}x{th} <- {sw}x{sh}");
        };
        let ratio = (w * h) as f64 / (tw as f64 * th as f64);
        assert!((ratio / AREA_FRACTION - 1.0).abs() <= 0.02, "{tw}x{th} <- {sw}x{sh}: {w}x{h}");
    }
}

#[test]
fn compose_touches_only_the_rectangle() {
    let mut r = rng(12);
    for _ in 0..100 {
        let (tw, th) = (r.random_range(40..200u32), r.random_range(40..200u32));
        let (sw, sh) = (r.random_range(20..120u32), r.random_range(20..120u32));
        let target = image::RgbImage::from_fn(tw, th, |_, _| image::Rgb(r.random()));
        let dist = image::RgbImage::from_fn(sw, sh, |x, y| image::Rgb([x as u8, y as u8, 7]));
        let dims = resize_for_overlay(tw, th, sw, sh).unwrap();
        let Ok(p) = sample_placement(&mut r, (tw, th), dims) else {
            continue;
        };
        let out = compose(&target, &dist, &p).unwrap();
        let (x0, y0) = p.origin(tw, th);
        assert!(x0 == 0 || y0 == 0 || x0 + p.dist_w == tw || y0 + p.dist_h == th);
        for (x, y, px) in out.enumerate_pixels() {
            if !p.contains(tw, th, x, y) {
                assert_eq!(px, target.get_pixel(x, y));
            }
        }
    }
}
