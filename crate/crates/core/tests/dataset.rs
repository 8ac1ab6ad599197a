use std::path::Path;

use chanboost::boosting::WindowGeometry;
use chanboost::dataset::*;
use chanboost::detect::{pascal_overlap, BoundingBox};
use image::{Rgb, RgbImage};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn arb_sample() -> impl Strategy<Value = AnnotatedSample> {
    (
        "[a-z0-9_]{1,10}\\.ppm",
        0.0f64..500.0,
        0.0f64..500.0,
        0.5f64..200.0,
        0.5f64..200.0,
        "[A-Za-z]{1,8}",
    )
        .prop_map(|(image, x, y, w, h, class)| AnnotatedSample {
            image,
            bbox: BoundingBox::from_xywh(x, y, w, h).unwrap(),
            class,
            orientation: None,
            truncation: None,
            occlusion: None,
            difficulty: Difficulty::Unrated,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_roundtrips(samples in prop::collection::vec(arb_sample(), 0..20)) {
        let text = format_csv_annotations(&samples);
        let mut skipped = SkipReport::default();
        let back = parse_csv_annotations(&text, Path::new("mem.csv"), None, false, &mut skipped).unwrap();
        prop_assert!(skipped.is_empty());
        prop_assert_eq!(back, samples);
    }

    #[test]
    fn negatives_avoid_annotations(
        seed in any::<u64>(),
        boxes in prop::collection::vec((0.0f64..150.0, 0.0f64..100.0, 5.0f64..50.0, 5.0f64..50.0), 0..4),
        count in 1usize..30,
    ) {
        let annotations: Vec<BoundingBox> =
            boxes.iter().map(|&(x, y, w, h)| BoundingBox::from_xywh(x, y, w, h).unwrap()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let neg = sample_negatives(200, 150, &annotations, count, (16, 24), &mut rng);
        prop_assert!(neg.boxes.len() <= count);
        prop_assert_eq!(neg.saturated, neg.boxes.len() < count);
        for b in &neg.boxes {
            prop_assert!(b.left >= 0.0 && b.top >= 0.0 && b.right <= 200.0 + 1e-9 && b.bottom <= 150.0 + 1e-9);
            prop_assert!(b.width() >= 16.0 - 1e-9 && b.height() >= 24.0 - 1e-9);
            prop_assert!((b.width() / b.height() - 16.0 / 24.0).abs() < 1e-9);
            for a in &annotations {
                prop_assert!(pascal_overlap(a, b) <= NEGATIVE_MAX_OVERLAP);
            }
        }
    }

    #[test]
    fn jitter_yields_one_crop_per_copy(seed in any::<u64>(), copies in 1usize..10, context in 0usize..6, flip in any::<bool>()) {
        let image = RgbImage::from_fn(64, 48, |x, y| Rgb([(x * 4) as u8, (y * 5) as u8, 90]));
        let window = WindowGeometry::new(12, 20, 3).unwrap();
        let params = JitterParams { copies, translation: 2.0, scale: [0.9, 1.1], rotation: 5.0, flip };
        let bbox = BoundingBox::new(20.0, 10.0, 32.0, 30.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let crops = jitter(&image, &bbox, &window, context, &params, &mut rng);
        prop_assert_eq!(crops.len(), copies);
        let (fw, fh) = window.footprint();
        for c in &crops {
            prop_assert_eq!(c.dimensions(), ((fw + 2 * context) as u32, (fh + 2 * context) as u32));
        }
        let transforms = jitter_transforms(&params, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(transforms[0], Jitter::IDENTITY);
        if flip && copies > 1 {
            prop_assert_eq!(transforms[1], Jitter::flipped());
        }
    }
}

#[test]
fn identity_crop_of_a_matching_box_is_the_source() {
    let image = RgbImage::from_fn(40, 40, |x, y| {
        Rgb([(x * 6) as u8, (y * 6) as u8, ((x ^ y) * 8) as u8])
    });
    let window = WindowGeometry::new(16, 16, 0).unwrap();
    let bbox = BoundingBox::from_xywh(8.0, 12.0, 16.0, 16.0).unwrap();
    let crop = render_crop(&image, &bbox, &window, 0, &Jitter::IDENTITY);
    for (x, y, p) in crop.enumerate_pixels() {
        assert_eq!(*p, *image.get_pixel(x + 8, y + 12));
    }
}

#[test]
fn class_map_filters_unknown_ids() {
    let map = ClassMap::parse("0;speed\n# comment\n14;stop\n", Path::new("map")).unwrap();
    let text = "img;left;top;right;bottom;id\na.ppm;1;2;11;12;14\nb.ppm;1;2;11;12;99\n";
    let mut skipped = SkipReport::default();
    let parsed =
        parse_csv_annotations(text, Path::new("gt.csv"), Some(&map), true, &mut skipped).unwrap();
    assert_eq!(parsed.len(), 1);
    assert_eq!(parsed[0].class, "stop");
    assert_eq!(skipped.entries.len(), 1);
    assert_eq!(skipped.entries[0].1, 3);
}

#[test]
fn malformed_rows_report_their_line() {
    let mut skipped = SkipReport::default();
    let err = parse_csv_annotations(
        "a;1;2;3;4;x\nb;1;2;x;4;y\n",
        Path::new("gt.csv"),
        None,
        false,
        &mut skipped,
    )
    .unwrap_err();
    assert!(
        err.to_string().contains(":2") || err.to_string().contains("line 2"),
        "{err}"
    );
}

#[test]
fn item_streams_are_independent_and_repeatable() {
    use rand::Rng;
    let a: u64 = item_rng(5, 1).random();
    let b: u64 = item_rng(5, 2).random();
    assert_ne!(a, b);
    assert_eq!(a, item_rng(5, 1).random::<u64>());
}
