use chanboost::channels::*;
use chanboost::raster::{ChannelStack, Raster};
use image::{Rgb, RgbImage};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(w: u32, h: u32, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RgbImage::from_fn(w, h, |_, _| Rgb([rng.random(), rng.random(), rng.random()]))
}

fn random_raster(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Raster<f64> {
    Raster::from_fn(w, h, |_, _| rng.random_range(-1.0..1.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn orientation_channels_sum_to_magnitude(seed in any::<u64>(), w in 8u32..40, h in 8u32..40) {
        let luv = rgb_to_luv::<f64>(&random_image(w, h, seed)).unwrap();
        let field = normalize_magnitude(&gradient_field(&luv).unwrap());
        let hist = orientation_histogram(&field);
        for (i, &m) in field.magnitude.as_slice().iter().enumerate() {
            prop_assert!(m >= 0.0);
            let sum: f64 = (0..ORIENTATION_BINS).map(|b| hist.channel(b)[i]).sum();
            prop_assert!((sum - m).abs() <= 1e-12);
            let nonzero = (0..ORIENTATION_BINS).filter(|&b| hist.channel(b)[i] != 0.0).count();
            prop_assert!(nonzero <= 1);
        }
    }

    #[test]
    fn gradients_ignore_constant_offsets(seed in any::<u64>(), offsets in prop::array::uniform3(-5.0f64..5.0)) {
        let luv = rgb_to_luv::<f64>(&random_image(24, 20, seed)).unwrap();
        let shifted = ChannelStack::from_rasters(
            1,
            luv.rasters()
                .zip(offsets)
                .zip(luv.names())
                .map(|((r, o), n)| (n.clone(), r.map(|v| v + o)))
                .collect(),
        )
        .unwrap();
        let a = gradient_field(&luv).unwrap();
        let b = gradient_field(&shifted).unwrap();
        for (x, y) in a.magnitude.as_slice().iter().zip(b.magnitude.as_slice()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        let (oa, ob) = (a.orientation_bin.as_slice(), b.orientation_bin.as_slice());
        for (i, m) in a.magnitude.as_slice().iter().enumerate() {
            if *m > 1e-6 {
                prop_assert_eq!(oa[i], ob[i]);
            }
        }
    }

    #[test]
    fn aggregation_is_linear_and_shrinks(seed in any::<u64>(), w in 1usize..30, h in 1usize..30, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_raster(w, h, &mut rng);
        let y = random_raster(w, h, &mut rng);
        let mixed = Raster::from_fn(w, h, |i, j| a * x.get(i, j) + b * y.get(i, j));
        let (ax, ay, am) = (aggregate_raster(&x, SHRINK), aggregate_raster(&y, SHRINK), aggregate_raster(&mixed, SHRINK));
        prop_assert_eq!((am.width(), am.height()), (w.div_ceil(4), h.div_ceil(4)));
        for ((p, q), r) in ax.as_slice().iter().zip(ay.as_slice()).zip(am.as_slice()) {
            prop_assert!((a * p + b * q - r).abs() < 1e-12);
        }
    }

    #[test]
    fn acf_is_translation_equivariant_in_the_interior(seed in any::<u64>(), shift in 1usize..4) {
        let big = random_image(96, 64, seed);
        let dx = (shift * SHRINK) as u32;
        let left = image::imageops::crop_imm(&big, 0, 0, 64, 64).to_image();
        let right = image::imageops::crop_imm(&big, dx, 0, 64, 64).to_image();
        let a = compute_acf::<f64>(&left).unwrap();
        let b = compute_acf::<f64>(&right).unwrap();
        let margin = 4;
        for c in 0..a.num_channels() {
            for y in margin..a.height() - margin {
                for x in margin..a.width() - margin - shift {
                    let (p, q) = (a.get(c, x + shift, y), b.get(c, x, y));
                    prop_assert!((p - q).abs() < 1e-6, "channel {c} at ({x},{y}): {p} vs {q}");
                }
            }
        }
    }
}

#[test]
fn acf_layout_is_fixed() {
    let stack = compute_acf::<f32>(&random_image(33, 18, 1)).unwrap();
    assert_eq!(stack.names(), ACF_CHANNELS);
    assert_eq!(
        (stack.width(), stack.height(), stack.shrink()),
        (9, 5, SHRINK)
    );
}

#[test]
fn f32_and_f64_agree() {
    let img = random_image(40, 32, 2);
    let a = compute_acf::<f32>(&img).unwrap();
    let b = compute_acf::<f64>(&img).unwrap();
    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
        assert!((f64::from(*x) - y).abs() < 1e-4);
    }
}
