use super::{estimate_roll, GeometryError, LandmarkSet, ReferenceModel, SimilarityTransform};
use crate::image::Image;

// Sample coordinates this close to an integer are treated as integral so
// that translations and quarter turns resample exactly.
const SNAP: f64 = 1e-9;

#[inline]
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP {
        r
    } else {
        v
    }
}

/// Bilinear sample at `(x, y)`; zero outside `[0, w-1] x [0, h-1]`.
#[inline]
fn sample(image: &Image, x: f64, y: f64, c: usize) -> f64 {
    let (x, y) = (snap(x), snap(y));
    let w = image.width();
    let h = image.height();
    if !(x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64) {
        return 0.0;
    }
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let v00 = f64::from(image.get(x0, y0, c));
    if fx == 0.0 && fy == 0.0 {
        return v00;
    }
    let v10 = f64::from(image.get(x1, y0, c));
    let v01 = f64::from(image.get(x0, y1, c));
    let v11 = f64::from(image.get(x1, y1, c));
    let top = v00 * (1.0 - fx) + v10 * fx;
    let bottom = v01 * (1.0 - fx) + v11 * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Resamples `image` into a `width x height` canvas where `transform`
/// maps input pixel coordinates to output pixel coordinates.
pub fn warp_image(
    image: &Image,
    transform: &SimilarityTransform,
    width: usize,
    height: usize,
) -> Image {
    let channels = image.channels();
    let inv = transform.inverse();
    let mut out = vec![0.0f32; width * height * channels];
    if image.width() == 0 || image.height() == 0 {
        return Image::new(width, height, channels, out).expect("valid dimensions");
    }
    for v in 0..height {
        for u in 0..width {
            let [x, y] = inv.apply([u as f64, v as f64]);
            let base = (v * width + u) * channels;
            for c in 0..channels {
                out[base + c] = sample(image, x, y, c) as f32;
            }
        }
    }
    Image::new(width, height, channels, out).expect("valid dimensions")
}

/// Warps `image` into the reference model's crop frame.
pub fn warp_and_crop(
    image: &Image,
    transform: &SimilarityTransform,
    reference: &ReferenceModel,
) -> Image {
    warp_image(
        image,
        transform,
        reference.crop_width(),
        reference.crop_height(),
    )
}

/// Like [`roll_correct`], additionally returning the transform from the
/// input frame to the expanded output canvas.
pub fn roll_correct_with_transform(
    image: &Image,
    landmarks: &LandmarkSet,
) -> Result<(Image, LandmarkSet, SimilarityTransform), GeometryError> {
    let roll = estimate_roll(landmarks)?;
    let rotation = SimilarityTransform::rotation_about(-roll, landmarks.centroid());

    let (w, h) = (image.width() as f64, image.height() as f64);
    let corners = [
        [0.0, 0.0],
        [(w - 1.0).max(0.0), 0.0],
        [0.0, (h - 1.0).max(0.0)],
        [(w - 1.0).max(0.0), (h - 1.0).max(0.0)],
    ]
    .map(|p| rotation.apply(p));
    let fold = |f: fn(f64, f64) -> f64, axis: usize, init: f64| {
        corners.iter().map(|p| snap(p[axis])).fold(init, f)
    };
    let (min_x, max_x) = (fold(f64::min, 0, f64::INFINITY), fold(f64::max, 0, f64::NEG_INFINITY));
    let (min_y, max_y) = (fold(f64::min, 1, f64::INFINITY), fold(f64::max, 1, f64::NEG_INFINITY));
    let (ox, oy) = (min_x.floor(), min_y.floor());
    let out_w = if image.width() == 0 { 0 } else { (max_x.ceil() - ox) as usize + 1 };
    let out_h = if image.height() == 0 { 0 } else { (max_y.ceil() - oy) as usize + 1 };

    let transform = SimilarityTransform::translation(-ox, -oy).compose(&rotation);
    let corrected = warp_image(image, &transform, out_w, out_h);
    Ok((corrected, transform.apply_landmarks(landmarks), transform))
}

/// Rotates image and landmarks by minus the estimated roll about the
/// landmark centroid. The canvas grows to hold the whole rotated frame and
/// uncovered pixels are zero.
pub fn roll_correct(
    image: &Image,
    landmarks: &LandmarkSet,
) -> Result<(Image, LandmarkSet), GeometryError> {
    let (img, lm, _) = roll_correct_with_transform(image, landmarks)?;
    Ok((img, lm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{builtin_reference, LandmarkSchema};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |_, _| rng.random_range(0..=255) as f32)
    }

    fn face_landmarks(roll: f64) -> LandmarkSet {
        let base = LandmarkSet::new(
            LandmarkSchema::FivePoint,
            vec![
                [80.0, 90.0],
                [128.0, 90.0],
                [104.0, 120.0],
                [86.0, 150.0],
                [122.0, 150.0],
            ],
        )
        .unwrap();
        let r = SimilarityTransform::rotation_about(roll, base.centroid());
        r.apply_landmarks(&base)
    }

    #[test]
    fn identity_warp_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let img = random_image(&mut rng, 128, 160);
        let reference = builtin_reference("avg-all-face-lmd").unwrap();
        let out = warp_and_crop(&img, &SimilarityTransform::IDENTITY, &reference);
        assert_eq!(out, img);
    }

    #[test]
    fn integer_translation_shifts_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let img = random_image(&mut rng, 40, 30);
        let (dx, dy) = (7i64, -4i64);
        let t = SimilarityTransform::translation(dx as f64, dy as f64);
        let out = warp_image(&img, &t, 40, 30);
        for v in 0..30i64 {
            for u in 0..40i64 {
                let (x, y) = (u - dx, v - dy);
                let expected = if (0..40).contains(&x) && (0..30).contains(&y) {
                    img.get(x as usize, y as usize, 0)
                } else {
                    0.0
                };
                assert_eq!(out.get(u as usize, v as usize, 0), expected);
            }
        }
    }

    #[test]
    fn constant_field_stays_constant() {
        let img = Image::new(300, 300, 3, vec![77.0; 300 * 300 * 3]).unwrap();
        let reference = builtin_reference("avg-all-face-lmd").unwrap();
        // Crop frame placed around the image centre, fully inside it.
        let t = SimilarityTransform::translation(150.0, 150.0)
            .compose(&SimilarityTransform::new(1.1, 0.3, 0.0, 0.0).unwrap())
            .compose(&SimilarityTransform::translation(-64.0, -80.0))
            .inverse();
        let out = warp_and_crop(&img, &t, &reference);
        assert_eq!((out.width(), out.height()), (128, 160));
        for &v in out.pixels() {
            assert!((v - 77.0).abs() < 1e-4);
        }
    }

    #[test]
    fn warp_by_composition_matches_direct_on_integer_shifts() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let img = random_image(&mut rng, 50, 50);
        let t1 = SimilarityTransform::translation(3.0, 2.0);
        let t2 = SimilarityTransform::translation(-5.0, 4.0);
        let two_step = warp_image(&warp_image(&img, &t1, 80, 80), &t2, 40, 40);
        let direct = warp_image(&img, &t2.compose(&t1), 40, 40);
        assert_eq!(two_step, direct);
    }

    #[test]
    fn zero_roll_is_a_no_op() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let img = random_image(&mut rng, 200, 220);
        let lm = face_landmarks(0.0);
        let (out, out_lm) = roll_correct(&img, &lm).unwrap();
        assert_eq!(out, img);
        for (p, q) in out_lm.points().iter().zip(lm.points()) {
            assert!((p[0] - q[0]).abs() < 1e-9 && (p[1] - q[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn rotated_landmarks_round_trip() {
        let img = Image::zeros(200, 220, 1).unwrap();
        let original = face_landmarks(0.0);
        let rotated = face_landmarks(15f64.to_radians());
        let (_, out_lm) = roll_correct(&img, &rotated).unwrap();
        assert!(estimate_roll(&out_lm).unwrap().abs() < 1e-9);
        // the only remaining difference is the integral canvas offset
        let centroid_shift = {
            let c0 = original.centroid();
            let c1 = out_lm.centroid();
            [c1[0] - c0[0], c1[1] - c0[1]]
        };
        assert!((centroid_shift[0] - centroid_shift[0].round()).abs() < 1e-9);
        assert!((centroid_shift[1] - centroid_shift[1].round()).abs() < 1e-9);
        for (p, q) in out_lm.points().iter().zip(original.points()) {
            assert!((p[0] - centroid_shift[0] - q[0]).abs() < 1e-6);
            assert!((p[1] - centroid_shift[1] - q[1]).abs() < 1e-6);
        }
    }

    #[test]
    fn quarter_turn_levels_eye_line() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let img = random_image(&mut rng, 210, 230);
        let lm = face_landmarks(FRAC_PI_2);
        let (out, out_lm) = roll_correct(&img, &lm).unwrap();
        assert!(estimate_roll(&out_lm).unwrap().abs() < 1e-9);
        let (l, r) = out_lm.eye_centers().unwrap();
        assert!((l[1] - r[1]).abs() < 1e-9);
        // a quarter turn swaps the canvas dimensions
        assert_eq!((out.width(), out.height()), (230, 210));
    }

    #[test]
    fn expanded_canvas_holds_rotated_frame() {
        let img = Image::new(100, 100, 1, vec![9.0; 10_000]).unwrap();
        let lm = face_landmarks(0.5);
        let (out, _) = roll_correct(&img, &lm).unwrap();
        let expected = (99.0 * (0.5f64.cos() + 0.5f64.sin())).ceil() as usize;
        assert!(out.width() >= expected && out.width() <= expected + 2);
        // total mass is conserved up to edge effects
        let mass: f64 = out.pixels().iter().map(|&v| f64::from(v)).sum();
        assert!((mass / 90_000.0 - 1.0).abs() < 0.05);
    }
}
