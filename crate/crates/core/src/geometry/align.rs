use super::{
    estimate_similarity_transform, roll_correct_with_transform, warp_and_crop, GeometryError,
    LandmarkSet, ReferenceModel, SimilarityTransform,
};
use crate::image::Image;

/// Landmark re-detection hook run on the roll-corrected image. It receives
/// the corrected image and the rotated seed landmarks.
pub type Redetect<'a> =
    &'a (dyn Fn(&Image, &LandmarkSet) -> Result<LandmarkSet, String> + Sync);

/// Intermediate and final results of [`align_with_transforms`].
#[derive(Debug, Clone)]
pub struct Alignment {
    pub crop: Image,
    /// Original image frame to crop frame.
    pub transform: SimilarityTransform,
    /// Original image frame to roll-corrected canvas.
    pub roll_transform: SimilarityTransform,
    /// Roll-corrected canvas to crop frame.
    pub similarity: SimilarityTransform,
    /// Landmarks on the roll-corrected canvas used for the similarity fit.
    pub corrected_landmarks: LandmarkSet,
}

/// Roll correction, optional re-detection, similarity fit and crop.
pub fn align_with_transforms(
    image: &Image,
    landmarks: &LandmarkSet,
    reference: &ReferenceModel,
    redetect: Option<Redetect<'_>>,
) -> Result<Alignment, GeometryError> {
    let (corrected, rotated, roll_transform) = roll_correct_with_transform(image, landmarks)?;
    let corrected_landmarks = match redetect {
        Some(detect) => detect(&corrected, &rotated).map_err(GeometryError::Redetect)?,
        None => rotated,
    };
    let similarity = estimate_similarity_transform(&corrected_landmarks, reference.landmarks())?;
    let crop = warp_and_crop(&corrected, &similarity, reference);
    Ok(Alignment {
        crop,
        transform: similarity.compose(&roll_transform),
        roll_transform,
        similarity,
        corrected_landmarks,
    })
}

/// Aligns one face image to `reference`, returning the crop and the
/// transform from the original image frame to the crop frame.
pub fn align(
    image: &Image,
    landmarks: &LandmarkSet,
    reference: &ReferenceModel,
    redetect: Option<Redetect<'_>>,
) -> Result<(Image, SimilarityTransform), GeometryError> {
    let a = align_with_transforms(image, landmarks, reference, redetect)?;
    Ok((a.crop, a.transform))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{builtin_reference, estimate_roll, roll_correct};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reference_landmarks_give_identity_crop() {
        let reference = builtin_reference("avg-all-face-lmd").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let img = Image::from_fn(128, 160, |_, _| rng.random_range(0.0..255.0));
        let (crop, t) = align(&img, reference.landmarks(), &reference, None).unwrap();
        assert!(t.frobenius_distance(&SimilarityTransform::IDENTITY) < 1e-9);
        assert_eq!((crop.width(), crop.height()), (128, 160));
        for (a, b) in crop.pixels().iter().zip(img.pixels()) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn synthetic_round_trip_maps_landmarks_to_reference() {
        let reference = builtin_reference("avg-frontal-face-lmd").unwrap();
        let t0 = SimilarityTransform::new(1.6, 0.35, 40.0, 25.0).unwrap();
        let img = Image::from_fn(300, 320, |x, y| ((x * 7 + y * 3) % 256) as f32);
        let lm = t0.apply_landmarks(reference.landmarks());
        let (_, t) = align(&img, &lm, &reference, None).unwrap();
        let mapped = t.apply_landmarks(&lm);
        for (p, q) in mapped.points().iter().zip(reference.landmarks().points()) {
            assert!((p[0] - q[0]).abs() < 1e-6 && (p[1] - q[1]).abs() < 1e-6);
        }
    }

    #[test]
    fn composes_component_operations() {
        let reference = builtin_reference("avg-all-face-lmd").unwrap();
        let t0 = SimilarityTransform::new(1.2, -0.2, 30.0, 50.0).unwrap();
        let img = Image::from_fn(250, 260, |x, y| ((x ^ y) & 0xff) as f32);
        let lm = t0.apply_landmarks(reference.landmarks());
        let (crop, _) = align(&img, &lm, &reference, None).unwrap();

        let (corrected, rotated) = roll_correct(&img, &lm).unwrap();
        let t = estimate_similarity_transform(&rotated, reference.landmarks()).unwrap();
        let manual = warp_and_crop(&corrected, &t, &reference);
        assert_eq!(crop, manual);
    }

    #[test]
    fn redetect_callback_sees_corrected_image() {
        let reference = builtin_reference("avg-all-face-lmd").unwrap();
        let t0 = SimilarityTransform::new(1.0, 0.3, 60.0, 20.0).unwrap();
        let img = Image::zeros(260, 260, 1).unwrap();
        let lm = t0.apply_landmarks(reference.landmarks());
        let detect = |_: &Image, seeds: &LandmarkSet| -> Result<LandmarkSet, String> {
            if estimate_roll(seeds).unwrap().abs() > 1e-9 {
                return Err("seeds not levelled".into());
            }
            Ok(seeds.map_points(|p| [p[0] + 1.0, p[1]]))
        };
        let a = align_with_transforms(&img, &lm, &reference, Some(&detect)).unwrap();
        let (_, rotated) = roll_correct(&img, &lm).unwrap();
        assert!(
            (a.corrected_landmarks.points()[0][0] - rotated.points()[0][0] - 1.0).abs() < 1e-12
        );

        let failing = |_: &Image, _: &LandmarkSet| -> Result<LandmarkSet, String> {
            Err("no face".into())
        };
        assert!(matches!(
            align(&img, &lm, &reference, Some(&failing)),
            Err(GeometryError::Redetect(_))
        ));
    }
}
