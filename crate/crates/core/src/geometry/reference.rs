use std::fmt::Write as _;
use std::str::FromStr;

use super::{estimate_similarity_transform, GeometryError, LandmarkSchema, LandmarkSet};

pub const DEFAULT_CROP_WIDTH: usize = 128;
pub const DEFAULT_CROP_HEIGHT: usize = 160;

/// Names of the reference models shipped with the crate.
pub const BUILTIN_REFERENCES: [&str; 3] = [
    "avg-all-face-lmd",
    "avg-frontal-face-lmd",
    "avg-profile-face-lmd",
];

const BUILTIN_TEXT: [&str; 3] = [
    include_str!("../../data/avg-all-face-lmd.ref"),
    include_str!("../../data/avg-frontal-face-lmd.ref"),
    include_str!("../../data/avg-profile-face-lmd.ref"),
];

/// Target landmark layout in the crop coordinate frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceModel {
    name: String,
    landmarks: LandmarkSet,
    crop_width: usize,
    crop_height: usize,
}

impl ReferenceModel {
    pub fn new(
        name: impl Into<String>,
        landmarks: LandmarkSet,
        crop_width: usize,
        crop_height: usize,
    ) -> Result<Self, GeometryError> {
        let name = name.into();
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(GeometryError::Reference(format!(
                "invalid model name {name:?}"
            )));
        }
        if crop_width == 0 || crop_height == 0 {
            return Err(GeometryError::Reference("empty crop".into()));
        }
        let (w, h) = (crop_width as f64, crop_height as f64);
        if let Some(i) = landmarks
            .points()
            .iter()
            .position(|p| !(p[0] >= 0.0 && p[0] <= w && p[1] >= 0.0 && p[1] <= h))
        {
            return Err(GeometryError::Reference(format!(
                "landmark {i} lies outside the {crop_width}x{crop_height} crop"
            )));
        }
        Ok(Self {
            name,
            landmarks,
            crop_width,
            crop_height,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn landmarks(&self) -> &LandmarkSet {
        &self.landmarks
    }

    pub fn crop_width(&self) -> usize {
        self.crop_width
    }

    pub fn crop_height(&self) -> usize {
        self.crop_height
    }

    /// Serializes to the line-oriented reference file format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "name {}", self.name);
        let _ = writeln!(out, "schema {}", self.landmarks.schema());
        let _ = writeln!(out, "crop_width {}", self.crop_width);
        let _ = writeln!(out, "crop_height {}", self.crop_height);
        let _ = writeln!(out, "points {}", self.landmarks.len());
        for p in self.landmarks.points() {
            let _ = writeln!(out, "{} {}", p[0], p[1]);
        }
        out
    }

    /// Scales and centres a landmark layout so its horizontal extent spans
    /// `fill` of the crop width, with the bounding box centred in the crop.
    pub fn fit_to_crop(
        name: impl Into<String>,
        layout: &LandmarkSet,
        crop_width: usize,
        crop_height: usize,
        fill: f64,
    ) -> Result<Self, GeometryError> {
        let pts = layout.points();
        let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in pts {
            min_x = min_x.min(p[0]);
            max_x = max_x.max(p[0]);
            min_y = min_y.min(p[1]);
            max_y = max_y.max(p[1]);
        }
        let span = max_x - min_x;
        if span.is_nan() || span <= 0.0 {
            return Err(GeometryError::DegenerateConfiguration(
                "layout has zero extent",
            ));
        }
        let s = fill * crop_width as f64 / span;
        let (cx, cy) = ((min_x + max_x) / 2.0, (min_y + max_y) / 2.0);
        let (ox, oy) = (crop_width as f64 / 2.0, crop_height as f64 / 2.0);
        let fitted = layout.map_points(|p| [ox + s * (p[0] - cx), oy + s * (p[1] - cy)]);
        Self::new(name, fitted, crop_width, crop_height)
    }
}

impl FromStr for ReferenceModel {
    type Err = GeometryError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let err = |line: usize, msg: &str| GeometryError::Reference(format!("line {line}: {msg}"));
        let mut name = None;
        let mut schema = None;
        let mut width = DEFAULT_CROP_WIDTH;
        let mut height = DEFAULT_CROP_HEIGHT;
        let mut expected: Option<usize> = None;
        let mut points = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut tokens = line.split_whitespace();
            let first = tokens.next().unwrap_or_default();
            let rest: Vec<&str> = tokens.collect();
            if expected.is_some() {
                if rest.len() != 1 {
                    return Err(err(lineno, "expected an `x y` pair"));
                }
                let x: f64 = first.parse().map_err(|_| err(lineno, "bad x coordinate"))?;
                let y: f64 = rest[0].parse().map_err(|_| err(lineno, "bad y coordinate"))?;
                points.push([x, y]);
                continue;
            }
            let value = match rest.as_slice() {
                [v] => *v,
                _ => return Err(err(lineno, "expected `key value`")),
            };
            let parse_dim = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| err(lineno, "bad integer value"))
            };
            match first {
                "name" => name = Some(value.to_string()),
                "schema" => schema = Some(LandmarkSchema::from_str(value).unwrap()),
                "crop_width" => width = parse_dim(value)?,
                "crop_height" => height = parse_dim(value)?,
                "points" => expected = Some(parse_dim(value)?),
                other => return Err(err(lineno, &format!("unknown key `{other}`"))),
            }
        }
        let name = name.ok_or_else(|| GeometryError::Reference("missing `name`".into()))?;
        let schema = schema.ok_or_else(|| GeometryError::Reference("missing `schema`".into()))?;
        let expected =
            expected.ok_or_else(|| GeometryError::Reference("missing `points` block".into()))?;
        if points.len() != expected {
            return Err(GeometryError::Reference(format!(
                "declared {expected} points, found {}",
                points.len()
            )));
        }
        let landmarks = LandmarkSet::new(schema, points)?;
        ReferenceModel::new(name, landmarks, width, height)
    }
}

/// Looks up one of the [`BUILTIN_REFERENCES`].
pub fn builtin_reference(name: &str) -> Option<ReferenceModel> {
    BUILTIN_REFERENCES
        .iter()
        .position(|&n| n == name)
        .map(|i| BUILTIN_TEXT[i].parse().expect("builtin reference parses"))
}

/// Generalized Procrustes mean of several landmark sets.
///
/// Every set is similarity-aligned to the running mean (initialised with
/// the first set) and the aligned sets are averaged, for `iterations`
/// rounds. The result lives in the frame of the first set.
pub fn average_landmarks(
    sets: &[LandmarkSet],
    iterations: usize,
) -> Result<LandmarkSet, GeometryError> {
    let first = sets
        .first()
        .ok_or(GeometryError::DegenerateConfiguration("no landmark sets"))?;
    let n = first.len();
    let mut mean = first.clone();
    for _ in 0..iterations.max(1) {
        let mut acc = vec![[0.0f64; 2]; n];
        for set in sets {
            let t = estimate_similarity_transform(set, &mean)?;
            for (a, p) in acc.iter_mut().zip(set.points()) {
                let q = t.apply(*p);
                a[0] += q[0];
                a[1] += q[1];
            }
        }
        let k = sets.len() as f64;
        let next = LandmarkSet::new(
            first.schema().clone(),
            acc.into_iter().map(|a| [a[0] / k, a[1] / k]).collect(),
        )?;
        // pin the mean back onto the first set to fix scale and pose drift
        let pin = estimate_similarity_transform(&next, first)?;
        mean = pin.apply_landmarks(&next);
    }
    Ok(mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SimilarityTransform;

    #[test]
    fn builtins_parse_and_fit_the_crop() {
        for name in BUILTIN_REFERENCES {
            let r = builtin_reference(name).unwrap();
            assert_eq!(r.name(), name);
            assert_eq!((r.crop_width(), r.crop_height()), (128, 160));
            assert_eq!(r.landmarks().schema(), &LandmarkSchema::FivePoint);
        }
        assert!(builtin_reference("nope").is_none());
    }

    #[test]
    fn text_round_trip() {
        let r = builtin_reference("avg-profile-face-lmd").unwrap();
        let back: ReferenceModel = r.to_text().parse().unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn rejects_points_outside_crop() {
        let text = "name x\nschema 5pt\npoints 5\n1 1\n2 2\n3 3\n4 4\n500 5\n";
        assert!(matches!(
            text.parse::<ReferenceModel>(),
            Err(GeometryError::Reference(_))
        ));
    }

    #[test]
    fn rejects_count_mismatch_and_unknown_keys() {
        let text = "name x\nschema 5pt\npoints 3\n1 1\n2 2\n3 3\n";
        assert!(text.parse::<ReferenceModel>().is_err());
        let text = "name x\ncolor red\n";
        assert!(text.parse::<ReferenceModel>().is_err());
    }

    #[test]
    fn procrustes_mean_of_similar_copies_is_the_shape() {
        let base = builtin_reference("avg-all-face-lmd").unwrap();
        let shape = base.landmarks().clone();
        let copies: Vec<_> = [(1.0, 0.0, 0.0, 0.0), (2.0, 0.4, 10.0, -5.0), (0.5, -1.0, 3.0, 3.0)]
            .iter()
            .map(|&(s, th, tx, ty)| {
                SimilarityTransform::new(s, th, tx, ty)
                    .unwrap()
                    .apply_landmarks(&shape)
            })
            .collect();
        let mean = average_landmarks(&copies, 3).unwrap();
        for (p, q) in mean.points().iter().zip(shape.points()) {
            assert!((p[0] - q[0]).abs() < 1e-9 && (p[1] - q[1]).abs() < 1e-9);
        }
        let fitted = ReferenceModel::fit_to_crop("fitted", &mean, 128, 160, 0.5).unwrap();
        let xs: Vec<f64> = fitted.landmarks().points().iter().map(|p| p[0]).collect();
        let span = xs.iter().cloned().fold(f64::MIN, f64::max)
            - xs.iter().cloned().fold(f64::MAX, f64::min);
        assert!((span - 64.0).abs() < 1e-9);
    }
}
