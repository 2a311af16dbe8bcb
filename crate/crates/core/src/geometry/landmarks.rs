use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use super::GeometryError;

/// Landmark convention. The two built-in schemas follow the 5-point
/// (eyes, nose tip, mouth corners) and the 68-point iBUG layouts, with
/// indices counted from the image-left side.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum LandmarkSchema {
    FivePoint,
    SixtyEightPoint,
    Custom(String),
}

impl LandmarkSchema {
    pub fn id(&self) -> &str {
        match self {
            LandmarkSchema::FivePoint => "5pt",
            LandmarkSchema::SixtyEightPoint => "68pt",
            LandmarkSchema::Custom(id) => id,
        }
    }

    /// Declared point count; `None` for custom schemas.
    pub fn point_count(&self) -> Option<usize> {
        match self {
            LandmarkSchema::FivePoint => Some(5),
            LandmarkSchema::SixtyEightPoint => Some(68),
            LandmarkSchema::Custom(_) => None,
        }
    }

    /// Index groups whose means define the image-left and image-right eye.
    fn eye_anchors(&self) -> Option<(&'static [usize], &'static [usize])> {
        match self {
            LandmarkSchema::FivePoint => Some((&[0], &[1])),
            // outer and inner eye corners
            LandmarkSchema::SixtyEightPoint => Some((&[36, 39], &[42, 45])),
            LandmarkSchema::Custom(_) => None,
        }
    }
}

impl FromStr for LandmarkSchema {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "5pt" => LandmarkSchema::FivePoint,
            "68pt" => LandmarkSchema::SixtyEightPoint,
            other => LandmarkSchema::Custom(other.to_string()),
        })
    }
}

impl fmt::Display for LandmarkSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// The n key points of one face image, in pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    schema: LandmarkSchema,
    points: Vec<[f64; 2]>,
}

impl LandmarkSet {
    pub fn new(schema: LandmarkSchema, points: Vec<[f64; 2]>) -> Result<Self, GeometryError> {
        if let Some(expected) = schema.point_count() {
            if expected != points.len() {
                return Err(GeometryError::PointCount {
                    schema: schema.id().to_string(),
                    expected,
                    actual: points.len(),
                });
            }
        }
        if let Some(i) = points
            .iter()
            .position(|p| !p[0].is_finite() || !p[1].is_finite())
        {
            return Err(GeometryError::NonFinite(i));
        }
        Ok(Self { schema, points })
    }

    pub fn schema(&self) -> &LandmarkSchema {
        &self.schema
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> [f64; 2] {
        let n = self.points.len().max(1) as f64;
        let (sx, sy) = self
            .points
            .iter()
            .fold((0.0, 0.0), |(sx, sy), p| (sx + p[0], sy + p[1]));
        [sx / n, sy / n]
    }

    /// Applies `f` to every point, keeping the schema.
    pub fn map_points(&self, mut f: impl FnMut([f64; 2]) -> [f64; 2]) -> LandmarkSet {
        LandmarkSet {
            schema: self.schema.clone(),
            points: self.points.iter().map(|&p| f(p)).collect(),
        }
    }

    /// Mean positions of the image-left and image-right eyes.
    pub fn eye_centers(&self) -> Result<([f64; 2], [f64; 2]), GeometryError> {
        let (left, right) = self
            .schema
            .eye_anchors()
            .ok_or_else(|| GeometryError::MissingAnchors(self.schema.id().to_string()))?;
        let mean = |idx: &[usize]| {
            let (sx, sy) = idx.iter().fold((0.0, 0.0), |(sx, sy), &i| {
                (sx + self.points[i][0], sy + self.points[i][1])
            });
            [sx / idx.len() as f64, sy / idx.len() as f64]
        };
        Ok((mean(left), mean(right)))
    }
}

/// Roll angle of the eye line, `atan2(dy, dx)` of right eye minus left eye,
/// reported in (-pi, pi].
pub fn estimate_roll(landmarks: &LandmarkSet) -> Result<f64, GeometryError> {
    let (l, r) = landmarks.eye_centers()?;
    let angle = (r[1] - l[1]).atan2(r[0] - l[0]);
    Ok(if angle <= -PI { PI } else { angle })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn five(left: [f64; 2], right: [f64; 2]) -> LandmarkSet {
        LandmarkSet::new(
            LandmarkSchema::FivePoint,
            vec![left, right, [64.0, 90.0], [48.0, 120.0], [80.0, 120.0]],
        )
        .unwrap()
    }

    #[test]
    fn horizontal_eye_line_has_zero_roll() {
        assert_eq!(estimate_roll(&five([40.0, 60.0], [88.0, 60.0])).unwrap(), 0.0);
    }

    #[test]
    fn roll_from_known_angle() {
        let r = [40.0 + 48.0 * 0.2f64.cos(), 60.0 + 48.0 * 0.2f64.sin()];
        let roll = estimate_roll(&five([40.0, 60.0], r)).unwrap();
        assert!((roll - 0.2).abs() < 1e-12);
    }

    #[test]
    fn swapped_eyes_give_pi() {
        assert_eq!(estimate_roll(&five([88.0, 60.0], [40.0, 60.0])).unwrap(), PI);
        // negative zero in dy must not produce -pi
        assert_eq!(estimate_roll(&five([88.0, -0.0], [40.0, 0.0])).unwrap(), PI);
    }

    #[test]
    fn sixty_eight_point_anchors_use_eye_corners() {
        let mut pts = vec![[0.0, 0.0]; 68];
        pts[36] = [30.0, 50.0];
        pts[39] = [50.0, 50.0];
        pts[42] = [78.0, 70.0];
        pts[45] = [98.0, 70.0];
        let set = LandmarkSet::new(LandmarkSchema::SixtyEightPoint, pts).unwrap();
        let (l, r) = set.eye_centers().unwrap();
        assert_eq!(l, [40.0, 50.0]);
        assert_eq!(r, [88.0, 70.0]);
        assert!((estimate_roll(&set).unwrap() - (20.0f64).atan2(48.0)).abs() < 1e-15);
    }

    #[test]
    fn custom_schema_lacks_anchors() {
        let set = LandmarkSet::new(LandmarkSchema::Custom("3pt".into()), vec![[0.0, 0.0]; 3])
            .unwrap();
        assert!(matches!(
            estimate_roll(&set),
            Err(GeometryError::MissingAnchors(_))
        ));
    }

    #[test]
    fn validates_count_and_finiteness() {
        assert!(matches!(
            LandmarkSet::new(LandmarkSchema::FivePoint, vec![[0.0, 0.0]; 4]),
            Err(GeometryError::PointCount { expected: 5, .. })
        ));
        let mut pts = vec![[0.0, 0.0]; 5];
        pts[3][1] = f64::NAN;
        assert_eq!(
            LandmarkSet::new(LandmarkSchema::FivePoint, pts),
            Err(GeometryError::NonFinite(3))
        );
    }

    #[test]
    fn schema_ids_round_trip() {
        for id in ["5pt", "68pt", "21pt"] {
            assert_eq!(id.parse::<LandmarkSchema>().unwrap().id(), id);
        }
    }
}
