use super::{GeometryError, LandmarkSet};

/// Non-reflective 2D similarity `x' = a x - b y + tx`, `y' = b x + a y + ty`
/// with `a = s cos(theta)` and `b = s sin(theta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    a: f64,
    b: f64,
    tx: f64,
    ty: f64,
}

impl SimilarityTransform {
    pub const IDENTITY: SimilarityTransform = SimilarityTransform {
        a: 1.0,
        b: 0.0,
        tx: 0.0,
        ty: 0.0,
    };

    pub fn new(scale: f64, theta: f64, tx: f64, ty: f64) -> Result<Self, GeometryError> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(GeometryError::InvalidTransform("scale must be finite and > 0"));
        }
        if !(theta.is_finite() && tx.is_finite() && ty.is_finite()) {
            return Err(GeometryError::InvalidTransform("non-finite parameter"));
        }
        let (sin, cos) = theta.sin_cos();
        Ok(Self {
            a: scale * cos,
            b: scale * sin,
            tx,
            ty,
        })
    }

    /// Builds the transform from its linear coefficients; `(a, b)` must not be zero.
    pub fn from_coefficients(a: f64, b: f64, tx: f64, ty: f64) -> Result<Self, GeometryError> {
        if ![a, b, tx, ty].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidTransform("non-finite parameter"));
        }
        if a == 0.0 && b == 0.0 {
            return Err(GeometryError::InvalidTransform("zero scale"));
        }
        Ok(Self { a, b, tx, ty })
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            a: 1.0,
            b: 0.0,
            tx,
            ty,
        }
    }

    /// Rotation by `theta` about `center`.
    pub fn rotation_about(theta: f64, center: [f64; 2]) -> Self {
        let (b, a) = theta.sin_cos();
        let [cx, cy] = center;
        Self {
            a,
            b,
            tx: cx - (a * cx - b * cy),
            ty: cy - (b * cx + a * cy),
        }
    }

    pub fn coefficients(&self) -> (f64, f64, f64, f64) {
        (self.a, self.b, self.tx, self.ty)
    }

    pub fn scale(&self) -> f64 {
        self.a.hypot(self.b)
    }

    pub fn angle(&self) -> f64 {
        self.b.atan2(self.a)
    }

    pub fn translation_vector(&self) -> [f64; 2] {
        [self.tx, self.ty]
    }

    /// Homogeneous 3x3 matrix, row-major.
    pub fn matrix(&self) -> [[f64; 3]; 3] {
        [
            [self.a, -self.b, self.tx],
            [self.b, self.a, self.ty],
            [0.0, 0.0, 1.0],
        ]
    }

    #[inline]
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        [
            self.a * p[0] - self.b * p[1] + self.tx,
            self.b * p[0] + self.a * p[1] + self.ty,
        ]
    }

    pub fn apply_landmarks(&self, set: &LandmarkSet) -> LandmarkSet {
        set.map_points(|p| self.apply(p))
    }

    pub fn inverse(&self) -> Self {
        let d = self.a * self.a + self.b * self.b;
        let ia = self.a / d;
        let ib = -self.b / d;
        Self {
            a: ia,
            b: ib,
            tx: -(ia * self.tx - ib * self.ty),
            ty: -(ib * self.tx + ia * self.ty),
        }
    }

    /// `self * other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &SimilarityTransform) -> Self {
        Self {
            a: self.a * other.a - self.b * other.b,
            b: self.b * other.a + self.a * other.b,
            tx: self.a * other.tx - self.b * other.ty + self.tx,
            ty: self.b * other.tx + self.a * other.ty + self.ty,
        }
    }

    /// Sum of squared distances between mapped `src` points and `dst`.
    pub fn residual(&self, src: &LandmarkSet, dst: &LandmarkSet) -> f64 {
        src.points()
            .iter()
            .zip(dst.points())
            .map(|(&p, q)| {
                let m = self.apply(p);
                (m[0] - q[0]).powi(2) + (m[1] - q[1]).powi(2)
            })
            .sum()
    }

    /// Frobenius distance between the homogeneous matrices.
    pub fn frobenius_distance(&self, other: &SimilarityTransform) -> f64 {
        // the (a, b) entries each appear twice in the 2x2 block
        (2.0 * (self.a - other.a).powi(2)
            + 2.0 * (self.b - other.b).powi(2)
            + (self.tx - other.tx).powi(2)
            + (self.ty - other.ty).powi(2))
        .sqrt()
    }
}

impl Default for SimilarityTransform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

/// Least-squares similarity mapping `src` landmarks onto `reference`
/// with uniform point weights.
///
/// The objective is linear in `(a, b, tx, ty)`; centering both point sets
/// decouples the translation from the linear part and gives the unique
/// solution of the 4x4 normal equations in closed form.
pub fn estimate_similarity_transform(
    src: &LandmarkSet,
    reference: &LandmarkSet,
) -> Result<SimilarityTransform, GeometryError> {
    if src.schema() != reference.schema() || src.len() != reference.len() {
        return Err(GeometryError::SchemaMismatch(
            format!("{}[{}]", src.schema(), src.len()),
            format!("{}[{}]", reference.schema(), reference.len()),
        ));
    }
    if src.len() < 2 {
        return Err(GeometryError::DegenerateConfiguration(
            "at least two points are required",
        ));
    }
    let [sx, sy] = src.centroid();
    let [rx, ry] = reference.centroid();

    let mut spread = 0.0;
    let mut magnitude = 0.0;
    let mut dot = 0.0;
    let mut cross = 0.0;
    for (p, q) in src.points().iter().zip(reference.points()) {
        let (x, y) = (p[0] - sx, p[1] - sy);
        let (u, v) = (q[0] - rx, q[1] - ry);
        spread += x * x + y * y;
        magnitude += p[0] * p[0] + p[1] * p[1];
        dot += x * u + y * v;
        cross += x * v - y * u;
    }
    if spread <= f64::EPSILON * magnitude || spread == 0.0 {
        return Err(GeometryError::DegenerateConfiguration(
            "source points are coincident",
        ));
    }
    let a = dot / spread;
    let b = cross / spread;
    if a == 0.0 && b == 0.0 {
        return Err(GeometryError::DegenerateConfiguration(
            "reference points are coincident",
        ));
    }
    Ok(SimilarityTransform {
        a,
        b,
        tx: rx - (a * sx - b * sy),
        ty: ry - (b * sx + a * sy),
    })
}
