//! Similarity space shared by contexts and arm statistics.
//!
//! Distances are Euclidean, normalized by the arena diameter and clamped to
//! 1, so the whole space has diameter 1 and ball radii of the form `2^-j`
//! tile it cleanly. Membership tests are inclusive on the boundary.

use thiserror::Error;

/// Errors raised by similarity-space constructors and queries.
#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("context dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("context coordinates must be finite, got {0}")]
    NonFiniteCoordinate(f64),
    #[error("context must have at least one coordinate")]
    EmptyContext,
    #[error("space dimension must be at least 1")]
    ZeroDimension,
    #[error("space diameter must be positive and finite, got {0}")]
    InvalidDiameter(f64),
    #[error("ball radius must be a power of 1/2 in (0, 1], got {0}")]
    InvalidRadius(f64),
}

/// A point in the similarity space (a client location in meters, typically).
#[derive(Debug, Clone, PartialEq)]
pub struct Context {
    coords: Vec<f64>,
}

impl Context {
    /// Builds a context from raw coordinates, rejecting NaN and infinities.
    pub fn new(coords: Vec<f64>) -> Result<Self, MetricError> {
        if coords.is_empty() {
            return Err(MetricError::EmptyContext);
        }
        if let Some(&bad) = coords.iter().find(|c| !c.is_finite()) {
            return Err(MetricError::NonFiniteCoordinate(bad));
        }
        Ok(Self { coords })
    }

    /// Convenience constructor for the planar case.
    pub fn xy(x: f64, y: f64) -> Result<Self, MetricError> {
        Self::new(vec![x, y])
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dimension(&self) -> usize {
        self.coords.len()
    }
}

/// Dimension and diameter of the arena the normalized metric lives on.
///
/// # Example
///
/// ```
/// use cbwp::metric::{Context, SimilaritySpace};
///
/// let space = SimilaritySpace::new(2, 10.0).unwrap();
/// let a = Context::xy(0.0, 0.0).unwrap();
/// let b = Context::xy(3.0, 4.0).unwrap();
/// assert_eq!(space.distance(&a, &b).unwrap(), 0.5);
///
/// // Separations past the diameter saturate at 1.
/// let far = Context::xy(30.0, 40.0).unwrap();
/// assert_eq!(space.distance(&a, &far).unwrap(), 1.0);
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilaritySpace {
    dimension: usize,
    diameter: f64,
}

impl SimilaritySpace {
    /// Creates a space of the given dimension whose unnormalized extent is
    /// `diameter` (in the same units as context coordinates).
    pub fn new(dimension: usize, diameter: f64) -> Result<Self, MetricError> {
        if dimension == 0 {
            return Err(MetricError::ZeroDimension);
        }
        if !(diameter.is_finite() && diameter > 0.0) {
            return Err(MetricError::InvalidDiameter(diameter));
        }
        Ok(Self { dimension, diameter })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Normalized distance: Euclidean separation over the diameter, clamped
    /// to 1. Symmetric, satisfies the triangle inequality, and stays in
    /// `[0, 1]`.
    pub fn distance(&self, a: &Context, b: &Context) -> Result<f64, MetricError> {
        self.check_dimension(a)?;
        self.check_dimension(b)?;
        Ok(normalized_distance(a.coords(), b.coords(), self.diameter))
    }

    pub(crate) fn check_dimension(&self, x: &Context) -> Result<(), MetricError> {
        if x.dimension() != self.dimension {
            return Err(MetricError::DimensionMismatch {
                expected: self.dimension,
                actual: x.dimension(),
            });
        }
        Ok(())
    }
}

/// Distance kernel for callers that have already validated dimensions.
pub(crate) fn normalized_distance(a: &[f64], b: &[f64], diameter: f64) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (sq.sqrt() / diameter).min(1.0)
}

/// Center and radius of a ball in the normalized metric.
///
/// Radii are restricted to powers of 1/2 so that every child ball created by
/// halving keeps an exactly representable radius.
#[derive(Debug, Clone, PartialEq)]
pub struct BallGeometry {
    center: Context,
    radius: f64,
}

impl BallGeometry {
    pub fn new(center: Context, radius: f64) -> Result<Self, MetricError> {
        if !is_halving_radius(radius) {
            return Err(MetricError::InvalidRadius(radius));
        }
        Ok(Self { center, radius })
    }

    pub fn center(&self) -> &Context {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Inclusive membership test: boundary points belong to the ball.
    ///
    /// # Example
    ///
    /// ```
    /// use cbwp::metric::{BallGeometry, Context, SimilaritySpace};
    ///
    /// let space = SimilaritySpace::new(2, 10.0).unwrap();
    /// let ball = BallGeometry::new(Context::xy(0.0, 0.0).unwrap(), 0.25).unwrap();
    /// assert!(!ball.contains(&space, &Context::xy(3.0, 0.0).unwrap()).unwrap());
    /// assert!(ball.contains(&space, &Context::xy(2.5, 0.0).unwrap()).unwrap());
    /// ```
    pub fn contains(&self, space: &SimilaritySpace, x: &Context) -> Result<bool, MetricError> {
        Ok(space.distance(&self.center, x)? <= self.radius)
    }
}

/// True for radii of the form `2^-j` with `j >= 0`.
fn is_halving_radius(radius: f64) -> bool {
    radius > 0.0 && radius <= 1.0 && radius.log2().fract() == 0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ctx(coords: &[f64]) -> Context {
        Context::new(coords.to_vec()).unwrap()
    }

    #[test]
    fn distance_normalizes_by_diameter() {
        let space = SimilaritySpace::new(2, 10.0).unwrap();
        let d = space.distance(&ctx(&[0.0, 0.0]), &ctx(&[3.0, 4.0])).unwrap();
        assert_eq!(d, 0.5);
    }

    #[test]
    fn distance_clamps_to_one() {
        let space = SimilaritySpace::new(2, 10.0).unwrap();
        let d = space
            .distance(&ctx(&[0.0, 0.0]), &ctx(&[30.0, 40.0]))
            .unwrap();
        assert_eq!(d, 1.0);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let space = SimilaritySpace::new(2, 10.0).unwrap();
        let err = space
            .distance(&ctx(&[0.0, 0.0]), &ctx(&[1.0, 2.0, 3.0]))
            .unwrap_err();
        assert_eq!(
            err,
            MetricError::DimensionMismatch {
                expected: 2,
                actual: 3
            }
        );
    }

    #[test]
    fn membership_is_inclusive_on_the_boundary() {
        let space = SimilaritySpace::new(2, 10.0).unwrap();
        let ball = BallGeometry::new(ctx(&[0.0, 0.0]), 0.25).unwrap();
        assert!(!ball.contains(&space, &ctx(&[3.0, 0.0])).unwrap());
        assert!(ball.contains(&space, &ctx(&[2.5, 0.0])).unwrap());
    }

    #[test]
    fn radius_must_be_a_power_of_one_half() {
        let center = ctx(&[0.0, 0.0]);
        for ok in [1.0, 0.5, 0.25, 2f64.powi(-20)] {
            assert!(BallGeometry::new(center.clone(), ok).is_ok(), "{ok}");
        }
        for bad in [0.0, -0.5, 0.3, 0.75, 2.0, f64::NAN] {
            assert!(BallGeometry::new(center.clone(), bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn non_finite_coordinates_are_rejected() {
        assert!(Context::new(vec![0.0, f64::NAN]).is_err());
        assert!(Context::new(vec![f64::INFINITY]).is_err());
        assert!(Context::new(vec![]).is_err());
    }

    fn space_and_points(
        max_dim: usize,
    ) -> impl Strategy<Value = (SimilaritySpace, Vec<Vec<f64>>)> {
        (1..=max_dim, 0.1f64..100.0).prop_flat_map(|(dim, diameter)| {
            let point = proptest::collection::vec(-50.0f64..50.0, dim);
            (
                Just(SimilaritySpace::new(dim, diameter).unwrap()),
                proptest::collection::vec(point, 3),
            )
        })
    }

    proptest! {
        #[test]
        fn distance_is_symmetric_and_bounded((space, pts) in space_and_points(4)) {
            let a = ctx(&pts[0]);
            let b = ctx(&pts[1]);
            let ab = space.distance(&a, &b).unwrap();
            let ba = space.distance(&b, &a).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn distance_satisfies_the_triangle_inequality((space, pts) in space_and_points(4)) {
            let (a, b, c) = (ctx(&pts[0]), ctx(&pts[1]), ctx(&pts[2]));
            let ac = space.distance(&a, &c).unwrap();
            let ab = space.distance(&a, &b).unwrap();
            let bc = space.distance(&b, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
        }

        #[test]
        fn unit_ball_covers_the_space((space, pts) in space_and_points(4)) {
            let ball = BallGeometry::new(ctx(&pts[0]), 1.0).unwrap();
            prop_assert!(ball.contains(&space, &ctx(&pts[1])).unwrap());
        }
    }
}
