//! Applied map updates, kept so that continuous and BEV queries can replay
//! exactly what the voxel grid received.

use nalgebra::{Matrix2, Matrix3, SVector, Vector2, Vector3};

use crate::ellipsoid::{Ellipse, Ellipsoid, EllipsoidError, EllipsoidN};
use crate::kernel::sparse_kernel_unchecked;

/// Spatial extent of one contribution.
#[derive(Debug, Clone, PartialEq)]
pub enum Footprint {
    /// Counts toward the voxel containing the center only.
    Voxel,
    /// Kernel over Euclidean distance to the center.
    Point,
    /// Kernel over distance to the ellipsoid surface.
    Ellipsoid(Ellipsoid),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Contribution {
    pub center: Vector3<f64>,
    /// Regularized covariance; zero for non-ellipsoid footprints.
    pub cov: Matrix3<f64>,
    pub footprint: Footprint,
    pub prob: Vec<f64>,
    pub u: f64,
    /// Kernel support length.
    pub support: f64,
}

/// Footprint after dropping the vertical axis.
#[derive(Debug, Clone, PartialEq)]
pub enum Footprint2 {
    Cell,
    Point,
    Ellipse(Ellipse),
}

fn shape_weight<const D: usize>(
    shape: &EllipsoidN<D>,
    x: &SVector<f64, D>,
    support: f64,
) -> f64 {
    if shape.distance_lower_bound(x) >= support {
        return 0.0;
    }
    sparse_kernel_unchecked(shape.surface_distance(x), support)
}

impl Contribution {
    pub fn point(center: Vector3<f64>, prob: Vec<f64>, u: f64, support: f64) -> Self {
        Self {
            center,
            cov: Matrix3::zeros(),
            footprint: Footprint::Point,
            prob,
            u,
            support,
        }
    }

    pub fn voxel(center: Vector3<f64>, prob: Vec<f64>, u: f64) -> Self {
        Self {
            center,
            cov: Matrix3::zeros(),
            footprint: Footprint::Voxel,
            prob,
            u,
            support: 0.0,
        }
    }

    pub fn ellipsoid(
        center: Vector3<f64>,
        cov: Matrix3<f64>,
        tau: f64,
        prob: Vec<f64>,
        u: f64,
        support: f64,
    ) -> Result<Self, EllipsoidError> {
        let shape = Ellipsoid::from_gaussian(center, &cov, tau)?;
        Ok(Self {
            center,
            cov,
            footprint: Footprint::Ellipsoid(shape),
            prob,
            u,
            support,
        })
    }

    /// Distance from the center beyond which the weight is zero.
    pub fn reach(&self) -> f64 {
        match &self.footprint {
            Footprint::Voxel => 0.0,
            Footprint::Point => self.support,
            Footprint::Ellipsoid(e) => self.support + e.max_semi_axis(),
        }
    }

    /// Kernel weight at `x`. Voxel footprints have no kernel and report 0.
    pub fn weight(&self, x: &Vector3<f64>) -> f64 {
        match &self.footprint {
            Footprint::Voxel => 0.0,
            Footprint::Point => sparse_kernel_unchecked((x - self.center).norm(), self.support),
            Footprint::Ellipsoid(e) => shape_weight(e, x, self.support),
        }
    }

    /// xy marginal of the footprint with level set `tau2`.
    pub fn project_xy(&self, tau2: f64) -> Result<Footprint2, EllipsoidError> {
        Ok(match &self.footprint {
            Footprint::Voxel => Footprint2::Cell,
            Footprint::Point => Footprint2::Point,
            Footprint::Ellipsoid(_) => {
                let block = Matrix2::new(
                    self.cov[(0, 0)],
                    self.cov[(0, 1)],
                    self.cov[(1, 0)],
                    self.cov[(1, 1)],
                );
                Footprint2::Ellipse(Ellipse::from_gaussian(self.center.xy(), &block, tau2)?)
            }
        })
    }
}

impl Footprint2 {
    pub fn reach(&self, support: f64) -> f64 {
        match self {
            Footprint2::Cell => 0.0,
            Footprint2::Point => support,
            Footprint2::Ellipse(e) => support + e.max_semi_axis(),
        }
    }

    pub fn weight(&self, center: &Vector2<f64>, x: &Vector2<f64>, support: f64) -> f64 {
        match self {
            Footprint2::Cell => 0.0,
            Footprint2::Point => sparse_kernel_unchecked((x - center).norm(), support),
            Footprint2::Ellipse(e) => shape_weight(e, x, support),
        }
    }
}
