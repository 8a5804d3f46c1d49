//! Point cloud normal estimation by weighted n-jet fitting.
//!
//! The crate is organised bottom-up:
//!
//! * [`geom`]: points, unit vectors, quaternion rotations, k-NN patch extraction.
//! * [`jet`]: Vandermonde systems, the weighted least-squares jet solve, weight
//!   generators (uniform, Gaussian, Welsch IRLS) and the hull flatness diagnostic.
//! * [`alignment`]: PCA framing and the iterative fit/rotate/refit loop that
//!   drives the estimated normal onto the z axis.
//! * [`sensitivity`]: analytic derivatives of coefficients and normal with
//!   respect to the point weights.
//! * [`estimate`]: per-patch pipelines and parallel whole-cloud estimation
//!   with PCA fallback.
//! * [`refine`]: residual normal correction and the training loss terms.
//! * [`lab`]: analytic surfaces, patch samplers, convergence studies and
//!   evaluation metrics.
//! * [`io`]: `.xyz` / `.normals` text files and PLY error heatmaps.

pub mod alignment;
pub mod error;
pub mod estimate;
pub mod geom;
pub mod io;
pub mod jet;
pub mod lab;
pub mod refine;
pub mod sensitivity;

pub use error::{Error, Result};
pub use geom::{PatchNeighborhood, Point3, PointCloud, Rotation, UnitVector3};
pub use jet::{JetCoefficients, JetFit, WeightVector};
