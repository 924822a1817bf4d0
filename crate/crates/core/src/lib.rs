//! Numerical toolkit for the even L_p Minkowski problem on the circle and the
//! two-sphere: spectral discretization of support functions, the L_p
//! Brunn-Minkowski inequalities, the Hilbert-Brunn-Minkowski spectrum, a
//! variational Minkowski solver and the stability experiments built on it.

pub mod body;
pub mod error;
pub mod lp;
pub mod solver;
pub mod spectrum;
pub mod sphere;
pub mod stability;
pub mod variation;

pub use body::{
    ball, catalog, lq_ball, lq_family, make_body, support_distance, BodyFile, BodyMeta, CatalogEntry, ConvexBody,
    MeasureField, MeasureKind, SupportGeometry,
};
pub use error::{InvalidReason, MinkError, Result};
pub use sphere::{
    build_domain, BasisKind, BasisLabel, BasisTable, Domain, DomainSpec, HessianField,
    ScalarField, TangentField,
};
