//! Variational Monte Carlo surrogates for parametric diffusion problems.
//!
//! P1 finite elements produce samples of the parameter-to-solution map, a
//! tensor train over orthonormal polynomial chaos is fitted to them by
//! alternating least squares, and [`bounds`] evaluates the generalization
//! estimates that go with empirical risk minimization. Numerical code is
//! generic over [`Real`] (`f32` or `f64`); the aliases below fix `f64`.

pub mod bounds;
pub mod error;
pub mod experiment;
pub mod fem;
pub mod field;
pub mod mesh;
pub mod poly;
pub mod reconstruct;
pub mod sampling;
pub mod scalar;
pub mod sobol;
pub mod sparse;
pub mod tt;

pub use bounds::{
    bound_report, generalization_bound, samples_for_confidence, BoundInputs, Concentration,
};
pub use error::{Result, VmcError};
pub use experiment::{run_pipeline, ErrorRecord, Metric, RunConfig};
pub use fem::{FemFunction, FemSpace, ParametricSolver};
pub use field::{CoefficientModel, ParameterDomain, ProblemSpec};
pub use mesh::{build_unit_square_mesh, Mesh2D};
pub use poly::{BasisFamily, BasisSpec};
pub use reconstruct::{reconstruct, AlsConfig, FitReport, TrainingData};
pub use sampling::{sample_pseudo, sample_sobol, SampleSet};
pub use scalar::Real;
pub use sparse::SparseSpdOperator;
pub use tt::TensorTrain;

pub type Mesh = Mesh2D<f64>;
pub type Problem = ProblemSpec<f64>;
pub type Solver = ParametricSolver<f64>;
pub type Field = FemFunction<f64>;
pub type Tt = TensorTrain<f64>;
pub type Inputs = BoundInputs<f64>;
pub type Data = TrainingData<f64>;
