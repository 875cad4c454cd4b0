//! Straggler-resilient sketched second-order optimization on a simulated
//! serverless worker pool.
//!
//! The crate is organized around three layers:
//!
//! * numerical kernels: dense linear algebra ([`linalg`]), Count-Sketch
//!   blocks ([`sketch`]), and a 2D product code with a peeling decoder
//!   ([`coded`]);
//! * a deterministic virtual-clock executor that models a pool of
//!   ephemeral workers with heavy-tailed task times ([`sim`]);
//! * the optimization stack: sketched Gram/Hessian computation
//!   ([`oversketch`]), Newton-type and first-order solvers ([`solver`]),
//!   problem instantiations ([`problems`]), and the experiment harness
//!   ([`harness`]).

pub mod coded;
pub mod harness;
pub mod linalg;
pub mod oversketch;
pub mod problems;
pub mod seed;
pub mod sim;
pub mod sketch;
pub mod solver;

pub use linalg::DenseMatrix;
