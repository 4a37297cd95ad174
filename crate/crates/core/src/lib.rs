pub mod geometry;
pub mod kernels;
pub mod linalg;
pub mod operators;
pub mod oracle;
pub mod parallel;
pub mod postproc;
pub mod presets;
pub mod solver;
pub mod specfun;
pub mod validation;
