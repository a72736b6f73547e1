pub mod cbf;
pub mod dynamics;
pub mod experiments;
pub mod scenario;
pub mod solvers;
pub mod volume;
