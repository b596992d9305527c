pub mod gaussian;
pub mod spec;
pub mod layout;
pub mod synthetic;
pub mod planner;
pub mod diffusion;
pub mod composer;
pub mod camera;
pub mod filter;
