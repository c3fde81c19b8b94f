pub mod baseline;
pub mod datagen;
pub mod equiv;
pub mod error;
pub mod glm;
pub mod io;
pub mod numeric;
pub mod report;
pub mod simulation;

pub use error::{Error, Result};
