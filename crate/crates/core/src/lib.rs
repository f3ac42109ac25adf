pub mod container;
pub mod datahub;
pub mod envs;
pub mod error;
pub mod expcli;
pub mod gacloop;
pub mod ndnet;
pub mod policy;
pub mod seeding;
pub mod trainers;
pub mod variations;

pub use error::{Error, Result};
