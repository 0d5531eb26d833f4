pub mod assess;
pub mod config;
pub mod lp;
pub mod model;
pub mod pipeline;
pub mod policies;
pub mod scenarios;
