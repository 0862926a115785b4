pub mod report;
pub mod search;
pub mod seed;
