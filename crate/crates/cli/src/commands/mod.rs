pub mod cohort;
pub mod fit;
pub mod group;
pub mod pp;
pub mod scheme;
pub mod simulate;
