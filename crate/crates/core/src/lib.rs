//! Tail-fairness auditing of binary classifiers with extreme value theory.

pub mod cli;
pub mod discrimination;
pub mod evt;
pub mod mitigation;
pub mod parallel;
pub mod report;
pub mod scoring;
pub mod statcompare;
pub mod synthgen;
pub mod tailsampler;
pub mod tabular;
