//! Command-line pipeline (placeholder).
pub fn run<I: Iterator<Item = String>>(_args: I) -> i32 { 0 }
