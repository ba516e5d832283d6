//! Symbolic exterior calculus on coordinate domains, families of regular
//! foliations, Godbillon-Vey forms and a batch verifier for them.

pub mod chart;
pub mod config;
pub mod error;
pub mod foliation;
pub mod forms;
pub mod gv;
pub mod random;
pub mod region;
pub mod report;
pub mod runner;
pub mod singular;
pub mod spec;
pub mod symbolic;
pub mod testfn;
pub mod verdict;

pub use chart::Chart;
pub use config::ZeroTestConfig;
pub use error::{Error, Result};
pub use forms::{CoordinateMap, Form};
pub use region::Region;
pub use symbolic::{Expr, Point, Rational, Symbol};
pub use verdict::{is_zero_on, Verdict, Witness};
