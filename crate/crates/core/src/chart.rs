use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::symbolic::{Point, Symbol};

/// Ordered coordinate names of the single global chart.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Chart {
    coords: Arc<[Symbol]>,
}

impl Chart {
    pub fn new<S: AsRef<str>>(names: impl IntoIterator<Item = S>) -> Self {
        Chart {
            coords: names.into_iter().map(|s| Symbol::new(s.as_ref())).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[Symbol] {
        &self.coords
    }

    pub fn symbol(&self, i: usize) -> &Symbol {
        &self.coords[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.coords.iter().position(|s| s.as_str() == name)
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::UnknownCoordinate(name.to_string()))
    }

    pub fn same(&self, other: &Chart) -> bool {
        Arc::ptr_eq(&self.coords, &other.coords) || self.coords == other.coords
    }

    pub fn ensure_same(&self, other: &Chart) -> Result<()> {
        if self.same(other) {
            Ok(())
        } else {
            Err(Error::ChartMismatch(self.to_string(), other.to_string()))
        }
    }

    pub fn point(&self, values: &[f64]) -> Point {
        Point::new(self.coords.iter().map(|s| s.as_str().to_string()).zip(values.iter().copied()))
    }

    /// Values of `p` in chart order; missing coordinates are an error.
    pub fn values(&self, p: &Point) -> Result<Vec<f64>> {
        self.coords
            .iter()
            .map(|s| p.get(s.as_str()).ok_or_else(|| Error::UnknownCoordinate(s.to_string())))
            .collect()
    }
}

impl fmt::Display for Chart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.coords.iter().map(|s| s.as_str()).collect();
        f.write_str(&names.join(", "))
    }
}

impl fmt::Debug for Chart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Chart({self})")
    }
}
