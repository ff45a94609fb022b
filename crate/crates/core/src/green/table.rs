//! Cached Green values with capacities and normalization metadata.

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Arc, RwLock};

use serde::Serialize;

use super::{GreenMetadata, GreenSource};
use crate::error::{Error, Result};

/// Tolerance of the `h_x(y) = h_y(x)` check on stored pairs.
pub const SYMMETRY_TOLERANCE: f64 = 1e-9;

/// Memoizing view of a [`GreenSource`]. Safe for concurrent reads and inserts.
#[derive(Debug)]
pub struct GreenTable<S: GreenSource> {
    source: Arc<S>,
    values: RwLock<HashMap<(S::Vertex, S::Vertex), f64>>,
    capacities: RwLock<HashMap<S::Vertex, f64>>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
struct TableHeader<'a> {
    #[serde(flatten)]
    metadata: &'a GreenMetadata,
    pairs: usize,
    columns: Vec<String>,
}

impl<S: GreenSource> GreenTable<S> {
    pub fn new(source: Arc<S>) -> Self {
        Self { source, values: RwLock::new(HashMap::new()), capacities: RwLock::new(HashMap::new()) }
    }

    pub fn source(&self) -> &Arc<S> {
        &self.source
    }

    pub fn metadata(&self) -> GreenMetadata {
        self.source.metadata()
    }

    /// `h_x(y)`.
    pub fn value(&self, x: S::Vertex, y: S::Vertex) -> Result<f64> {
        if x == y {
            return self.capacity(x);
        }
        if let Some(&v) = self.values.read().expect("table poisoned").get(&(x, y)) {
            return Ok(v);
        }
        let v = self.source.green(x, y)?;
        self.values.write().expect("table poisoned").insert((x, y), v);
        Ok(v)
    }

    /// `μ_x² = h_x(x)`; rejects nonpositive values.
    pub fn capacity(&self, x: S::Vertex) -> Result<f64> {
        if let Some(&v) = self.capacities.read().expect("table poisoned").get(&x) {
            return Ok(v);
        }
        let v = self.source.capacity(x)?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Singular(format!("capacity at {x:?} is {v}")));
        }
        self.capacities.write().expect("table poisoned").insert(x, v);
        Ok(v)
    }

    /// `(h̃_x, h̃_y) = h_x(y) / (μ_x μ_y)`; exactly one on the diagonal.
    pub fn normalized_inner(&self, x: S::Vertex, y: S::Vertex) -> Result<f64> {
        if x == y {
            return Ok(1.0);
        }
        let h = self.value(x, y)?;
        Ok(h / (self.capacity(x)? * self.capacity(y)?).sqrt())
    }

    /// Largest `|h_x(y) - h_y(x)|` over the stored pairs (evaluating the mirrors as needed).
    pub fn symmetry_defect(&self) -> Result<f64> {
        let keys: Vec<(S::Vertex, S::Vertex)> = self.values.read().expect("table poisoned").keys().copied().collect();
        let mut worst = 0.0f64;
        for (x, y) in keys {
            worst = worst.max((self.value(x, y)? - self.value(y, x)?).abs());
        }
        Ok(worst)
    }

    /// Smallest `μ_x² · mildness(x)` over stored capacities; at least one for valid tables.
    pub fn mildness_bound_margin(&self) -> f64 {
        self.capacities
            .read()
            .expect("table poisoned")
            .iter()
            .map(|(&x, &c)| c * self.source.mildness(x))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn stored_pairs(&self) -> usize {
        self.values.read().expect("table poisoned").len()
    }

    /// Writes the stored pairs as `x1,…,y1,…,value` rows sorted by vertex, capacities included.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut rows: Vec<(S::Vertex, S::Vertex, f64)> =
            self.values.read().expect("table poisoned").iter().map(|(&(x, y), &v)| (x, y, v)).collect();
        rows.extend(self.capacities.read().expect("table poisoned").iter().map(|(&x, &v)| (x, x, v)));
        rows.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.column_names())?;
        for (x, y, v) in rows {
            let mut rec: Vec<String> = self.source.coords(x).iter().map(i64::to_string).collect();
            rec.extend(self.source.coords(y).iter().map(i64::to_string));
            rec.push(format!("{v:?}"));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    fn column_names(&self) -> Vec<String> {
        let dim = self.source.metadata().dimension.unwrap_or(1);
        let mut names: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
        names.extend((1..=dim).map(|i| format!("y{i}")));
        names.push("value".into());
        names
    }

    /// JSON header describing the CSV export.
    pub fn header_json(&self) -> Result<String> {
        let metadata = self.metadata();
        let header = TableHeader {
            metadata: &metadata,
            pairs: self.stored_pairs() + self.capacities.read().expect("table poisoned").len(),
            columns: self.column_names(),
        };
        Ok(serde_json::to_string_pretty(&header)?)
    }
}
