use std::io::{Read, Write};

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Weighted point cloud in `ℝ^D`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiscreteMeasure {
    /// Row-major `n x D` coordinates.
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub dim: usize,
}

impl DiscreteMeasure {
    pub fn new(points: Vec<f64>, weights: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || points.len() != weights.len() * dim || weights.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "{} coordinates and {} weights do not match dimension {dim}",
                points.len(),
                weights.len()
            )));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter("measure has a non-finite point".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidParameter("weights must be nonnegative".into()));
        }
        let mass: f64 = weights.iter().sum();
        if (mass - 1.0).abs() > 1e-12 {
            return Err(Error::NotNormalized { mass });
        }
        Ok(Self { points, weights, dim })
    }

    /// Normalizes positive weights to unit mass.
    pub fn from_unnormalized(points: Vec<f64>, mut weights: Vec<f64>, dim: usize) -> Result<Self> {
        let mass: f64 = weights.iter().sum();
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::NotNormalized { mass });
        }
        weights.iter_mut().for_each(|w| *w /= mass);
        Self::new(points, weights, dim)
    }

    /// Equal weights on the rows of `points`.
    pub fn uniform(points: Vec<f64>, dim: usize) -> Result<Self> {
        let n = points.len() / dim.max(1);
        Self::new(points, vec![1.0 / n as f64; n], dim)
    }

    pub fn dirac(point: Vec<f64>) -> Self {
        let dim = point.len();
        Self { points: point, weights: vec![1.0], dim }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn has_equal_weights(&self) -> bool {
        let w0 = self.weights[0];
        self.weights.iter().all(|w| (w - w0).abs() <= 1e-15)
    }

    /// Random measure with `n` atoms, coordinates uniform in `[-scale, scale]`
    /// and weights uniform on `[0.1, 1]` before normalization.
    pub fn random<R: Rng>(rng: &mut R, n: usize, dim: usize, scale: f64) -> Self {
        let points = (0..n * dim).map(|_| rng.random_range(-scale..scale)).collect();
        let weights = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        Self::from_unnormalized(points, weights, dim).expect("positive weights")
    }

    /// CSV rows `weight,x0,x1,...`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["weight".to_string()];
        header.extend((0..self.dim).map(|k| format!("x{k}")));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![self.weights[i].to_string()];
            row.extend(self.point(i).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let dim = reader.headers()?.len().saturating_sub(1);
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad number '{s}'"))))
                .collect::<Result<_>>()?;
            weights.push(vals[0]);
            points.extend_from_slice(&vals[1..]);
        }
        Self::new(points, weights, dim)
    }
}
