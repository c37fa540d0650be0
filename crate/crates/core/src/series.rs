use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::linalg::max_abs_diff;

/// Multivariate series laid out as `variates x steps x channels`.
///
/// Cell `(v, t)` holds a row of `channels` values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesTensor {
    variates: usize,
    steps: usize,
    channels: usize,
    values: Vec<f64>,
}

impl SeriesTensor {
    pub fn zeros(variates: usize, steps: usize, channels: usize) -> Self {
        SeriesTensor { variates, steps, channels, values: vec![0.0; variates * steps * channels] }
    }

    pub fn from_vec(variates: usize, steps: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if variates == 0 || steps == 0 || channels == 0 {
            return Err(shape_err(format!(
                "series extents must be positive, got {variates}x{steps}x{channels}"
            )));
        }
        if values.len() != variates * steps * channels {
            return Err(shape_err(format!(
                "{} values for a {variates}x{steps}x{channels} series",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("series values"));
        }
        Ok(SeriesTensor { variates, steps, channels, values })
    }

    /// One channel; `rows[v][t]`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let v = rows.len();
        let t = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != t) {
            return Err(shape_err("ragged variate rows"));
        }
        SeriesTensor::from_vec(v, t, 1, rows.concat())
    }

    /// A single variate with one channel.
    pub fn univariate(values: &[f64]) -> Result<Self> {
        SeriesTensor::from_vec(1, values.len(), 1, values.to_vec())
    }

    pub fn variates(&self) -> usize {
        self.variates
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.variates, self.steps, self.channels)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    fn offset(&self, v: usize, t: usize) -> usize {
        (v * self.steps + t) * self.channels
    }

    #[inline]
    pub fn cell(&self, v: usize, t: usize) -> &[f64] {
        let o = self.offset(v, t);
        &self.values[o..o + self.channels]
    }

    #[inline]
    pub fn cell_mut(&mut self, v: usize, t: usize) -> &mut [f64] {
        let o = self.offset(v, t);
        &mut self.values[o..o + self.channels]
    }

    pub fn get(&self, v: usize, t: usize, c: usize) -> f64 {
        self.values[self.offset(v, t) + c]
    }

    pub fn set(&mut self, v: usize, t: usize, c: usize, value: f64) {
        let o = self.offset(v, t);
        self.values[o + c] = value;
    }

    /// Channel `c` of variate `v` as a time series.
    pub fn variate_series(&self, v: usize, c: usize) -> Vec<f64> {
        (0..self.steps).map(|t| self.get(v, t, c)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite("series values"))
        }
    }

    /// Copy with the variate axis reversed.
    pub fn reverse_variates(&self) -> SeriesTensor {
        let mut out = SeriesTensor::zeros(self.variates, self.steps, self.channels);
        let row = self.steps * self.channels;
        for v in 0..self.variates {
            let src = &self.values[v * row..(v + 1) * row];
            let dst_v = self.variates - 1 - v;
            out.values[dst_v * row..(dst_v + 1) * row].copy_from_slice(src);
        }
        out
    }

    /// Steps `[start, end)` of every variate.
    pub fn slice_steps(&self, start: usize, end: usize) -> Result<SeriesTensor> {
        if start >= end || end > self.steps {
            return Err(shape_err(format!("step range {start}..{end} of {}", self.steps)));
        }
        let mut out = SeriesTensor::zeros(self.variates, end - start, self.channels);
        for v in 0..self.variates {
            for t in start..end {
                out.cell_mut(v, t - start).copy_from_slice(self.cell(v, t));
            }
        }
        Ok(out)
    }

    /// Appends time columns from `other` (same variates and channels).
    pub fn concat_steps(&self, other: &SeriesTensor) -> Result<SeriesTensor> {
        if self.variates != other.variates || self.channels != other.channels {
            return Err(shape_err("concat_steps with mismatched variates or channels"));
        }
        let steps = self.steps + other.steps;
        let mut out = SeriesTensor::zeros(self.variates, steps, self.channels);
        for v in 0..self.variates {
            for t in 0..self.steps {
                out.cell_mut(v, t).copy_from_slice(self.cell(v, t));
            }
            for t in 0..other.steps {
                out.cell_mut(v, self.steps + t).copy_from_slice(other.cell(v, t));
            }
        }
        Ok(out)
    }

    fn check_same_shape(&self, other: &SeriesTensor) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(shape_err(format!("series {:?} vs {:?}", self.shape(), other.shape())));
        }
        Ok(())
    }

    pub fn add(&self, other: &SeriesTensor) -> Result<SeriesTensor> {
        self.check_same_shape(other)?;
        let mut out = self.clone();
        out.values.iter_mut().zip(&other.values).for_each(|(a, b)| *a += b);
        Ok(out)
    }

    pub fn add_assign(&mut self, other: &SeriesTensor) -> Result<()> {
        self.check_same_shape(other)?;
        self.values.iter_mut().zip(&other.values).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn sub(&self, other: &SeriesTensor) -> Result<SeriesTensor> {
        self.check_same_shape(other)?;
        let mut out = self.clone();
        out.values.iter_mut().zip(&other.values).for_each(|(a, b)| *a -= b);
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> SeriesTensor {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|a| *a *= s);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest elementwise absolute difference; infinite on shape mismatch.
    pub fn max_abs_diff(&self, other: &SeriesTensor) -> f64 {
        if self.shape() != other.shape() {
            return f64::INFINITY;
        }
        max_abs_diff(&self.values, &other.values)
    }

    pub fn mean_squared_error(&self, other: &SeriesTensor) -> Result<f64> {
        self.check_same_shape(other)?;
        let n = self.values.len() as f64;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n)
    }

    /// Applies `f` to every cell, producing `out_channels` values per cell.
    pub fn map_cells(&self, out_channels: usize, mut f: impl FnMut(&[f64], &mut [f64])) -> SeriesTensor {
        let mut out = SeriesTensor::zeros(self.variates, self.steps, out_channels);
        for v in 0..self.variates {
            for t in 0..self.steps {
                f(self.cell(v, t), out.cell_mut(v, t));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_reverse() {
        let x = SeriesTensor::from_vec(2, 3, 1, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(x.cell(1, 0), &[4.0]);
        let r = x.reverse_variates();
        assert_eq!(r.variate_series(0, 0), vec![4.0, 5.0, 6.0]);
        assert_eq!(r.reverse_variates(), x);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(SeriesTensor::from_vec(0, 1, 1, vec![]).is_err());
        assert!(SeriesTensor::from_vec(1, 2, 1, vec![1.0]).is_err());
        assert!(matches!(
            SeriesTensor::from_vec(1, 1, 1, vec![f64::INFINITY]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn slicing_and_concat() {
        let x = SeriesTensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let a = x.slice_steps(0, 1).unwrap();
        let b = x.slice_steps(1, 3).unwrap();
        assert_eq!(a.concat_steps(&b).unwrap(), x);
        assert!(x.slice_steps(2, 2).is_err());
    }
}
