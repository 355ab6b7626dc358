use crate::error::{Error, Result};
use crate::scalar::Real;

/// Ordered candidate disparities the model distributes probability over.
#[derive(Clone, Debug, PartialEq)]
pub struct DisparityHypotheses<T> {
    values: Vec<T>,
}

impl<T: Real> DisparityHypotheses<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::config("need at least two disparity hypotheses"));
        }
        if values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::config("disparity hypotheses must be strictly increasing"));
        }
        if !(values[0] > T::zero()) {
            return Err(Error::config("disparity hypotheses must be positive"));
        }
        Ok(Self { values })
    }

    /// Unit-spaced hypotheses `min, min + 1, ..., max`.
    pub fn integer_range(min: usize, max: usize) -> Result<Self> {
        Self::new((min..=max).map(T::from_usize_lossy).collect())
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn min(&self) -> T {
        self.values[0]
    }

    pub fn max(&self) -> T {
        self.values[self.values.len() - 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(DisparityHypotheses::<f64>::new(vec![1.0]).is_err());
        assert!(DisparityHypotheses::<f64>::new(vec![1.0, 1.0]).is_err());
        assert!(DisparityHypotheses::<f64>::new(vec![0.0, 1.0]).is_err());
        let h = DisparityHypotheses::<f64>::integer_range(12, 96).unwrap();
        assert_eq!(h.len(), 85);
        assert_eq!((h.min(), h.max()), (12.0, 96.0));
    }
}
