use num_traits::Float;

use super::SelectionError;

/// Monomial cost with a ceiling: `x^p` up to `x_max`, `x_max^p` beyond.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostFunction<T> {
    pub p: T,
    pub x_max: T,
}

impl<T: Float> CostFunction<T> {
    pub fn new(p: T, x_max: T) -> Result<Self, SelectionError> {
        let cf = Self { p, x_max };
        cf.validate()?;
        Ok(cf)
    }

    pub fn validate(&self) -> Result<(), SelectionError> {
        if !self.p.is_finite() || self.p < T::zero() {
            return Err(SelectionError::Config("cost exponent p must be >= 0".into()));
        }
        if !self.x_max.is_finite() || self.x_max <= T::zero() {
            return Err(SelectionError::Config("cost ceiling x_max must be > 0".into()));
        }
        Ok(())
    }

    /// The largest value the cost can take.
    pub fn ceiling(&self) -> T {
        self.pow(self.x_max)
    }

    fn pow(&self, x: T) -> T {
        // Integer exponents go through powi so that e.g. 1.5^2 is exactly 2.25.
        match self.p.to_i32() {
            Some(k) if T::from(k) == Some(self.p) => x.powi(k),
            _ => x.powf(self.p),
        }
    }

    /// Cost of a pose error `x` (meters). Negative or non-finite errors are rejected.
    pub fn cost(&self, x: T) -> Result<T, SelectionError> {
        if !x.is_finite() || x < T::zero() {
            return Err(SelectionError::Domain(x.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(self.cost_unchecked(x))
    }

    /// [`cost`](Self::cost) without the domain check; callers guarantee `x >= 0`.
    pub(crate) fn cost_unchecked(&self, x: T) -> T {
        if x <= self.x_max {
            self.pow(x)
        } else {
            self.ceiling()
        }
    }
}

impl Default for CostFunction<f64> {
    fn default() -> Self {
        Self { p: 2.0, x_max: 2.0 }
    }
}

impl Default for CostFunction<f32> {
    fn default() -> Self {
        Self { p: 2.0, x_max: 2.0 }
    }
}
