use crate::Scalar;

/// Per-channel statistics of one training-mode batch normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Unbiased (n - 1) variance, the value folded into running statistics.
    pub var: Vec<T>,
}

/// Running mean/variance of a batch normalization layer.
///
/// `momentum` is the weight kept from the previous running value:
/// `running = momentum * running + (1 - momentum) * batch`.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub momentum: T,
}

impl<T: Scalar> RunningStats<T> {
    pub fn new(channels: usize, momentum: T) -> Self {
        RunningStats {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
            momentum,
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn update(&mut self, batch: &BatchStats<T>) {
        let keep = self.momentum;
        let take = T::one() - keep;
        for (r, &b) in self.mean.iter_mut().zip(&batch.mean) {
            *r = keep * *r + take * b;
        }
        for (r, &b) in self.var.iter_mut().zip(&batch.var) {
            *r = (keep * *r + take * b).max(T::zero());
        }
    }

    pub fn cast<U: Scalar>(&self) -> RunningStats<U> {
        let conv = |v: &[T]| v.iter().map(|&x| U::from_f64(x.to_f64())).collect();
        RunningStats {
            mean: conv(&self.mean),
            var: conv(&self.var),
            momentum: U::from_f64(self.momentum.to_f64()),
        }
    }
}

/// Which statistics a batch normalization uses.
#[derive(Clone, Copy, Debug)]
pub enum NormMode<'a, T> {
    /// Normalize with the statistics of the current batch.
    Train,
    /// Normalize with stored running statistics.
    Eval(&'a RunningStats<T>),
}
