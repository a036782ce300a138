use super::{Scalar, Tensor};

/// Central finite-difference gradient of a scalar function of `x`.
pub fn central_difference<S: Scalar>(x: &Tensor<S>, step: S, mut f: impl FnMut(&Tensor<S>) -> S) -> Tensor<S> {
    let mut probe = x.clone();
    let mut out = Tensor::zeros(x.shape());
    let two = S::of(2.0);
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let up = f(&probe);
        probe.data_mut()[i] = orig - step;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        out.data_mut()[i] = (up - down) / (two * step);
    }
    out
}

/// Largest relative error `|a - n| / max(|a|, |n|, floor)` over all entries.
pub fn max_relative_error<S: Scalar>(analytic: &Tensor<S>, numeric: &Tensor<S>, floor: S) -> S {
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(S::zero(), S::max)
}
