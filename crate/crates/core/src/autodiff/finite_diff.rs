use super::Tensor;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Central-difference gradient of a scalar function of several tensors:
/// `(f(p + h e_i) - f(p - h e_i)) / 2h` per coordinate.
///
/// This is the verification oracle for the tape; it never touches the tape
/// and only requires `f` to be deterministic. With the `parallel` feature
/// the coordinates of each tensor are evaluated on the rayon pool, which
/// changes nothing about the values (each coordinate writes its own slot).
pub fn finite_difference_gradient<F>(f: F, params: &[Tensor], h: f64) -> Vec<Vec<f64>>
where
    F: Fn(&[Tensor]) -> f64 + Sync + Send,
{
    assert!(h > 0.0, "finite difference step must be positive");
    (0..params.len())
        .map(|t| {
            let n = params[t].len();
            map_coords(n, |i| central_diff(&f, params, t, i, h))
        })
        .collect()
}

#[cfg(feature = "parallel")]
fn map_coords(n: usize, f: impl Fn(usize) -> f64 + Sync + Send) -> Vec<f64> {
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_coords(n: usize, f: impl Fn(usize) -> f64 + Sync + Send) -> Vec<f64> {
    (0..n).map(f).collect()
}

/// Sequential variant kept unconditionally so the benchmark suite can
/// compare the two code paths under the `parallel` feature.
pub fn finite_difference_gradient_seq<F>(f: F, params: &[Tensor], h: f64) -> Vec<Vec<f64>>
where
    F: Fn(&[Tensor]) -> f64,
{
    assert!(h > 0.0, "finite difference step must be positive");
    (0..params.len())
        .map(|t| {
            (0..params[t].len())
                .map(|i| central_diff(&f, params, t, i, h))
                .collect()
        })
        .collect()
}

fn central_diff<F>(f: &F, params: &[Tensor], tensor_idx: usize, coord: usize, h: f64) -> f64
where
    F: Fn(&[Tensor]) -> f64,
{
    let mut local: Vec<Tensor> = params.to_vec();
    let base = local[tensor_idx].data()[coord];
    local[tensor_idx].data_mut()[coord] = base + h;
    let plus = f(&local);
    local[tensor_idx].data_mut()[coord] = base - h;
    let minus = f(&local);
    (plus - minus) / (2.0 * h)
}
