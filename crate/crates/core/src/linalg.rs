//! Small dense-vector helpers shared by the iteration hot loops.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Scales `v` in place so that it has unit Euclidean norm.
///
/// Falls back to the first coordinate axis for a (practically impossible)
/// all-zero input so callers never see NaN.
pub fn normalize(v: &mut [f64]) {
    let n = norm(v);
    if n < 1e-300 {
        v.fill(0.0);
        v[0] = 1.0;
    } else {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}
