use crate::laws::{Path, Shape};

/// Value and right derivative of `path` at `t`, and the index of the first
/// knot strictly after `t`.
pub(crate) fn state_at(path: &Path, t: f64) -> (f64, f64, Option<usize>) {
    let k = &path.knots;
    let next = k.partition_point(|(tk, _)| *tk <= t);
    let value = path.value(t);
    let slope = match path.shape {
        Shape::Constant => 0.0,
        Shape::Linear => {
            if next == 0 || next == k.len() {
                0.0
            } else {
                let (t0, v0) = k[next - 1];
                let (t1, v1) = k[next];
                if t1 > t0 {
                    (v1 - v0) / (t1 - t0)
                } else {
                    0.0
                }
            }
        }
    };
    (value, slope, (next < k.len()).then_some(next))
}

/// Drops knots after the infectivity has returned to zero for good.
pub(crate) fn trim(mut path: Path) -> Path {
    let end = path.support_end();
    if end.is_finite() {
        if let Some(i) = path.knots.iter().position(|(t, _)| *t >= end) {
            path.knots.truncate(i + 1);
        }
    }
    path
}
