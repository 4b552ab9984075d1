//! Small ranking helpers shared by the solvers and the evaluation code.

use std::cmp::Ordering;

/// Index of the largest value; the lowest index wins ties. NaNs are ignored.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Indices of the `k` largest values, by descending value then ascending index.
pub fn top_k(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).filter(|&i| !values[i].is_nan()).collect();
    let cmp = |&x: &usize, &y: &usize| match values[y].partial_cmp(&values[x]) {
        Some(Ordering::Equal) | None => x.cmp(&y),
        Some(o) => o,
    };
    if k < idx.len() {
        idx.select_nth_unstable_by(k, cmp);
        idx.truncate(k);
    }
    idx.sort_by(cmp);
    idx
}
