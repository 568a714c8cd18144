use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DataError, Dataset};

/// Splits by query: every sample of a query lands on the same side.
///
/// The test side gets `round(test_fraction * n)` queries (half rounds up),
/// clamped so that neither side is empty. Both sides keep the original
/// query order.
pub fn split_dataset(
    d: &Dataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), DataError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::DegenerateSplit(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n = d.queries().len();
    if n < 2 {
        return Err(DataError::DegenerateSplit(format!(
            "need at least 2 queries to split, have {n}"
        )));
    }
    let n_test = ((test_fraction * n as f64 + 0.5).floor() as usize).clamp(1, n - 1);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test_ids: HashSet<&str> = order[..n_test]
        .iter()
        .map(|&i| d.queries()[i].query_id.as_str())
        .collect();

    let train = d.filter_queries(|q| !test_ids.contains(q.query_id.as_str()))?;
    let test = d.filter_queries(|q| test_ids.contains(q.query_id.as_str()))?;
    Ok((train, test))
}
