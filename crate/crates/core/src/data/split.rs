use serde::{Deserialize, Serialize};

use crate::boosting::Dataset;
use crate::numerics::{permutation, PrngStream};
use crate::{Error, Result};

/// How train and test sets are drawn from the provider's two pools.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitSpec {
    /// Use the provider's train and test sets unchanged.
    Provider,
    /// Class-balanced subsamples: `n_train` from the train pool and `n_test`
    /// from the test pool, split as evenly as possible over classes (lower
    /// class indices take any remainder).
    Stratified { n_train: usize, n_test: usize },
    /// Explicit rows of the concatenated pool (train rows first).
    Indices { train: Vec<usize>, test: Vec<usize> },
}

fn stratified_take(pool: &Dataset, n: usize, stream: &mut PrngStream) -> Result<Vec<usize>> {
    let k = pool.n_classes();
    let mut by_class = vec![Vec::new(); k];
    for (i, &y) in pool.labels().iter().enumerate() {
        by_class[y].push(i);
    }
    let mut out = Vec::with_capacity(n);
    for (c, members) in by_class.iter().enumerate() {
        let quota = n / k + usize::from(c < n % k);
        if members.len() < quota {
            return Err(Error::data(format!(
                "class {c} has {} samples, {quota} requested",
                members.len()
            )));
        }
        let order = permutation(stream, members.len());
        out.extend(order[..quota].iter().map(|&p| members[p]));
    }
    out.sort_unstable();
    Ok(out)
}

fn concat(a: &Dataset, b: &Dataset) -> Result<Dataset> {
    if a.n_classes() != b.n_classes() {
        return Err(Error::data(
            "train and test pools disagree on the class count",
        ));
    }
    let mut labels = a.labels().to_vec();
    labels.extend_from_slice(b.labels());
    Dataset::new(
        a.features().concat_rows(b.features())?,
        labels,
        a.n_classes(),
    )
}

/// Applies `spec` to the provider's pools. Results carry fresh unit weights
/// and origins relative to the pool they came from.
pub fn train_test_interface(
    train_pool: &Dataset,
    test_pool: &Dataset,
    spec: &SplitSpec,
    stream: &PrngStream,
) -> Result<(Dataset, Dataset)> {
    let fresh = |d: Dataset| Dataset::new(d.features().clone(), d.labels().to_vec(), d.n_classes());
    match spec {
        SplitSpec::Provider => Ok((train_pool.clone(), test_pool.clone())),
        SplitSpec::Stratified { n_train, n_test } => {
            let tr = stratified_take(train_pool, *n_train, &mut stream.fork(0))?;
            let te = stratified_take(test_pool, *n_test, &mut stream.fork(1))?;
            Ok((
                fresh(train_pool.select(&tr)?)?,
                fresh(test_pool.select(&te)?)?,
            ))
        }
        SplitSpec::Indices { train, test } => {
            let pool = concat(train_pool, test_pool)?;
            if let Some(&bad) = train.iter().chain(test).find(|&&i| i >= pool.len()) {
                return Err(Error::data(format!(
                    "index {bad} outside the {}-row pool",
                    pool.len()
                )));
            }
            let mut seen = vec![false; pool.len()];
            for &i in train {
                seen[i] = true;
            }
            if let Some(&dup) = test.iter().find(|&&i| seen[i]) {
                return Err(Error::data(format!("row {dup} is in both train and test")));
            }
            Ok((fresh(pool.select(train)?)?, fresh(pool.select(test)?)?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn pool(n: usize, k: usize) -> Dataset {
        let x = Tensor::new(vec![n, 1], (0..n).map(|i| i as f64).collect()).unwrap();
        Dataset::new(x, (0..n).map(|i| i % k).collect(), k).unwrap()
    }

    #[test]
    fn stratified_counts() {
        let (tr, te) = train_test_interface(
            &pool(200, 10),
            &pool(50, 10),
            &SplitSpec::Stratified {
                n_train: 60,
                n_test: 20,
            },
            &PrngStream::new(1, 0),
        )
        .unwrap();
        assert_eq!(tr.class_counts(), vec![6; 10]);
        assert_eq!(te.class_counts(), vec![2; 10]);
    }

    #[test]
    fn explicit_indices_must_be_disjoint() {
        let s = PrngStream::new(1, 0);
        let spec = SplitSpec::Indices {
            train: vec![0, 1, 5],
            test: vec![2, 6],
        };
        let (tr, te) = train_test_interface(&pool(4, 2), &pool(4, 2), &spec, &s).unwrap();
        assert_eq!((tr.len(), te.len()), (3, 2));
        let overlap = SplitSpec::Indices {
            train: vec![0, 1],
            test: vec![1],
        };
        assert!(matches!(
            train_test_interface(&pool(4, 2), &pool(4, 2), &overlap, &s),
            Err(Error::Data(_))
        ));
    }
}
