use super::dataset::Dataset;
use super::{DataError, Result};

/// Assigns each user to the half-open interval of training-positive counts
/// that contains it. With boundaries `[b0, b1, ...]` bucket 0 is `[0, b0)`,
/// bucket 1 is `[b0, b1)`, and the last is `[b_last, ∞)`.
pub fn bucket_users(train: &Dataset, boundaries: &[usize]) -> Result<Vec<usize>> {
    check_increasing(boundaries)?;
    Ok((0..train.num_users())
        .map(|u| {
            let count = train.items_of(u).len();
            boundaries.partition_point(|&b| b <= count)
        })
        .collect())
}

/// Human-readable labels, one per bucket: `[0,16)`, `[16,64)`, ..., `[256,∞)`.
pub fn bucket_labels(boundaries: &[usize]) -> Result<Vec<String>> {
    check_increasing(boundaries)?;
    let mut lower = 0;
    let mut labels = Vec::with_capacity(boundaries.len() + 1);
    for &b in boundaries {
        labels.push(format!("[{lower},{b})"));
        lower = b;
    }
    labels.push(format!("[{lower},∞)"));
    Ok(labels)
}

fn check_increasing(boundaries: &[usize]) -> Result<()> {
    if boundaries.windows(2).any(|w| w[0] >= w[1]) {
        return Err(DataError::Config(format!(
            "bucket boundaries must be strictly increasing: {boundaries:?}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_counts(counts: &[usize]) -> Dataset {
        let n = counts.iter().copied().max().unwrap_or(0).max(1);
        let interactions = counts.iter().map(|&c| (0..c).collect()).collect();
        Dataset::from_parts(counts.len(), n, interactions, vec![vec![]; counts.len()], None, None).unwrap()
    }

    #[test]
    fn sixteen_lands_in_second_bucket() {
        let ds = with_counts(&[16, 0, 15, 64, 300]);
        let b = bucket_users(&ds, &[16, 64, 256]).unwrap();
        let labels = bucket_labels(&[16, 64, 256]).unwrap();
        assert_eq!(labels[b[0]], "[16,64)");
        assert_eq!(labels[b[1]], "[0,16)");
        assert_eq!(b, vec![1, 0, 0, 2, 3]);
    }

    #[test]
    fn single_boundary() {
        let ds = with_counts(&[1, 3]);
        assert_eq!(bucket_users(&ds, &[2]).unwrap(), vec![0, 1]);
    }

    #[test]
    fn labels_match_group_axis() {
        assert_eq!(
            bucket_labels(&[16, 64, 256]).unwrap(),
            vec!["[0,16)", "[16,64)", "[64,256)", "[256,∞)"]
        );
    }

    #[test]
    fn rejects_unsorted_boundaries() {
        let ds = with_counts(&[1]);
        assert!(bucket_users(&ds, &[4, 4]).is_err());
    }
}
