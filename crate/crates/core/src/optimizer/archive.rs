use std::cmp::Ordering;

use super::nsga2::{dominates, fast_nondominated_sort};
use super::{ArchiveRecord, OptimizerError};

/// Non-dominated valid records, ordered by energy.
pub fn pareto_front(archive: &[ArchiveRecord]) -> Result<Vec<&ArchiveRecord>, OptimizerError> {
    if archive.is_empty() {
        return Err(OptimizerError::EmptyArchive);
    }
    let valid: Vec<&ArchiveRecord> = archive.iter().filter(|r| r.valid).collect();
    let objs: Vec<[f64; 2]> = valid.iter().map(|r| r.objectives()).collect();
    let mut front: Vec<&ArchiveRecord> =
        fast_nondominated_sort(&objs).into_iter().next().unwrap_or_default().into_iter().map(|i| valid[i]).collect();
    front.sort_by(|a, b| cmp_f64(a.energy, b.energy).then(cmp_f64(a.kl, b.kl)).then(a.index.cmp(&b.index)));
    Ok(front)
}

/// The `k` valid records with the lowest Config_Score.
pub fn top_k(archive: &[ArchiveRecord], k: usize) -> Result<Vec<&ArchiveRecord>, OptimizerError> {
    if archive.is_empty() {
        return Err(OptimizerError::EmptyArchive);
    }
    let mut valid: Vec<&ArchiveRecord> = archive.iter().filter(|r| r.valid).collect();
    valid.sort_by(|a, b| cmp_f64(a.score, b.score).then(a.index.cmp(&b.index)));
    valid.truncate(k);
    Ok(valid)
}

/// Per-gene histogram of normalized values over every evaluation.
pub fn exploration_hist(archive: &[ArchiveRecord], bins: usize) -> Result<Vec<Vec<u64>>, OptimizerError> {
    let first = archive.first().ok_or(OptimizerError::EmptyArchive)?;
    let bins = bins.max(1);
    let mut h = vec![vec![0u64; bins]; first.genome.len()];
    for r in archive {
        for (gene, &g) in r.genome.iter().enumerate() {
            let b = ((g.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
            h[gene][b] += 1;
        }
    }
    Ok(h)
}

/// Area dominated by `points` and bounded by `reference` (both objectives
/// minimized). Points not strictly better than the reference in both
/// objectives contribute nothing.
pub fn hypervolume_2d(points: &[[f64; 2]], reference: [f64; 2]) -> f64 {
    let mut pts: Vec<[f64; 2]> = points.iter().copied().filter(|p| p[0] < reference[0] && p[1] < reference[1]).collect();
    let front: Vec<[f64; 2]> = pts.iter().copied().filter(|p| !pts.iter().any(|q| dominates(q, p))).collect();
    pts = front;
    pts.sort_by(|a, b| cmp_f64(a[0], b[0]));
    let mut area = 0.0;
    let mut prev_y = reference[1];
    for p in pts {
        if p[1] < prev_y {
            area += (reference[0] - p[0]) * (prev_y - p[1]);
            prev_y = p[1];
        }
    }
    area
}

fn cmp_f64(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{Evaluation, ObjectivePair, INVALID_OBJECTIVE};
    use std::collections::BTreeMap;

    fn rec(index: usize, energy: f64, kl: f64, valid: bool) -> ArchiveRecord {
        let e = Evaluation {
            objectives: if valid { ObjectivePair { energy, kl } } else { INVALID_OBJECTIVE },
            valid,
            score: energy + kl,
            reason: None,
            run: None,
        };
        ArchiveRecord::new(index, 0, "t", 0, vec![0.1 * index as f64 % 1.0], BTreeMap::new(), &e)
    }

    #[test]
    fn single_point_archive() {
        let a = vec![rec(0, 1.0, 1.0, true)];
        assert_eq!(pareto_front(&a).unwrap(), vec![&a[0]]);
        assert_eq!(top_k(&a, 1).unwrap(), vec![&a[0]]);
        assert_eq!(pareto_front(&[]), Err(OptimizerError::EmptyArchive));
        assert!(exploration_hist(&[], 10).is_err());
    }

    #[test]
    fn sentinels_never_reach_the_front() {
        let a = vec![rec(0, 3.0, 3.0, true), rec(1, 0.0, 0.0, false), rec(2, 1.0, 2.0, true), rec(3, 2.0, 1.0, true)];
        let f: Vec<usize> = pareto_front(&a).unwrap().iter().map(|r| r.index).collect();
        assert_eq!(f, vec![2, 3]);
        let t: Vec<usize> = top_k(&a, 5).unwrap().iter().map(|r| r.index).collect();
        assert_eq!(t, vec![2, 3, 0]);
    }

    #[test]
    fn hypervolume_of_a_staircase() {
        let hv = hypervolume_2d(&[[1.0, 3.0], [2.0, 2.0], [3.0, 1.0], [3.5, 3.5]], [4.0, 4.0]);
        assert!((hv - 6.0).abs() < 1e-12);
        assert_eq!(hypervolume_2d(&[[5.0, 0.0]], [4.0, 4.0]), 0.0);
    }

    #[test]
    fn histogram_counts_every_gene() {
        let a: Vec<ArchiveRecord> = (0..10).map(|i| rec(i, 1.0, 1.0, true)).collect();
        let h = exploration_hist(&a, 4).unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(h[0].iter().sum::<u64>(), 10);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn front_matches_pairwise_scan(pts in prop::collection::vec((0u8..10, 0u8..10, any::<bool>()), 1..50)) {
                let a: Vec<ArchiveRecord> = pts.iter().enumerate().map(|(i, &(e, k, v))| rec(i, e as f64, k as f64, v)).collect();
                let got: Vec<usize> = {
                    let mut g: Vec<usize> = pareto_front(&a).unwrap().iter().map(|r| r.index).collect();
                    g.sort_unstable();
                    g
                };
                let want: Vec<usize> = a
                    .iter()
                    .filter(|r| r.valid && !a.iter().any(|q| q.valid && dominates(&q.objectives(), &r.objectives())))
                    .map(|r| r.index)
                    .collect();
                prop_assert_eq!(got, want);
            }
        }
    }
}
