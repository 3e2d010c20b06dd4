//! Pareto dominance filtering.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `a` is at least as good as `b` everywhere and strictly better somewhere.
pub fn dominates<S: Scalar>(a: &[S], b: &[S]) -> bool {
    let mut strict = false;
    for (&x, &y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        strict |= x > y;
    }
    strict
}

/// Indices of the points no other point dominates, in input order.
///
/// Points are visited in lexicographically decreasing order, so any
/// dominator of a point is visited before it and the point only needs to be
/// compared with the front found so far.
pub fn nondominated_indices<S: Scalar>(points: &[Vec<S>]) -> Result<Vec<usize>> {
    let Some(first) = points.first() else {
        return Ok(Vec::new());
    };
    let k = first.len();
    for p in points {
        if p.len() != k {
            return Err(Error::Shape(format!("points have {k} and {} coordinates", p.len())));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("points must be finite".into()));
        }
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| lex_desc(&points[i], &points[j]).then(i.cmp(&j)));
    let mut front: Vec<usize> = Vec::new();
    for i in order {
        if !front.iter().any(|&f| dominates(&points[f], &points[i])) {
            front.push(i);
        }
    }
    front.sort_unstable();
    Ok(front)
}

/// The nondominated subset, in input order.
pub fn nondominated<S: Scalar>(points: &[Vec<S>]) -> Result<Vec<Vec<S>>> {
    Ok(nondominated_indices(points)?
        .into_iter()
        .map(|i| points[i].clone())
        .collect())
}

fn lex_desc<S: Scalar>(a: &[S], b: &[S]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match y.partial_cmp(x).unwrap_or(Ordering::Equal) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    Ordering::Equal
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force(points: &[Vec<f64>]) -> Vec<usize> {
        (0..points.len())
            .filter(|&i| !points.iter().any(|q| dominates(q, &points[i])))
            .collect()
    }

    #[test]
    fn mutually_nondominated_points_are_kept() {
        let pts = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]];
        assert_eq!(nondominated(&pts).unwrap(), pts);
    }

    #[test]
    fn strictly_dominated_point_is_removed() {
        let pts = vec![vec![0.5, 0.5], vec![1.0, 1.0]];
        assert_eq!(nondominated(&pts).unwrap(), vec![vec![1.0, 1.0]]);
    }

    #[test]
    fn duplicates_and_weak_dominance() {
        let pts = vec![vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 0.5]];
        assert_eq!(nondominated_indices(&pts).unwrap(), vec![0, 1]);
        let empty: Vec<Vec<f64>> = Vec::new();
        assert!(nondominated(&empty).unwrap().is_empty());
        assert!(nondominated(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(nondominated(&[vec![f64::NAN, 2.0]]).is_err());
    }

    proptest! {
        #[test]
        fn matches_brute_force(pts in prop::collection::vec(prop::collection::vec(0u8..6, 2..=3), 0..60)) {
            // Coarse integer grid forces many ties and duplicates.
            let k = pts.first().map_or(2, Vec::len);
            let pts: Vec<Vec<f64>> = pts
                .into_iter()
                .map(|p| (0..k).map(|j| f64::from(*p.get(j).unwrap_or(&0))).collect())
                .collect();
            prop_assert_eq!(nondominated_indices(&pts).unwrap(), brute_force(&pts));
        }
    }
}
