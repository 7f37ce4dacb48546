//! Distribution summaries for plot-ready CSV output.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{HawkesError, Result};

/// Box-and-whisker summary. Quartiles use linear interpolation between
/// order statistics; whiskers reach the furthest points within 1.5·IQR of
/// the box (never inside it) and everything beyond is an outlier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub count: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub lower_whisker: f64,
    pub upper_whisker: f64,
    pub outliers: Vec<f64>,
}

/// Quantile by linear interpolation on sorted data, `p` in `[0, 1]`.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl BoxStats {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(HawkesError::domain("box statistics need a nonempty finite sample"));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (q1, median, q3) = (quantile(&sorted, 0.25), quantile(&sorted, 0.5), quantile(&sorted, 0.75));
        let iqr = q3 - q1;
        let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let inside: Vec<f64> = sorted.iter().copied().filter(|v| *v >= lo_fence && *v <= hi_fence).collect();
        Ok(Self {
            count: sorted.len(),
            median,
            q1,
            q3,
            lower_whisker: inside.first().copied().unwrap_or(q1).min(q1),
            upper_whisker: inside.last().copied().unwrap_or(q3).max(q3),
            outliers: sorted.iter().copied().filter(|v| *v < lo_fence || *v > hi_fence).collect(),
        })
    }
}

/// One labelled box per row: `group,M,type,count,median,q1,q3,lower_whisker,upper_whisker,outliers`
/// with outliers `;`-separated.
pub fn write_box_csv<W: Write>(rows: &[(String, usize, usize, BoxStats)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["group", "M", "type", "count", "median", "q1", "q3", "lower_whisker", "upper_whisker", "outliers"])?;
    for (group, exps, target, b) in rows {
        w.write_record([
            group.clone(),
            exps.to_string(),
            (target + 1).to_string(),
            b.count.to_string(),
            format!("{:.6}", b.median),
            format!("{:.6}", b.q1),
            format!("{:.6}", b.q3),
            format!("{:.6}", b.lower_whisker),
            format!("{:.6}", b.upper_whisker),
            b.outliers.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quartiles_and_outliers() {
        let b = BoxStats::of(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 100.0]).unwrap();
        assert_eq!((b.q1, b.median, b.q3), (3.0, 5.0, 7.0));
        assert_eq!(b.upper_whisker, 8.0);
        assert_eq!(b.lower_whisker, 1.0);
        assert_eq!(b.outliers, vec![100.0]);
        let one = BoxStats::of(&[2.5]).unwrap();
        assert_eq!((one.q1, one.median, one.q3, one.lower_whisker), (2.5, 2.5, 2.5, 2.5));
        assert!(BoxStats::of(&[]).is_err());
    }

    proptest! {
        #[test]
        fn quartiles_match_direct_percentiles(mut xs in proptest::collection::vec(-1e3..1e3f64, 1..60)) {
            let b = BoxStats::of(&xs).unwrap();
            xs.sort_by(f64::total_cmp);
            let n = xs.len();
            // direct: fraction of points at or below the median is at least half
            prop_assert!(xs.iter().filter(|v| **v <= b.median).count() * 2 >= n);
            prop_assert!(xs.iter().filter(|v| **v >= b.median).count() * 2 >= n);
            prop_assert!(b.q1 <= b.median && b.median <= b.q3);
            prop_assert!(b.lower_whisker <= b.q1 + 1e-9 && b.upper_whisker >= b.q3 - 1e-9);
            prop_assert_eq!(b.outliers.len() + xs.iter().filter(|v| **v >= b.lower_whisker && **v <= b.upper_whisker).count(), n);
        }
    }
}
