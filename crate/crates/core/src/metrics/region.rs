use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::BinaryMask;

/// Area metrics. Every ratio is normalised by the ground-truth area except JI
/// and DSC.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionMetrics {
    pub tpr: f64,
    pub fpr: f64,
    pub ji: f64,
    pub dsc: f64,
    pub aer: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OverlapCounts {
    pub pred: usize,
    pub truth: usize,
    pub intersection: usize,
}

impl OverlapCounts {
    pub fn of(a: &BinaryMask, g: &BinaryMask) -> Result<Self> {
        if (a.width(), a.height()) != (g.width(), g.height()) {
            return Err(Error::shape(
                "region_metrics",
                format!("{}x{} vs {}x{}", a.width(), a.height(), g.width(), g.height()),
            ));
        }
        let mut c = OverlapCounts { pred: 0, truth: 0, intersection: 0 };
        for (&pa, &pg) in a.bits().iter().zip(g.bits()) {
            c.pred += pa as usize;
            c.truth += pg as usize;
            c.intersection += (pa && pg) as usize;
        }
        Ok(c)
    }

    pub fn union(&self) -> usize {
        self.pred + self.truth - self.intersection
    }
}

/// TPR, FPR, JI, DSC and AER of prediction `a` against ground truth `g`.
pub fn region_metrics(a: &BinaryMask, g: &BinaryMask) -> Result<RegionMetrics> {
    let c = OverlapCounts::of(a, g)?;
    if c.truth == 0 {
        return Err(Error::EmptyGroundTruth);
    }
    let (i, u, na, ng) = (c.intersection as f64, c.union() as f64, c.pred as f64, c.truth as f64);
    Ok(RegionMetrics {
        tpr: i / ng,
        fpr: (na - i) / ng,
        ji: i / u,
        dsc: 2.0 * i / (na + ng),
        aer: (u - i) / ng,
    })
}
