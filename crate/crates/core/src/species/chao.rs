//! Lower estimate of total richness from singleton and doubleton counts.

use crate::error::{Error, Result};
use crate::fof::FrequencyOfFrequencies;
use crate::report::EstimateReport;

/// `observed + n1^2 / (2 n2)`. With no singletons the observed count is
/// returned as-is. The `corrected` flag switches to
/// `observed + n1 (n1 - 1) / (2 (n2 + 1))`, which stays defined at n2 = 0;
/// the uncorrected form errors there.
pub fn chao_lower(fof: &FrequencyOfFrequencies, corrected: bool) -> Result<EstimateReport> {
    let d = fof.observed_units();
    let n1 = fof.count(1);
    let n2 = fof.count(2);

    let estimate = if corrected {
        d + n1 * (n1 - 1.0).max(0.0) / (2.0 * (n2 + 1.0))
    } else if n1 == 0.0 {
        d
    } else if n2 == 0.0 {
        return Err(Error::DivisionUndefined(
            "no doubletons: singleton term n1^2/(2 n2) is undefined (try the corrected form)"
                .into(),
        ));
    } else {
        d + n1 * n1 / (2.0 * n2)
    };

    let mut report = EstimateReport::new("species.chao", estimate);
    if corrected {
        report.warn("corrected singleton term n1(n1-1)/(2(n2+1))");
    }
    Ok(report)
}
