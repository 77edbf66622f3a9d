//! Published AUROC (mean and fold standard deviation) for the light-curve
//! benchmark, one row per detector and one column per held-out subclass.

use crate::detectors::DetectorKind;

/// Column order of [`REFERENCE`].
pub const SUBCLASSES: [&str; 14] = [
    "SLSN", "SNII", "SNIa", "SNIbc", "AGN", "Blazar", "CV/Nova", "QSO", "YSO", "CEP", "DSCT", "E", "RRL", "LPV",
];

pub struct ReferenceRow {
    pub detector: DetectorKind,
    pub mean: [f64; 14],
    pub std: [f64; 14],
}

pub const REFERENCE: [ReferenceRow; 6] = [
    ReferenceRow {
        detector: DetectorKind::IForest,
        mean: [
            0.640, 0.721, 0.428, 0.490, 0.573, 0.710, 0.975, 0.468, 0.913, 0.359, 0.295, 0.469, 0.549, 0.971,
        ],
        std: [
            0.014, 0.021, 0.032, 0.038, 0.017, 0.009, 0.001, 0.016, 0.003, 0.007, 0.012, 0.021, 0.033, 0.007,
        ],
    },
    ReferenceRow {
        detector: DetectorKind::Ocsvm,
        mean: [
            0.577, 0.587, 0.434, 0.492, 0.532, 0.443, 0.909, 0.517, 0.792, 0.432, 0.557, 0.555, 0.539, 0.943,
        ],
        std: [
            0.014, 0.014, 0.021, 0.011, 0.008, 0.002, 0.001, 0.005, 0.005, 0.004, 0.005, 0.003, 0.004, 0.001,
        ],
    },
    ReferenceRow {
        detector: DetectorKind::Ae,
        mean: [
            0.736, 0.807, 0.438, 0.537, 0.701, 0.762, 0.980, 0.443, 0.990, 0.564, 0.367, 0.864, 0.907, 0.996,
        ],
        std: [
            0.022, 0.021, 0.015, 0.019, 0.010, 0.006, 0.016, 0.004, 0.001, 0.024, 0.015, 0.009, 0.015, 0.000,
        ],
    },
    ReferenceRow {
        detector: DetectorKind::Vae,
        mean: [
            0.669, 0.690, 0.404, 0.522, 0.596, 0.597, 0.849, 0.500, 0.795, 0.442, 0.417, 0.561, 0.451, 0.936,
        ],
        std: [
            0.015, 0.023, 0.018, 0.025, 0.007, 0.010, 0.028, 0.009, 0.009, 0.010, 0.007, 0.007, 0.006, 0.007,
        ],
    },
    ReferenceRow {
        detector: DetectorKind::Dsvdd,
        mean: [
            0.644, 0.731, 0.475, 0.507, 0.496, 0.607, 0.932, 0.411, 0.901, 0.707, 0.482, 0.636, 0.774, 0.785,
        ],
        std: [
            0.043, 0.043, 0.040, 0.040, 0.025, 0.044, 0.015, 0.008, 0.022, 0.027, 0.054, 0.055, 0.068, 0.025,
        ],
    },
    ReferenceRow {
        detector: DetectorKind::Mcdsvdd,
        mean: [
            0.686, 0.828, 0.624, 0.584, 0.706, 0.512, 0.770, 0.483, 0.854, 0.858, 0.819, 0.945, 0.953, 0.953,
        ],
        std: [
            0.051, 0.024, 0.039, 0.032, 0.069, 0.113, 0.127, 0.080, 0.041, 0.025, 0.015, 0.006, 0.003, 0.008,
        ],
    },
];

/// `(mean, std)` of a published cell.
pub fn reference_cell(detector: DetectorKind, subclass: &str) -> Option<(f64, f64)> {
    let col = SUBCLASSES.iter().position(|s| *s == subclass)?;
    let row = REFERENCE.iter().find(|r| r.detector == detector)?;
    Some((row.mean[col], row.std[col]))
}

/// Published means of one column as `(detector, mean)` pairs.
pub fn reference_column(subclass: &str) -> Vec<(DetectorKind, f64)> {
    let Some(col) = SUBCLASSES.iter().position(|s| *s == subclass) else {
        return Vec::new();
    };
    REFERENCE.iter().map(|r| (r.detector, r.mean[col])).collect()
}
