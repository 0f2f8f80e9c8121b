//! Published per-subject accuracies (nine subjects, five-class finger imagery).
//! They come from a private dataset and serve only as fixed inputs to the
//! statistics code.

use super::stats::Column;

pub const EEGNET: [f64; 9] = [0.2880, 0.2480, 0.2240, 0.2160, 0.2720, 0.2320, 0.2480, 0.2480, 0.2400];
pub const DEEPCONVNET: [f64; 9] = [0.2960, 0.2800, 0.2400, 0.2240, 0.2320, 0.2480, 0.2480, 0.2800, 0.2320];
pub const FINGERNET: [f64; 9] = [0.3920, 0.2800, 0.2400, 0.2880, 0.3440, 0.3280, 0.2960, 0.3200, 0.2560];

/// Printed (mean, std) under each column.
pub const EEGNET_PRINTED: (f64, f64) = (0.2196, 0.0225);
pub const DEEPCONVNET_PRINTED: (f64, f64) = (0.2533, 0.0256);
pub const FINGERNET_PRINTED: (f64, f64) = (0.3049, 0.0481);

pub fn columns() -> [Column<'static>; 3] {
    [
        ("eegnet", &EEGNET, EEGNET_PRINTED),
        ("deepconvnet", &DEEPCONVNET, DEEPCONVNET_PRINTED),
        ("fingernet", &FINGERNET, FINGERNET_PRINTED),
    ]
    .map(|(name, values, (mean, std))| Column {
        name,
        values: values.as_slice(),
        reported_mean: Some(mean),
        reported_std: Some(std),
    })
}
