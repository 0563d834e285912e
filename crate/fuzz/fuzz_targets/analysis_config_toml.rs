#![no_main]

use lcd_cli::{AnalysisConfig, Grid};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(config) = AnalysisConfig::from_toml_str(text) {
        assert!(!config.fit.grid.points().is_empty());
    }
    if let Ok(grid) = text.parse::<Grid>() {
        assert!(!grid.points().is_empty());
    }
});
