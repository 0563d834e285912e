#![no_main]

use lcd_core::ingest::ColumnMap;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = ColumnMap::from_toml_str(text);
    }
});
