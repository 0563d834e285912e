#![no_main]

use lcd_core::ingest::{parse_vehicle_meta, VehicleColumns};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(vehicles) = parse_vehicle_meta(data, "tracksMeta", &VehicleColumns::default()) {
        for v in &vehicles {
            assert!(v.length > 0.0 && v.width > 0.0);
        }
    }
});
