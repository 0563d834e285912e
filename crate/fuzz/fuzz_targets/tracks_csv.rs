#![no_main]

use lcd_core::ingest::{parse_tracks, TrackColumns};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = parse_tracks(data, "tracks", &TrackColumns::default()) {
        assert!(!rows.is_empty());
        for r in &rows {
            assert!(r.longitudinal_position.is_finite() && r.lateral_position.is_finite());
            assert!(r.time_headway.is_none_or(|t| t > 0.0));
        }
    }
});
