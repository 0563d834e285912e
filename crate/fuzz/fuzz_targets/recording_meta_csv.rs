#![no_main]

use lcd_core::ingest::{parse_recording_meta, RecordingColumns};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(meta) = parse_recording_meta(data, "recordingMeta", &RecordingColumns::default()) {
        assert!(meta.frame_rate > 0.0);
        for list in &meta.lane_boundaries {
            let up = list.windows(2).all(|w| w[1] > w[0]);
            let down = list.windows(2).all(|w| w[1] < w[0]);
            assert!(up || down);
        }
    }
});
