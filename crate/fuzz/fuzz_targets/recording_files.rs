#![no_main]

// Input: recordingMeta, tracksMeta and tracks CSV separated by NUL bytes.

use lcd_core::extraction::{detect_lane_changes, ExtractionParams};
use lcd_core::ingest::{read_recording, validate_recording, ColumnMap};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let mut parts = data.splitn(3, |b| *b == 0);
    let (Some(meta), Some(vehicles), Some(tracks)) = (parts.next(), parts.next(), parts.next())
    else {
        return;
    };
    if let Ok(rec) = read_recording(tracks, vehicles, meta, &ColumnMap::default()) {
        for frames in rec.trajectories.values() {
            assert!(frames.windows(2).all(|w| w[0].frame < w[1].frame));
        }
        let _ = validate_recording(&rec);
        let _ = detect_lane_changes(&rec, &ExtractionParams::default());
    }
});
