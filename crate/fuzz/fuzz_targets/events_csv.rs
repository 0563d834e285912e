#![no_main]

use lcd_core::extraction::{read_events, write_events};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(events) = read_events(data) else {
        return;
    };
    let mut first = Vec::new();
    write_events(&mut first, &events).unwrap();
    let again = read_events(first.as_slice()).expect("written events parse");
    let mut second = Vec::new();
    write_events(&mut second, &again).unwrap();
    assert_eq!(first, second);
});
