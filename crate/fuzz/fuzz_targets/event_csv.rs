#![no_main]

use carshare::tracekit::{estimate, parse_events};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(parsed) = parse_events(data) else {
        return;
    };
    if parsed.events.len() <= 2000 {
        let _ = estimate(&parsed.events, 250.0, None);
    }
});
