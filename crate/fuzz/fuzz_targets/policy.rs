#![no_main]

use carshare::simkit::{parse_policies, RelocationPolicy};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(policies) = parse_policies(text) {
        for p in policies {
            let again: RelocationPolicy = p.to_string().parse().expect("display output parses");
            assert_eq!(again, p);
        }
    }
});
