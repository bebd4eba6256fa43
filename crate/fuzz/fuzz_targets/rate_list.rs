#![no_main]

use carshare::cli::{parse_alpha_list, parse_rate_list};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let (rates, alphas) = text.split_once('|').unwrap_or((text, "uniform"));
    if let Ok(mu) = parse_rate_list(rates) {
        assert!(mu.values().all(|&v| v.is_finite() && v > 0.0));
        let dests: Vec<_> = mu.keys().copied().collect();
        if let Ok(alpha) = parse_alpha_list(alphas, &dests) {
            assert_eq!(alpha.len(), dests.len());
            assert!(alpha.values().all(|a| (0.0..=1.0).contains(a)));
        }
    }
});
