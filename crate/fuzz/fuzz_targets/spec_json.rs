#![no_main]

use carshare::netmodel::{derive_mu_split, validate, NetworkSpec};
use carshare::pfsolver::{convolution, metrics, solve_traffic};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(spec) = NetworkSpec::from_json_str(text) else {
        return;
    };
    let Ok(spec) = derive_mu_split(&spec) else {
        return;
    };
    if !validate(&spec).is_empty() || spec.fleet_size > 500 || spec.num_queues() > 200 {
        return;
    }
    let round_trip = NetworkSpec::from_json_str(&spec.to_json_string()).expect("written specs parse");
    assert_eq!(round_trip.num_queues(), spec.num_queues());
    if let Ok(e) = solve_traffic(&spec) {
        if let Ok(g) = convolution(&spec, &e) {
            let _ = metrics(&spec, &e, &g);
        }
    }
});
