use carshare::cli::{parse_alpha_list, parse_rate_list};
use carshare::netmodel::{NetworkSpec, StationId};
use carshare::simkit::{parse_policies, RelocationPolicy};
use carshare::tracekit::parse_events;
use proptest::prelude::*;

proptest! {
    #[test]
    fn spec_parser_never_panics(text in "\\PC{0,300}") {
        let _ = NetworkSpec::from_json_str(&text);
    }

    #[test]
    fn spec_parser_on_json_shaped_text(body in "[\\[\\]{}:,\"a-z0-9_.\\- ]{0,200}") {
        let _ = NetworkSpec::from_json_str(&format!("{{\"stations\":{body}"));
    }

    #[test]
    fn event_parser_never_panics(rows in prop::collection::vec("[a-z0-9:,.TZ+\\- ]{0,60}", 0..20)) {
        let text = format!("event_type,timestamp,vehicle_id,lat,lon\n{}", rows.join("\n"));
        if let Ok(parsed) = parse_events(text.as_bytes()) {
            prop_assert!(parsed.events.windows(2).all(|w| (&w[0].vehicle_id, w[0].timestamp) <= (&w[1].vehicle_id, w[1].timestamp)));
        }
    }

    #[test]
    fn list_parsers_never_panic(text in "[0-9:,.e\\- a-z]{0,40}") {
        if let Ok(mu) = parse_rate_list(&text) {
            prop_assert!(mu.values().all(|&v| v.is_finite() && v > 0.0));
        }
        let dests = [StationId(1), StationId(2)];
        if let Ok(alpha) = parse_alpha_list(&text, &dests) {
            prop_assert!(alpha.values().all(|a| (0.0..=1.0).contains(a)));
        }
    }

    #[test]
    fn policies_round_trip(text in "(none|backpressure|perpair|uniform:[0-9.e\\-]{1,6}|[a-z:]{0,8})(,(none|uniform:0.[0-9]{1,3}))*") {
        if let Ok(ps) = parse_policies(&text) {
            for p in ps {
                prop_assert_eq!(p.to_string().parse::<RelocationPolicy>().unwrap(), p);
            }
        }
    }
}
