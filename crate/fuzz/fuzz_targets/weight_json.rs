#![no_main]

use fkplab::WeightSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = WeightSpec::from_json_str(text) {
        // Whatever parses must survive its own serialization.
        let again = WeightSpec::from_json_str(&spec.to_json().to_string()).expect("re-parse");
        assert_eq!(again.to_json(), spec.to_json());
    }
});
