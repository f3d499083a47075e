#![no_main]

use fkplab_dkp::FieldSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = FieldSpec::from_json_str(text) {
        let again = FieldSpec::from_json_str(&spec.to_json_string()).expect("re-parse");
        assert_eq!(again, spec);
    }
});
