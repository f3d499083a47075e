#![no_main]

use fkplab_dkp::CoefficientField;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(field) = CoefficientField::from_bytes(data) {
        // Accepted dumps are canonical.
        assert_eq!(field.to_bytes(), data);
    }
});
