#![no_main]

use fkplab::{GridWeight, Outside};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&mode, rest)) = data.split_first() else { return };
    let outside = if mode % 2 == 0 { Outside::Error } else { Outside::Clamp };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    if let Ok(grid) = GridWeight::from_csv_str(text, outside) {
        let again = GridWeight::from_csv_str(&grid.to_csv_string(), outside).expect("re-parse");
        assert_eq!(again.to_csv_string(), grid.to_csv_string());
    }
});
