#![no_main]

use libfuzzer_sys::fuzz_target;
use radar::Catalog;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(catalog) = Catalog::parse(text) {
        let again = Catalog::parse(&catalog.to_string()).expect("printed catalog must parse");
        assert_eq!(again, catalog);
    }
});
