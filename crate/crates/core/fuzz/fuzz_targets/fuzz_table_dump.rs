#![no_main]

use libfuzzer_sys::fuzz_target;
use radar::rl::{Hyperparameters, ValueTable};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(table) = ValueTable::parse_dump(text, Hyperparameters::default()) {
        let dump = table.dump();
        let again = ValueTable::parse_dump(&dump, Hyperparameters::default()).expect("dump must parse");
        assert_eq!(again.dump(), dump);
    }
});
