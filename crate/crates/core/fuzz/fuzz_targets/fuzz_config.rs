#![no_main]

use libfuzzer_sys::fuzz_target;
use radar::harness::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = ExperimentConfig::parse(text) {
        cfg.validate().expect("parsed configs are validated");
        for name in &cfg.variants {
            let _ = cfg.variant_config(name);
        }
    }
});
