#![no_main]
use libfuzzer_sys::fuzz_target;
use varad_cli::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = RunConfig::from_json(text) {
        let _ = cfg.validate();
        let echoed = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&echoed).unwrap(), cfg);
    }
});
