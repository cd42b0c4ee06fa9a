//! `LEVEL key=value ...` lines on standard error.

use std::io::Write;

use log::{Level, LevelFilter, Log, Metadata, Record};

struct StderrLogger {
    level: LevelFilter,
}

impl Log for StderrLogger {
    fn enabled(&self, metadata: &Metadata) -> bool {
        metadata.level() <= self.level
    }

    fn log(&self, record: &Record) {
        if !self.enabled(record.metadata()) {
            return;
        }
        let mut err = std::io::stderr().lock();
        let _ = writeln!(err, "{} {}", record.level(), record.args());
    }

    fn flush(&self) {
        let _ = std::io::stderr().flush();
    }
}

/// Installs the logger once; later calls only adjust the level.
pub fn init(level: LevelFilter) {
    static LOGGER: std::sync::OnceLock<&'static StderrLogger> = std::sync::OnceLock::new();
    let logger = *LOGGER.get_or_init(|| Box::leak(Box::new(StderrLogger { level: LevelFilter::Trace })));
    let _ = log::set_logger(logger);
    log::set_max_level(level);
}

/// Quotes a value for a `key=value` field when it holds spaces, quotes or
/// `=`.
pub fn quote(value: &str) -> String {
    if value.is_empty() || value.contains([' ', '"', '=', '\n', '\t']) {
        format!("{value:?}")
    } else {
        value.to_string()
    }
}

pub fn parse_level(s: &str) -> Option<LevelFilter> {
    match s.to_ascii_lowercase().as_str() {
        "off" => Some(LevelFilter::Off),
        other => other.parse::<Level>().ok().map(|l| l.to_level_filter()),
    }
}
