//! Netlists shipped with the library.

pub const FRANSON_MODIFIED: &str = include_str!("../../circuits/franson_modified.circuit");
pub const FRANSON_ORIGINAL: &str = include_str!("../../circuits/franson_original.circuit");

/// `(file name, text)` for every builtin circuit.
pub const ALL: [(&str, &str); 2] = [
    ("franson_modified.circuit", FRANSON_MODIFIED),
    ("franson_original.circuit", FRANSON_ORIGINAL),
];

/// Look up a builtin by file name, with or without the `.circuit` suffix.
pub fn lookup(name: &str) -> Option<&'static str> {
    let stem = name.strip_suffix(".circuit").unwrap_or(name);
    ALL.iter()
        .find(|(file, _)| file.strip_suffix(".circuit") == Some(stem))
        .map(|(_, text)| *text)
}
