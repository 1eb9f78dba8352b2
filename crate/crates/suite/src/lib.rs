//! Test-only package. `cargo test -p statecon-suite --test acceptance`
//! prints one line per acceptance criterion.
