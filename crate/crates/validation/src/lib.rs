//! Holds the `acceptance` test target. Run it with
//! `cargo test -p aladin-validation --test acceptance`.
