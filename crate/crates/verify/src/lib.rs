//! Holds the `acceptance` test target; run it with
//! `cargo test -p solit-verify --test acceptance`.
