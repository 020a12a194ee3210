//! Holds the `acceptance` test target, which checks the workspace against
//! its acceptance criteria. Run it with `cargo test -p qmimo-validation`.
