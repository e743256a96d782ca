mod common;

use sdn_disagg::controller::Mode;

#[test]
fn expiry_and_reinstall_internal() {
    common::check_expiry(Mode::Internal).unwrap();
}

#[test]
fn expiry_and_reinstall_broker() {
    common::check_expiry(Mode::Broker).unwrap();
}
