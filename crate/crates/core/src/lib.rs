pub mod bench;
pub mod broker;
pub mod clock;
pub mod controller;
pub mod deploy;
pub mod netsim;
pub mod p2p;
pub mod services;
pub mod source;
pub mod transport;
pub mod wire;
