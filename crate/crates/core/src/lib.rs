// Licensed under the Apache-2.0 license

pub mod client;
pub mod codec;
pub mod crypto;
pub mod device;
pub mod harness;
pub mod image;
pub mod memmap;
pub mod puf;
pub mod sma;
pub mod ttp;
pub mod wire;
