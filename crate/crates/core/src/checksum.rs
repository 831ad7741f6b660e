//! CRC-64 used for problem shards and checkpoint records.
//!
//! Parameters are CRC-64/ECMA-182: polynomial `0x42F0E1EBA9EA3693`, init 0,
//! no reflection, no final xor (check value `0x6C40DF5F0B497347`).

use crc::{Crc, CRC_64_ECMA_182};

const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_ECMA_182);

pub fn crc64(bytes: &[u8]) -> u64 {
    CRC64.checksum(bytes)
}
