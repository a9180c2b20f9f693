//! CRC-32 as used for image segments, store compares and the cross-channel
//! handshake: polynomial 0x04C11DB7, reflected input/output, initial value
//! 0xFFFFFFFF, final xor 0xFFFFFFFF (check value over "123456789" is
//! 0xCBF43926).

const fn build_table() -> [u32; 256] {
    // Reflected form of 0x04C11DB7.
    const POLY: u32 = 0xEDB8_8320;
    let mut table = [0u32; 256];
    let mut i = 0;
    while i < 256 {
        let mut v = i as u32;
        let mut bit = 0;
        while bit < 8 {
            v = if v & 1 != 0 { POLY ^ (v >> 1) } else { v >> 1 };
            bit += 1;
        }
        table[i] = v;
        i += 1;
    }
    table
}

static TABLE: [u32; 256] = build_table();

pub fn crc32(bytes: &[u8]) -> u32 {
    let mut value = 0xFFFF_FFFFu32;
    for &b in bytes {
        value = TABLE[((value ^ b as u32) & 0xFF) as usize] ^ (value >> 8);
    }
    value ^ 0xFFFF_FFFF
}
