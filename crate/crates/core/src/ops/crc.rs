//! CRC-32C (Castagnoli) and CRC-16/T10-DIF on top of the `crc` crate.

use crc::{Crc, Table, CRC_16_T10_DIF, CRC_32_ISCSI};

/// Reflected CRC-32C polynomial.
pub const CRC32C_POLY: u32 = 0x82F6_3B78;
/// CRC-16/T10-DIF polynomial, non-reflected.
pub const CRC16_T10_POLY: u16 = 0x8BB7;

static CRC32C: Crc<u32, Table<16>> = Crc::<u32, Table<16>>::new(&CRC_32_ISCSI);
static CRC16: Crc<u16, Table<16>> = Crc::<u16, Table<16>>::new(&CRC_16_T10_DIF);

/// CRC-32C of `data` continuing from `seed`.
///
/// `seed` is a previous CRC result (0 to start), so
/// `crc32c(crc32c(0, a), b) == crc32c(0, a ++ b)`.
pub fn crc32c(seed: u32, data: &[u8]) -> u32 {
    let mut d = CRC32C.digest_with_initial((!seed).reverse_bits());
    d.update(data);
    d.finalize()
}

/// CRC-16/T10-DIF (init 0, no reflection, no final xor) continuing from `crc`.
pub fn crc16_t10dif_update(crc: u16, data: &[u8]) -> u16 {
    let mut d = CRC16.digest_with_initial(crc);
    d.update(data);
    d.finalize()
}

pub fn crc16_t10dif(data: &[u8]) -> u16 {
    CRC16.checksum(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Bit-at-a-time references.
    fn crc32c_bitwise(seed: u32, data: &[u8]) -> u32 {
        let mut crc = seed ^ 0xFFFF_FFFF;
        for &b in data {
            crc ^= b as u32;
            for _ in 0..8 {
                let mask = (crc & 1).wrapping_neg() & CRC32C_POLY;
                crc = (crc >> 1) ^ mask;
            }
        }
        crc ^ 0xFFFF_FFFF
    }

    fn crc16_bitwise(data: &[u8]) -> u16 {
        let mut crc: u16 = 0;
        for &b in data {
            crc ^= (b as u16) << 8;
            for _ in 0..8 {
                crc = if crc & 0x8000 != 0 { (crc << 1) ^ CRC16_T10_POLY } else { crc << 1 };
            }
        }
        crc
    }

    #[test]
    fn check_vectors() {
        assert_eq!(crc32c_bitwise(0, b"123456789"), 0xE306_9283);
        assert_eq!(crc32c(0, b"123456789"), 0xE306_9283);
        assert_eq!(crc32c(0, b""), 0);
        assert_eq!(crc16_bitwise(b"123456789"), 0xD0DB);
        assert_eq!(crc16_t10dif(b"123456789"), 0xD0DB);
        assert_eq!(crc16_t10dif(&[0u8; 512]), 0);
    }

    #[test]
    fn matches_bitwise() {
        let data: Vec<u8> = (0..1031u32).map(|i| (i * 131 + 7) as u8).collect();
        for len in [0, 1, 7, 8, 63, 64, 1031] {
            assert_eq!(crc32c(0, &data[..len]), crc32c_bitwise(0, &data[..len]));
            assert_eq!(crc32c(0xDEAD_BEEF, &data[..len]), crc32c_bitwise(0xDEAD_BEEF, &data[..len]));
            assert_eq!(crc16_t10dif(&data[..len]), crc16_bitwise(&data[..len]));
        }
    }

    #[test]
    fn chaining() {
        let data: Vec<u8> = (0..4096u32).map(|i| (i ^ (i >> 3)) as u8).collect();
        for split in [0, 1, 100, 2048, 4095, 4096] {
            let (a, b) = data.split_at(split);
            assert_eq!(crc32c(crc32c(0, a), b), crc32c(0, &data));
            assert_eq!(crc16_t10dif_update(crc16_t10dif(a), b), crc16_t10dif(&data));
        }
    }
}
