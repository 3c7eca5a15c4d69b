#pragma once

#include <bit>
#include <cstdint>
#include <limits>

namespace efta {

// IEEE 754 binary16 conversion helpers. Values are *stored* as 32-bit floats
// constrained to the 16-bit grid: quantize on write, promote on read.

inline constexpr float HALF_MAX = 65504.0f;

// Exact promotion of a binary16 bit pattern to float.
inline float half_bits_to_float(uint16_t h) {
    const uint32_t sign = static_cast<uint32_t>(h >> 15) << 31;
    uint32_t exp = (h >> 10) & 0x1f;
    uint32_t mant = h & 0x3ff;
    uint32_t bits;
    if (exp == 0) {
        if (mant == 0) {
            bits = sign;  // signed zero
        } else {
            // subnormal: renormalize
            int shift = 0;
            while ((mant & 0x400) == 0) {
                mant <<= 1;
                ++shift;
            }
            mant &= 0x3ff;
            bits = sign | ((127 - 15 + 1 - shift) << 23) | (mant << 13);
        }
    } else if (exp == 0x1f) {
        bits = sign | 0x7f800000u | (mant << 13);  // inf / nan
    } else {
        bits = sign | ((exp - 15 + 127) << 23) | (mant << 13);
    }
    return std::bit_cast<float>(bits);
}

// Round-to-nearest-even conversion of a float to binary16 bits.
// Overflow saturates to +/-inf, NaN stays NaN.
inline uint16_t float_to_half_bits(float f) {
    const uint32_t bits = std::bit_cast<uint32_t>(f);
    const uint16_t sign = static_cast<uint16_t>((bits >> 16) & 0x8000);
    const int32_t exp = static_cast<int32_t>((bits >> 23) & 0xff);
    const uint32_t mant = bits & 0x7fffff;

    if (exp == 0xff) {  // inf or nan: keep class, force quiet bit on nan
        return static_cast<uint16_t>(sign | 0x7c00 | (mant ? 0x200 | (mant >> 13) : 0));
    }

    int32_t e = exp - 127 + 15;  // rebias
    if (e >= 0x1f) return static_cast<uint16_t>(sign | 0x7c00);  // overflow -> inf
    if (e <= 0) {
        // subnormal half or underflow to zero
        if (e < -10) return sign;
        uint32_t m = mant | 0x800000;  // implicit leading 1
        const int shift = 14 - e;      // 14..24
        uint32_t half_mant = m >> shift;
        const uint32_t rem = m & ((1u << shift) - 1);
        const uint32_t halfway = 1u << (shift - 1);
        if (rem > halfway || (rem == halfway && (half_mant & 1))) ++half_mant;
        return static_cast<uint16_t>(sign | half_mant);  // may carry into exp=1: still correct
    }

    uint32_t half_mant = mant >> 13;
    const uint32_t rem = mant & 0x1fff;
    if (rem > 0x1000 || (rem == 0x1000 && (half_mant & 1))) {
        ++half_mant;
        if (half_mant == 0x400) {  // mantissa carry bumps exponent
            half_mant = 0;
            ++e;
            if (e >= 0x1f) return static_cast<uint16_t>(sign | 0x7c00);
        }
    }
    return static_cast<uint16_t>(sign | (e << 10) | half_mant);
}

// Snap a 32-bit float onto the 16-bit grid (round/overflow/NaN as above).
inline float quantize_half(float f) {
    return half_bits_to_float(float_to_half_bits(f));
}

inline bool on_half_grid(float f) {
    if (f != f) return true;  // any NaN counts as grid-resident
    return std::bit_cast<uint32_t>(quantize_half(f)) == std::bit_cast<uint32_t>(f);
}

}  // namespace efta
