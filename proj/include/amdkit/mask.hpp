#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "errors.hpp"

namespace amdkit {

inline constexpr unsigned kMaxPackedWidth = 63;

/// Binary ablation mask over d representational units, packed with bit i
/// holding unit i. 1 keeps the unit, 0 zeroes it.
struct Mask {
    unsigned width = 0;
    std::uint64_t bits = 0;

    Mask() = default;
    Mask(unsigned d, std::uint64_t b) : width(d), bits(b) {
        if (d > kMaxPackedWidth) throw ValidationError("mask width " + std::to_string(d) + " exceeds 63");
        if (d < 64 && (b >> d) != 0) throw ValidationError("mask bits set beyond width");
    }

    static Mask all_ones(unsigned d) { return {d, d == 0 ? 0 : (~std::uint64_t{0} >> (64 - d))}; }
    static Mask all_zeros(unsigned d) { return {d, 0}; }

    bool operator[](unsigned i) const { return (bits >> i) & 1u; }
    Mask flipped(unsigned i) const { return {width, bits ^ (std::uint64_t{1} << i)}; }
    unsigned popcount() const { return static_cast<unsigned>(__builtin_popcountll(bits)); }

    /// d-character 0/1 string, unit 0 leftmost.
    std::string to_string() const {
        std::string s(width, '0');
        for (unsigned i = 0; i < width; ++i)
            if ((*this)[i]) s[i] = '1';
        return s;
    }

    static Mask parse(std::string_view s) {
        if (s.size() > kMaxPackedWidth) throw ValidationError("mask string too long");
        std::uint64_t b = 0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] == '1')
                b |= std::uint64_t{1} << i;
            else if (s[i] != '0')
                throw ValidationError("mask string '" + std::string(s) + "' is not binary");
        }
        return {static_cast<unsigned>(s.size()), b};
    }

    friend bool operator==(const Mask&, const Mask&) = default;
};

inline unsigned hamming(std::uint64_t a, std::uint64_t b) {
    return static_cast<unsigned>(__builtin_popcountll(a ^ b));
}

}  // namespace amdkit
