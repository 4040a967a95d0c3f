#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "fedtdd/error.hpp"

namespace fedtdd {

// Half-spectrum of a real signal: coefficients 0..n/2 of the DFT of the
// zero-padded input, where n is the padded (power-of-two) length.
struct Spectrum {
    std::vector<std::complex<double>> coefficients;
    std::size_t original_length = 0;
    std::size_t padded_length = 0;
};

inline std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

// In-place iterative radix-2 Cooley-Tukey. Length must be a power of two.
inline void fft_pow2(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    if (n < 2) return;
    // bit-reversal permutation
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * M_PI / static_cast<double>(len);
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t j = 0; j < len / 2; ++j) {
                const std::complex<double> w(std::cos(ang * static_cast<double>(j)),
                                             std::sin(ang * static_cast<double>(j)));
                const std::complex<double> u = a[i + j];
                const std::complex<double> v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
            }
        }
    }
}

// DFT of a real signal, zero-padded to the next power of two; returns
// coefficients 0..n/2. DC and Nyquist bins are real by construction.
inline Spectrum rfft(std::span<const double> signal) {
    require(!signal.empty(), "rfft: signal must have length >= 1");
    const std::size_t n = next_pow2(signal.size());
    std::vector<std::complex<double>> buf(n, {0.0, 0.0});
    for (std::size_t i = 0; i < signal.size(); ++i) buf[i] = {signal[i], 0.0};
    fft_pow2(buf);
    Spectrum out;
    out.original_length = signal.size();
    out.padded_length = n;
    out.coefficients.assign(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(n / 2 + 1));
    out.coefficients.front().imag(0.0);
    if (n % 2 == 0) out.coefficients.back().imag(0.0);
    return out;
}

inline Spectrum rfft(const std::vector<double>& signal) {
    return rfft(std::span<const double>(signal.data(), signal.size()));
}

}  // namespace fedtdd
