#pragma once

#include "fineprune/dataset.hpp"
#include "fineprune/tensor.hpp"

#include <complex>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace fineprune {

using Complex = std::complex<double>;

bool is_power_of_two(std::size_t n) noexcept;

// Iterative radix-2 decimation-in-time FFT. Length must be a power of two.
std::vector<Complex> fft(std::span<const Complex> x);
// Inverse transform including the 1/n scaling.
std::vector<Complex> ifft(std::span<const Complex> x);

struct SpectrogramConfig {
    std::size_t frame = 256;
    std::size_t hop = 128;
    // Samples are center-padded with zeros or center-cropped to this length
    // before framing, so every spectrogram has the same number of frames.
    std::size_t fixed_length = 8000; // one second at 8 kHz
};

std::size_t spectrogram_frames(const SpectrogramConfig& cfg);

// log(1 + |STFT|) with a periodic Hann window. Output [1 x F x T] with
// F = frame / 2 + 1 frequency bins. Frames shorter than the FFT length are
// zero-padded to the next power of two.
Tensor spectrogram(std::span<const float> samples, const SpectrogramConfig& cfg = {});

// Loads every *.wav in a directory named "<digit>_<speaker>_<n>.wav" (the
// free-spoken-digit convention) as spectrogram samples, sorted by filename.
LabeledDataset load_spoken_digits(const std::filesystem::path& directory,
                                  const SpectrogramConfig& cfg = {});

} // namespace fineprune
