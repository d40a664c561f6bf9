#include "fineprune/audio.hpp"

#include "fineprune/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace fineprune {

bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

namespace {

void transform(std::vector<Complex>& a, bool inverse) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double angle = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        for (std::size_t start = 0; start < n; start += len) {
            for (std::size_t k = 0; k < len / 2; ++k) {
                // Twiddles from the exact angle rather than a running product.
                const Complex w = std::polar(1.0, angle * static_cast<double>(k));
                const Complex u = a[start + k];
                const Complex v = a[start + k + len / 2] * w;
                a[start + k] = u + v;
                a[start + k + len / 2] = u - v;
            }
        }
    }
    if (inverse)
        for (Complex& c : a) c /= static_cast<double>(n);
}

} // namespace

std::vector<Complex> fft(std::span<const Complex> x) {
    if (!is_power_of_two(x.size()))
        fail(ErrorCode::invalid_argument, "fft length " + std::to_string(x.size()) + " is not a power of two");
    std::vector<Complex> a(x.begin(), x.end());
    transform(a, false);
    return a;
}

std::vector<Complex> ifft(std::span<const Complex> x) {
    if (!is_power_of_two(x.size()))
        fail(ErrorCode::invalid_argument, "ifft length " + std::to_string(x.size()) + " is not a power of two");
    std::vector<Complex> a(x.begin(), x.end());
    transform(a, true);
    return a;
}

std::size_t spectrogram_frames(const SpectrogramConfig& cfg) {
    if (cfg.frame == 0 || cfg.hop == 0 || cfg.fixed_length < cfg.frame)
        fail(ErrorCode::invalid_argument, "spectrogram needs frame > 0, hop > 0 and fixed_length >= frame");
    return (cfg.fixed_length - cfg.frame) / cfg.hop + 1;
}

Tensor spectrogram(std::span<const float> samples, const SpectrogramConfig& cfg) {
    const std::size_t frames = spectrogram_frames(cfg);
    const std::size_t bins = cfg.frame / 2 + 1;
    std::size_t fft_len = 1;
    while (fft_len < cfg.frame) fft_len <<= 1;

    // Center-pad or center-crop to the fixed duration.
    std::vector<float> fixed(cfg.fixed_length, 0.0f);
    if (samples.size() >= cfg.fixed_length) {
        const std::size_t skip = (samples.size() - cfg.fixed_length) / 2;
        std::copy_n(samples.begin() + static_cast<std::ptrdiff_t>(skip), cfg.fixed_length, fixed.begin());
    } else {
        const std::size_t lead = (cfg.fixed_length - samples.size()) / 2;
        std::copy(samples.begin(), samples.end(), fixed.begin() + static_cast<std::ptrdiff_t>(lead));
    }

    std::vector<double> window(cfg.frame);
    for (std::size_t i = 0; i < cfg.frame; ++i)
        window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(cfg.frame));

    Tensor out(Shape{1, bins, frames});
    std::vector<Complex> buf(fft_len);
    for (std::size_t t = 0; t < frames; ++t) {
        std::fill(buf.begin(), buf.end(), Complex{});
        for (std::size_t i = 0; i < cfg.frame; ++i) buf[i] = fixed[t * cfg.hop + i] * window[i];
        const auto spectrum = fft(buf);
        for (std::size_t f = 0; f < bins; ++f)
            out.at(0, f, t) = static_cast<float>(std::log1p(std::abs(spectrum[f])));
    }
    return out;
}

LabeledDataset load_spoken_digits(const std::filesystem::path& directory, const SpectrogramConfig& cfg) {
    std::error_code ec;
    if (!std::filesystem::is_directory(directory, ec))
        fail(ErrorCode::io, directory.string() + " is not a directory");
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(directory))
        if (entry.is_regular_file() && entry.path().extension() == ".wav") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) fail(ErrorCode::empty_input, directory.string() + " holds no .wav files");

    LabeledDataset out(10);
    for (const auto& file : files) {
        const std::string stem = file.stem().string();
        if (stem.empty() || stem[0] < '0' || stem[0] > '9' || (stem.size() > 1 && stem[1] != '_'))
            fail(ErrorCode::parse, file.string() + ": name must start with '<digit>_'");
        const WavAudio audio = load_wav(file);
        out.add(spectrogram(audio.samples, cfg), static_cast<std::size_t>(stem[0] - '0'));
    }
    return out;
}

} // namespace fineprune
