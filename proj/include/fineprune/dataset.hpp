#pragma once

#include "fineprune/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace fineprune {

enum class Provenance { source, target };

// Inputs and labels live in separate arrays so the unlabeled view
// (inputs()) can be handed to label-blind code without copying.
class LabeledDataset {
public:
    LabeledDataset() = default;
    LabeledDataset(std::size_t class_count, Provenance provenance = Provenance::source)
        : class_count_(class_count), provenance_(provenance) {}

    void add(Tensor input, std::size_t label);

    std::size_t size() const noexcept { return inputs_.size(); }
    bool empty() const noexcept { return inputs_.empty(); }
    std::size_t class_count() const noexcept { return class_count_; }
    Provenance provenance() const noexcept { return provenance_; }
    void set_provenance(Provenance p) noexcept { provenance_ = p; }

    std::span<const Tensor> inputs() const noexcept { return inputs_; }
    std::span<const std::size_t> labels() const noexcept { return labels_; }
    const Tensor& input(std::size_t i) const { return inputs_.at(i); }
    std::size_t label(std::size_t i) const { return labels_.at(i); }

    // Samples at the given positions, in that order.
    LabeledDataset subset(std::span<const std::size_t> indices) const;
    // First ceil(fraction * size) samples; fraction in (0, 1].
    LabeledDataset prefix_fraction(double fraction) const;

private:
    std::size_t class_count_ = 0;
    Provenance provenance_ = Provenance::source;
    std::vector<Tensor> inputs_;
    std::vector<std::size_t> labels_;
};

// IDX (MNIST-style) images 0x00000803 + labels 0x00000801, big-endian
// extents. Pixels scaled to [0, 1]; each sample is [1 x rows x cols].
LabeledDataset load_idx_images(const std::filesystem::path& image_path,
                               const std::filesystem::path& label_path);

// Header row, one sample per row, integer class label in the last column.
// Samples are 1-D. class_count = max label + 1.
LabeledDataset load_csv(const std::filesystem::path& path);
void save_csv(const LabeledDataset& data, const std::filesystem::path& path);

struct WavAudio {
    std::uint32_t sample_rate = 0;
    std::vector<float> samples; // mono, int16 / 32768
};

// RIFF/WAVE PCM 16-bit, mono or stereo (channels averaged).
WavAudio load_wav(const std::filesystem::path& path);
// Mono PCM-16 writer, used for fixtures.
void save_wav(const std::filesystem::path& path, std::uint32_t sample_rate,
              std::span<const std::int16_t> samples);

} // namespace fineprune
