#include "fineprune/dataset.hpp"

#include "fineprune/error.hpp"
#include "fineprune/model_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace fineprune {

// ---------------------------------------------------------------------------
// LabeledDataset
// ---------------------------------------------------------------------------

void LabeledDataset::add(Tensor input, std::size_t label) {
    if (label >= class_count_)
        fail(ErrorCode::invalid_argument, "label " + std::to_string(label) + " out of range for " +
                                              std::to_string(class_count_) + " classes");
    if (!inputs_.empty() && input.shape() != inputs_.front().shape())
        fail(ErrorCode::dimension, "sample shape " + input.shape().str() + " differs from " +
                                       inputs_.front().shape().str());
    inputs_.push_back(std::move(input));
    labels_.push_back(label);
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
    LabeledDataset out(class_count_, provenance_);
    for (std::size_t i : indices) out.add(inputs_.at(i), labels_.at(i));
    return out;
}

LabeledDataset LabeledDataset::prefix_fraction(double fraction) const {
    if (!(fraction > 0.0) || fraction > 1.0)
        fail(ErrorCode::invalid_argument, "data fraction must lie in (0, 1], got " + std::to_string(fraction));
    const auto n = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(size()) - 1e-9));
    LabeledDataset out(class_count_, provenance_);
    for (std::size_t i = 0; i < std::min(n, size()); ++i) out.add(inputs_[i], labels_[i]);
    return out;
}

// ---------------------------------------------------------------------------
// IDX
// ---------------------------------------------------------------------------

namespace {

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t offset, const std::string& what) {
    if (offset + 4 > b.size()) fail(ErrorCode::parse, what + ": file ends inside its header");
    return (std::uint32_t{b[offset]} << 24) | (std::uint32_t{b[offset + 1]} << 16) |
           (std::uint32_t{b[offset + 2]} << 8) | std::uint32_t{b[offset + 3]};
}

} // namespace

LabeledDataset load_idx_images(const std::filesystem::path& image_path, const std::filesystem::path& label_path) {
    const auto images = read_file_bytes(image_path);
    const auto labels = read_file_bytes(label_path);
    const std::string iname = image_path.string(), lname = label_path.string();

    if (read_be32(images, 0, iname) != 0x00000803u)
        fail(ErrorCode::bad_magic, iname + " is not an IDX image file (expected magic 0x00000803)");
    if (read_be32(labels, 0, lname) != 0x00000801u)
        fail(ErrorCode::bad_magic, lname + " is not an IDX label file (expected magic 0x00000801)");

    const std::size_t count = read_be32(images, 4, iname);
    const std::size_t rows = read_be32(images, 8, iname);
    const std::size_t cols = read_be32(images, 12, iname);
    const std::size_t label_count = read_be32(labels, 4, lname);
    if (count != label_count)
        fail(ErrorCode::count_mismatch, std::to_string(count) + " images but " + std::to_string(label_count) + " labels");
    if (rows == 0 || cols == 0) fail(ErrorCode::parse, iname + ": zero image extent");
    if (images.size() < 16 + count * rows * cols) fail(ErrorCode::parse, iname + ": pixel data truncated");
    if (labels.size() < 8 + count) fail(ErrorCode::parse, lname + ": label data truncated");

    std::size_t classes = 0;
    for (std::size_t i = 0; i < count; ++i) classes = std::max<std::size_t>(classes, labels[8 + i] + 1u);
    LabeledDataset out(std::max<std::size_t>(classes, 1));
    const std::size_t pixels = rows * cols;
    for (std::size_t i = 0; i < count; ++i) {
        std::vector<float> data(pixels);
        const std::uint8_t* src = images.data() + 16 + i * pixels;
        for (std::size_t p = 0; p < pixels; ++p) data[p] = static_cast<float>(src[p]) / 255.0f;
        out.add(Tensor(Shape{1, rows, cols}, std::move(data)), labels[8 + i]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

LabeledDataset load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::io, "cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) fail(ErrorCode::parse, path.string() + ": missing header row");
    const std::size_t columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
    if (columns < 2) fail(ErrorCode::parse, path.string() + ": need at least one feature and a label column");

    std::vector<std::vector<float>> rows;
    std::vector<std::size_t> labels;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<float> values;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                values.push_back(std::stof(cell, &used));
            } catch (const std::exception&) {
                fail(ErrorCode::parse, path.string() + ":" + std::to_string(line_no) + ": bad number '" + cell + "'");
            }
        }
        if (values.size() != columns)
            fail(ErrorCode::parse, path.string() + ":" + std::to_string(line_no) + ": expected " +
                                       std::to_string(columns) + " columns, found " + std::to_string(values.size()));
        const float label = values.back();
        if (label < 0.0f || std::floor(label) != label)
            fail(ErrorCode::parse, path.string() + ":" + std::to_string(line_no) + ": label must be a non-negative integer");
        labels.push_back(static_cast<std::size_t>(label));
        values.pop_back();
        rows.push_back(std::move(values));
    }
    if (rows.empty()) fail(ErrorCode::empty_input, path.string() + " has no samples");
    const std::size_t classes = *std::max_element(labels.begin(), labels.end()) + 1;
    LabeledDataset out(classes);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::size_t n = rows[i].size();
        out.add(Tensor(Shape{n}, std::move(rows[i])), labels[i]);
    }
    return out;
}

void save_csv(const LabeledDataset& data, const std::filesystem::path& path) {
    if (data.empty()) fail(ErrorCode::empty_input, "cannot write an empty dataset");
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrorCode::io, "cannot open " + path.string() + " for writing");
    const std::size_t features = data.input(0).size();
    for (std::size_t f = 0; f < features; ++f) out << 'x' << f << ',';
    out << "label\n";
    char buf[32];
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (float v : data.input(i).data()) {
            // Shortest representation that round-trips.
            const auto res = std::to_chars(buf, buf + sizeof buf, v);
            out.write(buf, res.ptr - buf);
            out << ',';
        }
        out << data.label(i) << '\n';
    }
    if (!out) fail(ErrorCode::io, "write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// WAV
// ---------------------------------------------------------------------------

namespace {

std::uint32_t le32(const std::uint8_t* p) {
    return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
           (std::uint32_t{p[3]} << 24);
}
std::uint16_t le16(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

} // namespace

WavAudio load_wav(const std::filesystem::path& path) {
    const auto b = read_file_bytes(path);
    const std::string name = path.string();
    if (b.size() < 12 || std::memcmp(b.data(), "RIFF", 4) != 0 || std::memcmp(b.data() + 8, "WAVE", 4) != 0)
        fail(ErrorCode::unsupported_format, name + " is not a RIFF/WAVE file");

    bool have_fmt = false;
    std::uint16_t channels = 0, bits = 0;
    WavAudio audio;
    std::size_t pos = 12;
    while (pos + 8 <= b.size()) {
        const std::uint32_t size = le32(b.data() + pos + 4);
        const std::uint8_t* body = b.data() + pos + 8;
        const std::size_t available = b.size() - (pos + 8);
        if (std::memcmp(b.data() + pos, "fmt ", 4) == 0) {
            if (size < 16 || available < 16) fail(ErrorCode::unsupported_format, name + ": short fmt chunk");
            const std::uint16_t format = le16(body);
            channels = le16(body + 2);
            audio.sample_rate = le32(body + 4);
            bits = le16(body + 14);
            if (format != 1) fail(ErrorCode::unsupported_format, name + ": audio format " + std::to_string(format) + " is not PCM");
            if (bits != 16) fail(ErrorCode::unsupported_format, name + ": " + std::to_string(bits) + "-bit samples unsupported");
            if (channels != 1 && channels != 2)
                fail(ErrorCode::unsupported_format, name + ": " + std::to_string(channels) + " channels unsupported");
            have_fmt = true;
        } else if (std::memcmp(b.data() + pos, "data", 4) == 0) {
            if (!have_fmt) fail(ErrorCode::unsupported_format, name + ": data chunk before fmt chunk");
            const std::size_t bytes = std::min<std::size_t>(size, available);
            const std::size_t frames = bytes / (2u * channels);
            audio.samples.resize(frames);
            for (std::size_t i = 0; i < frames; ++i) {
                double acc = 0.0;
                for (std::size_t c = 0; c < channels; ++c)
                    acc += static_cast<std::int16_t>(le16(body + 2 * (i * channels + c)));
                audio.samples[i] = static_cast<float>(acc / channels / 32768.0);
            }
            return audio;
        }
        pos += 8 + size + (size & 1u);
    }
    fail(ErrorCode::unsupported_format, name + ": no data chunk");
}

void save_wav(const std::filesystem::path& path, std::uint32_t sample_rate, std::span<const std::int16_t> samples) {
    std::vector<std::uint8_t> b;
    auto put32 = [&](std::uint32_t v) { for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i))); };
    auto put16 = [&](std::uint16_t v) { b.push_back(static_cast<std::uint8_t>(v)); b.push_back(static_cast<std::uint8_t>(v >> 8)); };
    auto tag = [&](const char* t) { b.insert(b.end(), t, t + 4); };
    const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
    tag("RIFF");
    put32(36 + data_bytes);
    tag("WAVE");
    tag("fmt ");
    put32(16);
    put16(1);
    put16(1);
    put32(sample_rate);
    put32(sample_rate * 2);
    put16(2);
    put16(16);
    tag("data");
    put32(data_bytes);
    for (std::int16_t s : samples) put16(static_cast<std::uint16_t>(s));
    write_file_bytes(path, b);
}

} // namespace fineprune
