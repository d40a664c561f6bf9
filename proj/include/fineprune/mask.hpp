#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace fineprune {

// Keep/drop flag per prunable unit, indexed [layer][unit]. Layers without
// units (relu, pool, flatten, softmax) carry an empty row so layer indices
// line up with Network::layers().
class PruneMask {
public:
    PruneMask() = default;
    explicit PruneMask(const std::vector<std::size_t>& unit_counts);

    std::size_t layer_count() const noexcept { return keep_.size(); }
    std::size_t unit_count(std::size_t layer) const { return keep_.at(layer).size(); }

    bool keeps(std::size_t layer, std::size_t unit) const { return keep_.at(layer).at(unit) != 0; }
    void drop(std::size_t layer, std::size_t unit) { keep_.at(layer).at(unit) = 0; }
    void keep(std::size_t layer, std::size_t unit) { keep_.at(layer).at(unit) = 1; }

    std::size_t dropped_units() const noexcept;
    std::size_t dropped_units(std::size_t layer) const;
    bool all_keep() const noexcept { return dropped_units() == 0; }

    // Union of dropped sets. Structures must match.
    PruneMask combined_with(const PruneMask& other) const;
    // True when every unit dropped here is also dropped in `other`.
    bool dropped_subset_of(const PruneMask& other) const;

    friend bool operator==(const PruneMask&, const PruneMask&) = default;

private:
    std::vector<std::vector<std::uint8_t>> keep_;
};

} // namespace fineprune
