#include "fineprune/ledger.hpp"

#include "fineprune/error.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace fineprune {

ActivationLedger::ActivationLedger(const Network& net, LedgerOptions options)
    : options_(options), topology_(net.unit_counts()) {
    for (std::size_t i = 0; i < net.layer_count(); ++i) {
        const std::size_t units = net.layer(i).spec.unit_count();
        if (units == 0) continue;
        layers_.push_back(i);
        totals_.emplace_back(units, 0.0);
    }
}

bool ActivationLedger::matches(const Network& net) const { return topology_ == net.unit_counts(); }

bool ActivationLedger::same_structure(const ActivationLedger& other) const {
    return topology_ == other.topology_ && options_ == other.options_;
}

std::size_t ActivationLedger::accumulator_count() const noexcept {
    std::size_t n = 0;
    for (const auto& t : totals_) n += t.size();
    return n;
}

void ActivationLedger::record(const Network& net, const Tensor& sample) {
    if (!matches(net)) fail(ErrorCode::structure_mismatch, "ledger was built for a different topology");
    std::vector<Tensor> trace;
    forward(net, sample, &trace);
    for (std::size_t slot = 0; slot < layers_.size(); ++slot) {
        const std::size_t li = layers_[slot];
        std::size_t source = li;
        if (options_.post_activation && li + 1 < net.layer_count() &&
            net.layer(li + 1).spec.kind == LayerKind::relu)
            source = li + 1;
        const Tensor& out = trace[source];
        auto& acc = totals_[slot];
        const std::size_t per_unit = out.size() / acc.size();
        for (std::size_t u = 0; u < acc.size(); ++u) {
            double sum = 0.0;
            for (std::size_t k = 0; k < per_unit; ++k) sum += std::fabs(static_cast<double>(out[u * per_unit + k]));
            acc[u] += sum;
        }
    }
    ++samples_;
}

void ActivationLedger::record_all(const Network& net, std::span<const Tensor> samples) {
    for (const Tensor& s : samples) record(net, s);
}

std::vector<UnitScore> ActivationLedger::scores() const {
    if (samples_ == 0) fail(ErrorCode::empty_input, "ledger has no recorded samples");
    std::vector<UnitScore> out;
    out.reserve(accumulator_count());
    const double n = static_cast<double>(samples_);
    for (std::size_t slot = 0; slot < layers_.size(); ++slot)
        for (std::size_t u = 0; u < totals_[slot].size(); ++u)
            out.push_back({layers_[slot], u, totals_[slot][u] / n});
    return out;
}

ActivationLedger merge(const ActivationLedger& a, const ActivationLedger& b) {
    if (!a.same_structure(b)) fail(ErrorCode::structure_mismatch, "cannot merge ledgers of different structure");
    ActivationLedger out = a;
    for (std::size_t slot = 0; slot < out.totals_.size(); ++slot)
        for (std::size_t u = 0; u < out.totals_[slot].size(); ++u) out.totals_[slot][u] += b.totals_[slot][u];
    out.samples_ += b.samples_;
    return out;
}

void export_ledger_csv(const ActivationLedger& ledger, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrorCode::io, "cannot open " + path.string() + " for writing");
    out << "layer_index,unit_index,score\n";
    char buf[64];
    for (const UnitScore& s : ledger.scores()) {
        std::snprintf(buf, sizeof buf, "%.9g", s.score);
        out << s.layer << ',' << s.unit << ',' << buf << '\n';
    }
    if (!out) fail(ErrorCode::io, "write failed for " + path.string());
}

} // namespace fineprune
