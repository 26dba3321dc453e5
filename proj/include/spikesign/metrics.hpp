#pragma once

// Spike accounting, the dynamic part of the neuromorphic power model, and
// classification metrics.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "spikesign/errors.hpp"
#include "spikesign/network.hpp"

namespace spikesign {

/// Spike totals for three populations over a number of samples.
class SpikeLedger {
public:
    SpikeLedger() = default;

    /// Builds a ledger from published per-sample averages (one notional sample).
    static SpikeLedger from_averages(std::array<double, 3> avg, double window_ms = 35.0)
    {
        for (double a : avg)
            if (!(a >= 0.0) || !std::isfinite(a)) throw DomainError("spike averages must be finite and non-negative");
        SpikeLedger l;
        l.totals_ = avg;
        l.samples_ = 1;
        l.window_ms_ = window_ms;
        return l;
    }

    void record(std::span<const std::uint64_t> per_layer)
    {
        if (per_layer.size() != 3) throw ContractError("ledger expects three layer counts");
        for (std::size_t i = 0; i < 3; ++i) totals_[i] += static_cast<double>(per_layer[i]);
        ++samples_;
    }

    /// Associative, order independent.
    SpikeLedger& merge(const SpikeLedger& other)
    {
        for (std::size_t i = 0; i < 3; ++i) totals_[i] += other.totals_[i];
        samples_ += other.samples_;
        return *this;
    }

    std::array<double, 3> averages() const
    {
        if (samples_ == 0) return {0.0, 0.0, 0.0};
        return {totals_[0] / samples_, totals_[1] / samples_, totals_[2] / samples_};
    }

    double total_average() const
    {
        const auto a = averages();
        return a[0] + a[1] + a[2];
    }

    std::array<double, 3> totals() const { return totals_; }
    std::uint64_t samples() const { return samples_; }
    double window_ms() const { return window_ms_; }
    void set_window_ms(double w) { window_ms_ = w; }

    SpikeLedger scaled(double k) const
    {
        SpikeLedger l = *this;
        for (double& t : l.totals_) t *= k;
        return l;
    }

    nlohmann::json to_json() const
    {
        const auto a = averages();
        return {{"avg_spikes", {{"L1", a[0]}, {"L2", a[1]}, {"L3", a[2]}}},
                {"total_spikes", {totals_[0], totals_[1], totals_[2]}},
                {"samples", samples_},
                {"window_ms", window_ms_}};
    }

    /// Accepts either `{"avg_spikes": {...}}` or a bare `[L1, L2, L3]` average list.
    static SpikeLedger from_json(const nlohmann::json& j)
    {
        if (j.is_array()) {
            if (j.size() != 3) throw FormatError("ledger array must hold three averages", 0);
            return from_averages({j[0].get<double>(), j[1].get<double>(), j[2].get<double>()});
        }
        const auto& src = j.contains("ledger") ? j.at("ledger") : j;
        if (!src.contains("avg_spikes")) throw FormatError("ledger JSON lacks avg_spikes", 0);
        const auto& a = src.at("avg_spikes");
        const double window = src.value("window_ms", 35.0);
        SpikeLedger l = a.is_array() ? from_averages({a[0].get<double>(), a[1].get<double>(), a[2].get<double>()}, window)
                                     : from_averages({a.at("L1").get<double>(), a.at("L2").get<double>(),
                                                      a.at("L3").get<double>()}, window);
        if (src.contains("total_spikes") && src.contains("samples")) {
            const auto& t = src.at("total_spikes");
            l.totals_ = {t[0].get<double>(), t[1].get<double>(), t[2].get<double>()};
            l.samples_ = src.at("samples").get<std::uint64_t>();
        }
        return l;
    }

private:
    std::array<double, 3> totals_{0.0, 0.0, 0.0};
    std::uint64_t samples_ = 0;
    double window_ms_ = 35.0;
};

struct EnergyParams {
    double p_s_nj = 8.0; // energy per synaptic event
    int stages = 2;
    double dt_ms = 1.0;
    // Static terms of P_T = P_I + P_B + P_N n + P_S s. Not modelled; zero unless supplied.
    double p_i_mw = 0.0;
    double p_b_mw = 0.0;
    double p_n_mw = 0.0;
    double n_cores = 0.0;
};

struct EnergyReport {
    std::array<double, 3> avg_spikes{};
    double total_spikes = 0.0;
    double energy_nj = 0.0;
    double dynamic_power_mw = 0.0;
    double total_power_mw = 0.0;
    double latency_ms = 0.0;
    double window_ms = 0.0;
    double p_s_nj = 0.0;

    nlohmann::json to_json() const
    {
        return {{"avg_spikes", {{"L1", avg_spikes[0]}, {"L2", avg_spikes[1]}, {"L3", avg_spikes[2]}}},
                {"total_spikes", total_spikes},
                {"energy_nJ", energy_nj},
                {"dynamic_power_mW", dynamic_power_mw},
                {"total_power_mW", total_power_mw},
                {"latency_ms", latency_ms},
                {"window_ms", window_ms},
                {"P_S_nJ", p_s_nj}};
    }
};

inline EnergyReport energy_report(const SpikeLedger& ledger, const EnergyParams& p = {})
{
    if (!(ledger.window_ms() > 0.0)) throw DomainError("window must be positive");
    if (p.stages < 0 || !(p.dt_ms > 0.0)) throw DomainError("stages and dt must be positive");
    EnergyReport r;
    r.avg_spikes = ledger.averages();
    r.total_spikes = r.avg_spikes[0] + r.avg_spikes[1] + r.avg_spikes[2];
    r.energy_nj = p.p_s_nj * r.total_spikes;
    r.dynamic_power_mw = r.energy_nj / (ledger.window_ms() * 1000.0); // nJ per ms = uW
    r.total_power_mw = p.p_i_mw + p.p_b_mw + p.p_n_mw * p.n_cores + r.dynamic_power_mw;
    r.latency_ms = (p.stages + 1) * p.dt_ms;
    r.window_ms = ledger.window_ms();
    r.p_s_nj = p.p_s_nj;
    return r;
}

/// Plain-text table: one row per dataset, columns as in a power summary.
inline std::string energy_table(const std::vector<std::pair<std::string, EnergyReport>>& rows)
{
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-12s %10s %10s %10s %12s %14s %12s\n", "Dataset", "L1", "L2", "L3", "Total",
                  "Energy (nJ)", "Power (mW)");
    out += buf;
    for (const auto& [name, r] : rows) {
        std::snprintf(buf, sizeof buf, "%-12s %10.2f %10.2f %10.2f %12.2f %14.2f %12.3f\n", name.c_str(),
                      r.avg_spikes[0], r.avg_spikes[1], r.avg_spikes[2], r.total_spikes, r.energy_nj,
                      r.dynamic_power_mw);
        out += buf;
    }
    if (!rows.empty()) {
        std::snprintf(buf, sizeof buf, "Latency: %.0f ms\n", rows.front().second.latency_ms);
        out += buf;
    }
    return out;
}

// ---------------------------------------------------------------------------

struct ClassificationMetrics {
    double accuracy = 0.0;
    std::vector<std::optional<double>> per_class; // empty optional: no samples of that class
    std::vector<std::vector<std::uint64_t>> confusion; // [label][prediction]
    std::size_t samples = 0;

    nlohmann::json to_json() const
    {
        nlohmann::json pc = nlohmann::json::array();
        for (const auto& v : per_class) pc.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
        return {{"accuracy", accuracy}, {"samples", samples}, {"per_class", pc}, {"confusion", confusion}};
    }
};

inline ClassificationMetrics evaluate(std::span<const int> predictions, std::span<const int> labels,
                                      int classes = kNumClasses)
{
    if (predictions.empty()) throw DomainError("evaluate on empty input");
    if (predictions.size() != labels.size()) throw ContractError("predictions and labels differ in length");
    ClassificationMetrics m;
    m.samples = labels.size();
    m.confusion.assign(static_cast<std::size_t>(classes), std::vector<std::uint64_t>(static_cast<std::size_t>(classes), 0));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int l = labels[i], p = predictions[i];
        if (l < 0 || l >= classes || p < 0 || p >= classes) throw ContractError("class index out of range");
        ++m.confusion[static_cast<std::size_t>(l)][static_cast<std::size_t>(p)];
        if (l == p) ++correct;
    }
    m.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
    for (int c = 0; c < classes; ++c) {
        const auto& row = m.confusion[static_cast<std::size_t>(c)];
        std::uint64_t n = 0;
        for (auto v : row) n += v;
        if (n == 0)
            m.per_class.emplace_back(std::nullopt);
        else
            m.per_class.emplace_back(static_cast<double>(row[static_cast<std::size_t>(c)]) / static_cast<double>(n));
    }
    return m;
}

} // namespace spikesign
