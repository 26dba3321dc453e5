#pragma once

// Pipeline configuration: every module's parameters in one struct, read from a
// `key = value` text file. Blank lines and `#` comments are ignored, unknown
// keys are rejected, and anything not mentioned keeps its default.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "spikesign/deploy.hpp"
#include "spikesign/dataset.hpp"
#include "spikesign/dvs_sim.hpp"
#include "spikesign/errors.hpp"
#include "spikesign/lif.hpp"
#include "spikesign/metrics.hpp"
#include "spikesign/saliency.hpp"
#include "spikesign/training.hpp"

namespace spikesign {

struct PipelineConfig {
    DvsConfig dvs{};
    PreprocessConfig preprocess{}; // bank, saliency neuron, window, ROI, T, dt
    LifParamsTrain lif{};
    bool l1_spiking = true;
    TrainConfig train{};
    LifParamsDeploy deploy{};
    int frac_bits = 8;
    EnergyParams energy{};
    double energy_window_ms = 35.0;
    double val_fraction = 0.2;

    /// Cross-field consistency plus each module's own checks.
    void validate() const
    {
        dvs.validate();
        lif.validate();
        preprocess.saliency.lif.validate();
        train.validate();
        deploy.validate();
        if (frac_bits < 0 || frac_bits > 15) throw ParameterError("deploy.frac_bits must lie in [0, 15]");
        if (preprocess.bank.orientations < 2 || preprocess.bank.orientations % 2 != 0)
            throw ParameterError("saliency.orientations must be even and >= 2");
        if (preprocess.bank.radii.empty()) throw ParameterError("saliency.r0 needs at least one radius");
        if (preprocess.roi_side <= 0) throw ParameterError("roi.side must be positive");
        if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ParameterError("train.val_fraction must lie in [0, 1)");
        if (!(energy_window_ms > 0)) throw ParameterError("energy.window_ms must be positive");
    }
};

namespace detail {

inline std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_scalar(const std::string& key, const std::string& v)
{
    std::istringstream ss(v);
    T out{};
    if constexpr (std::is_same_v<T, bool>) {
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw ParameterError("key '" + key + "': expected true/false, got '" + v + "'");
    } else {
        ss >> out;
        if (ss.fail() || !ss.eof()) throw ParameterError("key '" + key + "': cannot parse '" + v + "'");
    }
    return out;
}

template <typename T>
std::string format_scalar(T v)
{
    if constexpr (std::is_same_v<T, bool>) {
        return v ? "true" : "false";
    } else {
        // Shortest text that parses back to the same value.
        char buf[32];
        const auto r = std::to_chars(buf, buf + sizeof buf, v);
        return std::string(buf, r.ptr);
    }
}

struct ConfigKey {
    std::function<void(PipelineConfig&, const std::string&)> set;
    std::function<std::string(const PipelineConfig&)> get;
};

template <typename T>
ConfigKey scalar_key(std::string key, std::function<T&(PipelineConfig&)> ref)
{
    return {[key, ref](PipelineConfig& c, const std::string& v) { ref(c) = parse_scalar<T>(key, v); },
            [ref](const PipelineConfig& c) { return format_scalar(ref(const_cast<PipelineConfig&>(c))); }};
}

inline const std::map<std::string, ConfigKey>& config_keys()
{
    using C = PipelineConfig;
    static const std::map<std::string, ConfigKey> keys = [] {
        std::map<std::string, ConfigKey> k;
        auto d = [&k](const std::string& name, std::function<double&(C&)> r) { k[name] = scalar_key<double>(name, r); };
        auto i = [&k](const std::string& name, std::function<int&(C&)> r) { k[name] = scalar_key<int>(name, r); };
        auto u = [&k](const std::string& name, std::function<std::uint64_t&(C&)> r) {
            k[name] = scalar_key<std::uint64_t>(name, r);
        };
        auto b = [&k](const std::string& name, std::function<bool&(C&)> r) { k[name] = scalar_key<bool>(name, r); };

        d("dvs.contrast_pos", [](C& c) -> double& { return c.dvs.contrast_threshold_pos; });
        d("dvs.contrast_neg", [](C& c) -> double& { return c.dvs.contrast_threshold_neg; });
        u("dvs.frame_dt_us", [](C& c) -> std::uint64_t& { return c.dvs.frame_dt_us; });
        i("dvs.n_frames", [](C& c) -> int& { return c.dvs.n_frames; });
        i("dvs.upsample", [](C& c) -> int& { return c.dvs.upsample_factor; });
        u("dvs.seed", [](C& c) -> std::uint64_t& { return c.dvs.seed; });
        d("dvs.epsilon", [](C& c) -> double& { return c.dvs.epsilon_intensity; });

        i("saliency.orientations", [](C& c) -> int& { return c.preprocess.bank.orientations; });
        d("saliency.rho", [](C& c) -> double& { return c.preprocess.bank.rho; });
        i("saliency.kernel_size", [](C& c) -> int& { return c.preprocess.bank.size; });
        d("saliency.gain", [](C& c) -> double& { return c.preprocess.saliency.gain; });
        i("saliency.steps", [](C& c) -> int& { return c.preprocess.saliency.steps; });
        d("saliency.beta", [](C& c) -> double& { return c.preprocess.saliency.lif.beta; });
        d("saliency.threshold", [](C& c) -> double& { return c.preprocess.saliency.lif.threshold; });
        u("saliency.window_us", [](C& c) -> std::uint64_t& { return c.preprocess.attention_window_us; });
        k["saliency.r0"] = {[](C& c, const std::string& v) {
                                std::vector<double> radii;
                                std::istringstream ss(v);
                                std::string tok;
                                while (std::getline(ss, tok, ',')) {
                                    const double r = parse_scalar<double>("saliency.r0", trim(tok));
                                    if (!(r > 0)) throw ParameterError("saliency.r0 entries must be positive");
                                    radii.push_back(r);
                                }
                                if (radii.empty()) throw ParameterError("saliency.r0 needs at least one radius");
                                c.preprocess.bank.radii = radii;
                            },
                            [](const C& c) {
                                std::string s;
                                for (double r : c.preprocess.bank.radii) s += (s.empty() ? "" : ",") + format_scalar(r);
                                return s;
                            }};

        i("roi.side", [](C& c) -> int& { return c.preprocess.roi_side; });
        k["roi.mode"] = {[](C& c, const std::string& v) { c.preprocess.roi_mode = roi_mode_from_string(v); },
                         [](const C& c) { return to_string(c.preprocess.roi_mode); }};

        i("snn.timesteps", [](C& c) -> int& { return c.preprocess.timesteps; });
        u("snn.dt_us", [](C& c) -> std::uint64_t& { return c.preprocess.dt_us; });
        d("snn.beta", [](C& c) -> double& { return c.lif.beta; });
        d("snn.threshold", [](C& c) -> double& { return c.lif.threshold; });
        b("snn.l1_spiking", [](C& c) -> bool& { return c.l1_spiking; });
        k["snn.readout"] = {[](C& c, const std::string& v) {
                                if (v == "spike_count") c.train.readout = Readout::spike_count;
                                else if (v == "membrane") c.train.readout = Readout::membrane;
                                else throw ParameterError("snn.readout must be spike_count or membrane");
                            },
                            [](const C& c) {
                                return std::string(c.train.readout == Readout::spike_count ? "spike_count" : "membrane");
                            }};

        d("train.gamma", [](C& c) -> double& { return c.train.gamma; });
        d("train.label_smoothing", [](C& c) -> double& { return c.train.epsilon; });
        d("train.mining_threshold", [](C& c) -> double& { return c.train.mining_threshold; });
        d("train.lr", [](C& c) -> double& { return c.train.lr_max; });
        d("train.beta1", [](C& c) -> double& { return c.train.adam_beta1; });
        d("train.beta2", [](C& c) -> double& { return c.train.adam_beta2; });
        d("train.adam_eps", [](C& c) -> double& { return c.train.adam_eps; });
        d("train.weight_decay", [](C& c) -> double& { return c.train.weight_decay; });
        d("train.t0", [](C& c) -> double& { return c.train.t0; });
        d("train.t_mult", [](C& c) -> double& { return c.train.t_mult; });
        d("train.eta_min", [](C& c) -> double& { return c.train.eta_min; });
        i("train.epochs", [](C& c) -> int& { return c.train.epochs; });
        d("train.surrogate_slope", [](C& c) -> double& { return c.train.surrogate_slope; });
        i("train.batch_size", [](C& c) -> int& { return c.train.batch_size; });
        u("train.seed", [](C& c) -> std::uint64_t& { return c.train.seed; });
        b("train.class_balanced", [](C& c) -> bool& { return c.train.class_balanced; });
        i("train.jobs", [](C& c) -> int& { return c.train.jobs; });
        d("train.val_fraction", [](C& c) -> double& { return c.val_fraction; });

        d("deploy.dt", [](C& c) -> double& { return c.deploy.dt; });
        d("deploy.delay", [](C& c) -> double& { return c.deploy.delay; });
        d("deploy.tau_m", [](C& c) -> double& { return c.deploy.tau_m; });
        d("deploy.tau_syn_e", [](C& c) -> double& { return c.deploy.tau_syn_e; });
        d("deploy.tau_syn_i", [](C& c) -> double& { return c.deploy.tau_syn_i; });
        d("deploy.tau_refrac", [](C& c) -> double& { return c.deploy.tau_refrac; });
        d("deploy.v_rest", [](C& c) -> double& { return c.deploy.v_rest; });
        d("deploy.v_reset", [](C& c) -> double& { return c.deploy.v_reset; });
        d("deploy.v_thresh", [](C& c) -> double& { return c.deploy.v_thresh; });
        d("deploy.w_fc", [](C& c) -> double& { return c.deploy.w_fc; });
        d("deploy.w_out", [](C& c) -> double& { return c.deploy.w_out; });
        d("deploy.w_inh", [](C& c) -> double& { return c.deploy.w_inh; });
        d("deploy.input_gain", [](C& c) -> double& { return c.deploy.input_gain; });
        i("deploy.frac_bits", [](C& c) -> int& { return c.frac_bits; });

        d("energy.p_s_nj", [](C& c) -> double& { return c.energy.p_s_nj; });
        i("energy.stages", [](C& c) -> int& { return c.energy.stages; });
        d("energy.dt_ms", [](C& c) -> double& { return c.energy.dt_ms; });
        d("energy.window_ms", [](C& c) -> double& { return c.energy_window_ms; });
        d("energy.p_i_mw", [](C& c) -> double& { return c.energy.p_i_mw; });
        d("energy.p_b_mw", [](C& c) -> double& { return c.energy.p_b_mw; });
        d("energy.p_n_mw", [](C& c) -> double& { return c.energy.p_n_mw; });
        d("energy.n_cores", [](C& c) -> double& { return c.energy.n_cores; });
        return k;
    }();
    return keys;
}

} // namespace detail

/// Applies one `key = value` assignment. Throws ParameterError on unknown keys.
inline void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value)
{
    const auto& keys = detail::config_keys();
    const auto it = keys.find(key);
    if (it == keys.end()) throw ParameterError("unknown config key '" + key + "'");
    it->second.set(cfg, value);
}

/// Applies "key=value".
inline void apply_override(PipelineConfig& cfg, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ParameterError("override '" + assignment + "' is not key=value");
    set_config_value(cfg, detail::trim(assignment.substr(0, eq)), detail::trim(assignment.substr(eq + 1)));
}

inline PipelineConfig parse_config(std::istream& in, PipelineConfig cfg = {})
{
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParameterError("config line " + std::to_string(line_no) + ": expected key = value");
        try {
            set_config_value(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
        } catch (const ParameterError& e) {
            throw ParameterError("config line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return cfg;
}

inline PipelineConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config '" + path.string() + "'");
    return parse_config(in);
}

/// Every key with its current value, one per line; parse_config reads it back.
inline std::string dump_config(const PipelineConfig& cfg)
{
    std::string out;
    for (const auto& [key, k] : detail::config_keys()) out += key + " = " + k.get(cfg) + "\n";
    return out;
}

inline std::vector<std::string> config_key_names()
{
    std::vector<std::string> names;
    for (const auto& [key, k] : detail::config_keys()) names.push_back(key);
    return names;
}

} // namespace spikesign
