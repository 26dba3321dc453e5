#pragma once

// Surrogate-gradient BPTT training: initialisation, focal loss with label
// smoothing, class balancing and hard example mining, AdamW, and cosine
// annealing with warm restarts.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "spikesign/errors.hpp"
#include "spikesign/event.hpp"
#include "spikesign/network.hpp"
#include "spikesign/parallel.hpp"

namespace spikesign {

struct TrainConfig {
    double gamma = 2.0;
    double epsilon = 0.1;
    double mining_threshold = 0.65;
    double lr_max = 3e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 1e-4;
    double t0 = 25.0;
    double t_mult = 2.0;
    double eta_min = 2e-7;
    int epochs = 130;
    int timesteps = 35;
    double surrogate_slope = 25.0;
    int batch_size = 16;
    std::uint64_t seed = 1;
    bool class_balanced = true;
    Readout readout = Readout::spike_count;
    int jobs = 1;

    void validate() const
    {
        if (!(gamma >= 0)) throw ParameterError("gamma must be >= 0");
        if (!(epsilon >= 0 && epsilon < 1)) throw ParameterError("epsilon must lie in [0, 1)");
        if (!(mining_threshold > 0 && mining_threshold < 1)) throw ParameterError("mining_threshold must lie in (0, 1)");
        if (!(eta_min < lr_max) && lr_max != 0.0) throw ParameterError("eta_min must be below lr_max");
        if (!(lr_max >= 0)) throw ParameterError("lr_max must be >= 0");
        if (!(t0 > 0) || !(t_mult >= 1)) throw ParameterError("schedule needs t0 > 0 and t_mult >= 1");
        if (batch_size <= 0 || timesteps <= 0) throw ParameterError("batch_size and timesteps must be positive");
        if (!(surrogate_slope > 0)) throw ParameterError("surrogate slope must be positive");
    }
};

// ---------------------------------------------------------------------------
// Initialisation

namespace detail {

/// Uniform in [0, 1) from the top 53 bits; identical on every platform.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double standard_normal(std::mt19937_64& rng)
{
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

} // namespace detail

/// Kaiming-normal for conv layers (std sqrt(2/fan_in)), Xavier-uniform for
/// dense layers (bound sqrt(6/(fan_in+fan_out))).
inline void init_weights(NetworkWeights& net, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    for (auto& layer : net.layers) {
        if (layer.kind == LayerKind::conv) {
            const double std_dev = std::sqrt(2.0 / layer.conv.taps());
            for (double& w : layer.weights) w = std_dev * detail::standard_normal(rng);
        } else {
            const double bound = std::sqrt(6.0 / (layer.inputs + layer.outputs));
            for (double& w : layer.weights) w = (2.0 * detail::uniform01(rng) - 1.0) * bound;
        }
    }
}

inline NetworkWeights init_weights(std::uint64_t seed, bool l1_spiking = true)
{
    auto net = NetworkWeights::recognition(l1_spiking);
    init_weights(net, seed);
    return net;
}

// ---------------------------------------------------------------------------
// Loss

/// Inverse class frequency, normalised to mean 1 over the classes present.
/// Absent classes get weight 0.
struct ClassWeights {
    std::vector<double> alpha;

    static ClassWeights uniform(int classes) { return {std::vector<double>(static_cast<std::size_t>(classes), 1.0)}; }

    static ClassWeights balanced(const std::vector<int>& labels, int classes)
    {
        std::vector<double> counts(static_cast<std::size_t>(classes), 0.0);
        for (int l : labels) counts.at(static_cast<std::size_t>(l)) += 1.0;
        ClassWeights cw{std::vector<double>(static_cast<std::size_t>(classes), 0.0)};
        double sum = 0.0;
        int present = 0;
        for (std::size_t c = 0; c < counts.size(); ++c)
            if (counts[c] > 0) {
                cw.alpha[c] = 1.0 / counts[c];
                sum += cw.alpha[c];
                ++present;
            }
        for (double& a : cw.alpha) a *= present / sum;
        return cw;
    }
};

struct LossResult {
    double loss = 0.0;
    std::vector<bool> selected;
    std::vector<std::vector<double>> grad; // dLoss/dlogits per sample, zero when not selected
    std::vector<double> p_label;
};

inline std::vector<double> softmax(std::span<const double> z)
{
    const double m = *std::max_element(z.begin(), z.end());
    std::vector<double> p(z.size());
    double s = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) s += (p[i] = std::exp(z[i] - m));
    for (double& v : p) v /= s;
    return p;
}

/// Focal loss on one sample and its gradient with respect to the logits.
/// FL = -alpha * sum_c q_c (1 - p_c)^gamma log p_c with q the smoothed target.
inline double focal_loss(std::span<const double> logits, int label, double alpha, double gamma, double epsilon,
                         std::vector<double>* grad = nullptr)
{
    const auto C = logits.size();
    const double m = *std::max_element(logits.begin(), logits.end());
    double s = 0.0;
    for (double z : logits) s += std::exp(z - m);
    const double log_norm = m + std::log(s);
    double loss = 0.0;
    std::vector<double> p(C), h(C);
    double h_sum = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
        const double logp = logits[c] - log_norm;
        p[c] = std::exp(logp);
        const double q = (static_cast<int>(c) == label ? 1.0 - epsilon : 0.0) + epsilon / static_cast<double>(C);
        const double one_minus = 1.0 - p[c];
        const double mod = gamma == 0.0 ? 1.0 : std::pow(one_minus, gamma);
        loss -= q * mod * logp;
        // p_c * d/dp_c [(1-p)^gamma log p] = (1-p)^gamma - gamma p (1-p)^(gamma-1) log p
        double dterm = mod;
        if (gamma != 0.0 && one_minus > 0.0) dterm -= gamma * p[c] * std::pow(one_minus, gamma - 1.0) * logp;
        h[c] = q * dterm;
        h_sum += h[c];
    }
    if (grad) {
        grad->assign(C, 0.0);
        for (std::size_t j = 0; j < C; ++j) (*grad)[j] = -alpha * (h[j] - p[j] * h_sum);
    }
    return alpha * loss;
}

/// Batch loss with hard example mining: samples whose label probability is
/// below the mining threshold are kept; if fewer than a quarter of the batch
/// qualify, every sample is kept.
inline LossResult loss_and_select(const std::vector<std::vector<double>>& logits, const std::vector<int>& labels,
                                  const TrainConfig& cfg, const ClassWeights& weights)
{
    if (logits.empty() || logits.size() != labels.size()) throw ContractError("loss needs a non-empty, label-matched batch");
    const std::size_t B = logits.size();
    LossResult r;
    r.selected.assign(B, false);
    r.p_label.resize(B);
    std::size_t n_sel = 0;
    for (std::size_t i = 0; i < B; ++i) {
        r.p_label[i] = softmax(logits[i])[static_cast<std::size_t>(labels[i])];
        if (r.p_label[i] < cfg.mining_threshold) {
            r.selected[i] = true;
            ++n_sel;
        }
    }
    if (4 * n_sel < B) {
        std::fill(r.selected.begin(), r.selected.end(), true);
        n_sel = B;
    }
    r.grad.assign(B, {});
    for (std::size_t i = 0; i < B; ++i) {
        const double alpha = weights.alpha.at(static_cast<std::size_t>(labels[i]));
        std::vector<double> g;
        const double fl = focal_loss(logits[i], labels[i], alpha, cfg.gamma, cfg.epsilon, &g);
        if (r.selected[i]) {
            r.loss += fl / static_cast<double>(n_sel);
            for (double& v : g) v /= static_cast<double>(n_sel);
        } else {
            std::fill(g.begin(), g.end(), 0.0);
        }
        r.grad[i] = std::move(g);
    }
    return r;
}

// ---------------------------------------------------------------------------
// Schedule and optimiser

/// Cosine annealing with warm restarts; `epoch` may be fractional.
inline double lr_schedule(double epoch, const TrainConfig& cfg)
{
    if (epoch < 0) throw ParameterError("epoch must be >= 0");
    double start = 0.0;
    double length = cfg.t0;
    while (epoch >= start + length) {
        start += length;
        length *= cfg.t_mult;
    }
    const double t = epoch - start;
    return cfg.eta_min + 0.5 * (cfg.lr_max - cfg.eta_min) * (1.0 + std::cos(std::numbers::pi * t / length));
}

/// AdamW with decoupled weight decay: w <- w(1 - lr*decay) - lr * mhat / (sqrt(vhat) + eps).
class AdamW {
public:
    AdamW() = default;
    explicit AdamW(const NetworkWeights& net)
    {
        for (const auto& l : net.layers) {
            m_.emplace_back(l.weights.size(), 0.0);
            v_.emplace_back(l.weights.size(), 0.0);
        }
    }

    void step(NetworkWeights& net, const std::vector<std::vector<double>>& grads, double lr, const TrainConfig& cfg)
    {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(t_));
        const double shrink = 1.0 - lr * cfg.weight_decay;
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            auto& w = net.layers[l].weights;
            for (std::size_t i = 0; i < w.size(); ++i) {
                const double g = grads[l][i];
                m_[l][i] = cfg.adam_beta1 * m_[l][i] + (1.0 - cfg.adam_beta1) * g;
                v_[l][i] = cfg.adam_beta2 * v_[l][i] + (1.0 - cfg.adam_beta2) * g * g;
                const double mhat = m_[l][i] / bc1;
                const double vhat = v_[l][i] / bc2;
                w[i] = w[i] * shrink - lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
            }
        }
    }

    std::uint64_t steps() const noexcept { return t_; }

private:
    std::vector<std::vector<double>> m_, v_;
    std::uint64_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Training loop

struct Sample {
    SpikeRaster raster;
    int label = 0;
};

struct EpochMetrics {
    int epoch = 0;
    double lr = 0.0;
    double loss = 0.0;
    double train_accuracy = 0.0;
};

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Owns the weights and optimiser state across epochs.
///
/// Per-sample gradients of a batch may be computed on several threads; they
/// are always summed in batch order, so results do not depend on `jobs`.
class Trainer {
public:
    Trainer(NetworkWeights weights, TrainConfig cfg, ClassWeights class_weights, LifParamsTrain lif = {})
        : net_(std::move(weights)), cfg_(cfg), class_weights_(std::move(class_weights)), lif_(lif), opt_(net_)
    {
        cfg_.validate();
        lif_.validate();
        net_.check_consistent();
    }

    const NetworkWeights& weights() const noexcept { return net_; }
    const TrainConfig& config() const noexcept { return cfg_; }

    /// One pass over `data` in a seeded shuffled order. `lr_override`
    /// replaces the scheduled rate when non-negative.
    EpochMetrics train_epoch(const std::vector<Sample>& data, int epoch, double lr_override = -1.0)
    {
        if (data.empty()) throw ContractError("training set is empty");
        EpochMetrics m;
        m.epoch = epoch;
        m.lr = lr_override >= 0.0 ? lr_override : lr_schedule(epoch, cfg_);
        std::vector<std::size_t> order(data.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::mt19937_64 rng(cfg_.seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(epoch + 1)));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

        double loss_sum = 0.0;
        std::size_t correct = 0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg_.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg_.batch_size));
            std::vector<const Sample*> batch;
            for (std::size_t i = start; i < end; ++i) batch.push_back(&data[order[i]]);
            const auto step = train_step(batch, m.lr);
            if (!std::isfinite(step.loss)) {
                std::ostringstream msg;
                msg << "non-finite loss at epoch " << epoch << ", batch " << batches << ", lr " << m.lr;
                throw TrainingError(msg.str());
            }
            loss_sum += step.loss;
            correct += step.correct;
            ++batches;
        }
        m.loss = loss_sum / static_cast<double>(batches);
        m.train_accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
        return m;
    }

    struct StepResult {
        double loss = 0.0;
        std::size_t correct = 0;
    };

    StepResult train_step(const std::vector<const Sample*>& batch, double lr)
    {
        const std::size_t B = batch.size();
        std::vector<ForwardTrace> traces(B);
        const FastSigmoidSurrogate spike{cfg_.surrogate_slope};
        run_parallel(B, [&](std::size_t i) {
            const auto input = raster_to_input(batch[i]->raster);
            traces[i] = forward_trace(net_, input, batch[i]->raster.timesteps(), lif_, spike, cfg_.readout);
        });
        std::vector<std::vector<double>> logits(B);
        std::vector<int> labels(B);
        StepResult res;
        for (std::size_t i = 0; i < B; ++i) {
            logits[i] = traces[i].logits;
            labels[i] = batch[i]->label;
            if (classify(traces[i].logits) == labels[i]) ++res.correct;
        }
        const auto loss = loss_and_select(logits, labels, cfg_, class_weights_);
        res.loss = loss.loss;
        if (!std::isfinite(res.loss)) return res;

        std::vector<std::vector<std::vector<double>>> per_sample(B);
        run_parallel(B, [&](std::size_t i) {
            if (loss.selected[i])
                per_sample[i] = backward_trace(net_, traces[i], loss.grad[i], lif_, spike, cfg_.readout);
        });
        std::vector<std::vector<double>> grads(net_.layers.size());
        for (std::size_t l = 0; l < grads.size(); ++l) grads[l].assign(net_.layers[l].weights.size(), 0.0);
        for (std::size_t i = 0; i < B; ++i) {
            if (per_sample[i].empty()) continue;
            for (std::size_t l = 0; l < grads.size(); ++l)
                for (std::size_t k = 0; k < grads[l].size(); ++k) grads[l][k] += per_sample[i][l][k];
        }
        opt_.step(net_, grads, lr, cfg_);
        return res;
    }

private:
    void run_parallel(std::size_t n, const std::function<void(std::size_t)>& fn) const { parallel_for(n, cfg_.jobs, fn); }

    NetworkWeights net_;
    TrainConfig cfg_;
    ClassWeights class_weights_;
    LifParamsTrain lif_;
    AdamW opt_;
};

/// Fraction of samples whose float-mode prediction matches the label.
inline double accuracy(const NetworkWeights& net, const std::vector<Sample>& data, const LifParamsTrain& lif = {},
                       Readout readout = Readout::spike_count)
{
    if (data.empty()) return 0.0;
    std::size_t correct = 0;
    for (const auto& s : data)
        if (classify(forward(s.raster, net, lif, readout).logits) == s.label) ++correct;
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

} // namespace spikesign
