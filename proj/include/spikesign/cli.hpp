#pragma once

// The `spikesign` command line: one binary, one subcommand per pipeline stage.
// Stages talk through files (event files, checkpoints, JSON reports), so each
// can be run and checked on its own.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "spikesign/config.hpp"
#include "spikesign/dataset.hpp"
#include "spikesign/deploy.hpp"
#include "spikesign/dvs_sim.hpp"
#include "spikesign/event.hpp"
#include "spikesign/metrics.hpp"
#include "spikesign/network.hpp"
#include "spikesign/parallel.hpp"
#include "spikesign/saliency.hpp"
#include "spikesign/training.hpp"
#include "spikesign/weights_io.hpp"

namespace spikesign {

namespace cli_detail {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline void write_json(const fs::path& path, const json& j) { detail::write_file_atomic(path, j.dump(2) + "\n"); }

inline json read_json(const fs::path& path) { return json::parse(detail::read_file(path)); }

inline json roi_json(const Roi& r, RoiMode mode)
{
    return {{"cx", r.center_x}, {"cy", r.center_y}, {"side", r.side}, {"mode", to_string(mode)},
            {"left", r.left},   {"top", r.top}};
}

/// Reads the dataset split and turns every event file into a labelled raster.
inline std::vector<Sample> load_samples(const std::vector<DatasetEntry>& entries, const PipelineConfig& cfg, int jobs)
{
    const FilterBank bank(cfg.preprocess.bank);
    std::vector<Sample> out(entries.size());
    parallel_for(entries.size(), jobs, [&](std::size_t i) {
        const auto stream = read_events(entries[i].path);
        out[i] = {prepare_sample(stream, bank, cfg.preprocess).raster, entries[i].label};
    });
    return out;
}

/// Every k-th sample of each class (k = round(1 / fraction)) goes to `val`.
inline void split_validation(const std::vector<Sample>& all, double fraction, std::vector<Sample>& train,
                             std::vector<Sample>& val)
{
    const int stride = fraction > 0.0 ? std::max(2, static_cast<int>(std::lround(1.0 / fraction))) : 0;
    train.clear();
    val.clear();
    std::vector<int> seen(kNumClasses, 0);
    for (const auto& s : all) {
        const int n = seen.at(static_cast<std::size_t>(s.label))++;
        (stride > 0 && n % stride == stride - 1 ? val : train).push_back(s);
    }
}

/// Keeps the listed classes (all when empty) and at most `per_class` files of each.
inline std::vector<DatasetEntry> select_entries(std::vector<DatasetEntry> entries, const std::vector<int>& classes,
                                                std::size_t per_class)
{
    std::vector<std::size_t> seen(kNumClasses, 0);
    std::vector<DatasetEntry> out;
    for (auto& e : entries) {
        if (!classes.empty() && std::find(classes.begin(), classes.end(), e.label) == classes.end()) continue;
        if (per_class > 0 && seen[static_cast<std::size_t>(e.label)] >= per_class) continue;
        ++seen[static_cast<std::size_t>(e.label)];
        out.push_back(std::move(e));
    }
    return out;
}

inline std::vector<int> parse_class_list(const std::string& list)
{
    std::vector<int> classes;
    std::istringstream ss(list);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!detail::trim(tok).empty()) classes.push_back(parse_class(detail::trim(tok)));
    return classes;
}

struct Shared {
    std::string config_path;
    std::vector<std::string> overrides;

    PipelineConfig config() const
    {
        PipelineConfig cfg = config_path.empty() ? PipelineConfig{} : load_config(config_path);
        for (const auto& o : overrides) apply_override(cfg, o);
        cfg.train.timesteps = cfg.preprocess.timesteps;
        cfg.validate();
        return cfg;
    }
};

inline int run_convert(const Shared& sh, const std::string& csv, const std::string& out_dir, const std::string& split,
                       std::optional<std::uint64_t> seed, std::size_t limit, int jobs, std::ostream& out)
{
    PipelineConfig cfg = sh.config();
    if (seed) cfg.dvs.seed = *seed;
    std::ifstream in(csv);
    if (!in) throw std::runtime_error("cannot open CSV '" + csv + "'");
    auto rows = parse_slmnist_csv(in);
    if (limit > 0 && rows.size() > limit) rows.resize(limit);
    fs::create_directories(out_dir);
    std::vector<std::uint64_t> counts(rows.size(), 0);
    parallel_for(rows.size(), jobs, [&](std::size_t i) {
        DvsConfig dvs = cfg.dvs;
        dvs.seed = cfg.dvs.seed + i; // per-sample stream, independent of thread scheduling
        const auto stream = convert_image_to_events(rows[i].image, dvs);
        write_events(fs::path(out_dir) / event_file_name(split, i, rows[i].label), stream);
        counts[i] = stream.size();
    });
    std::uint64_t total = 0;
    for (auto c : counts) total += c;
    out << json{{"samples", rows.size()}, {"events", total}, {"split", split}, {"out", out_dir}}.dump() << "\n";
    return 0;
}

inline int run_saliency(const Shared& sh, const std::string& events, const std::string& out_path, const std::string& pgm,
                        std::ostream& out)
{
    const PipelineConfig cfg = sh.config();
    const auto stream = read_events(events);
    const FilterBank bank(cfg.preprocess.bank);
    const int side = std::min({cfg.preprocess.roi_side, stream.width(), stream.height()});
    const auto frame = accumulate_frame(stream, 0, cfg.preprocess.attention_window_us);
    const auto map = compute_saliency(frame, bank, cfg.preprocess.saliency);
    const Roi roi = extract_roi(map, side, cfg.preprocess.roi_mode);
    const json j = roi_json(roi, cfg.preprocess.roi_mode);
    if (!pgm.empty()) write_pgm(pgm, map);
    if (out_path.empty())
        out << j.dump() << "\n";
    else
        write_json(out_path, j);
    return 0;
}

inline int run_train(const Shared& sh, const std::string& data, const std::string& checkpoint, const std::string& log,
                     std::size_t subset, const std::string& class_list, std::optional<int> epochs, int jobs,
                     std::ostream& out)
{
    PipelineConfig cfg = sh.config();
    if (epochs) cfg.train.epochs = *epochs;
    cfg.train.jobs = std::max(cfg.train.jobs, jobs);
    const auto classes = parse_class_list(class_list);
    const auto entries = select_entries(list_dataset(data, "train"), classes, subset);
    if (entries.empty()) throw std::runtime_error("no training files in '" + data + "'");
    const auto all = load_samples(entries, cfg, cfg.train.jobs);

    std::vector<Sample> train, val;
    split_validation(all, cfg.val_fraction, train, val);
    if (train.empty()) throw std::runtime_error("validation split left no training samples");

    std::vector<int> labels;
    for (const auto& s : train) labels.push_back(s.label);
    const auto weights = cfg.train.class_balanced ? ClassWeights::balanced(labels, kNumClasses)
                                                  : ClassWeights::uniform(kNumClasses);
    Trainer trainer(init_weights(cfg.train.seed, cfg.l1_spiking), cfg.train, weights, cfg.lif);

    std::string csv = "epoch,lr,loss,train_acc,val_acc\n";
    double val_acc = 0.0;
    for (int e = 0; e < cfg.train.epochs; ++e) {
        const auto m = trainer.train_epoch(train, e);
        val_acc = val.empty() ? 0.0 : accuracy(trainer.weights(), val, cfg.lif, cfg.train.readout);
        std::ostringstream row;
        row.precision(8);
        row << m.epoch << "," << m.lr << "," << m.loss << "," << m.train_accuracy << "," << val_acc << "\n";
        csv += row.str();
        out << row.str() << std::flush;
        if (!log.empty()) detail::write_file_atomic(log, csv);
    }
    CheckpointMeta meta;
    meta.beta = cfg.lif.beta;
    meta.threshold = cfg.lif.threshold;
    meta.timesteps = cfg.preprocess.timesteps;
    meta.seed = cfg.train.seed;
    meta.provenance = {{"dataset", data},
                       {"train_samples", train.size()},
                       {"val_samples", val.size()},
                       {"classes", classes},
                       {"epochs", cfg.train.epochs},
                       {"val_accuracy", val_acc},
                       {"readout", cfg.train.readout == Readout::spike_count ? "spike_count" : "membrane"}};
    save_checkpoint(checkpoint, trainer.weights(), meta);
    return 0;
}

inline int run_eval(const Shared& sh, const std::string& checkpoint, const std::string& data, const std::string& split,
                    const std::string& mode, const std::string& image_path, const std::string& out_path,
                    std::size_t subset, const std::string& class_list, int jobs, std::ostream& out)
{
    const PipelineConfig cfg = sh.config();
    if (mode != "float" && mode != "deploy") throw ParameterError("--mode must be float or deploy");
    const auto net = load_weights(checkpoint);
    const auto entries = select_entries(list_dataset(data, split), parse_class_list(class_list), subset);
    if (entries.empty()) throw std::runtime_error("no '" + split + "' files in '" + data + "'");
    const auto samples = load_samples(entries, cfg, jobs);

    std::optional<DeployImage> image;
    if (mode == "deploy") {
        const auto q = image_path.empty() ? quantize(net, cfg.frac_bits) : decode_quantized(detail::read_file(image_path));
        image = map_projections(q, cfg.deploy);
    }
    std::vector<int> preds(samples.size()), labels(samples.size());
    std::vector<LayerSpikes> spikes(samples.size());
    parallel_for(samples.size(), jobs, [&](std::size_t i) {
        labels[i] = samples[i].label;
        if (image) {
            const auto r = deploy_forward(samples[i].raster, *image, cfg.deploy);
            preds[i] = classify(r.class_counts);
            spikes[i] = r.spikes;
        } else {
            const auto r = forward(samples[i].raster, net, cfg.lif, cfg.train.readout);
            preds[i] = classify(r.logits);
            spikes[i] = r.spikes;
        }
    });
    SpikeLedger ledger;
    ledger.set_window_ms(cfg.energy_window_ms);
    for (const auto& s : spikes) ledger.record(s.counts);
    const auto metrics = evaluate(preds, labels);
    json j = metrics.to_json();
    j["mode"] = mode;
    j["split"] = split;
    j["ledger"] = ledger.to_json();
    j["predictions"] = preds;
    j["labels"] = labels;
    if (out_path.empty())
        out << j.dump() << "\n";
    else
        write_json(out_path, j);
    out << mode << " accuracy " << metrics.accuracy << " on " << metrics.samples << " samples\n";
    return 0;
}

inline int run_quantize(const Shared& sh, const std::string& checkpoint, const std::string& out_path,
                        const std::string& report_path, std::optional<int> frac_bits, std::ostream& out)
{
    PipelineConfig cfg = sh.config();
    if (frac_bits) cfg.frac_bits = *frac_bits;
    if (cfg.frac_bits < 0 || cfg.frac_bits > 15) throw ParameterError("fractional bits must lie in [0, 15]");
    const auto net = load_weights(checkpoint);
    std::vector<QuantLayerReport> report;
    const auto q = quantize(net, cfg.frac_bits, &report);
    detail::write_file_atomic(out_path, encode_quantized(q));
    json layers = json::array();
    std::size_t saturated = 0;
    for (const auto& r : report) {
        layers.push_back({{"frac_bits", r.frac_bits}, {"saturated", r.saturated}, {"max_abs_error", r.max_abs_error}});
        saturated += r.saturated;
    }
    const json j{{"frac_bits", cfg.frac_bits}, {"saturated", saturated}, {"layers", layers}};
    if (report_path.empty())
        out << j.dump() << "\n";
    else
        write_json(report_path, j);
    return 0;
}

inline int run_energy(const Shared& sh, const std::vector<std::string>& inputs, const std::string& out_path,
                      std::ostream& out)
{
    const PipelineConfig cfg = sh.config();
    std::vector<std::pair<std::string, EnergyReport>> rows;
    json reports = json::array();
    for (const auto& in : inputs) {
        auto ledger = SpikeLedger::from_json(read_json(in));
        const auto j = read_json(in);
        const auto& src = j.is_object() && j.contains("ledger") ? j["ledger"] : j;
        if (!(src.is_object() && src.contains("window_ms"))) ledger.set_window_ms(cfg.energy_window_ms);
        const auto r = energy_report(ledger, cfg.energy);
        auto rj = r.to_json();
        rj["source"] = in;
        reports.push_back(rj);
        rows.emplace_back(fs::path(in).stem().string(), r);
    }
    const json j = reports.size() == 1 ? reports[0] : json{{"reports", reports}};
    if (!out_path.empty()) write_json(out_path, j);
    out << energy_table(rows);
    return 0;
}

inline int run_demo(const Shared& sh, const std::string& events, const std::string& checkpoint, const std::string& mode,
                    const std::string& out_path, std::ostream& out)
{
    const PipelineConfig cfg = sh.config();
    if (mode != "float" && mode != "deploy") throw ParameterError("--mode must be float or deploy");
    const auto net = load_weights(checkpoint);
    const FilterBank bank(cfg.preprocess.bank);
    const auto stream = read_events(events);
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    const auto prepared = prepare_sample(stream, bank, cfg.preprocess);
    const auto t1 = clock::now();
    std::vector<double> scores;
    LayerSpikes spikes;
    if (mode == "deploy") {
        const auto r = deploy_forward(prepared.raster, map_projections(quantize(net, cfg.frac_bits), cfg.deploy), cfg.deploy);
        scores.assign(r.class_counts.begin(), r.class_counts.end());
        spikes = r.spikes;
    } else {
        const auto r = forward(prepared.raster, net, cfg.lif, cfg.train.readout);
        scores = r.logits;
        spikes = r.spikes;
    }
    const auto t2 = clock::now();
    const int cls = classify(scores);
    const auto ms = [](auto a, auto b) { return std::chrono::duration<double, std::milli>(b - a).count(); };
    const json j{{"class", cls},
                 {"letter", std::string(1, class_letter(cls))},
                 {"mode", mode},
                 {"scores", scores},
                 {"spikes", spikes.counts},
                 {"roi", roi_json(prepared.roi, cfg.preprocess.roi_mode)},
                 {"attention_ms", ms(t0, t1)},
                 {"classify_ms", ms(t1, t2)},
                 {"wall_ms", ms(t0, t2)}};
    if (!out_path.empty()) write_json(out_path, j);
    out << j.dump() << "\n";
    return 0;
}

} // namespace cli_detail

/// Parses argv and runs one subcommand.
inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    using namespace cli_detail;
    CLI::App app{"Event-driven fingerspelling recognition pipeline", "spikesign"};
    app.require_subcommand(0, 1);
    app.fallthrough();
    Shared sh;
    bool print_config = false;
    app.add_option("-c,--config", sh.config_path, "key = value configuration file")->check(CLI::ExistingFile);
    app.add_option("--set", sh.overrides, "override one config key (key=value), repeatable");
    app.add_flag("--print-config", print_config, "print the effective configuration and exit");

    int jobs = 1;
    std::size_t subset = 0, limit = 0;
    std::string classes, csv, out_dir, split = "train", events, out_path, pgm, data, checkpoint, log, mode = "float",
                                     image, report;
    std::optional<std::uint64_t> seed;
    std::optional<int> epochs, frac_bits;
    std::vector<std::string> ledgers;

    auto* convert = app.add_subcommand("convert-mnist", "SL-MNIST CSV to simulated event files");
    convert->add_option("--csv", csv, "SL-MNIST CSV (label + 784 pixels per row)")->required();
    convert->add_option("-o,--out", out_dir, "output directory")->required();
    convert->add_option("--split", split, "split name used in file names");
    convert->add_option("--seed", seed, "base simulator seed (sample i uses seed + i)");
    convert->add_option("--limit", limit, "convert at most N rows");
    convert->add_option("-j,--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);

    auto* sal = app.add_subcommand("saliency", "attention ROI of an event file");
    sal->add_option("--events", events, "canonical event file")->required();
    sal->add_option("-o,--out", out_path, "ROI JSON path (stdout when omitted)");
    sal->add_option("--pgm", pgm, "write the saliency spike counts as a PGM image");

    auto* train = app.add_subcommand("train", "train the recognition network");
    train->add_option("--data", data, "dataset directory of train_<i>_<label>.evs files")->required();
    train->add_option("-o,--out", checkpoint, "checkpoint path")->required();
    train->add_option("--log", log, "per-epoch CSV log");
    train->add_option("--subset", subset, "use at most N samples per class");
    train->add_option("--classes", classes, "comma-separated letters or class indices");
    train->add_option("--epochs", epochs, "override train.epochs");
    train->add_option("-j,--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
    eval->add_option("--checkpoint", checkpoint, "float checkpoint")->required();
    eval->add_option("--data", data, "dataset directory")->required();
    eval->add_option("--split", split, "split name");
    eval->add_option("--mode", mode, "float or deploy")->check(CLI::IsMember({"float", "deploy"}));
    eval->add_option("--image", image, "quantized image for deploy mode (default: quantize the checkpoint)");
    eval->add_option("-o,--out", out_path, "metrics JSON path");
    eval->add_option("--subset", subset, "use at most N samples per class");
    eval->add_option("--classes", classes, "comma-separated letters or class indices");
    eval->add_option("-j,--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);

    auto* quant = app.add_subcommand("quantize", "fixed-point image of a checkpoint");
    quant->add_option("--checkpoint", checkpoint, "float checkpoint")->required();
    quant->add_option("-o,--out", out_path, "quantized image path")->required();
    quant->add_option("--report", report, "quantization report JSON (stdout when omitted)");
    quant->add_option("--frac-bits", frac_bits, "override deploy.frac_bits");

    auto* energy = app.add_subcommand("energy", "energy, power and latency from spike ledgers");
    energy->add_option("ledgers", ledgers, "ledger or metrics JSON files")->required();
    energy->add_option("-o,--out", out_path, "report JSON path");

    auto* demo = app.add_subcommand("demo", "classify one event file end to end");
    demo->add_option("--events", events, "canonical event file")->required();
    demo->add_option("--checkpoint", checkpoint, "float checkpoint")->required();
    demo->add_option("--mode", mode, "float or deploy")->check(CLI::IsMember({"float", "deploy"}));
    demo->add_option("-o,--out", out_path, "result JSON path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << app.help();
        return 2;
    }

    try {
        if (print_config) {
            out << dump_config(sh.config());
            return 0;
        }
        if (*convert) return run_convert(sh, csv, out_dir, split, seed, limit, jobs, out);
        if (*sal) return run_saliency(sh, events, out_path, pgm, out);
        if (*train) return run_train(sh, data, checkpoint, log, subset, classes, epochs, jobs, out);
        if (*eval) return run_eval(sh, checkpoint, data, split, mode, image, out_path, subset, classes, jobs, out);
        if (*quant) return run_quantize(sh, checkpoint, out_path, report, frac_bits, out);
        if (*energy) return run_energy(sh, ledgers, out_path, out);
        if (*demo) return run_demo(sh, events, checkpoint, mode, out_path, out);
    } catch (const ParameterError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    err << "error: a subcommand is required\n" << app.help();
    return 2;
}

} // namespace spikesign
