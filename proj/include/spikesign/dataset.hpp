#pragma once

// SL-MNIST rows, class labels, dataset directories of canonical event files,
// and the attention-then-rasterise preprocessing that turns a stream into
// network input.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "spikesign/dvs_sim.hpp"
#include "spikesign/errors.hpp"
#include "spikesign/event.hpp"
#include "spikesign/network.hpp"
#include "spikesign/saliency.hpp"

namespace spikesign {

/// The 24 static fingerspelling letters; J and Z need motion and are absent.
inline constexpr std::string_view kClassLetters = "ABCDEFGHIKLMNOPQRSTUVWXY";

inline char class_letter(int cls) { return kClassLetters.at(static_cast<std::size_t>(cls)); }

/// SL-MNIST labels index the full alphabet (0 = A ... 24 = Y) with 9 (J) unused.
inline int class_from_slmnist_label(int label)
{
    if (label < 0 || label > 24 || label == 9)
        throw ParameterError("SL-MNIST label " + std::to_string(label) + " is not a static letter");
    return label < 9 ? label : label - 1;
}

/// Accepts a letter ("B") or a class index ("1").
inline int parse_class(const std::string& token)
{
    if (token.size() == 1 && std::isalpha(static_cast<unsigned char>(token[0]))) {
        const auto pos = kClassLetters.find(static_cast<char>(std::toupper(static_cast<unsigned char>(token[0]))));
        if (pos == std::string_view::npos) throw ParameterError("letter '" + token + "' is not a static class");
        return static_cast<int>(pos);
    }
    std::size_t used = 0;
    const int v = std::stoi(token, &used);
    if (used != token.size() || v < 0 || v >= kNumClasses) throw ParameterError("bad class '" + token + "'");
    return v;
}

struct LabeledImage {
    int label = 0; // class index in [0, 24)
    GrayImage image;
};

/// Parses SL-MNIST CSV text: optional header, then label + 784 pixels per row.
inline std::vector<LabeledImage> parse_slmnist_csv(std::istream& in)
{
    std::vector<LabeledImage> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line_no == 1 && !std::isdigit(static_cast<unsigned char>(line[0]))) continue;
        std::vector<int> fields;
        std::istringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            try {
                std::size_t used = 0;
                fields.push_back(std::stoi(tok, &used));
                if (used != tok.size()) throw std::invalid_argument(tok);
            } catch (const std::exception&) {
                throw FormatError("non-integer field on CSV line " + std::to_string(line_no), line_no);
            }
        }
        if (fields.size() != 785)
            throw FormatError("CSV line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                                  " fields (expected 785)", line_no);
        LabeledImage row;
        row.label = class_from_slmnist_label(fields[0]);
        row.image = GrayImage(28, 28);
        for (int i = 0; i < 784; ++i) {
            if (fields[static_cast<std::size_t>(i + 1)] < 0 || fields[static_cast<std::size_t>(i + 1)] > 255)
                throw FormatError("pixel out of range on CSV line " + std::to_string(line_no), line_no);
            row.image.pixels[static_cast<std::size_t>(i)] = fields[static_cast<std::size_t>(i + 1)];
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

/// Inverse of class_from_slmnist_label.
inline int slmnist_label_from_class(int cls) { return cls < 9 ? cls : cls + 1; }

inline std::string slmnist_csv_row(int cls, const GrayImage& img)
{
    std::string row = std::to_string(slmnist_label_from_class(cls));
    for (double p : img.pixels) row += "," + std::to_string(static_cast<int>(std::lround(p)));
    return row;
}

// ---------------------------------------------------------------------------

struct DatasetEntry {
    std::filesystem::path path;
    std::string split;
    std::uint64_t index = 0;
    int label = 0;
};

inline std::string event_file_name(const std::string& split, std::uint64_t index, int label)
{
    return split + "_" + std::to_string(index) + "_" + std::to_string(label) + ".evs";
}

/// Lists `<split>_<index>_<label>.evs` files, ordered by index.
inline std::vector<DatasetEntry> list_dataset(const std::filesystem::path& dir, const std::string& split)
{
    if (!std::filesystem::is_directory(dir)) throw std::runtime_error("dataset directory '" + dir.string() + "' not found");
    static const std::regex pattern(R"(([A-Za-z0-9]+)_(\d+)_(\d+)\.evs)");
    std::vector<DatasetEntry> out;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        std::smatch m;
        const std::string name = e.path().filename().string();
        if (!std::regex_match(name, m, pattern) || m[1].str() != split) continue;
        const int label = std::stoi(m[3].str());
        if (label < 0 || label >= kNumClasses) continue;
        out.push_back({e.path(), m[1].str(), std::stoull(m[2].str()), label});
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.index < b.index; });
    return out;
}

// ---------------------------------------------------------------------------

struct PreprocessConfig {
    FilterBankParams bank{};
    SaliencyParams saliency{};
    std::uint64_t attention_window_us = 35000;
    int roi_side = 96; // clamped to the sensor's smaller side
    RoiMode roi_mode = RoiMode::sva;
    int timesteps = 35;
    std::uint64_t dt_us = 1000;
};

struct Prepared {
    SpikeRaster raster;
    Roi roi;
};

/// Attention over the first window, then a (T, 48, 48) raster of the chosen ROI.
inline Prepared prepare_sample(const EventStream& stream, const FilterBank& bank, const PreprocessConfig& cfg)
{
    const int side = std::min({cfg.roi_side, stream.width(), stream.height()});
    Roi roi;
    if (cfg.roi_mode == RoiMode::center_crop) {
        roi = make_roi(stream.width() / 2, stream.height() / 2, side, stream.width(), stream.height());
    } else {
        const auto frame = accumulate_frame(stream, 0, cfg.attention_window_us);
        const auto map = compute_saliency(frame, bank, cfg.saliency);
        roi = extract_roi(map, side, RoiMode::sva);
    }
    return {rasterize(stream, roi, cfg.timesteps, cfg.dt_us, kInputSide), roi};
}

} // namespace spikesign
