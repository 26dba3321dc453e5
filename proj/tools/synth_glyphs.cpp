// Writes procedural glyph images as an SL-MNIST style CSV, one shape per class.
//
//   synth_glyphs --out glyphs.csv --per-class 200 --classes A,B,C,D,E --seed 7

#include <fstream>
#include <iostream>
#include <random>
#include <string>

#include <CLI11.hpp>

#include "spikesign/cli.hpp"
#include "spikesign/synthetic.hpp"

int main(int argc, char** argv)
{
    CLI::App app{"procedural glyph CSV generator", "synth_glyphs"};
    std::string out, classes = "A,B,C,D,E";
    int per_class = 200;
    std::uint64_t seed = 7;
    app.add_option("-o,--out", out, "CSV path")->required();
    app.add_option("--per-class", per_class, "rows per class")->check(CLI::PositiveNumber);
    app.add_option("--classes", classes, "comma-separated letters or indices, at most 8");
    app.add_option("--seed", seed, "generator seed");
    CLI11_PARSE(app, argc, argv);

    try {
        const auto cls = spikesign::cli_detail::parse_class_list(classes);
        if (cls.empty() || cls.size() > static_cast<std::size_t>(spikesign::kGlyphShapes))
            throw spikesign::ParameterError("need between 1 and 8 classes");
        std::mt19937_64 rng(seed);
        std::string csv = "label";
        for (int i = 1; i <= 784; ++i) csv += ",pixel" + std::to_string(i);
        csv += "\n";
        // Interleave classes so any prefix of the file is balanced.
        for (int n = 0; n < per_class; ++n)
            for (std::size_t k = 0; k < cls.size(); ++k)
                csv += spikesign::slmnist_csv_row(cls[k], spikesign::make_glyph(static_cast<int>(k), rng)) + "\n";
        spikesign::detail::write_file_atomic(out, csv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
