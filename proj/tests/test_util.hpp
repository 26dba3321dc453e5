#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "spikesign/event.hpp"

namespace test_util {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir()
    {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        std::string name = "spikesign_";
        if (info) name += std::string(info->test_suite_name()) + "_" + info->name();
        for (char& c : name)
            if (c == '/') c = '_';
        path_ = std::filesystem::temp_directory_path() / name;
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

inline spikesign::EventStream random_stream(std::mt19937_64& rng, int w, int h, std::size_t n, std::uint64_t t_max)
{
    std::vector<spikesign::Event> ev(n);
    std::vector<std::uint64_t> ts(n);
    for (auto& t : ts) t = rng() % (t_max + 1);
    std::sort(ts.begin(), ts.end());
    for (std::size_t i = 0; i < n; ++i)
        ev[i] = {ts[i], static_cast<std::uint16_t>(rng() % static_cast<unsigned>(w)),
                 static_cast<std::uint16_t>(rng() % static_cast<unsigned>(h)),
                 static_cast<std::int8_t>(rng() % 2 ? 1 : -1)};
    return {w, h, std::move(ev)};
}

} // namespace test_util
