#pragma once

// Event data model, canonical file formats, temporal windowing and
// rasterisation into the binary spike frames consumed by the network.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "spikesign/errors.hpp"
#include "spikesign/roi.hpp"

namespace spikesign {

struct Event {
    std::uint64_t t = 0; // microseconds since stream start
    std::uint16_t x = 0;
    std::uint16_t y = 0;
    std::int8_t polarity = 1; // +1 or -1

    friend bool operator==(const Event&, const Event&) = default;
};

/// Validated, time-ordered sequence of events from one sensor.
class EventStream {
public:
    EventStream() = default;

    EventStream(int width, int height, std::vector<Event> events)
        : width_(width), height_(height), events_(std::move(events))
    {
        if (width <= 0 || height <= 0 || width > 65535 || height > 65535)
            throw ParameterError("sensor dimensions must be in [1, 65535]");
        for (std::size_t i = 0; i < events_.size(); ++i) {
            const Event& e = events_[i];
            if (e.x >= width_ || e.y >= height_)
                throw ContractError("event " + std::to_string(i) + " out of sensor bounds");
            if (e.polarity != 1 && e.polarity != -1)
                throw ContractError("event " + std::to_string(i) + " has polarity outside {+1,-1}");
            if (i > 0 && e.t < events_[i - 1].t)
                throw ContractError("non-monotone at record " + std::to_string(i));
        }
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    const std::vector<Event>& events() const noexcept { return events_; }
    std::size_t size() const noexcept { return events_.size(); }
    bool empty() const noexcept { return events_.empty(); }

    /// Timestamp of the last event, 0 for an empty stream.
    std::uint64_t duration_us() const noexcept { return events_.empty() ? 0 : events_.back().t; }

    friend bool operator==(const EventStream&, const EventStream&) = default;

private:
    int width_ = 1;
    int height_ = 1;
    std::vector<Event> events_;
};

/// Per-pixel event counts over the half-open window [t_start, t_end).
struct EventFrame {
    int width = 0;
    int height = 0;
    std::uint64_t t_start = 0;
    std::uint64_t t_end = 0;
    std::vector<std::uint32_t> counts; // row-major, height x width

    std::uint32_t at(int x, int y) const { return counts[static_cast<std::size_t>(y) * width + x]; }
    std::uint64_t total() const
    {
        std::uint64_t s = 0;
        for (auto c : counts) s += c;
        return s;
    }
};

/// Binary spike indicators per (timestep, row, column).
class SpikeRaster {
public:
    SpikeRaster() = default;
    SpikeRaster(int timesteps, int size)
        : timesteps_(timesteps), size_(size),
          bits_(static_cast<std::size_t>(timesteps) * size * size, 0)
    {
        if (timesteps <= 0 || size <= 0) throw ParameterError("raster dimensions must be positive");
    }

    int timesteps() const noexcept { return timesteps_; }
    int size() const noexcept { return size_; }
    std::size_t frame_pixels() const noexcept { return static_cast<std::size_t>(size_) * size_; }

    std::uint8_t at(int t, int y, int x) const { return bits_[index(t, y, x)]; }
    void set(int t, int y, int x) { bits_[index(t, y, x)] = 1; }

    /// Row-major spike frame for one timestep.
    const std::uint8_t* frame(int t) const { return bits_.data() + static_cast<std::size_t>(t) * frame_pixels(); }
    const std::vector<std::uint8_t>& data() const noexcept { return bits_; }

    std::size_t count() const
    {
        return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
    }

    friend bool operator==(const SpikeRaster&, const SpikeRaster&) = default;

private:
    std::size_t index(int t, int y, int x) const
    {
        return (static_cast<std::size_t>(t) * size_ + y) * size_ + x;
    }

    int timesteps_ = 0;
    int size_ = 0;
    std::vector<std::uint8_t> bits_;
};

// ---------------------------------------------------------------------------
// Canonical binary format: "EVS1", u16 width, u16 height, u64 count, then
// count records of u64 t_us, u16 x, u16 y, u8 polarity (0 = -1, 1 = +1).
// All integers little-endian.

inline constexpr std::array<char, 4> kEventMagic{'E', 'V', 'S', '1'};
inline constexpr std::size_t kEventHeaderBytes = 4 + 2 + 2 + 8;
inline constexpr std::size_t kEventRecordBytes = 8 + 2 + 2 + 1;

namespace detail {

template <typename UInt>
void put_le(std::string& out, UInt v)
{
    for (std::size_t i = 0; i < sizeof(UInt); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename UInt>
UInt get_le(std::string_view in, std::size_t pos)
{
    UInt v = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i)
        v |= static_cast<UInt>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    return v;
}

inline std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "' for reading");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Write via a sibling temp file and rename so readers never see partial output.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes)
{
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open '" + tmp.string() + "' for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

} // namespace detail

inline std::string encode_events(const EventStream& stream)
{
    std::string out;
    out.reserve(kEventHeaderBytes + stream.size() * kEventRecordBytes);
    out.append(kEventMagic.data(), kEventMagic.size());
    detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(stream.width()));
    detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(stream.height()));
    detail::put_le<std::uint64_t>(out, stream.size());
    for (const Event& e : stream.events()) {
        detail::put_le<std::uint64_t>(out, e.t);
        detail::put_le<std::uint16_t>(out, e.x);
        detail::put_le<std::uint16_t>(out, e.y);
        out.push_back(static_cast<char>(e.polarity > 0 ? 1 : 0));
    }
    return out;
}

inline EventStream decode_events(std::string_view bytes)
{
    if (bytes.size() < kEventHeaderBytes) throw FormatError("truncated header", bytes.size());
    if (!std::equal(kEventMagic.begin(), kEventMagic.end(), bytes.begin()))
        throw FormatError("bad magic (expected EVS1)", 0);
    const auto width = detail::get_le<std::uint16_t>(bytes, 4);
    const auto height = detail::get_le<std::uint16_t>(bytes, 6);
    const auto count = detail::get_le<std::uint64_t>(bytes, 8);
    if (width == 0 || height == 0) throw FormatError("zero sensor dimension", 4);

    const std::size_t available = (bytes.size() - kEventHeaderBytes) / kEventRecordBytes;
    if (count > available) {
        const std::uint64_t offset = kEventHeaderBytes + available * kEventRecordBytes;
        throw FormatError("truncated record " + std::to_string(available), offset);
    }
    const std::size_t expected = kEventHeaderBytes + count * kEventRecordBytes;
    if (bytes.size() != expected) throw FormatError("trailing bytes after last record", expected);

    std::vector<Event> events;
    events.reserve(count);
    std::size_t pos = kEventHeaderBytes;
    for (std::uint64_t i = 0; i < count; ++i, pos += kEventRecordBytes) {
        Event e;
        e.t = detail::get_le<std::uint64_t>(bytes, pos);
        e.x = detail::get_le<std::uint16_t>(bytes, pos + 8);
        e.y = detail::get_le<std::uint16_t>(bytes, pos + 10);
        const auto p = static_cast<unsigned char>(bytes[pos + 12]);
        if (p > 1) throw FormatError("invalid polarity byte at record " + std::to_string(i), pos + 12);
        e.polarity = p == 1 ? 1 : -1;
        if (!events.empty() && e.t < events.back().t)
            throw FormatError("non-monotone at record " + std::to_string(i), pos);
        if (e.x >= width || e.y >= height)
            throw FormatError("coordinates out of bounds at record " + std::to_string(i), pos + 8);
        events.push_back(e);
    }
    return EventStream(width, height, std::move(events));
}

inline void write_events(const std::filesystem::path& path, const EventStream& stream)
{
    detail::write_file_atomic(path, encode_events(stream));
}

inline EventStream read_events(const std::filesystem::path& path)
{
    return decode_events(detail::read_file(path));
}

// ---------------------------------------------------------------------------
// CSV alternative: header `t_us,x,y,p`, one event per line, p in {1,-1}
// (0 is accepted as -1 on input). CSV carries no sensor size, so readers pass
// it explicitly or let it be inferred from the largest coordinate.

inline std::string encode_events_csv(const EventStream& stream)
{
    std::ostringstream out;
    out << "t_us,x,y,p\n";
    for (const Event& e : stream.events())
        out << e.t << ',' << e.x << ',' << e.y << ',' << static_cast<int>(e.polarity) << '\n';
    return out.str();
}

inline EventStream decode_events_csv(std::string_view text, int width = 0, int height = 0)
{
    std::vector<Event> events;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    int max_x = 0;
    int max_y = 0;
    while (pos < text.size()) {
        const std::size_t line_start = pos;
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string line(text.substr(pos, end - pos));
        pos = end + 1;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line_no++ == 0) {
            if (line != "t_us,x,y,p") throw FormatError("bad CSV header (expected t_us,x,y,p)", line_start);
            continue;
        }
        std::istringstream fields(line);
        long long t = 0, x = 0, y = 0, p = 0;
        char c1 = 0, c2 = 0, c3 = 0;
        if (!(fields >> t >> c1 >> x >> c2 >> y >> c3 >> p) || c1 != ',' || c2 != ',' || c3 != ',' || t < 0 ||
            x < 0 || y < 0 || x > 65535 || y > 65535 || (p != 1 && p != 0 && p != -1))
            throw FormatError("malformed CSV record " + std::to_string(events.size()), line_start);
        Event e{static_cast<std::uint64_t>(t), static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y),
                static_cast<std::int8_t>(p == 1 ? 1 : -1)};
        if (!events.empty() && e.t < events.back().t)
            throw FormatError("non-monotone at record " + std::to_string(events.size()), line_start);
        max_x = std::max(max_x, static_cast<int>(x));
        max_y = std::max(max_y, static_cast<int>(y));
        events.push_back(e);
    }
    if (line_no == 0) throw FormatError("missing CSV header", 0);
    if (width <= 0) width = max_x + 1;
    if (height <= 0) height = max_y + 1;
    if (max_x >= width || max_y >= height) throw FormatError("CSV coordinates exceed sensor size", 0);
    return EventStream(width, height, std::move(events));
}

// ---------------------------------------------------------------------------

inline EventFrame accumulate_frame(const EventStream& stream, std::uint64_t t_start, std::uint64_t duration)
{
    if (duration == 0) throw ParameterError("frame duration must be positive");
    EventFrame frame;
    frame.width = stream.width();
    frame.height = stream.height();
    frame.t_start = t_start;
    frame.t_end = t_start + duration;
    frame.counts.assign(static_cast<std::size_t>(frame.width) * frame.height, 0);
    const auto& ev = stream.events();
    auto first = std::lower_bound(ev.begin(), ev.end(), t_start,
                                  [](const Event& e, std::uint64_t t) { return e.t < t; });
    for (auto it = first; it != ev.end() && it->t < frame.t_end; ++it)
        ++frame.counts[static_cast<std::size_t>(it->y) * frame.width + it->x];
    return frame;
}

/// Bin events inside `roi` into a (timesteps, out_size, out_size) binary raster.
/// Polarity is merged; several events in one bin collapse to a single spike.
inline SpikeRaster rasterize(const EventStream& stream, const Roi& roi, int timesteps, std::uint64_t dt_us,
                             int out_size = 48)
{
    if (roi.side <= 0) throw ParameterError("invalid ROI: side must be positive");
    if (dt_us == 0) throw ParameterError("raster dt must be positive");
    SpikeRaster raster(timesteps, out_size);
    const std::uint64_t horizon = static_cast<std::uint64_t>(timesteps) * dt_us;
    for (const Event& e : stream.events()) {
        if (e.t >= horizon) break;
        const int dx = static_cast<int>(e.x) - roi.left;
        const int dy = static_cast<int>(e.y) - roi.top;
        if (dx < 0 || dy < 0 || dx >= roi.side || dy >= roi.side) continue;
        const int t = static_cast<int>(e.t / dt_us);
        const int row = static_cast<int>(static_cast<long long>(dy) * out_size / roi.side);
        const int col = static_cast<int>(static_cast<long long>(dx) * out_size / roi.side);
        raster.set(t, row, col);
    }
    return raster;
}

} // namespace spikesign
