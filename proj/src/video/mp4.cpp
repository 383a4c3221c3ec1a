#include "sparkprop/video/mp4.hpp"

#include <algorithm>
#include <optional>
#include <string_view>

namespace sparkprop::video {

namespace {

constexpr int kMaxDepth = 32;

struct Box {
    std::string type;
    std::size_t start;    // offset of the size field
    std::size_t payload;  // offset of the first payload byte
    std::size_t end;      // one past the last byte
};

std::uint32_t be32(std::span<const std::uint8_t> b, std::size_t at) {
    return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) | b[at + 3];
}

std::string join(const std::string& parent, const std::string& type) {
    return parent.empty() ? type : parent + "/" + type;
}

// Children of the byte range [begin, end), each validated against the range.
std::vector<Box> children(std::span<const std::uint8_t> b, std::size_t begin, std::size_t end, const std::string& path) {
    std::vector<Box> out;
    std::size_t at = begin;
    while (at < end) {
        if (end - at < 8) throw Mp4Error("trailing " + std::to_string(end - at) + " bytes too short for a box header", path, at);
        std::uint64_t size = be32(b, at);
        std::string type(reinterpret_cast<const char*>(b.data() + at + 4), 4);
        std::size_t header = 8;
        if (size == 1) {
            if (end - at < 16) throw Mp4Error("truncated 64-bit box size", join(path, type), at);
            size = (std::uint64_t{be32(b, at + 8)} << 32) | be32(b, at + 12);
            header = 16;
        } else if (size == 0) {
            size = end - at;
        }
        if (size < header) {
            throw Mp4Error("malformed box length " + std::to_string(size), join(path, type), at);
        }
        if (size > end - at) {
            throw Mp4Error("box length " + std::to_string(size) + " overflows its parent (" + std::to_string(end - at) +
                               " bytes left)",
                           join(path, type), at);
        }
        out.push_back(Box{type, at, at + header, at + static_cast<std::size_t>(size)});
        at += static_cast<std::size_t>(size);
    }
    return out;
}

std::optional<Box> find_child(std::span<const std::uint8_t> b, const Box& parent, std::string_view type,
                              const std::string& path) {
    for (const auto& c : children(b, parent.payload, parent.end, path)) {
        if (c.type == type) return c;
    }
    return std::nullopt;
}

// Descends through nested containers, guarding against pathological depth.
std::optional<Box> descend(std::span<const std::uint8_t> b, Box box, std::string& path,
                           std::initializer_list<std::string_view> route) {
    int depth = static_cast<int>(std::count(path.begin(), path.end(), '/')) + 1;
    for (auto type : route) {
        if (++depth > kMaxDepth) throw Mp4Error("box nesting too deep", path, box.start);
        auto next = find_child(b, box, type, path);
        if (!next) return std::nullopt;
        box = *next;
        path = join(path, std::string(type));
    }
    return box;
}

std::size_t full_box_body(const Box& box, std::size_t need, const std::string& path) {
    if (box.end - box.payload < 4 + need) {
        throw Mp4Error("box payload too short (" + std::to_string(box.end - box.payload) + " bytes)", path, box.payload);
    }
    return box.payload + 4;  // skip version + flags
}

bool is_video_track(std::span<const std::uint8_t> b, const Box& trak, const std::string& path) {
    std::string p = path;
    auto hdlr = descend(b, trak, p, {"mdia", "hdlr"});
    if (!hdlr) return false;
    const std::size_t body = full_box_body(*hdlr, 8, p);
    return std::string_view(reinterpret_cast<const char*>(b.data() + body + 4), 4) == "vide";
}

std::size_t sample_count(std::span<const std::uint8_t> b, const Box& stbl, const std::string& path) {
    if (auto stsz = find_child(b, stbl, "stsz", path)) {
        const std::string p = join(path, "stsz");
        const std::size_t body = full_box_body(*stsz, 8, p);
        return be32(b, body + 4);
    }
    if (auto stts = find_child(b, stbl, "stts", path)) {
        const std::string p = join(path, "stts");
        const std::size_t body = full_box_body(*stts, 4, p);
        const std::size_t entries = be32(b, body);
        if ((stts->end - body - 4) / 8 < entries) {
            throw Mp4Error("stts declares " + std::to_string(entries) + " entries but carries fewer", p, body);
        }
        std::size_t total = 0;
        for (std::size_t i = 0; i < entries; ++i) total += be32(b, body + 4 + 8 * i);
        return total;
    }
    throw Mp4Error("no stss, stsz or stts to count samples", path, stbl.start);
}

}  // namespace

SyncSampleTable parse_mp4_sync_samples(std::span<const std::uint8_t> bytes) {
    const auto top = children(bytes, 0, bytes.size(), "");
    bool has_ftyp = false;
    std::optional<Box> moov;
    for (const auto& box : top) {
        if (box.type == "ftyp") has_ftyp = true;
        if (box.type == "moov" && !moov) moov = box;
    }
    if (!has_ftyp) throw Mp4Error("missing ftyp box", "", 0);
    if (!moov) throw Mp4Error("missing moov box", "", 0);

    for (const auto& trak : children(bytes, moov->payload, moov->end, "moov")) {
        if (trak.type != "trak") continue;
        if (!is_video_track(bytes, trak, "moov/trak")) continue;
        std::string path = "moov/trak";
        auto stbl = descend(bytes, trak, path, {"mdia", "minf", "stbl"});
        if (!stbl) throw Mp4Error("video track lacks a sample table", path, trak.start);

        auto stss = find_child(bytes, *stbl, "stss", path);
        SyncSampleTable table;
        if (!stss) {
            const std::size_t n = sample_count(bytes, *stbl, path);
            for (std::size_t i = 0; i < n; ++i) table.push_back(i);
            return table;
        }
        path = join(path, "stss");
        const std::size_t body = full_box_body(*stss, 4, path);
        const std::size_t entries = be32(bytes, body);
        const std::size_t carried = (stss->end - body - 4) / 4;
        if (carried != entries || (stss->end - body - 4) % 4 != 0) {
            throw Mp4Error("stss declares " + std::to_string(entries) + " entries but carries " + std::to_string(carried),
                           path, body);
        }
        for (std::size_t i = 0; i < entries; ++i) {
            const std::size_t at = body + 4 + 4 * i;
            const std::uint32_t sample = be32(bytes, at);
            if (sample == 0) throw Mp4Error("sync sample numbers are 1-based, got 0", path, at);
            if (!table.empty() && sample - 1 <= table.back()) {
                throw Mp4Error("sync samples not strictly increasing", path, at);
            }
            table.push_back(sample - 1);
        }
        return table;
    }
    throw Mp4Error("no video track", "moov", moov->start);
}

}  // namespace sparkprop::video
