#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sparkprop/error.hpp"

namespace sparkprop::video {

/// Zero-based indices of sync (intra-coded) samples, strictly increasing.
using SyncSampleTable = std::vector<std::size_t>;

/// Structural problem in an ISO BMFF file. `box_path()` is the slash-joined
/// path of the box being read, e.g. "moov/trak/mdia/minf/stbl/stss".
class Mp4Error : public ParseError {
public:
    Mp4Error(const std::string& what, std::string box_path, std::size_t offset)
        : ParseError(what + " in " + (box_path.empty() ? std::string("<root>") : box_path), offset),
          box_path_(std::move(box_path)) {}

    const std::string& box_path() const noexcept { return box_path_; }

private:
    std::string box_path_;
};

/// Reads the sync-sample table of the first video track (handler "vide") by
/// walking moov/trak/mdia/minf/stbl/stss. Entries are converted from 1-based
/// sample numbers to 0-based frame indices. Without an stss box every sample
/// is a sync sample; the count then comes from stsz (or stts).
SyncSampleTable parse_mp4_sync_samples(std::span<const std::uint8_t> bytes);

}  // namespace sparkprop::video
