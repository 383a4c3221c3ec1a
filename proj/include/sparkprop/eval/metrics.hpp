#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sparkprop/video/frames.hpp"

namespace sparkprop::eval {

constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) over every sample, unit dynamic range; 99 dB when equal.
double psnr(const video::Video& a, const video::Video& b);

struct SsimOptions {
    std::size_t window = 8;
    double k1 = 0.01;
    double k2 = 0.03;
    double range = 1.0;
};

/// Mean SSIM over non-overlapping window x window tiles (partial tiles at the
/// right and bottom edges are skipped), each colour channel separately, then
/// over frames. Tile statistics use population (1/N) moments.
double ssim(const video::Video& a, const video::Video& b, const SsimOptions& options = {});

/// Mean over t in [1, T), pixels and channels of
/// |(pred_t - pred_{t-1}) - (gt_t - gt_{t-1})|.
double flicker_index(const video::Video& pred, const video::Video& gt);

/// Row y of every frame in BT.601 luma, stacked top to bottom: a T x W
/// grayscale image.
video::Image xt_slice(const video::Video& v, std::size_t row);

struct ClipMetrics {
    std::string clip;
    double psnr_db = 0.0;
    double ssim = 0.0;
    double flicker = 0.0;
};

struct EvalReport {
    std::vector<ClipMetrics> clips;
    ClipMetrics mean;

    /// Comment line naming the SSIM constants, then "clip,psnr_db,ssim,flicker",
    /// one row per clip and a final "mean" row.
    std::string to_csv() const;
};

struct ClipPairRef {
    std::string name;
    const video::Video* pred;
    const video::Video* gt;
};

struct ReportOptions {
    SsimOptions ssim;
    /// When set, an X-T slice of each prediction at this row is written as
    /// <slice_dir>/<clip>_xt.pgm (and the ground truth as <clip>_gt_xt.pgm).
    std::optional<std::size_t> xt_row;
    std::filesystem::path slice_dir;
};

EvalReport eval_report(const std::vector<ClipPairRef>& pairs, const ReportOptions& options = {});

}  // namespace sparkprop::eval
