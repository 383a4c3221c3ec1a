#include "sparkprop/eval/metrics.hpp"

#include <cmath>
#include <sstream>

#include "sparkprop/bytes.hpp"
#include "sparkprop/video/pnm.hpp"

namespace sparkprop::eval {

namespace {

void require_pair(const video::Video& a, const video::Video& b, const char* what) {
    if (a.frames != b.frames || a.height != b.height || a.width != b.width) {
        throw ShapeError(std::string(what) + ": clips differ in shape (" + std::to_string(a.frames) + "x" +
                         std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " + std::to_string(b.frames) +
                         "x" + std::to_string(b.height) + "x" + std::to_string(b.width) + ")");
    }
}

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(6);
    os << std::fixed << x;
    return os.str();
}

}  // namespace

double psnr(const video::Video& a, const video::Video& b) {
    require_pair(a, b, "psnr");
    if (a.values.empty()) throw InvalidArgument("psnr of an empty clip");
    double se = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        const double d = static_cast<double>(a.values[i]) - b.values[i];
        se += d * d;
    }
    const double mse = se / static_cast<double>(a.values.size());
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const video::Video& a, const video::Video& b, const SsimOptions& o) {
    require_pair(a, b, "ssim");
    if (o.window == 0 || a.height < o.window || a.width < o.window) {
        throw InvalidArgument("frames must be at least " + std::to_string(o.window) + " pixels on each side for ssim");
    }
    const double c1 = (o.k1 * o.range) * (o.k1 * o.range), c2 = (o.k2 * o.range) * (o.k2 * o.range);
    const std::size_t ty = a.height / o.window, tx = a.width / o.window, n = o.window * o.window;
    double total = 0.0;
    for (std::size_t t = 0; t < a.frames; ++t) {
        double frame_sum = 0.0;
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t by = 0; by < ty; ++by)
                for (std::size_t bx = 0; bx < tx; ++bx) {
                    double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
                    for (std::size_t y = by * o.window; y < (by + 1) * o.window; ++y)
                        for (std::size_t x = bx * o.window; x < (bx + 1) * o.window; ++x) {
                            const double va = a.at(t, y, x, c), vb = b.at(t, y, x, c);
                            sa += va;
                            sb += vb;
                            saa += va * va;
                            sbb += vb * vb;
                            sab += va * vb;
                        }
                    const double ma = sa / n, mb = sb / n;
                    const double va = saa / n - ma * ma, vb = sbb / n - mb * mb, cov = sab / n - ma * mb;
                    frame_sum += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                }
        total += frame_sum / static_cast<double>(3 * ty * tx);
    }
    return total / static_cast<double>(a.frames);
}

double flicker_index(const video::Video& pred, const video::Video& gt) {
    require_pair(pred, gt, "flicker index");
    if (pred.frames < 2) throw InvalidArgument("flicker index needs at least two frames");
    const std::size_t fs = pred.frame_size();
    double acc = 0.0;
    for (std::size_t t = 1; t < pred.frames; ++t)
        for (std::size_t i = 0; i < fs; ++i) {
            const double dp = static_cast<double>(pred.values[t * fs + i]) - pred.values[(t - 1) * fs + i];
            const double dg = static_cast<double>(gt.values[t * fs + i]) - gt.values[(t - 1) * fs + i];
            acc += std::abs(dp - dg);
        }
    return acc / static_cast<double>((pred.frames - 1) * fs);
}

video::Image xt_slice(const video::Video& v, std::size_t row) {
    if (row >= v.height) throw InvalidArgument("row " + std::to_string(row) + " is outside a frame of height " + std::to_string(v.height));
    video::Image out(v.frames, v.width, 1);
    for (std::size_t t = 0; t < v.frames; ++t)
        for (std::size_t x = 0; x < v.width; ++x) {
            out.at(t, x, 0) = static_cast<float>(0.299 * v.at(t, row, x, 0) + 0.587 * v.at(t, row, x, 1) + 0.114 * v.at(t, row, x, 2));
        }
    return out;
}

std::string EvalReport::to_csv() const {
    std::string s = "# ssim: 8x8 non-overlapping windows, k1=0.01, k2=0.03, L=1, population moments\n";
    s += "clip,psnr_db,ssim,flicker\n";
    auto row = [&](const ClipMetrics& m) { s += m.clip + "," + fmt(m.psnr_db) + "," + fmt(m.ssim) + "," + fmt(m.flicker) + "\n"; };
    for (const auto& c : clips) row(c);
    row(mean);
    return s;
}

EvalReport eval_report(const std::vector<ClipPairRef>& pairs, const ReportOptions& options) {
    if (pairs.empty()) throw InvalidArgument("evaluation needs at least one clip pair");
    EvalReport r;
    for (const auto& p : pairs) {
        if (!p.pred || !p.gt) throw InvalidArgument("clip " + p.name + " is missing its prediction or ground truth");
        ClipMetrics m;
        m.clip = p.name;
        m.psnr_db = psnr(*p.pred, *p.gt);
        m.ssim = ssim(*p.pred, *p.gt, options.ssim);
        m.flicker = p.pred->frames >= 2 ? flicker_index(*p.pred, *p.gt) : 0.0;
        r.clips.push_back(m);
        if (options.xt_row) {
            std::filesystem::create_directories(options.slice_dir);
            write_file_atomic(options.slice_dir / (p.name + "_xt.pgm"), video::write_pgm(xt_slice(*p.pred, *options.xt_row)));
            write_file_atomic(options.slice_dir / (p.name + "_gt_xt.pgm"), video::write_pgm(xt_slice(*p.gt, *options.xt_row)));
        }
    }
    r.mean.clip = "mean";
    for (const auto& m : r.clips) {
        r.mean.psnr_db += m.psnr_db / static_cast<double>(r.clips.size());
        r.mean.ssim += m.ssim / static_cast<double>(r.clips.size());
        r.mean.flicker += m.flicker / static_cast<double>(r.clips.size());
    }
    return r;
}

}  // namespace sparkprop::eval
