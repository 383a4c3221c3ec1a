#include "sparkprop/degrade/filters.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace sparkprop::degrade {

namespace {

std::ptrdiff_t fold(std::ptrdiff_t i, std::ptrdiff_t n, Border border) {
    if (border == Border::wrap) return ((i % n) + n) % n;
    if (n == 1) return 0;
    while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
    return i;
}

// Resamples one axis: out[d] = sum_j taps(d)[j] * in[index_j], where the
// tap list comes from `weights(d, idx, w)`.
template <typename Weights>
video::Image resample_axis(const video::Image& img, std::size_t out_len, bool horizontal, Weights&& weights) {
    const std::size_t in_len = horizontal ? img.width : img.height;
    video::Image out(horizontal ? img.height : out_len, horizontal ? out_len : img.width, img.channels);
    std::vector<std::ptrdiff_t> idx;
    std::vector<double> w;
    for (std::size_t d = 0; d < out_len; ++d) {
        idx.clear();
        w.clear();
        weights(d, static_cast<std::ptrdiff_t>(in_len), idx, w);
        const std::size_t lines = horizontal ? img.height : img.width;
        for (std::size_t l = 0; l < lines; ++l) {
            for (std::size_t c = 0; c < img.channels; ++c) {
                double acc = 0.0;
                for (std::size_t j = 0; j < idx.size(); ++j) {
                    const auto s = static_cast<std::size_t>(idx[j]);
                    acc += w[j] * (horizontal ? img.at(l, s, c) : img.at(s, l, c));
                }
                (horizontal ? out.at(l, d, c) : out.at(d, l, c)) = static_cast<float>(acc);
            }
        }
    }
    return out;
}

double cubic(double x) {
    constexpr double a = -0.75;
    x = std::abs(x);
    if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
    return 0.0;
}

}  // namespace

video::Image gaussian_blur(const video::Image& img, double sigma, Border border) {
    if (sigma <= 0.0) return img;
    const auto r = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
    std::vector<double> k;
    double total = 0.0;
    for (std::ptrdiff_t i = -r; i <= r; ++i) {
        k.push_back(std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma)));
        total += k.back();
    }
    for (auto& v : k) v /= total;
    auto taps = [&](std::size_t d, std::ptrdiff_t n, std::vector<std::ptrdiff_t>& idx, std::vector<double>& w) {
        for (std::ptrdiff_t i = -r; i <= r; ++i) {
            idx.push_back(fold(static_cast<std::ptrdiff_t>(d) + i, n, border));
            w.push_back(k[static_cast<std::size_t>(i + r)]);
        }
    };
    auto h = resample_axis(img, img.width, true, taps);
    return resample_axis(h, img.height, false, taps);
}

video::Image resize_bicubic(const video::Image& img, std::size_t height, std::size_t width) {
    auto taps_for = [](std::size_t out_len) {
        return [out_len](std::size_t d, std::ptrdiff_t n, std::vector<std::ptrdiff_t>& idx, std::vector<double>& w) {
            const double scale = static_cast<double>(n) / static_cast<double>(out_len);
            const double src = (static_cast<double>(d) + 0.5) * scale - 0.5;
            const auto base = static_cast<std::ptrdiff_t>(std::floor(src));
            const double t = src - static_cast<double>(base);
            for (std::ptrdiff_t j = -1; j <= 2; ++j) {
                idx.push_back(std::clamp<std::ptrdiff_t>(base + j, 0, n - 1));
                w.push_back(cubic(t - static_cast<double>(j)));
            }
        };
    };
    auto h = resample_axis(img, width, true, taps_for(width));
    return resample_axis(h, height, false, taps_for(height));
}

video::Image resize_bilinear(const video::Image& img, std::size_t height, std::size_t width) {
    auto taps_for = [](std::size_t out_len) {
        return [out_len](std::size_t d, std::ptrdiff_t n, std::vector<std::ptrdiff_t>& idx, std::vector<double>& w) {
            const double scale = static_cast<double>(n) / static_cast<double>(out_len);
            const double src = std::max(0.0, (static_cast<double>(d) + 0.5) * scale - 0.5);
            const auto i0 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(src), n - 1);
            const auto i1 = std::min<std::ptrdiff_t>(i0 + 1, n - 1);
            const double f = src - static_cast<double>(i0);
            idx.push_back(i0);
            w.push_back(1.0 - f);
            idx.push_back(i1);
            w.push_back(f);
        };
    };
    auto h = resample_axis(img, width, true, taps_for(width));
    return resample_axis(h, height, false, taps_for(height));
}

}  // namespace sparkprop::degrade
