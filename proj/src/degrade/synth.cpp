#include "sparkprop/degrade/synth.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <tuple>

#include "sparkprop/degrade/filters.hpp"

namespace sparkprop::degrade {

namespace {

using Rgb = std::array<double, 3>;

Rgb uniform_rgb(std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    Rgb c;
    for (auto& v : c) v = u(rng);
    return c;
}

// Bilinear lookup on a canvas that tiles the plane.
void sample_wrapped(const video::Image& canvas, double x, double y, float* out) {
    const auto w = static_cast<std::ptrdiff_t>(canvas.width), h = static_cast<std::ptrdiff_t>(canvas.height);
    const double fx0 = std::floor(x), fy0 = std::floor(y);
    const double fx = x - fx0, fy = y - fy0;
    auto wrap = [](std::ptrdiff_t i, std::ptrdiff_t n) { return static_cast<std::size_t>(((i % n) + n) % n); };
    const std::size_t x0 = wrap(static_cast<std::ptrdiff_t>(fx0), w), x1 = wrap(static_cast<std::ptrdiff_t>(fx0) + 1, w);
    const std::size_t y0 = wrap(static_cast<std::ptrdiff_t>(fy0), h), y1 = wrap(static_cast<std::ptrdiff_t>(fy0) + 1, h);
    for (std::size_t c = 0; c < 3; ++c) {
        out[c] = static_cast<float>(canvas.at(y0, x0, c) * (1 - fx) * (1 - fy) + canvas.at(y0, x1, c) * fx * (1 - fy) +
                                    canvas.at(y1, x0, c) * (1 - fx) * fy + canvas.at(y1, x1, c) * fx * fy);
    }
}

video::Image text_canvas(std::size_t h, std::size_t w, std::mt19937_64& rng) {
    const Rgb bg = uniform_rgb(rng, 0.6, 0.95), fg = uniform_rgb(rng, 0.05, 0.4);
    video::Image canvas(h, w, 3);
    std::bernoulli_distribution ink(0.5);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) canvas.at(y, x, c) = static_cast<float>(bg[c]);
    // 4x3 random glyphs with 2 px cells on an 8x6 character grid.
    for (std::size_t gy = 0; gy + 8 <= h; gy += 8) {
        for (std::size_t gx = 0; gx + 6 <= w; gx += 6) {
            for (std::size_t r = 0; r < 4; ++r) {
                for (std::size_t col = 0; col < 3; ++col) {
                    if (!ink(rng)) continue;
                    for (std::size_t dy = 0; dy < 2; ++dy)
                        for (std::size_t dx = 0; dx < 2; ++dx)
                            for (std::size_t c = 0; c < 3; ++c)
                                canvas.at(gy + 2 * r + dy, gx + 2 * col + dx, c) = static_cast<float>(fg[c]);
                }
            }
        }
    }
    return canvas;
}

video::Image blob_canvas(std::size_t h, std::size_t w, std::mt19937_64& rng) {
    const Rgb base = uniform_rgb(rng, 0.3, 0.7);
    std::vector<double> acc(h * w * 3);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] = base[i % 3];
    std::uniform_real_distribution<double> ux(0.0, static_cast<double>(w)), uy(0.0, static_cast<double>(h));
    std::uniform_real_distribution<double> usize(4.0, 12.0);
    const double fw = static_cast<double>(w), fh = static_cast<double>(h);
    for (int b = 0; b < 6; ++b) {
        const double cx = ux(rng), cy = uy(rng), s = usize(rng);
        const Rgb col = uniform_rgb(rng, -0.3, 0.3);
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                // torus distance keeps the canvas periodic
                const double dx = std::remainder(static_cast<double>(x) - cx, fw);
                const double dy = std::remainder(static_cast<double>(y) - cy, fh);
                const double g = std::exp(-(dx * dx + dy * dy) / (2 * s * s));
                for (std::size_t c = 0; c < 3; ++c) acc[(y * w + x) * 3 + c] += col[c] * g;
            }
        }
    }
    // Grating with integer wave numbers so it tiles the canvas.
    std::uniform_int_distribution<int> kx_d(-10, 10), ky_d(5, 10);
    const int kx = kx_d(rng), ky = ky_d(rng);
    const Rgb amp = uniform_rgb(rng, 0.5, 1.0);
    video::Image canvas(h, w, 3);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const double phase = 2 * std::numbers::pi * (kx * static_cast<double>(x) / fw + ky * static_cast<double>(y) / fh);
            for (std::size_t c = 0; c < 3; ++c) {
                const double v = acc[(y * w + x) * 3 + c] + 0.15 * std::sin(phase) * amp[c];
                canvas.at(y, x, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
        }
    }
    return canvas;
}

}  // namespace

std::string_view clip_kind_name(ClipKind kind) {
    switch (kind) {
        case ClipKind::moving_checker: return "moving_checker";
        case ClipKind::drifting_text: return "drifting_text";
        case ClipKind::textured_blobs: return "textured_blobs";
    }
    return "unknown";
}

ClipKind parse_clip_kind(std::string_view name) {
    for (auto k : {ClipKind::moving_checker, ClipKind::drifting_text, ClipKind::textured_blobs}) {
        if (clip_kind_name(k) == name) return k;
    }
    throw InvalidArgument("unknown clip kind '" + std::string(name) + "'");
}

video::Video synth_clip(ClipKind kind, std::size_t frames, std::size_t height, std::size_t width, std::mt19937_64& rng,
                        const SynthOptions& options) {
    if (frames == 0 || (frames - 1) % 4 != 0) {
        throw InvalidArgument("clip length must be 1 + 4k, got " + std::to_string(frames));
    }
    if (height == 0 || width == 0) throw InvalidArgument("clip dimensions must be positive");
    if (options.checker_period == 0 || options.checker_period > 8 || options.checker_period % 2 != 0) {
        throw InvalidArgument("checker period must be an even number of at most 8 px");
    }
    std::uniform_real_distribution<double> angle_d(0.0, 2 * std::numbers::pi);
    std::uniform_real_distribution<double> speed_d(options.speed.first, options.speed.second);
    const double angle = angle_d(rng), speed = speed_d(rng);
    double dx = speed * std::cos(angle), dy = speed * std::sin(angle);
    if (options.velocity) std::tie(dx, dy) = *options.velocity;

    video::Video clip(frames, height, width);
    if (kind == ClipKind::moving_checker) {
        const Rgb c0 = uniform_rgb(rng, 0.1, 0.9), c1 = uniform_rgb(rng, 0.1, 0.9);
        const double period = static_cast<double>(options.checker_period);
        std::uniform_real_distribution<double> phase_d(0.0, period);
        const double px = phase_d(rng), py = phase_d(rng);
        constexpr int ss = 4;  // supersampling per axis
        for (std::size_t t = 0; t < frames; ++t) {
            const double ox = px - static_cast<double>(t) * dx, oy = py - static_cast<double>(t) * dy;
            for (std::size_t y = 0; y < height; ++y) {
                for (std::size_t x = 0; x < width; ++x) {
                    double m = 0.0;
                    for (int a = 0; a < ss; ++a) {
                        for (int b = 0; b < ss; ++b) {
                            const double sx = static_cast<double>(x) + (a + 0.5) / ss + ox;
                            const double sy = static_cast<double>(y) + (b + 0.5) / ss + oy;
                            const auto cell = static_cast<long long>(std::floor(sx / (period / 2)) + std::floor(sy / (period / 2)));
                            m += static_cast<double>(((cell % 2) + 2) % 2);
                        }
                    }
                    m /= ss * ss;
                    for (std::size_t c = 0; c < 3; ++c) clip.at(t, y, x, c) = static_cast<float>(c0[c] * (1 - m) + c1[c] * m);
                }
            }
        }
    } else {
        const video::Image canvas = kind == ClipKind::drifting_text ? text_canvas(height, width, rng)
                                                                    : blob_canvas(height, width, rng);
        for (std::size_t t = 0; t < frames; ++t) {
            for (std::size_t y = 0; y < height; ++y) {
                for (std::size_t x = 0; x < width; ++x) {
                    sample_wrapped(canvas, static_cast<double>(x) - static_cast<double>(t) * dx,
                                   static_cast<double>(y) - static_cast<double>(t) * dy, &clip.at(t, y, x, 0));
                }
            }
        }
    }
    if (options.camera_blur > 0.0) {
        for (std::size_t t = 0; t < frames; ++t) {
            video::set_frame(clip, t, gaussian_blur(video::frame_of(clip, t), options.camera_blur, Border::wrap));
        }
    }
    video::clamp_unit(clip.values);
    return clip;
}

}  // namespace sparkprop::degrade
