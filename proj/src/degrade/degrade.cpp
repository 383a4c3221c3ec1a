#include "sparkprop/degrade/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "sparkprop/bytes.hpp"
#include "sparkprop/degrade/filters.hpp"
#include "sparkprop/video/y4m.hpp"

namespace sparkprop::degrade {

namespace {

double draw(std::pair<double, double> range, std::mt19937_64& rng) {
    if (range.second <= range.first) return range.first;
    return std::uniform_real_distribution<double>(range.first, range.second)(rng);
}

// Quantizes the orthonormal 8x8 DCT of each complete block, channel by channel.
void blockify(video::Image& img, double step) {
    constexpr std::size_t n = 8;
    double basis[n][n];
    for (std::size_t u = 0; u < n; ++u) {
        const double a = u == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
        for (std::size_t x = 0; x < n; ++x) basis[u][x] = a * std::cos((2.0 * x + 1.0) * u * std::numbers::pi / (2.0 * n));
    }
    for (std::size_t by = 0; by + n <= img.height; by += n) {
        for (std::size_t bx = 0; bx + n <= img.width; bx += n) {
            for (std::size_t c = 0; c < img.channels; ++c) {
                double coef[n][n] = {};
                for (std::size_t u = 0; u < n; ++u)
                    for (std::size_t v = 0; v < n; ++v) {
                        double acc = 0.0;
                        for (std::size_t y = 0; y < n; ++y)
                            for (std::size_t x = 0; x < n; ++x) acc += basis[u][y] * basis[v][x] * img.at(by + y, bx + x, c);
                        // coarser steps for higher frequencies, like a JPEG table
                        const double q = step * (1.0 + static_cast<double>(u + v));
                        coef[u][v] = std::round(acc / q) * q;
                    }
                for (std::size_t y = 0; y < n; ++y)
                    for (std::size_t x = 0; x < n; ++x) {
                        double acc = 0.0;
                        for (std::size_t u = 0; u < n; ++u)
                            for (std::size_t v = 0; v < n; ++v) acc += basis[u][y] * basis[v][x] * coef[u][v];
                        img.at(by + y, bx + x, c) = static_cast<float>(acc);
                    }
            }
        }
    }
}

}  // namespace

video::Video degrade_video(const video::Video& hr, const DegradationConfig& cfg, std::mt19937_64& rng) {
    if (cfg.factor == 0 || hr.height % cfg.factor != 0 || hr.width % cfg.factor != 0) {
        throw InvalidArgument("frame size " + std::to_string(hr.height) + "x" + std::to_string(hr.width) +
                              " is not divisible by the downscale factor " + std::to_string(cfg.factor));
    }
    if (cfg.blur_sigma.first < 0 || cfg.noise_sigma.first < 0 || cfg.blockiness < 0) {
        throw InvalidArgument("degradation sigmas must be nonnegative");
    }
    const double blur = draw(cfg.blur_sigma, rng);
    const double noise = draw(cfg.noise_sigma, rng);
    const std::size_t h = hr.height / cfg.factor, w = hr.width / cfg.factor;
    video::Video lr(hr.frames, h, w);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t t = 0; t < hr.frames; ++t) {
        video::Image img = gaussian_blur(video::frame_of(hr, t), blur);
        if (cfg.factor != 1) img = resize_bicubic(img, h, w);
        if (noise > 0.0) {
            for (auto& v : img.values) v = static_cast<float>(v + noise * gauss(rng));
        }
        if (cfg.blockiness > 0.0) blockify(img, cfg.blockiness);
        video::clamp_unit(img.values);
        video::set_frame(lr, t, img);
    }
    return lr;
}

video::Video upsample_to(const video::Video& lr, std::size_t height, std::size_t width) {
    if (lr.height == height && lr.width == width) return lr;
    video::Video out(lr.frames, height, width);
    for (std::size_t t = 0; t < lr.frames; ++t) {
        video::set_frame(out, t, resize_bilinear(video::frame_of(lr, t), height, width));
    }
    return out;
}

std::vector<ClipPair> make_dataset(const DatasetSpec& spec) {
    constexpr ClipKind kinds[] = {ClipKind::moving_checker, ClipKind::drifting_text, ClipKind::textured_blobs};
    std::vector<ClipPair> out;
    for (std::size_t i = 0; i < spec.clips; ++i) {
        std::seed_seq seq{spec.seed, static_cast<std::uint64_t>(i)};
        std::mt19937_64 rng(seq);
        ClipPair pair;
        pair.seed = spec.seed;
        pair.name = "clip" + std::to_string(i) + "_" + std::string(clip_kind_name(kinds[i % 3]));
        pair.hr = synth_clip(kinds[i % 3], spec.frames, spec.height, spec.width, rng, spec.synth);
        pair.lr = degrade_video(pair.hr, spec.degradation, rng);
        out.push_back(std::move(pair));
    }
    return out;
}

void write_dataset(const std::filesystem::path& dir, const std::vector<ClipPair>& pairs) {
    std::filesystem::create_directories(dir);
    std::ostringstream manifest;
    for (const auto& p : pairs) {
        const std::string hr = p.name + "_hr.y4m", lr = p.name + "_lr.y4m";
        write_file_atomic(dir / hr, video::write_y4m(p.hr));
        write_file_atomic(dir / lr, video::write_y4m(p.lr));
        manifest << "hr=" << hr << ";lr=" << lr << ";seed=" << p.seed << "\n";
    }
    const std::string text = manifest.str();
    write_file_atomic(dir / "manifest.txt", to_bytes(text));
}

std::vector<ClipPair> read_dataset(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.txt");
    if (!in) throw NotFound("no manifest.txt in " + dir.string());
    std::vector<ClipPair> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::string hr, lr, seed;
        std::istringstream fields(line);
        std::string field;
        while (std::getline(fields, field, ';')) {
            const auto eq = field.find('=');
            if (eq == std::string::npos) continue;
            const std::string key = field.substr(0, eq), value = field.substr(eq + 1);
            if (key == "hr") hr = value;
            else if (key == "lr") lr = value;
            else if (key == "seed") seed = value;
        }
        if (hr.empty() || lr.empty()) {
            throw InvalidArgument("manifest line " + std::to_string(line_no) + " needs hr= and lr=");
        }
        ClipPair p;
        p.name = std::filesystem::path(hr).stem().string();
        p.seed = seed.empty() ? 0 : std::stoull(seed);
        p.hr = video::read_y4m(read_file(dir / hr)).video;
        p.lr = video::read_y4m(read_file(dir / lr)).video;
        if (p.hr.frames != p.lr.frames) {
            throw InvalidArgument("manifest line " + std::to_string(line_no) + ": hr and lr frame counts differ");
        }
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace sparkprop::degrade
