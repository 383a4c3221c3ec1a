// Acceptance run: one PASS/FAIL line per primary criterion, with the
// tolerances pinned below. Trained artifacts are cached between runs.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>

#include "sparkprop/conditioning/keyframes.hpp"
#include "sparkprop/conditioning/reference.hpp"
#include "sparkprop/denoiser/denoiser.hpp"
#include "sparkprop/pipeline/benchmark.hpp"
#include "sparkprop/pipeline/service.hpp"
#include "sparkprop/tensor/gradcheck.hpp"
#include "sparkprop/train/losses.hpp"
#include "sparkprop/train/train.hpp"
#include "sparkprop/vae/layout.hpp"
#include "sparkprop/video/mp4.hpp"
#include "sparkprop/video/pnm.hpp"
#include "sparkprop/video/y4m.hpp"
#include "support/mp4_builder.hpp"
#include "support/op_cases.hpp"

using namespace sparkprop;
namespace fs = std::filesystem;
namespace mp4 = sparkprop::testing::mp4;
using tensor::Tensor;

namespace {

// Pinned limits.
constexpr double kSparsitySeconds = 1.0;
constexpr double kGuidanceRel = 1e-6;
constexpr double kGuidanceSeconds = 1.0;
constexpr double kGradRel = 1e-3;
constexpr int kGradSeeds = 20;
constexpr double kGradSeconds = 120.0;
constexpr double kCodecPsnr = 28.0;
constexpr double kCodecSeconds = 30 * 60.0;
constexpr double kParserSeconds = 5.0;
constexpr double kStage1Ratio = 0.5;
constexpr double kStage1Seconds = 45 * 60.0;
constexpr double kBenefitDb = 0.3;
constexpr double kBenefitSeconds = 60 * 60.0;
constexpr double kTradeoffSeconds = 5 * 60.0;
constexpr double kDeterminismSeconds = 120.0;

constexpr std::size_t kCodecIterations = 2000;
constexpr std::size_t kStage1Iterations = 1500;
constexpr std::size_t kStage2Iterations = 300;
constexpr double kStage1Lr = 1e-3;
constexpr double kStage2Lr = 2.5e-4;
constexpr std::size_t kBatch = 2;
constexpr std::uint64_t kEvalSeed = 999;

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int g_pass = 0, g_total = 0;

void report(int id, bool pass, const std::string& detail) {
    ++g_total;
    g_pass += pass;
    std::printf("criterion %d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Tensor<float> uniform(tensor::Shape shape, std::mt19937_64& rng, float lo = 0.0f, float hi = 1.0f) {
    return testing::uniform(std::move(shape), rng, lo, hi);
}

// Latent slot of frame t, written as a ceiling rather than through the codec.
std::size_t slot_of(std::size_t t) { return (t + 3) / 4; }

void criterion1() {
    const auto t0 = Clock::now();
    const auto codec = vae::Codec::analytic(4);
    std::mt19937_64 rng(1);
    const std::size_t T = 33, H = 16, W = 16;
    const tensor::Shape lat{9, codec.latent_channels(), H / 4, W / 4};
    std::size_t violations = 0, empty_slots = 0;
    for (int n = 0; n < 1000; ++n) {
        const auto keys = conditioning::select_random(T, rng);
        conditioning::ReferenceBundle refs;
        for (auto t : keys.frames) {
            video::Image im(H, W, 3);
            std::uniform_real_distribution<float> u(0.05f, 1.0f);
            for (auto& v : im.values) v = u(rng);
            refs.images[t] = std::move(im);
        }
        const auto z = conditioning::build_sparse_reference(refs, keys, lat, codec);
        const std::size_t per = z.numel() / 9;
        std::vector<bool> keyed(9, false);
        for (auto t : keys.frames) keyed[slot_of(t)] = true;
        const auto values = z.to_vector();
        for (std::size_t l = 0; l < 9; ++l) {
            bool any = false;
            for (std::size_t i = 0; i < per; ++i) any = any || values[l * per + i] != 0.0f;
            if (!keyed[l] && any) ++violations;
            if (keyed[l] && !any) ++empty_slots;
        }
    }
    const double s = since(t0);
    report(1, violations == 0 && empty_slots == 0 && s < kSparsitySeconds,
           fmt("1000 random keyframe sets, %zu nonzero unkeyed slots, %zu empty keyed slots (%.2f s, limit %.0f s)",
               violations, empty_slots, s, kSparsitySeconds));
}

void criterion2() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(2);
    bool exact = true;
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const auto cond = uniform({3, 16, 4, 4}, rng, -2.0f, 2.0f);
        const auto uncond = uniform({3, 16, 4, 4}, rng, -2.0f, 2.0f);
        const auto v0 = denoiser::rfg_combine(cond, uncond, 0.0).to_vector();
        const auto v1 = denoiser::rfg_combine(cond, uncond, 1.0).to_vector();
        exact = exact && v1 == cond.to_vector() && v0 == uncond.to_vector();
        for (double s : {0.5, 0.8, 1.0, 1.2, 1.5}) {
            const auto vs = denoiser::rfg_combine(cond, uncond, s).to_vector();
            double num = 0.0, den = 0.0;
            for (std::size_t i = 0; i < vs.size(); ++i) {
                const double lhs = static_cast<double>(vs[i]) - v0[i];
                const double rhs = s * (static_cast<double>(v1[i]) - v0[i]);
                num = std::max(num, std::abs(lhs - rhs));
                den = std::max(den, std::abs(rhs));
            }
            worst = std::max(worst, num / den);
        }
    }
    const double s = since(t0);
    report(2, exact && worst < kGuidanceRel && s < kGuidanceSeconds,
           fmt("s=0/1 bit-exact: %s, max rel linearity error %.2e over s in {0.5,0.8,1,1.2,1.5} (limit %.0e, %.3f s)",
               exact ? "yes" : "no", worst, kGuidanceRel, s));
}

void criterion3() {
    const auto t0 = Clock::now();
    double prim_worst = 0.0, loss_worst = 0.0;
    std::string prim_name, loss_name;
    std::size_t checks = 0;
    std::mt19937_64 rng(3);
    for (int seed = 0; seed < kGradSeeds; ++seed) {
        testing::for_each_primitive_case(rng, [&](const std::string& name, const auto& point, const auto& fn) {
            const double e = tensor::grad_check<float>(fn, point, 1e-4);
            ++checks;
            if (e > prim_worst) prim_worst = e, prim_name = name;
        });
    }
    const train::FilterBank bank;
    for (int seed = 0; seed < kGradSeeds; ++seed) {
        std::mt19937_64 r(100 + seed);
        const std::vector<Tensor<float>> point{uniform({2, 3, 8, 8}, r), uniform({2, 3, 8, 8}, r)};
        auto frame = [](const auto& in) { return train::frame_consistency_loss(in[0], in[1]); };
        auto dists = [&](const auto& in) { return train::dists_surrogate(in[0], in[1], bank); };
        auto video = [&](const auto& in) { return train::stage2_video_loss(in[0], in[1], 1.0, 1.0, bank); };
        const std::pair<const char*, double> results[] = {
            {"frame", tensor::grad_check_report<float>(frame, point, 1e-3).normwise},
            {"dists", tensor::grad_check_report<float>(dists, point, 1e-3).normwise},
            {"video", tensor::grad_check_report<float>(video, point, 1e-3).normwise}};
        for (const auto& [name, e] : results) {
            ++checks;
            if (e > loss_worst) loss_worst = e, loss_name = name;
        }
    }
    const double s = since(t0);
    report(3, prim_worst < kGradRel && loss_worst < kGradRel && s < kGradSeconds,
           fmt("%zu checks over %d seeds: primitives max elementwise rel %.2e (%s), losses max normwise rel %.2e (%s); "
               "limit %.0e (%.1f s, limit %.0f s)",
               checks, kGradSeeds, prim_worst, prim_name.c_str(), loss_worst, loss_name.c_str(), kGradRel, s,
               kGradSeconds));
}

struct Artifacts {
    vae::Codec codec = vae::Codec::analytic();
    double codec_seconds = 0.0;
    double codec_psnr = 0.0;
    tensor::Checkpoint stage1;
    double stage1_seconds = 0.0;
    double stage1_ratio = 0.0;
    tensor::Checkpoint stage2;
    double stage2_seconds = 0.0;
    bool cached = false;
};

std::string recipe_tag() {
    std::ostringstream os;
    os << "codec=" << kCodecIterations << ";s1=" << kStage1Iterations << "@" << kStage1Lr << ";s2=" << kStage2Iterations
       << "@" << kStage2Lr << ";batch=" << kBatch << ";v2";
    return os.str();
}

double meta_double(const tensor::Checkpoint& c, const std::string& key) {
    const auto v = c.meta(key);
    return v ? std::stod(*v) : std::nan("");
}

Artifacts build_artifacts(const fs::path& cache) {
    fs::create_directories(cache);
    const auto codec_path = cache / "codec.ckpt", s1_path = cache / "stage1.ckpt", s2_path = cache / "stage2.ckpt";
    const std::string tag = recipe_tag();
    const pipeline::ToyRecipe recipe;
    Artifacts a;

    auto cached = [&](const fs::path& p) -> std::optional<tensor::Checkpoint> {
        if (!fs::exists(p)) return std::nullopt;
        auto c = tensor::Checkpoint::load(p);
        if (c.meta("acceptance.recipe") != tag) return std::nullopt;
        return c;
    };

    if (auto c = cached(codec_path)) {
        a.codec = vae::Codec::load(*c);
        a.codec_seconds = meta_double(*c, "acceptance.seconds");
        a.cached = true;
    } else {
        std::printf("pretraining codec (%zu iterations)...\n", kCodecIterations);
        std::fflush(stdout);
        const auto t0 = Clock::now();
        vae::PretrainConfig cfg;
        cfg.iterations = kCodecIterations;
        auto result = vae::pretrain_codec(recipe.codec_set(), cfg);
        a.codec_seconds = since(t0);
        a.codec = std::move(result.codec);
        tensor::Checkpoint ckpt;
        a.codec.save(ckpt);
        ckpt.metadata()["acceptance.recipe"] = tag;
        ckpt.metadata()["acceptance.seconds"] = std::to_string(a.codec_seconds);
        ckpt.save(codec_path);
        fs::remove(s1_path);
        fs::remove(s2_path);
    }
    a.codec_psnr = pipeline::codec_psnr(a.codec, recipe.codec_eval_set());

    const auto data = train::prepare_examples(recipe.train_set(), a.codec);
    train::TrainConfig cfg;
    cfg.lr = kStage1Lr;
    cfg.batch = kBatch;
    if (auto c = cached(s1_path)) {
        a.stage1 = std::move(*c);
        a.stage1_seconds = meta_double(a.stage1, "acceptance.seconds");
        a.stage1_ratio = meta_double(a.stage1, "acceptance.ratio");
    } else {
        std::printf("training stage 1 (%zu iterations)...\n", kStage1Iterations);
        std::fflush(stdout);
        cfg.stage = 1;
        cfg.iterations = kStage1Iterations;
        cfg.log_path = cache / "stage1.csv";
        fs::remove(cfg.log_path);
        std::vector<double> losses;
        train::RunHooks hooks;
        hooks.on_step = [&](std::size_t, const train::StepResult& r) { losses.push_back(r.mse); };
        const auto t0 = Clock::now();
        a.stage1 = train::train_run(cfg, data, a.codec, std::nullopt, hooks);
        a.stage1_seconds = since(t0);
        const double first = std::accumulate(losses.begin(), losses.begin() + 50, 0.0) / 50.0;
        const double last = std::accumulate(losses.end() - 50, losses.end(), 0.0) / 50.0;
        a.stage1_ratio = last / first;
        a.stage1.metadata()["acceptance.recipe"] = tag;
        a.stage1.metadata()["acceptance.seconds"] = std::to_string(a.stage1_seconds);
        a.stage1.metadata()["acceptance.ratio"] = std::to_string(a.stage1_ratio);
        a.stage1.save(s1_path);
        fs::remove(s2_path);
        a.cached = false;
    }
    if (auto c = cached(s2_path)) {
        a.stage2 = std::move(*c);
        a.stage2_seconds = meta_double(a.stage2, "acceptance.seconds");
    } else {
        std::printf("training stage 2 (%zu iterations)...\n", kStage2Iterations);
        std::fflush(stdout);
        cfg.stage = 2;
        cfg.iterations = kStage2Iterations;
        cfg.lr = kStage2Lr;
        cfg.log_path = cache / "stage2.csv";
        fs::remove(cfg.log_path);
        const auto t0 = Clock::now();
        a.stage2 = train::train_run(cfg, data, a.codec, a.stage1);
        a.stage2_seconds = since(t0);
        a.stage2.metadata()["acceptance.recipe"] = tag;
        a.stage2.metadata()["acceptance.seconds"] = std::to_string(a.stage2_seconds);
        a.stage2.save(s2_path);
        a.cached = false;
    }
    return a;
}

void criterion4(const Artifacts& a) {
    const auto analytic = vae::Codec::analytic(4);
    std::mt19937_64 rng(4);
    auto x = uniform({33, 3, 16, 16}, rng);
    const auto z = analytic.encode(x);
    const bool l9 = z.dim(0) == 9 && vae::latent_length(33) == 9;
    const bool exact = analytic.decode(z).to_vector() == x.to_vector();

    auto probe = [&](const vae::Codec& codec, double tol) {
        auto p = x.clone();
        for (std::size_t i = 9 * 3 * 16 * 16; i < p.numel(); ++i) p.data()[i] = 1.0f - p.data()[i];
        const auto za = codec.encode(x).to_vector(), zb = codec.encode(p).to_vector();
        const std::size_t head = 3 * za.size() / 9;
        double d = 0.0, tail = 0.0;
        for (std::size_t i = 0; i < za.size(); ++i) {
            (i < head ? d : tail) = std::max(i < head ? d : tail, static_cast<double>(std::abs(za[i] - zb[i])));
        }
        return d <= tol && tail > 0.0;
    };
    const bool causal = probe(analytic, 0.0) && probe(a.codec, 1e-5);
    const bool fast = a.codec_seconds <= kCodecSeconds;
    report(4, exact && l9 && causal && a.codec_psnr >= kCodecPsnr && fast,
           fmt("analytic round trip bit-exact: %s, T=33 -> L=9: %s, causality: %s, learned codec held-out PSNR %.2f dB "
               "(limit %.0f) after %zu iterations in %.0f s (limit %.0f s)",
               exact ? "yes" : "no", l9 ? "yes" : "no", causal ? "yes" : "no", a.codec_psnr, kCodecPsnr,
               kCodecIterations, a.codec_seconds, kCodecSeconds));
}

void criterion5() {
    const auto t0 = Clock::now();
    int ok = 0, total = 0;
    auto expect = [&](const mp4::Bytes& f, const video::SyncSampleTable& want) {
        ++total;
        try {
            ok += video::parse_mp4_sync_samples(f) == want;
        } catch (const std::exception&) {
        }
    };
    auto reject = [&](const mp4::Bytes& f) {
        ++total;
        try {
            video::parse_mp4_sync_samples(f);
        } catch (const video::Mp4Error& e) {
            ok += e.offset() <= f.size();
        } catch (const std::exception&) {
        }
    };
    expect(mp4::file({mp4::track("vide", mp4::cat({mp4::stsz(193), mp4::stss({1, 49, 97, 145})}))}), {0, 48, 96, 144});
    expect(mp4::file({mp4::track("vide", mp4::stsz(6))}), {0, 1, 2, 3, 4, 5});
    expect(mp4::file({mp4::track("soun", mp4::stss({1, 2})), mp4::track("vide", mp4::cat({mp4::stsz(40), mp4::stss({1, 17})}))}),
           {0, 16});
    reject(mp4::file({mp4::track("vide", mp4::stss({1, 49, 97}, 4))}));
    auto overflow = mp4::stss({1, 5});
    overflow[3] = 200;
    reject(mp4::file({mp4::track("vide", overflow)}));
    auto short_box = mp4::file({mp4::track("vide", mp4::stsz(3))});
    const auto at = mp4::ftyp().size();
    short_box[at] = short_box[at + 1] = short_box[at + 2] = 0;
    short_box[at + 3] = 4;
    reject(short_box);
    reject(mp4::ftyp());
    reject(mp4::file({mp4::track("soun", mp4::stsz(3))}));
    reject(mp4::Bytes{0, 0, 0});

    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> code(0, 255);
    video::Video v(3, 6, 8);
    for (auto& x : v.values) x = static_cast<float>(code(rng)) / 255.0f;
    const auto y4m = video::write_y4m(v);
    ++total;
    ok += video::write_y4m(video::read_y4m(y4m).video) == y4m;
    video::Image rgb(5, 7, 3), gray(5, 7, 1);
    for (auto& x : rgb.values) x = static_cast<float>(code(rng)) / 255.0f;
    for (auto& x : gray.values) x = static_cast<float>(code(rng)) / 255.0f;
    ++total;
    ok += video::read_ppm(video::write_ppm(rgb)).values == rgb.values;
    ++total;
    ok += video::read_pgm(video::write_pgm(gray)).values == gray.values;
    const double s = since(t0);
    report(5, ok == total && s < kParserSeconds,
           fmt("%d/%d parser fixtures and round trips as expected (%.3f s, limit %.0f s)", ok, total, s, kParserSeconds));
}

void criterion6(const Artifacts& a) {
    report(6, a.stage1_ratio <= kStage1Ratio && a.stage1_seconds <= kStage1Seconds,
           fmt("stage-1 latent MSE last-50 / first-50 = %.3f (limit %.2f) after %zu iterations in %.0f s (limit %.0f s)",
               a.stage1_ratio, kStage1Ratio, kStage1Iterations, a.stage1_seconds, kStage1Seconds));
}

void criterion7(const pipeline::Model& model, const std::vector<degrade::ClipPair>& clips, const Artifacts& a) {
    const auto t0 = Clock::now();
    const auto scores = pipeline::evaluate_conditions(
        model, clips, {{"blind", {}, 0.0}, {"1ref", {0}, 1.0}, {"3ref", {0, 16, 32}, 1.0}}, {}, kEvalSeed);
    const double total = since(t0) + a.stage1_seconds + a.stage2_seconds;
    const auto &blind = scores[0], &one = scores[1], &three = scores[2];
    const bool order = one.psnr_db >= blind.psnr_db + kBenefitDb && three.psnr_db >= one.psnr_db;
    const bool flicker = one.flicker <= blind.flicker && three.flicker <= one.flicker;
    report(7, order && flicker && total <= kBenefitSeconds,
           fmt("PSNR blind %.3f / 1 ref %.3f / 3 refs %.3f dB (need +%.1f then non-decreasing), flicker %.5f / %.5f / "
               "%.5f (need non-increasing); %zu held-out clips, training + eval %.0f s (limit %.0f s)",
               blind.psnr_db, one.psnr_db, three.psnr_db, kBenefitDb, blind.flicker, one.flicker, three.flicker,
               clips.size(), total, kBenefitSeconds));
}

void criterion8(const pipeline::Model& model, const std::vector<degrade::ClipPair>& clips) {
    const auto t0 = Clock::now();
    const std::vector<double> scales{0.0, 0.5, 0.8, 1.0, 1.2, 1.5};
    const auto sweep = pipeline::guidance_sweep(model, clips, {0, 16, 32}, scales, {}, kEvalSeed);
    const double s = since(t0);
    bool decreasing = true;
    for (std::size_t i = 1; i < 4; ++i) decreasing = decreasing && sweep[i].latent_distance < sweep[i - 1].latent_distance;
    const bool falls = sweep[5].psnr_db < sweep[0].psnr_db;
    std::string curve;
    for (const auto& p : sweep) curve += fmt(" s=%.1f:%.3fdB/%.4f", p.scale, p.psnr_db, p.latent_distance);
    report(8, falls && decreasing && s < kTradeoffSeconds,
           fmt("PSNR(s=1.5) < PSNR(s=0): %s, distance to conditional prediction strictly decreasing on s in [0,1]: %s;"
               "%s (%.1f s, limit %.0f s)",
               falls ? "yes" : "no", decreasing ? "yes" : "no", curve.c_str(), s, kTradeoffSeconds));
}

void criterion9(const fs::path& checkpoint, const std::vector<degrade::ClipPair>& clips) {
    const auto t0 = Clock::now();
    const auto& clip = clips.front();
    const conditioning::KeyframeSet keys{{0, 16, 32}, conditioning::KeyframeOrigin::manual};
    const auto refs = pipeline::oracle_references(clip.hr, keys, {}, kEvalSeed);
    auto run = [&]() {
        pipeline::Service svc({pipeline::Model::load(checkpoint), 1, std::nullopt});
        pipeline::JobSpec spec;
        spec.video_id = svc.ingest_video(video::write_y4m(clip.lr))->id;
        spec.keyframes = keys.frames;
        spec.guidance_s = 1.2;
        for (auto t : keys.frames) spec.refs[t] = svc.add_reference(video::write_ppm(refs.images.at(t)), t)->id;
        const auto id = svc.submit(spec);
        if (svc.wait(id).state != pipeline::JobState::done) throw Error("job failed: " + svc.status(id).reason);
        return svc.result_y4m(id);
    };
    const auto a = run(), b = run();
    const double s = since(t0);
    report(9, a == b && !a.empty() && s < kDeterminismSeconds,
           fmt("two runs of one job spec: %zu-byte results %s, sha256 %.16s (%.1f s, limit %.0f s)", a.size(),
               a == b ? "identical" : "differ", sha256_hex(a).c_str(), s, kDeterminismSeconds));
}

}  // namespace

int main(int argc, char** argv) {
    fs::path cache = "acceptance_cache";
    if (const char* env = std::getenv("SPARKPROP_ACCEPTANCE_CACHE")) cache = env;
    if (argc > 1) cache = argv[1];
    try {
        criterion1();
        criterion2();
        criterion3();
        const auto artifacts = build_artifacts(cache);
        criterion4(artifacts);
        criterion5();
        criterion6(artifacts);
        const auto model = pipeline::Model::from_checkpoint(artifacts.stage2);
        const auto clips = pipeline::ToyRecipe{}.eval_set();
        criterion7(*model, clips, artifacts);
        criterion8(*model, clips);
        criterion9(cache / "stage2.ckpt", clips);
    } catch (const std::exception& e) {
        std::printf("acceptance aborted: %s\n", e.what());
        return 1;
    }
    std::printf("acceptance complete: %d/%d criteria pass\n", g_pass, g_total);
    return 0;
}
