#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "httplib.h"

#include "sparkprop/eval/metrics.hpp"
#include "sparkprop/pipeline/benchmark.hpp"
#include "sparkprop/pipeline/http.hpp"
#include "sparkprop/pipeline/service.hpp"
#include "sparkprop/train/train.hpp"
#include "sparkprop/video/mp4.hpp"
#include "sparkprop/video/pnm.hpp"

using namespace sparkprop;

namespace {

std::pair<double, double> parse_range(const std::string& text) {
    const auto comma = text.find(',');
    if (comma == std::string::npos) {
        const double v = std::stod(text);
        return {v, v};
    }
    return {std::stod(text.substr(0, comma)), std::stod(text.substr(comma + 1))};
}

std::string resolve_checkpoint(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("SPARKPROP_CHECKPOINT"); env && *env) return env;
    throw InvalidArgument("no checkpoint: pass --checkpoint or set SPARKPROP_CHECKPOINT");
}

std::string join(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

struct IframesArgs {
    std::string mp4;
    std::size_t frames = 0;
};

int run_iframes(const IframesArgs& a) {
    const auto sync = video::parse_mp4_sync_samples(read_file(a.mp4));
    std::cout << "sync_samples=" << join(sync) << "\n";
    const std::size_t t = a.frames ? a.frames : (sync.empty() ? 0 : sync.back() + 1);
    std::cout << conditioning::select_iframes(sync, t).to_text() << "\n";
    return 0;
}

struct DegradeArgs {
    std::string input, output, out_dir;
    std::size_t synthetic = 0, frames = 33, height = 64, width = 64;
    std::uint64_t seed = 0;
    std::string blur = "0.5,1.0", noise = "0,0.02";
    std::size_t factor = 4;
    double blockiness = 0.0;
};

int run_degrade(const DegradeArgs& a) {
    degrade::DegradationConfig cfg;
    cfg.blur_sigma = parse_range(a.blur);
    cfg.noise_sigma = parse_range(a.noise);
    cfg.factor = a.factor;
    cfg.blockiness = a.blockiness;
    if (a.synthetic > 0) {
        if (a.out_dir.empty()) throw InvalidArgument("--synthetic needs --out-dir");
        degrade::DatasetSpec spec;
        spec.clips = a.synthetic;
        spec.frames = a.frames;
        spec.height = a.height;
        spec.width = a.width;
        spec.seed = a.seed;
        spec.degradation = cfg;
        degrade::write_dataset(a.out_dir, degrade::make_dataset(spec));
        std::cout << "wrote " << a.synthetic << " pairs to " << a.out_dir << "\n";
        return 0;
    }
    if (a.input.empty() || a.output.empty()) throw InvalidArgument("degrade needs --input and --output");
    const auto clip = video::read_y4m(read_file(a.input));
    std::mt19937_64 rng(a.seed);
    write_file_atomic(a.output, video::write_y4m(degrade::degrade_video(clip.video, cfg, rng), clip.fps));
    return 0;
}

struct PretrainArgs {
    std::string out, data;
    std::size_t iterations = 2000, channels = 16, factor = 4, hidden = 64;
    std::uint64_t seed = 0;
};

int run_pretrain(const PretrainArgs& a) {
    std::vector<video::Video> clips;
    if (!a.data.empty()) {
        for (auto& p : degrade::read_dataset(a.data)) clips.push_back(std::move(p.hr));
    } else {
        clips = pipeline::ToyRecipe{}.codec_set();
    }
    vae::PretrainConfig cfg;
    cfg.iterations = a.iterations;
    cfg.latent_channels = a.channels;
    cfg.spatial_factor = a.factor;
    cfg.hidden = a.hidden;
    cfg.seed = a.seed;
    auto result = vae::pretrain_codec(clips, cfg, [](std::size_t it, double loss) {
        if (it % 100 == 0) std::cerr << "iter " << it << " loss " << loss << "\n";
    });
    if (result.diverged) std::cerr << "warning: pretraining diverged and was rolled back\n";
    tensor::Checkpoint ckpt;
    result.codec.save(ckpt);
    ckpt.save(a.out);
    std::cout << "held-out psnr " << pipeline::codec_psnr(result.codec, pipeline::ToyRecipe{}.codec_eval_set()) << " dB\n";
    return 0;
}

struct TrainArgs {
    std::string params, data, codec, resume, out;
    std::vector<std::string> set;
    int stage = 0;
    std::size_t iterations = 0;
};

int run_train(const TrainArgs& a) {
    std::string text = a.params.empty() ? std::string() : to_string(read_file(a.params));
    for (const auto& kv : a.set) text += "\n" + kv;
    if (a.stage) text += "\nstage=" + std::to_string(a.stage);
    if (a.iterations) text += "\niterations=" + std::to_string(a.iterations);
    const auto cfg = train::TrainConfig::parse(text);

    std::optional<tensor::Checkpoint> resume;
    if (!a.resume.empty()) resume = tensor::Checkpoint::load(a.resume);
    const auto codec = !a.codec.empty() ? vae::Codec::load(tensor::Checkpoint::load(a.codec))
                       : resume        ? vae::Codec::load(*resume)
                                       : throw InvalidArgument("train needs --codec or --resume");
    const auto pairs = a.data.empty() ? pipeline::ToyRecipe{}.train_set() : degrade::read_dataset(a.data);
    const auto data = train::prepare_examples(pairs, codec);
    train::RunHooks hooks;
    hooks.on_step = [](std::size_t it, const train::StepResult& r) {
        if ((it + 1) % 50 == 0) std::cerr << "iter " << it + 1 << " loss " << r.loss << "\n";
    };
    const auto ckpt = train::train_run(cfg, data, codec, resume, hooks);
    ckpt.save(a.out);
    std::cout << "saved " << a.out << " (config " << cfg.hash().substr(0, 12) << ")\n";
    return 0;
}

struct RestoreArgs {
    std::string checkpoint, input, output, mp4, oracle_gt, strategy = "manual", source;
    std::vector<std::size_t> keyframes;
    std::vector<std::string> refs;
    std::size_t count = 1, upscale = 4;
    double guidance = 1.0;
    std::uint64_t seed = 0;
};

int run_restore(const RestoreArgs& a) {
    pipeline::Service svc({pipeline::Model::load(resolve_checkpoint(a.checkpoint)), 0, std::nullopt});
    const auto lr = svc.ingest_video(read_file(a.input), a.mp4.empty() ? Bytes{} : read_file(a.mp4));
    pipeline::JobSpec spec;
    spec.video_id = lr->id;
    spec.strategy = conditioning::parse_origin(a.strategy);
    spec.keyframes = a.keyframes;
    spec.count = a.count;
    spec.guidance_s = a.guidance;
    spec.seed = a.seed;
    spec.upscale = a.upscale;
    if (!a.source.empty()) {
        spec.ref_source = pipeline::parse_source(a.source);
    } else {
        spec.ref_source = !a.oracle_gt.empty() ? pipeline::ReferenceSource::oracle_augmented_gt
                          : !a.refs.empty()    ? pipeline::ReferenceSource::uploaded
                                               : pipeline::ReferenceSource::none;
    }
    for (const auto& r : a.refs) {
        const auto eq = r.find('=');
        if (eq == std::string::npos) throw InvalidArgument("--ref expects FRAME=image.ppm, got '" + r + "'");
        const std::size_t t = std::stoul(r.substr(0, eq));
        spec.refs[t] = svc.add_reference(read_file(r.substr(eq + 1)), t)->id;
    }
    if (!a.oracle_gt.empty()) spec.gt_video_id = svc.ingest_video(read_file(a.oracle_gt))->id;
    const auto id = svc.submit(spec);
    svc.run_pending();
    const auto snap = svc.status(id);
    if (snap.state != pipeline::JobState::done) throw Error("restore failed: " + snap.reason);
    write_file_atomic(a.output, svc.result_y4m(id));
    std::cout << snap.keys.to_text() << ";s=" << a.guidance << " -> " << a.output << "\n";
    return 0;
}

struct EvalArgs {
    std::vector<std::string> pred, gt;
    std::string csv, slice_dir;
    std::optional<std::size_t> xt_row;
};

int run_eval(const EvalArgs& a) {
    if (a.pred.size() != a.gt.size()) throw InvalidArgument("--pred and --gt need the same number of files");
    std::vector<video::Video> preds, gts;
    for (std::size_t i = 0; i < a.pred.size(); ++i) {
        preds.push_back(video::read_y4m(read_file(a.pred[i])).video);
        gts.push_back(video::read_y4m(read_file(a.gt[i])).video);
    }
    std::vector<eval::ClipPairRef> pairs;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        pairs.push_back({std::filesystem::path(a.pred[i]).stem().string(), &preds[i], &gts[i]});
    }
    eval::ReportOptions opts;
    opts.xt_row = a.xt_row;
    opts.slice_dir = a.slice_dir.empty() ? std::filesystem::path(".") : std::filesystem::path(a.slice_dir);
    const auto csv = eval::eval_report(pairs, opts).to_csv();
    if (!a.csv.empty()) write_file_atomic(a.csv, to_bytes(csv));
    std::cout << csv;
    return 0;
}

struct ServeArgs {
    std::string checkpoint, host = "127.0.0.1", store;
    int port = 8080;
    std::size_t workers = 1;
};

httplib::Server* g_server = nullptr;

int run_serve(const ServeArgs& a) {
    pipeline::ServiceConfig cfg;
    cfg.workers = a.workers;
    if (!a.store.empty()) cfg.store_dir = a.store;
    try {
        cfg.model = pipeline::Model::load(resolve_checkpoint(a.checkpoint));
    } catch (const InvalidArgument& e) {
        std::cerr << "warning: " << e.what() << "; jobs will be rejected\n";
    }
    pipeline::Service svc(std::move(cfg));
    httplib::Server server;
    pipeline::register_routes(server, svc);
    g_server = &server;
    std::signal(SIGINT, [](int) { g_server->stop(); });
    std::signal(SIGTERM, [](int) { g_server->stop(); });
    std::cerr << "listening on " << a.host << ":" << a.port << "\n";
    if (!server.listen(a.host, a.port)) throw Error("cannot listen on " + a.host + ":" + std::to_string(a.port));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Keyframe-conditioned video super-resolution"};
    app.set_config("--config", "", "key=value file; subcommand keys as verb.key");
    app.require_subcommand(1);

    IframesArgs ia;
    auto* iframes = app.add_subcommand("iframes", "Print sync samples of an MP4 and the keyframes they give");
    iframes->add_option("mp4", ia.mp4, "MP4 file")->required()->check(CLI::ExistingFile);
    iframes->add_option("--frames", ia.frames, "Clip length (default: last sync sample + 1)");

    DegradeArgs da;
    auto* deg = app.add_subcommand("degrade", "Degrade a Y4M clip or write a synthetic training set");
    deg->add_option("--input", da.input, "HR Y4M");
    deg->add_option("--output", da.output, "LR Y4M");
    deg->add_option("--synthetic", da.synthetic, "Write this many synthetic pairs instead");
    deg->add_option("--out-dir", da.out_dir);
    deg->add_option("--frames", da.frames);
    deg->add_option("--height", da.height);
    deg->add_option("--width", da.width);
    deg->add_option("--seed", da.seed);
    deg->add_option("--blur", da.blur, "Blur sigma range lo,hi");
    deg->add_option("--noise", da.noise, "Noise sigma range lo,hi");
    deg->add_option("--factor", da.factor);
    deg->add_option("--blockiness", da.blockiness);

    PretrainArgs pa;
    auto* pre = app.add_subcommand("pretrain-codec", "Pretrain the learned codec");
    pre->add_option("--out", pa.out)->required();
    pre->add_option("--data", pa.data, "Dataset directory (default: built-in synthetic set)");
    pre->add_option("--iterations", pa.iterations);
    pre->add_option("--latent-channels", pa.channels);
    pre->add_option("--factor", pa.factor);
    pre->add_option("--hidden", pa.hidden);
    pre->add_option("--seed", pa.seed);

    TrainArgs ta;
    auto* tr = app.add_subcommand("train", "Run training stage 1 or 2");
    tr->add_option("--params", ta.params, "Training key=value file")->check(CLI::ExistingFile);
    tr->add_option("--set", ta.set, "Override one training key (key=value)");
    tr->add_option("--stage", ta.stage)->check(CLI::Range(1, 2));
    tr->add_option("--iterations", ta.iterations);
    tr->add_option("--data", ta.data, "Dataset directory (default: built-in synthetic set)");
    tr->add_option("--codec", ta.codec, "Codec checkpoint");
    tr->add_option("--resume", ta.resume, "Checkpoint to continue from (required for stage 2)");
    tr->add_option("--out", ta.out)->required();

    RestoreArgs ra;
    auto* rs = app.add_subcommand("restore", "Restore a low-resolution Y4M clip");
    rs->add_option("--checkpoint", ra.checkpoint, "Model checkpoint (default: $SPARKPROP_CHECKPOINT)");
    rs->add_option("--input", ra.input)->required()->check(CLI::ExistingFile);
    rs->add_option("--output", ra.output)->required();
    rs->add_option("--mp4", ra.mp4, "MP4 the input was decoded from, for --strategy iframe");
    rs->add_option("--strategy", ra.strategy, "manual, iframe, random or uniform");
    rs->add_option("--keyframes", ra.keyframes)->delimiter(',');
    rs->add_option("--count", ra.count, "Keyframe count for --strategy uniform");
    rs->add_option("--ref", ra.refs, "Reference image FRAME=path.ppm");
    rs->add_option("--oracle-gt", ra.oracle_gt, "HR Y4M to draw augmented references from");
    rs->add_option("--source", ra.source, "uploaded, oracle_augmented_gt or none");
    rs->add_option("--guidance", ra.guidance, "Guidance scale s");
    rs->add_option("--upscale", ra.upscale);
    rs->add_option("--seed", ra.seed);

    EvalArgs ea;
    auto* ev = app.add_subcommand("eval", "PSNR, SSIM and flicker of predictions against ground truth");
    ev->add_option("--pred", ea.pred)->required();
    ev->add_option("--gt", ea.gt)->required();
    ev->add_option("--csv", ea.csv);
    ev->add_option("--xt-row", ea.xt_row, "Write X-T slices at this row");
    ev->add_option("--slice-dir", ea.slice_dir);

    ServeArgs sa;
    auto* sv = app.add_subcommand("serve", "Run the HTTP service");
    sv->add_option("--checkpoint", sa.checkpoint, "Model checkpoint (default: $SPARKPROP_CHECKPOINT)");
    sv->add_option("--host", sa.host);
    sv->add_option("--port", sa.port);
    sv->add_option("--workers", sa.workers);
    sv->add_option("--store", sa.store, "Directory for stored inputs and results");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*iframes) return run_iframes(ia);
        if (*deg) return run_degrade(da);
        if (*pre) return run_pretrain(pa);
        if (*tr) return run_train(ta);
        if (*rs) return run_restore(ra);
        if (*ev) return run_eval(ea);
        if (*sv) return run_serve(sa);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
