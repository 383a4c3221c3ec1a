#include "sparkprop/train/train.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "sparkprop/bytes.hpp"
#include "sparkprop/tensor/ops.hpp"
#include "sparkprop/vae/layout.hpp"

namespace sparkprop::train {

namespace ops = tensor::ops;

namespace {

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double x = 0.0;
    try {
        x = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != v.size() || v.empty()) throw InvalidArgument("config key '" + key + "' expects a number, got '" + v + "'");
    return x;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
        throw InvalidArgument("config key '" + key + "' expects a non-negative integer, got '" + v + "'");
    }
    return std::stoull(v);
}

std::pair<double, double> parse_range(const std::string& key, const std::string& v) {
    const auto comma = v.find(',');
    if (comma == std::string::npos) throw InvalidArgument("config key '" + key + "' expects 'lo,hi', got '" + v + "'");
    return {parse_double(key, trim(v.substr(0, comma))), parse_double(key, trim(v.substr(comma + 1)))};
}

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
}

std::string fmt(std::pair<double, double> r) { return fmt(r.first) + "," + fmt(r.second); }

bool finite_grads(const nn::ParamSet& params) {
    for (const auto& t : params.tensors()) {
        for (float g : std::as_const(t).grad()) {
            if (!std::isfinite(g)) return false;
        }
    }
    return true;
}

const Example& pick(const std::vector<Example>& data, std::mt19937_64& rng) {
    if (data.empty()) throw InvalidArgument("training set is empty");
    return data[std::uniform_int_distribution<std::size_t>(0, data.size() - 1)(rng)];
}

StepResult finish_step(Learner& learner, Tensor<float> loss, tensor::Graph<float>& graph, StepResult r) {
    r.loss = loss.item();
    if (!std::isfinite(r.loss)) {
        r.skipped = true;
        return r;
    }
    tensor::backward(graph, loss);
    if (!finite_grads(learner.model.params())) {
        r.skipped = true;
        return r;
    }
    const auto outcome = tensor::adamw_step(learner.model.params().tensors(), learner.optimizer);
    r.skipped = !outcome.applied;
    return r;
}

}  // namespace

void TrainConfig::validate() const {
    if (stage != 1 && stage != 2) throw InvalidArgument("stage must be 1 or 2");
    if (!(lr > 0.0)) throw InvalidArgument("learning rate must be positive");
    if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw InvalidArgument("loss weights must be non-negative");
    if (!(phi >= 0.0 && phi <= 1.0)) throw InvalidArgument("phi must lie in [0, 1]");
    if (!(p_drop >= 0.0 && p_drop <= 1.0)) throw InvalidArgument("p_drop must lie in [0, 1]");
    if (batch == 0) throw InvalidArgument("batch must be positive");
}

TrainConfig TrainConfig::parse(const std::string& text) {
    TrainConfig c;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw InvalidArgument("config line " + std::to_string(lineno) + " has no '='");
        const std::string k = trim(line.substr(0, eq)), v = trim(line.substr(eq + 1));
        if (k == "stage") c.stage = static_cast<int>(parse_uint(k, v));
        else if (k == "iterations") c.iterations = parse_uint(k, v);
        else if (k == "lr") c.lr = parse_double(k, v);
        else if (k == "lambda1") c.lambda1 = parse_double(k, v);
        else if (k == "lambda2") c.lambda2 = parse_double(k, v);
        else if (k == "p_drop") c.p_drop = parse_double(k, v);
        else if (k == "phi") c.phi = parse_double(k, v);
        else if (k == "batch") c.batch = parse_uint(k, v);
        else if (k == "seed") c.seed = parse_uint(k, v);
        else if (k == "checkpoint_every") c.checkpoint_every = parse_uint(k, v);
        else if (k == "checkpoint_dir") c.checkpoint_dir = v;
        else if (k == "log") c.log_path = v;
        else if (k == "augment.brightness") c.augment.brightness = parse_range(k, v);
        else if (k == "augment.contrast") c.augment.contrast = parse_range(k, v);
        else if (k == "augment.saturation") c.augment.saturation = parse_range(k, v);
        else if (k == "augment.blur_sigma") c.augment.blur_sigma = parse_range(k, v);
        else if (k == "augment.noise_sigma") c.augment.noise_sigma = parse_range(k, v);
        else if (k == "model.width") c.model.width = parse_uint(k, v);
        else if (k == "model.blocks") c.model.blocks = parse_uint(k, v);
        else if (k == "model.temporal_kernel") c.model.temporal_kernel = parse_uint(k, v);
        else if (k == "model.groups") c.model.groups = parse_uint(k, v);
        else if (k == "model.latent_channels") c.model.latent_channels = parse_uint(k, v);
        else if (k == "filter_seed") c.filter_seed = parse_uint(k, v);
        else throw InvalidArgument("unknown config key '" + k + "' on line " + std::to_string(lineno));
    }
    c.validate();
    return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) { return parse(to_string(read_file(path))); }

std::string TrainConfig::to_text() const {
    std::ostringstream os;
    os << "stage=" << stage << "\niterations=" << iterations << "\nlr=" << fmt(lr) << "\nlambda1=" << fmt(lambda1)
       << "\nlambda2=" << fmt(lambda2) << "\np_drop=" << fmt(p_drop) << "\nphi=" << fmt(phi) << "\nbatch=" << batch
       << "\nseed=" << seed << "\ncheckpoint_every=" << checkpoint_every;
    if (!checkpoint_dir.empty()) os << "\ncheckpoint_dir=" << checkpoint_dir.string();
    if (!log_path.empty()) os << "\nlog=" << log_path.string();
    os << "\naugment.brightness=" << fmt(augment.brightness) << "\naugment.contrast=" << fmt(augment.contrast)
       << "\naugment.saturation=" << fmt(augment.saturation) << "\naugment.blur_sigma=" << fmt(augment.blur_sigma)
       << "\naugment.noise_sigma=" << fmt(augment.noise_sigma) << "\nmodel.width=" << model.width
       << "\nmodel.blocks=" << model.blocks << "\nmodel.temporal_kernel=" << model.temporal_kernel
       << "\nmodel.groups=" << model.groups << "\nmodel.latent_channels=" << model.latent_channels
       << "\nfilter_seed=" << filter_seed << "\n";
    return os.str();
}

std::string TrainConfig::hash() const {
    TrainConfig c = *this;
    c.iterations = 0;
    c.checkpoint_every = 0;
    c.checkpoint_dir.clear();
    c.log_path.clear();
    return sha256_hex(to_bytes(c.to_text()));
}

std::vector<Example> prepare_examples(const std::vector<degrade::ClipPair>& pairs, const vae::Codec& codec) {
    std::vector<Example> out;
    tensor::NoGradScope<float> no_grad;
    for (const auto& p : pairs) {
        Example ex;
        ex.hr = p.hr;
        ex.lr_up = (p.lr.height == p.hr.height && p.lr.width == p.hr.width) ? p.lr
                                                                               : degrade::upsample_to(p.lr, p.hr.height, p.hr.width);
        ex.hr_pixels = vae::to_tensor(ex.hr);
        ex.z_hr = codec.encode(ex.hr_pixels);
        ex.z_lr = codec.encode(vae::to_tensor(ex.lr_up));
        out.push_back(std::move(ex));
    }
    return out;
}

Learner make_learner(const TrainConfig& cfg) {
    auto model = denoiser::Denoiser::create(cfg.model, cfg.seed);
    auto opt = tensor::make_adamw_state(model.params().tensors(), tensor::AdamWConfig{cfg.lr, 0.9, 0.95, 1e-8, 0.0});
    return Learner{std::move(model), std::move(opt)};
}

Tensor<float> sample_reference(const Example& ex, const vae::Codec& codec, const TrainConfig& cfg, std::mt19937_64& rng) {
    const auto keys = conditioning::select_random(ex.hr.frames, rng);
    conditioning::ReferenceBundle refs;
    for (auto t : keys.frames) refs.images[t] = conditioning::augment_reference(video::frame_of(ex.hr, t), cfg.augment, rng);
    const auto z_ref = conditioning::build_sparse_reference(refs, keys, ex.z_lr.shape(), codec);
    return conditioning::apply_reference_dropout(z_ref, cfg.p_drop, rng);
}

StepResult stage1_step(const std::vector<Example>& data, Learner& learner, const vae::Codec& codec, const TrainConfig& cfg,
                       std::mt19937_64& rng) {
    learner.model.params().zero_grad();
    tensor::Graph<float> graph;
    tensor::GraphScope<float> scope(graph);
    Tensor<float> total;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
        const auto& ex = pick(data, rng);
        const auto z_ref = sample_reference(ex, codec, cfg, rng);
        const auto pred = learner.model.predict(conditioning::assemble_condition(ex.z_lr, z_ref));
        const auto l = mse_loss(pred, ex.z_hr);
        total = total.defined() ? ops::add(total, l) : l;
    }
    if (cfg.batch > 1) total = ops::scale(total, 1.0f / static_cast<float>(cfg.batch));
    StepResult r;
    r.mse = total.item();
    return finish_step(learner, total, graph, r);
}

StepResult stage2_step(const std::vector<Example>& data, Learner& learner, const vae::Codec& codec, const TrainConfig& cfg,
                       const FilterBank& bank, std::mt19937_64& rng) {
    learner.model.params().zero_grad();
    StepResult r;
    r.video_step = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < cfg.phi;
    r.zero_reference = !r.video_step;
    tensor::Graph<float> graph;
    tensor::GraphScope<float> scope(graph);
    Tensor<float> total;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
        const auto& ex = pick(data, rng);
        LossParts parts;
        if (r.video_step) {
            const auto z_ref = sample_reference(ex, codec, cfg, rng);
            const auto pixels = codec.decode(learner.model.predict(conditioning::assemble_condition(ex.z_lr, z_ref)));
            parts = stage2_video_loss_parts(pixels, ex.hr_pixels, cfg.lambda1, cfg.lambda2, bank);
        } else {
            const std::size_t t = std::uniform_int_distribution<std::size_t>(0, ex.hr.frames - 1)(rng);
            Tensor<float> z;
            {
                tensor::NoGradScope<float> no_grad;
                z = codec.encode(vae::to_tensor(video::sub_clip(ex.lr_up, t, t + 1)));
            }
            const Tensor<float> zero_ref(z.shape());
            const auto joint = conditioning::assemble_condition(z, zero_ref);
            const auto ref_half = conditioning::split_condition(joint).second;
            for (float v : ref_half.data()) r.zero_reference = r.zero_reference && v == 0.0f;
            const auto pixels = codec.decode(learner.model.predict(joint));
            parts = image_loss_parts(pixels, ops::slice(ex.hr_pixels, 0, t, t + 1), cfg.lambda1, bank);
        }
        r.mse += parts.mse / static_cast<double>(cfg.batch);
        r.dists += parts.dists / static_cast<double>(cfg.batch);
        r.frame += parts.frame / static_cast<double>(cfg.batch);
        total = total.defined() ? ops::add(total, parts.total) : parts.total;
    }
    if (cfg.batch > 1) total = ops::scale(total, 1.0f / static_cast<float>(cfg.batch));
    return finish_step(learner, total, graph, r);
}

std::mt19937_64 iteration_rng(std::uint64_t seed, int stage, std::size_t it) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), static_cast<std::uint32_t>(stage),
                      static_cast<std::uint32_t>(it), static_cast<std::uint32_t>(static_cast<std::uint64_t>(it) >> 32)};
    return std::mt19937_64(seq);
}

tensor::Checkpoint make_checkpoint(const Learner& learner, const vae::Codec& codec, const TrainConfig& cfg, int stage,
                                   std::size_t iteration) {
    tensor::Checkpoint ckpt;
    codec.save(ckpt);
    learner.model.save(ckpt);
    const auto& params = learner.model.params();
    for (std::size_t i = 0; i < params.names().size(); ++i) {
        const auto shape = params.tensors()[i].shape();
        ckpt.put("optim.m." + params.names()[i], Tensor<float>(shape, learner.optimizer.first_moment[i]));
        ckpt.put("optim.v." + params.names()[i], Tensor<float>(shape, learner.optimizer.second_moment[i]));
    }
    auto& m = ckpt.metadata();
    m["train.stage"] = std::to_string(stage);
    m["train.iteration"] = std::to_string(iteration);
    m["train.seed"] = std::to_string(cfg.seed);
    m["train.config_hash"] = cfg.hash();
    m["train.config"] = cfg.to_text();
    m["optim.step"] = std::to_string(learner.optimizer.step);
    return ckpt;
}

Learner learner_from_checkpoint(const tensor::Checkpoint& ckpt, const TrainConfig& cfg) {
    auto model = denoiser::Denoiser::load(ckpt);
    auto opt = tensor::make_adamw_state(model.params().tensors(), tensor::AdamWConfig{cfg.lr, 0.9, 0.95, 1e-8, 0.0});
    const auto& names = model.params().names();
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (!ckpt.contains("optim.m." + names[i])) continue;
        opt.first_moment[i] = ckpt.get_f32("optim.m." + names[i]).to_vector();
        opt.second_moment[i] = ckpt.get_f32("optim.v." + names[i]).to_vector();
    }
    opt.step = std::stoull(ckpt.meta("optim.step").value_or("0"));
    return Learner{std::move(model), std::move(opt)};
}

tensor::Checkpoint train_run(const TrainConfig& cfg, const std::vector<Example>& data, const vae::Codec& codec,
                             const std::optional<tensor::Checkpoint>& resume, const RunHooks& hooks) {
    cfg.validate();
    codec.params().set_requires_grad(false);
    std::size_t start = 0;
    std::optional<Learner> learner;
    if (resume) {
        const int stage = std::stoi(resume->meta("train.stage").value_or("0"));
        if (stage != 1 && stage != 2) throw InvalidArgument("checkpoint carries no training stage");
        if (stage > cfg.stage) throw InvalidArgument("cannot run stage 1 from a stage-2 checkpoint");
        if (stage == cfg.stage) {
            if (resume->meta("train.config_hash") != cfg.hash()) {
                throw Conflict("checkpoint was written with a different training configuration");
            }
            start = std::stoull(resume->meta("train.iteration").value_or("0"));
        }
        learner.emplace(learner_from_checkpoint(*resume, cfg));
        if (cfg.iterations <= start) return *resume;
    } else {
        if (cfg.stage == 2) throw InvalidArgument("stage 2 needs a stage-1 checkpoint");
        learner.emplace(make_learner(cfg));
    }

    const FilterBank bank(cfg.filter_seed);
    std::ofstream log;
    if (!cfg.log_path.empty()) {
        const bool fresh = !std::filesystem::exists(cfg.log_path);
        log.open(cfg.log_path, std::ios::app);
        if (!log) throw Error("cannot open training log " + cfg.log_path.string());
        if (fresh) log << "iteration,stage,loss,mse,dists,frame,kind,skipped\n";
    }
    for (std::size_t it = start; it < cfg.iterations; ++it) {
        auto rng = iteration_rng(cfg.seed, cfg.stage, it);
        const StepResult r = cfg.stage == 1 ? stage1_step(data, *learner, codec, cfg, rng)
                                            : stage2_step(data, *learner, codec, cfg, bank, rng);
        if (log) {
            log << it << ',' << cfg.stage << ',' << fmt(r.loss) << ',' << fmt(r.mse) << ',' << fmt(r.dists) << ','
                << fmt(r.frame) << ',' << (r.video_step ? "video" : "image") << ',' << (r.skipped ? 1 : 0) << '\n';
        }
        if (hooks.on_step) hooks.on_step(it, r);
        if (cfg.checkpoint_every && !cfg.checkpoint_dir.empty() && (it + 1) % cfg.checkpoint_every == 0) {
            std::filesystem::create_directories(cfg.checkpoint_dir);
            make_checkpoint(*learner, codec, cfg, cfg.stage, it + 1)
                .save(cfg.checkpoint_dir / ("stage" + std::to_string(cfg.stage) + "-" + std::to_string(it + 1) + ".ckpt"));
        }
    }
    return make_checkpoint(*learner, codec, cfg, cfg.stage, std::max(start, cfg.iterations));
}

}  // namespace sparkprop::train
