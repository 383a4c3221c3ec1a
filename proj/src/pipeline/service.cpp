#include "sparkprop/pipeline/service.hpp"

#include <random>

#include "json.hpp"

#include "sparkprop/eval/metrics.hpp"
#include "sparkprop/video/mp4.hpp"
#include "sparkprop/video/pnm.hpp"

namespace sparkprop::pipeline {

namespace {

std::string content_id(std::initializer_list<std::span<const std::uint8_t>> parts) {
    if (parts.size() == 1) return sha256_hex(*parts.begin());
    std::string joined;
    for (auto p : parts) joined += sha256_hex(p);
    return sha256_hex(to_bytes(joined));
}

std::string reference_meta(std::size_t frame_index, const conditioning::Prompt& prompt) {
    nlohmann::json j{{"frame_index", frame_index}, {"task_prompt", prompt.task}, {"content_prompt", prompt.content}};
    return j.dump();
}

}  // namespace

std::string_view source_name(ReferenceSource source) {
    switch (source) {
        case ReferenceSource::uploaded: return "uploaded";
        case ReferenceSource::oracle_augmented_gt: return "oracle_augmented_gt";
        case ReferenceSource::none: return "none";
    }
    return "none";
}

ReferenceSource parse_source(std::string_view name) {
    if (name == "uploaded") return ReferenceSource::uploaded;
    if (name == "oracle_augmented_gt" || name == "oracle") return ReferenceSource::oracle_augmented_gt;
    if (name == "none") return ReferenceSource::none;
    throw InvalidArgument("unknown reference source '" + std::string(name) + "'");
}

std::string_view state_name(JobState state) {
    switch (state) {
        case JobState::queued: return "queued";
        case JobState::running: return "running";
        case JobState::done: return "done";
        case JobState::failed: return "failed";
    }
    return "failed";
}

Service::Service(ServiceConfig config) : config_(std::move(config)) {
    if (config_.store_dir) reload();
    for (std::size_t i = 0; i < config_.workers; ++i) workers_.emplace_back([this] { worker_loop(); });
}

Service::~Service() {
    {
        std::lock_guard lock(mu_);
        stopping_ = true;
    }
    queue_ready_.notify_all();
    for (auto& w : workers_) w.join();
}

void Service::persist(const std::filesystem::path& rel, std::span<const std::uint8_t> bytes) const {
    if (!config_.store_dir) return;
    const auto path = *config_.store_dir / rel;
    if (std::filesystem::exists(path)) return;
    std::filesystem::create_directories(path.parent_path());
    write_file_atomic(path, bytes);
}

void Service::reload() {
    namespace fs = std::filesystem;
    const auto& root = *config_.store_dir;
    if (fs::is_directory(root / "videos")) {
        for (const auto& entry : fs::directory_iterator(root / "videos")) {
            if (entry.path().extension() != ".y4m") continue;
            const auto mp4 = fs::path(entry.path()).replace_extension(".mp4");
            const Bytes y4m = read_file(entry.path());
            const Bytes sidecar = fs::exists(mp4) ? read_file(mp4) : Bytes{};
            ingest_video(y4m, sidecar);
        }
    }
    if (fs::is_directory(root / "refs")) {
        for (const auto& entry : fs::directory_iterator(root / "refs")) {
            if (entry.path().extension() != ".ppm") continue;
            const auto meta_path = fs::path(entry.path()).replace_extension(".json");
            const auto meta = nlohmann::json::parse(to_string(read_file(meta_path)));
            add_reference(read_file(entry.path()), meta.at("frame_index").get<std::size_t>(),
                          {meta.value("task_prompt", ""), meta.value("content_prompt", "")});
        }
    }
}

std::shared_ptr<const VideoRecord> Service::ingest_video(std::span<const std::uint8_t> y4m,
                                                         std::span<const std::uint8_t> mp4) {
    const std::string id = mp4.empty() ? content_id({y4m}) : content_id({y4m, mp4});
    {
        std::lock_guard lock(mu_);
        if (auto it = videos_.find(id); it != videos_.end()) return it->second;
    }
    auto clip = video::read_y4m(y4m);
    auto rec = std::make_shared<VideoRecord>();
    rec->id = id;
    rec->fps = clip.fps;
    rec->video = std::move(clip.video);
    rec->y4m.assign(y4m.begin(), y4m.end());
    if (!mp4.empty()) {
        rec->sync = video::parse_mp4_sync_samples(mp4);
        rec->iframes = conditioning::select_iframes(rec->sync, rec->video.frames).frames;
    }
    persist(std::filesystem::path("videos") / (id + ".y4m"), y4m);
    if (!mp4.empty()) persist(std::filesystem::path("videos") / (id + ".mp4"), mp4);
    std::lock_guard lock(mu_);
    return videos_.emplace(id, std::move(rec)).first->second;
}

std::shared_ptr<const ReferenceRecord> Service::add_reference(std::span<const std::uint8_t> ppm, std::size_t frame_index,
                                                              conditioning::Prompt prompt) {
    const std::string meta = reference_meta(frame_index, prompt);
    const std::string id = content_id({ppm, to_bytes(meta)});
    {
        std::lock_guard lock(mu_);
        if (auto it = references_.find(id); it != references_.end()) return it->second;
    }
    auto rec = std::make_shared<ReferenceRecord>();
    rec->id = id;
    rec->image = video::read_ppm(ppm);
    rec->frame_index = frame_index;
    rec->prompt = std::move(prompt);
    persist(std::filesystem::path("refs") / (id + ".json"), to_bytes(meta));
    persist(std::filesystem::path("refs") / (id + ".ppm"), ppm);
    std::lock_guard lock(mu_);
    return references_.emplace(id, std::move(rec)).first->second;
}

std::shared_ptr<const VideoRecord> Service::video(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = videos_.find(id);
    if (it == videos_.end()) throw NotFound("unknown video '" + id + "'");
    return it->second;
}

std::shared_ptr<const ReferenceRecord> Service::reference(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = references_.find(id);
    if (it == references_.end()) throw NotFound("unknown reference '" + id + "'");
    return it->second;
}

std::string Service::submit(const JobSpec& spec) {
    if (!config_.model) throw Conflict("no checkpoint is loaded");
    if (spec.upscale == 0) throw InvalidArgument("upscale must be positive");
    if (spec.guidance_s < 0.0) throw InvalidArgument("guidance scale must be non-negative");
    const auto lr = video(spec.video_id);
    const std::size_t T = lr->video.frames, H = lr->video.height * spec.upscale, W = lr->video.width * spec.upscale;
    const std::size_t f = config_.model->codec.spatial_factor();
    if (H % f != 0 || W % f != 0) {
        throw InvalidArgument("output size " + std::to_string(H) + "x" + std::to_string(W) +
                              " is not divisible by the codec factor " + std::to_string(f));
    }

    Job job;
    job.snap.spec = spec;
    if (spec.ref_source != ReferenceSource::none) {
        std::mt19937_64 rng(spec.seed);
        conditioning::SelectionRequest sel;
        sel.strategy = spec.strategy;
        sel.manual = spec.keyframes;
        if (sel.strategy == conditioning::KeyframeOrigin::manual && sel.manual.empty()) {
            for (const auto& [t, _] : spec.refs) sel.manual.push_back(t);
        }
        sel.sync = &lr->sync;
        sel.count = spec.count;
        job.snap.keys = conditioning::select_keyframes(sel, T, rng);
    }

    if (spec.ref_source == ReferenceSource::uploaded) {
        for (const auto& [t, _] : spec.refs) {
            if (std::find(job.snap.keys.frames.begin(), job.snap.keys.frames.end(), t) == job.snap.keys.frames.end()) {
                throw InvalidArgument("reference given for frame " + std::to_string(t) + ", which is not a keyframe");
            }
        }
        for (auto t : job.snap.keys.frames) {
            auto it = spec.refs.find(t);
            if (it == spec.refs.end()) throw InvalidArgument("keyframe " + std::to_string(t) + " has no reference");
            const auto ref = reference(it->second);
            if (ref->image.height != H || ref->image.width != W) {
                throw InvalidArgument("reference " + ref->id + " is " + std::to_string(ref->image.height) + "x" +
                                      std::to_string(ref->image.width) + ", expected " + std::to_string(H) + "x" +
                                      std::to_string(W));
            }
            job.refs.images[t] = ref->image;
            job.snap.prompts[t] = ref->prompt;
        }
    } else if (spec.ref_source == ReferenceSource::oracle_augmented_gt) {
        if (spec.gt_video_id.empty()) throw InvalidArgument("oracle references need gt_video_id");
        const auto gt = video(spec.gt_video_id);
        if (gt->video.frames != T || gt->video.height != H || gt->video.width != W) {
            throw InvalidArgument("ground-truth clip does not match the output size");
        }
        job.refs = oracle_references(gt->video, job.snap.keys, conditioning::AugmentConfig{}, spec.seed);
    }

    std::lock_guard lock(mu_);
    const std::string id = "job-" + std::to_string(next_job_++);
    job.snap.id = id;
    jobs_.emplace(id, std::move(job));
    queue_.push_back(id);
    queue_ready_.notify_one();
    return id;
}

void Service::worker_loop() {
    while (true) {
        std::string id;
        {
            std::unique_lock lock(mu_);
            queue_ready_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
            if (stopping_) return;
            id = queue_.front();
            queue_.pop_front();
            jobs_.at(id).snap.state = JobState::running;
        }
        job_changed_.notify_all();
        run_job(id);
        job_changed_.notify_all();
    }
}

void Service::run_pending() {
    while (true) {
        std::string id;
        {
            std::lock_guard lock(mu_);
            if (queue_.empty()) return;
            id = queue_.front();
            queue_.pop_front();
            jobs_.at(id).snap.state = JobState::running;
        }
        job_changed_.notify_all();
        run_job(id);
        job_changed_.notify_all();
    }
}

void Service::run_job(const std::string& id) {
    JobSpec spec;
    conditioning::KeyframeSet keys;
    conditioning::ReferenceBundle refs;
    {
        std::lock_guard lock(mu_);
        auto& job = jobs_.at(id);
        spec = job.snap.spec;
        keys = job.snap.keys;
        refs = std::move(job.refs);
    }
    try {
        const auto lr = video(spec.video_id);
        RestoreRequest req;
        req.lr = &lr->video;
        req.keys = keys;
        req.refs = std::move(refs);
        req.guidance = spec.ref_source == ReferenceSource::none ? 0.0 : spec.guidance_s;
        req.upscale = spec.upscale;
        const auto out = restore_video(req, *config_.model, [&](double p) {
            std::lock_guard lock(mu_);
            auto& snap = jobs_.at(id).snap;
            snap.progress = std::max(snap.progress, p);
        });
        const Bytes bytes = video::write_y4m(out, lr->fps);
        const auto rec = ingest_video(bytes);
        std::lock_guard lock(mu_);
        auto& snap = jobs_.at(id).snap;
        snap.result = rec->id;
        snap.progress = 1.0;
        snap.state = JobState::done;
    } catch (const std::exception& e) {
        std::lock_guard lock(mu_);
        auto& snap = jobs_.at(id).snap;
        snap.reason = e.what();
        snap.state = JobState::failed;
    }
}

JobSnapshot Service::status(const std::string& job_id) const {
    std::lock_guard lock(mu_);
    auto it = jobs_.find(job_id);
    if (it == jobs_.end()) throw NotFound("unknown job '" + job_id + "'");
    return it->second.snap;
}

JobSnapshot Service::wait(const std::string& job_id) const {
    std::unique_lock lock(mu_);
    auto it = jobs_.find(job_id);
    if (it == jobs_.end()) throw NotFound("unknown job '" + job_id + "'");
    job_changed_.wait(lock, [&] {
        const auto s = it->second.snap.state;
        return s == JobState::done || s == JobState::failed;
    });
    return it->second.snap;
}

std::vector<JobSnapshot> Service::jobs() const {
    std::lock_guard lock(mu_);
    std::vector<JobSnapshot> out;
    for (const auto& [_, job] : jobs_) out.push_back(job.snap);
    return out;
}

std::shared_ptr<const VideoRecord> Service::finished_result(const std::string& job_id) const {
    const auto snap = status(job_id);
    if (snap.state != JobState::done) {
        throw Conflict("job " + job_id + " is " + std::string(state_name(snap.state)) + ", not done");
    }
    return video(*snap.result);
}

Bytes Service::result_y4m(const std::string& job_id) const {
    return finished_result(job_id)->y4m;
}

Bytes Service::result_xt(const std::string& job_id, std::size_t row) const {
    const auto rec = finished_result(job_id);
    if (row >= rec->video.height) {
        throw InvalidArgument("row " + std::to_string(row) + " is outside [0, " + std::to_string(rec->video.height) + ")");
    }
    return video::write_pgm(eval::xt_slice(rec->video, row));
}

Bytes Service::result_frame(const std::string& job_id, std::size_t t) const {
    const auto rec = finished_result(job_id);
    if (t >= rec->video.frames) {
        throw InvalidArgument("frame " + std::to_string(t) + " is outside [0, " + std::to_string(rec->video.frames) + ")");
    }
    return video::write_ppm(video::frame_of(rec->video, t));
}

}  // namespace sparkprop::pipeline
