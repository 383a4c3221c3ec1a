#pragma once

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "sparkprop/conditioning/keyframes.hpp"
#include "sparkprop/conditioning/reference.hpp"
#include "sparkprop/pipeline/restore.hpp"
#include "sparkprop/video/y4m.hpp"

namespace sparkprop::pipeline {

struct VideoRecord {
    std::string id;
    video::Video video;
    video::FrameRate fps;
    /// Sync samples from an MP4 sidecar; empty when none was given.
    video::SyncSampleTable sync;
    /// Keyframes the I-frame strategy picks from `sync`.
    std::vector<std::size_t> iframes;
    /// The uploaded (or produced) Y4M bytes, served back unchanged.
    Bytes y4m;
};

struct ReferenceRecord {
    std::string id;
    video::Image image;
    std::size_t frame_index = 0;
    conditioning::Prompt prompt;
};

enum class ReferenceSource { uploaded, oracle_augmented_gt, none };
std::string_view source_name(ReferenceSource source);
ReferenceSource parse_source(std::string_view name);

struct JobSpec {
    std::string video_id;
    conditioning::KeyframeOrigin strategy = conditioning::KeyframeOrigin::manual;
    std::vector<std::size_t> keyframes;
    /// Keyframe count for the uniform strategy.
    std::size_t count = 1;
    ReferenceSource ref_source = ReferenceSource::uploaded;
    /// Keyframe -> reference id, for uploaded references.
    std::map<std::size_t, std::string> refs;
    double guidance_s = 1.0;
    /// High-resolution clip the oracle references are drawn from.
    std::string gt_video_id;
    std::uint64_t seed = 0;
    std::size_t upscale = 4;
};

enum class JobState { queued, running, done, failed };
std::string_view state_name(JobState state);

struct JobSnapshot {
    std::string id;
    JobSpec spec;
    conditioning::KeyframeSet keys;
    std::map<std::size_t, conditioning::Prompt> prompts;
    JobState state = JobState::queued;
    double progress = 0.0;
    std::string reason;
    /// Content id of the result clip; set iff state == done.
    std::optional<std::string> result;
};

struct ServiceConfig {
    std::shared_ptr<const Model> model;
    /// With 0 workers, jobs only run through run_pending().
    std::size_t workers = 1;
    /// When set, inputs and results are also written here (atomically) and
    /// previously stored inputs are reloaded on start.
    std::optional<std::filesystem::path> store_dir;
};

/// Content-addressed store plus a job queue served by a fixed worker pool.
class Service {
public:
    explicit Service(ServiceConfig config);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Parses Y4M pixels and, optionally, the MP4 the frames were decoded from.
    std::shared_ptr<const VideoRecord> ingest_video(std::span<const std::uint8_t> y4m,
                                                    std::span<const std::uint8_t> mp4 = {});
    std::shared_ptr<const ReferenceRecord> add_reference(std::span<const std::uint8_t> ppm, std::size_t frame_index,
                                                         conditioning::Prompt prompt = {});
    std::shared_ptr<const VideoRecord> video(const std::string& id) const;
    std::shared_ptr<const ReferenceRecord> reference(const std::string& id) const;

    /// Validates synchronously; throws before anything is enqueued.
    std::string submit(const JobSpec& spec);
    JobSnapshot status(const std::string& job_id) const;
    /// Blocks until the job is done or failed.
    JobSnapshot wait(const std::string& job_id) const;
    Bytes result_y4m(const std::string& job_id) const;
    Bytes result_xt(const std::string& job_id, std::size_t row) const;
    Bytes result_frame(const std::string& job_id, std::size_t t) const;
    std::vector<JobSnapshot> jobs() const;
    /// Runs every queued job on the calling thread.
    void run_pending();

    bool has_model() const { return config_.model != nullptr; }

private:
    struct Job {
        JobSnapshot snap;
        conditioning::ReferenceBundle refs;
    };

    void worker_loop();
    void run_job(const std::string& id);
    std::shared_ptr<const VideoRecord> finished_result(const std::string& job_id) const;
    void persist(const std::filesystem::path& rel, std::span<const std::uint8_t> bytes) const;
    void reload();

    ServiceConfig config_;
    mutable std::mutex mu_;
    mutable std::condition_variable job_changed_;
    std::condition_variable queue_ready_;
    std::map<std::string, std::shared_ptr<const VideoRecord>> videos_;
    std::map<std::string, std::shared_ptr<const ReferenceRecord>> references_;
    std::map<std::string, Job> jobs_;
    std::deque<std::string> queue_;
    std::uint64_t next_job_ = 1;
    bool stopping_ = false;
    std::vector<std::thread> workers_;
};

}  // namespace sparkprop::pipeline
