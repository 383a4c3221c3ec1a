#include "sparkprop/pipeline/http.hpp"

#include <charconv>

#include "httplib.h"
#include "json.hpp"

#include "sparkprop/video/pnm.hpp"

namespace sparkprop::pipeline {

namespace {

using nlohmann::json;

void send_error(httplib::Response& res, int status, std::string_view kind, const std::string& message) {
    res.status = status;
    res.set_content(json{{"error", kind}, {"message", message}}.dump(), "application/json");
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
        try {
            fn(req, res);
        } catch (const NotFound& e) {
            send_error(res, 404, "not_found", e.what());
        } catch (const Conflict& e) {
            send_error(res, 409, "conflict", e.what());
        } catch (const ParseError& e) {
            send_error(res, 400, "parse_error", e.what());
        } catch (const json::exception& e) {
            send_error(res, 400, "bad_request", e.what());
        } catch (const Error& e) {
            send_error(res, 400, "invalid_argument", e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, "internal", e.what());
        }
    };
}

std::size_t parse_index(const std::string& text, const char* what) {
    std::size_t v = 0;
    const auto* end = text.data() + text.size();
    auto [p, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || p != end || text.empty()) {
        throw InvalidArgument(std::string(what) + " must be a non-negative integer, got '" + text + "'");
    }
    return v;
}

std::span<const std::uint8_t> as_span(const std::string& s) {
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

void send_bytes(httplib::Response& res, const Bytes& bytes, const char* type) {
    res.set_content(reinterpret_cast<const char*>(bytes.data()), bytes.size(), type);
}

json video_json(const VideoRecord& v) {
    return json{{"id", v.id},
                {"t", v.video.frames},
                {"h", v.video.height},
                {"w", v.video.width},
                {"fps", json::array({v.fps.num, v.fps.den})},
                {"sync_samples", v.sync},
                {"iframes", v.iframes}};
}

std::string form_text(const httplib::Request& req, const std::string& key) {
    if (req.has_file(key)) return req.get_file_value(key).content;
    if (req.has_param(key)) return req.get_param_value(key);
    return {};
}

}  // namespace

std::string job_json(const JobSnapshot& snap) {
    json prompts = json::object();
    for (const auto& [t, p] : snap.prompts) {
        prompts[std::to_string(t)] = {{"task_prompt", p.task}, {"content_prompt", p.content}};
    }
    json refs = json::object();
    for (const auto& [t, id] : snap.spec.refs) refs[std::to_string(t)] = id;
    const bool blind = snap.spec.ref_source == ReferenceSource::none || snap.spec.guidance_s == 0.0;
    json j{{"job_id", snap.id},
           {"video_id", snap.spec.video_id},
           {"status", state_name(snap.state)},
           {"progress", snap.progress},
           {"keyframes", snap.keys.frames},
           {"strategy", conditioning::origin_name(snap.keys.origin)},
           {"ref_source", source_name(snap.spec.ref_source)},
           {"refs", refs},
           {"prompts", prompts},
           {"guidance_s", snap.spec.guidance_s},
           {"label", blind ? "blind" : "guided"},
           {"upscale", snap.spec.upscale},
           {"seed", snap.spec.seed}};
    j["result"] = snap.result ? json(*snap.result) : json(nullptr);
    if (snap.state == JobState::failed) j["reason"] = snap.reason;
    return j.dump();
}

JobSpec parse_job_spec(const std::string& body) {
    const json j = json::parse(body);
    if (!j.is_object()) throw InvalidArgument("job spec must be a JSON object");
    JobSpec spec;
    spec.video_id = j.at("video_id").get<std::string>();
    spec.strategy = conditioning::parse_origin(j.value("strategy", std::string("manual")));
    spec.keyframes = j.value("keyframes", std::vector<std::size_t>{});
    spec.count = j.value("count", std::size_t{1});
    spec.ref_source = parse_source(j.value("ref_source", std::string("uploaded")));
    if (j.contains("refs")) {
        for (const auto& [key, id] : j.at("refs").items()) spec.refs[parse_index(key, "refs key")] = id.get<std::string>();
    }
    spec.guidance_s = j.value("guidance_s", 1.0);
    spec.gt_video_id = j.value("gt_video_id", std::string());
    spec.seed = j.value("seed", std::uint64_t{0});
    spec.upscale = j.value("upscale", std::size_t{4});
    return spec;
}

void register_routes(httplib::Server& server, Service& service) {
    server.Post("/v1/videos", guarded([&](const httplib::Request& req, httplib::Response& res) {
        std::shared_ptr<const VideoRecord> rec;
        if (req.is_multipart_form_data()) {
            if (!req.has_file("video")) throw InvalidArgument("multipart upload needs a 'video' part");
            const auto y4m = req.get_file_value("video").content;
            const auto mp4 = req.has_file("mp4") ? req.get_file_value("mp4").content : std::string();
            rec = service.ingest_video(as_span(y4m), as_span(mp4));
        } else {
            rec = service.ingest_video(as_span(req.body));
        }
        res.status = 201;
        res.set_content(video_json(*rec).dump(), "application/json");
    }));

    server.Get(R"(/v1/videos/([0-9a-f]+))", guarded([&](const httplib::Request& req, httplib::Response& res) {
        res.set_content(video_json(*service.video(req.matches[1])).dump(), "application/json");
    }));

    server.Get(R"(/v1/videos/([0-9a-f]+)/y4m)", guarded([&](const httplib::Request& req, httplib::Response& res) {
        send_bytes(res, service.video(req.matches[1])->y4m, "video/x-yuv4mpeg");
    }));

    server.Get(R"(/v1/videos/([0-9a-f]+)/frames/(\d+))", guarded([&](const httplib::Request& req, httplib::Response& res) {
        const auto rec = service.video(req.matches[1]);
        const auto t = parse_index(req.matches[2], "frame");
        if (t >= rec->video.frames) throw InvalidArgument("frame " + std::to_string(t) + " is out of range");
        send_bytes(res, video::write_ppm(video::frame_of(rec->video, t)), "image/x-portable-pixmap");
    }));

    server.Post("/v1/references", guarded([&](const httplib::Request& req, httplib::Response& res) {
        if (!req.is_multipart_form_data()) throw InvalidArgument("references are uploaded as multipart form data");
        if (!req.has_file("image")) throw InvalidArgument("multipart upload needs an 'image' part");
        const auto index = form_text(req, "frame_index");
        if (index.empty()) throw InvalidArgument("frame_index is required");
        const auto rec = service.add_reference(as_span(req.get_file_value("image").content),
                                               parse_index(index, "frame_index"),
                                               {form_text(req, "task_prompt"), form_text(req, "content_prompt")});
        res.status = 201;
        res.set_content(json{{"ref_id", rec->id},
                             {"frame_index", rec->frame_index},
                             {"h", rec->image.height},
                             {"w", rec->image.width}}
                            .dump(),
                        "application/json");
    }));

    server.Post("/v1/jobs", guarded([&](const httplib::Request& req, httplib::Response& res) {
        const auto id = service.submit(parse_job_spec(req.body));
        res.status = 202;
        res.set_content(json{{"job_id", id}}.dump(), "application/json");
    }));

    server.Get("/v1/jobs", guarded([&](const httplib::Request&, httplib::Response& res) {
        json list = json::array();
        for (const auto& snap : service.jobs()) list.push_back(json::parse(job_json(snap)));
        res.set_content(list.dump(), "application/json");
    }));

    server.Get(R"(/v1/jobs/([\w-]+))", guarded([&](const httplib::Request& req, httplib::Response& res) {
        res.set_content(job_json(service.status(req.matches[1])), "application/json");
    }));

    server.Get(R"(/v1/jobs/([\w-]+)/result)", guarded([&](const httplib::Request& req, httplib::Response& res) {
        send_bytes(res, service.result_y4m(req.matches[1]), "video/x-yuv4mpeg");
    }));

    server.Get(R"(/v1/jobs/([\w-]+)/xt)", guarded([&](const httplib::Request& req, httplib::Response& res) {
        if (!req.has_param("row")) throw InvalidArgument("query parameter 'row' is required");
        const auto row = parse_index(req.get_param_value("row"), "row");
        send_bytes(res, service.result_xt(req.matches[1], row), "image/x-portable-graymap");
    }));

    server.Get(R"(/v1/jobs/([\w-]+)/frames/(\d+))", guarded([&](const httplib::Request& req, httplib::Response& res) {
        send_bytes(res, service.result_frame(req.matches[1], parse_index(req.matches[2], "frame")),
                   "image/x-portable-pixmap");
    }));
}

}  // namespace sparkprop::pipeline
