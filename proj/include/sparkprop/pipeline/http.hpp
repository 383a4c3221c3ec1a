#pragma once

#include <string>

#include "sparkprop/pipeline/service.hpp"

namespace httplib {
class Server;
}

namespace sparkprop::pipeline {

/// Installs the /v1 routes. Errors come back as {"error": kind, "message": text}
/// with 400 for bad input, 404 for unknown ids, 409 for state conflicts.
void register_routes(httplib::Server& server, Service& service);

/// JSON form of a job snapshot, as returned by GET /v1/jobs/{id}.
std::string job_json(const JobSnapshot& snap);
/// Parses the POST /v1/jobs body.
JobSpec parse_job_spec(const std::string& body);

}  // namespace sparkprop::pipeline
