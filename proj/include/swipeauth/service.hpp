#pragma once

// JSON enroll/verify/health endpoints over a fixed model snapshot.
// Handlers are plain functions of the request body so they can be tested
// without sockets; bind() mounts them on an httplib server.

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>

// Eigen must precede httplib: <resolv.h> defines a _res macro that breaks Eigen headers
#include "swipeauth/pipeline.hpp"

#include <httplib.h>
#include <json.hpp>

namespace swipeauth::service {

struct Response {
  int status = 200;
  nlohmann::json body;
};

inline Response error_response(int status, std::string_view reason, const std::string& detail) {
  return {status, {{"error", reason}, {"detail", detail}}};
}

struct SwipeRequest {
  std::string user_id;
  TouchSequence swipe;
  std::optional<double> threshold;
};

/// Body: {user_id, samples: [[x, y, p, t], ...], screen_width, screen_height,
/// optional device_id, pressure_available, threshold}.
inline SwipeRequest parse_swipe_request(const std::string& body) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Schema, std::string("body is not JSON: ") + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorKind::Schema, "body must be a JSON object");
  auto number = [&](const nlohmann::json& v, const char* what) {
    if (!v.is_number()) throw Error(ErrorKind::Schema, std::string(what) + " must be a number");
    return v.get<double>();
  };
  SwipeRequest req;
  if (!doc.contains("user_id") || !doc["user_id"].is_string()) throw Error(ErrorKind::Schema, "user_id must be a string");
  req.user_id = doc["user_id"].get<std::string>();
  if (!is_safe_id(req.user_id)) throw Error(ErrorKind::InvalidMetadata, "user_id has unsupported characters");
  if (!doc.contains("samples") || !doc["samples"].is_array()) throw Error(ErrorKind::Schema, "samples must be an array");
  if (!doc.contains("screen_width") || !doc.contains("screen_height")) {
    throw Error(ErrorKind::Schema, "screen_width and screen_height are required");
  }
  auto& s = req.swipe;
  s.user_id = req.user_id;
  s.session_id = "live";
  s.device_id = doc.value("device_id", std::string("browser"));
  s.screen_width = number(doc["screen_width"], "screen_width");
  s.screen_height = number(doc["screen_height"], "screen_height");
  if (doc.contains("pressure_available")) {
    if (!doc["pressure_available"].is_boolean()) throw Error(ErrorKind::Schema, "pressure_available must be boolean");
    s.pressure_available = doc["pressure_available"].get<bool>();
  }
  for (const auto& row : doc["samples"]) {
    if (!row.is_array() || row.size() != 4) throw Error(ErrorKind::Schema, "each sample must be [x, y, p, t]");
    s.samples.push_back({number(row[0], "x"), number(row[1], "y"), number(row[2], "p"), number(row[3], "t")});
  }
  if (doc.contains("threshold")) req.threshold = number(doc["threshold"], "threshold");
  return req;
}

/// Maps a library error onto an HTTP status and a machine-readable reason.
inline Response map_error(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::Schema:
    case ErrorKind::InvalidMetadata:
    case ErrorKind::MalformedSequence:
    case ErrorKind::SequenceTooShort:
    case ErrorKind::Configuration:
      return error_response(400, to_string(e.kind()), e.what());
    case ErrorKind::Enrollment:
      return error_response(404, "unknown-user", e.what());
    default:
      return error_response(500, to_string(e.kind()), e.what());
  }
}

class AuthService {
 public:
  AuthService(seqnet::Checkpoint checkpoint, std::string gallery_dir, std::optional<pipeline::Sidecar> sidecar)
      : checkpoint_(std::move(checkpoint)), gallery_dir_(std::move(gallery_dir)), sidecar_(std::move(sidecar)) {}

  static AuthService from_files(const std::string& checkpoint_path, const std::string& gallery_dir) {
    return AuthService(seqnet::load_checkpoint_file(checkpoint_path), gallery_dir, pipeline::load_sidecar(checkpoint_path));
  }

  const seqnet::Checkpoint& checkpoint() const { return checkpoint_; }

  Response health() const { return {200, {{"status", "ok"}, {"model_version", checkpoint_.model.version}}}; }

  Response enroll(const std::string& body) {
    try {
      const auto req = parse_swipe_request(body);
      std::lock_guard lock(user_mutex(req.user_id));
      const auto g = pipeline::append_to_gallery(gallery_dir_, req.user_id, std::span(&req.swipe, 1), checkpoint_.model);
      return {200, {{"user_id", req.user_id}, {"gallery_size", g.size()}}};
    } catch (const Error& e) {
      return map_error(e);
    } catch (const std::exception& e) {
      return error_response(500, "internal", e.what());
    }
  }

  Response verify(const std::string& body) {
    try {
      const auto req = parse_swipe_request(body);
      std::optional<Gallery> gallery;
      {
        std::lock_guard lock(user_mutex(req.user_id));
        gallery = pipeline::load_gallery(gallery_dir_, req.user_id);
      }
      if (!gallery) return error_response(404, "unknown-user", "user " + req.user_id + " is not enrolled");
      if (req.threshold && *req.threshold < 0.0) {
        return error_response(400, "configuration", "threshold must be non-negative");
      }
      const double threshold = req.threshold.value_or(threshold_for(gallery->size()));
      const auto d = swipeauth::verify(*gallery, seqnet::embed(checkpoint_.model, featurize(req.swipe)), threshold);
      return {200, {{"user_id", req.user_id}, {"score", d.score}, {"accept", d.accept}, {"threshold", threshold},
                    {"gallery_size", gallery->size()}}};
    } catch (const Error& e) {
      return map_error(e);
    } catch (const std::exception& e) {
      return error_response(500, "internal", e.what());
    }
  }

  double threshold_for(std::size_t gallery_size) const {
    return pipeline::default_threshold(sidecar_, gallery_size, checkpoint_.config.margin);
  }

  void bind(httplib::Server& server) {
    auto reply = [](httplib::Response& res, const Response& r) {
      res.status = r.status;
      res.set_content(r.body.dump(), "application/json");
      res.set_header("Access-Control-Allow-Origin", "*");
    };
    server.Get("/health", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, health()); });
    server.Post("/enroll",
                [this, reply](const httplib::Request& req, httplib::Response& res) { reply(res, enroll(req.body)); });
    server.Post("/verify",
                [this, reply](const httplib::Request& req, httplib::Response& res) { reply(res, verify(req.body)); });
    server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", "*");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.status = 204;
    });
  }

 private:
  std::mutex& user_mutex(const std::string& user) {
    std::lock_guard lock(map_mutex_);
    auto& slot = user_mutexes_[user];
    if (!slot) slot = std::make_unique<std::mutex>();
    return *slot;
  }

  const seqnet::Checkpoint checkpoint_;
  const std::string gallery_dir_;
  const std::optional<pipeline::Sidecar> sidecar_;
  std::mutex map_mutex_;
  std::map<std::string, std::unique_ptr<std::mutex>> user_mutexes_;
};

}  // namespace swipeauth::service
