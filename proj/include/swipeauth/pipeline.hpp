#pragma once

// Command implementations shared by the CLI, the service and the acceptance
// runner. Every command writes its outputs deterministically from config.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "swipeauth/baseline.hpp"
#include "swipeauth/dataio.hpp"
#include "swipeauth/error.hpp"
#include "swipeauth/seqnet/checkpoint.hpp"
#include "swipeauth/seqnet/train.hpp"
#include "swipeauth/textio.hpp"
#include "swipeauth/verify.hpp"

namespace swipeauth::pipeline {

namespace fs = std::filesystem;

struct RunConfig {
  std::string command;
  std::string manifest;
  std::string checkpoint;
  std::string scores;  // score dump; defaults to <out_dir>/scores.csv
  std::string report;  // defaults to <out_dir>/report.csv
  std::string out_dir = ".";
  std::string gallery_dir;
  std::string user_id;
  std::vector<std::string> swipes;  // swipe files for enroll / verify

  seqnet::TrainConfig train;
  int hidden = 64;
  double train_fraction = 0.7;
  std::vector<int> gallery_sizes{1, 2, 3, 4, 5, 6, 7};
  bool all_users = false;  // evaluate every user, which trips the open-set guard on overlap

  std::size_t users = 60;
  std::size_t swipes_per_user = 10;

  double svm_c = 10.0;
  double svm_gamma = 1.0 / static_cast<double>(baseline::kGlobalFeatureCount);
  bool svm_grid = false;

  std::optional<double> threshold;
  std::string host = "127.0.0.1";
  int port = 8080;
  bool deterministic = true;
  std::uint64_t seed = 1;

  void validate() const {
    auto need = [&](const std::string& value, const char* flag) {
      if (value.empty()) throw Error(ErrorKind::Configuration, command + " requires --" + flag);
    };
    for (int g : gallery_sizes)
      if (g < 1) throw Error(ErrorKind::Configuration, "gallery sizes must be >= 1");
    if (command == "synth") {
      if (users < 2 || swipes_per_user < 2) throw Error(ErrorKind::Configuration, "synth needs >= 2 users and swipes");
    } else if (command == "extract") {
      need(manifest, "manifest");
    } else if (command == "train") {
      need(manifest, "manifest");
      need(checkpoint, "checkpoint");
      train.validate();
    } else if (command == "eval") {
      need(manifest, "manifest");
      need(checkpoint, "checkpoint");
      if (gallery_sizes.empty()) throw Error(ErrorKind::Configuration, "eval needs at least one gallery size");
    } else if (command == "baseline") {
      need(manifest, "manifest");
      if (gallery_sizes.empty()) throw Error(ErrorKind::Configuration, "baseline needs at least one gallery size");
      if (!(svm_c > 0.0) || !(svm_gamma > 0.0)) throw Error(ErrorKind::Configuration, "C and gamma must be positive");
    } else if (command == "enroll" || command == "verify") {
      need(checkpoint, "checkpoint");
      need(gallery_dir, "gallery_dir");
      need(user_id, "user_id");
      if (swipes.empty()) throw Error(ErrorKind::Configuration, command + " requires at least one --swipe file");
      if (command == "verify" && swipes.size() != 1) throw Error(ErrorKind::Configuration, "verify takes one swipe");
      if (threshold && *threshold < 0.0) throw Error(ErrorKind::Configuration, "threshold must be non-negative");
    } else if (command == "serve") {
      need(checkpoint, "checkpoint");
      need(gallery_dir, "gallery_dir");
      if (port < 0 || port > 65535) throw Error(ErrorKind::Configuration, "port out of range");
    } else {
      throw Error(ErrorKind::Configuration, "unknown command " + command);
    }
  }

  std::string report_path(const char* fallback = "report.csv") const {
    return report.empty() ? (fs::path(out_dir) / fallback).string() : report;
  }
  std::string scores_path(const char* fallback = "scores.csv") const {
    return scores.empty() ? (fs::path(out_dir) / fallback).string() : scores;
  }
};

inline void ensure_parent(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

inline void write_output(const std::string& path, const std::string& content) {
  ensure_parent(path);
  textio::write_file(path, content);
}

/// Feature matrices per user in chronological order, users sorted by id.
inline seqnet::UserSwipes featurize_users(const Dataset& ds) {
  seqnet::UserSwipes users;
  for (const auto& uid : ds.user_ids()) {
    std::vector<Eigen::MatrixXd> swipes;
    for (const auto& e : chronological_swipes(ds, uid)) swipes.push_back(featurize(*e.sequence).values);
    users.push_back(std::move(swipes));
  }
  return users;
}

inline Dataset load_manifest(const std::string& path, std::ostream& log) {
  auto loaded = load_dataset(path);
  log << "loaded " << loaded.report.kept << "/" << loaded.report.declared << " swipes from " << path;
  for (const auto& [reason, n] : loaded.report.dropped_by_reason) log << " [dropped " << n << " " << reason << "]";
  log << '\n';
  return std::move(loaded.dataset);
}

// ---------------------------------------------------------------------------
// sidecar thresholds

inline std::string sidecar_path(const std::string& checkpoint) { return checkpoint + ".sidecar.json"; }

struct Sidecar {
  std::string model_version;
  std::map<int, EerResult> by_gallery_size;
};

inline std::string format_sidecar(const Sidecar& s) {
  nlohmann::ordered_json doc;
  doc["model_version"] = s.model_version;
  doc["operating_points"] = nlohmann::ordered_json::array();
  for (const auto& [g, r] : s.by_gallery_size) {
    doc["operating_points"].push_back({{"G", g}, {"threshold", r.threshold}, {"eer", r.eer}});
  }
  return doc.dump(2) + "\n";
}

inline std::optional<Sidecar> load_sidecar(const std::string& checkpoint) {
  const auto path = sidecar_path(checkpoint);
  if (!fs::exists(path)) return std::nullopt;
  try {
    const auto doc = nlohmann::json::parse(textio::read_file(path));
    Sidecar s;
    s.model_version = doc.at("model_version").get<std::string>();
    for (const auto& p : doc.at("operating_points")) {
      EerResult r;
      r.threshold = p.at("threshold").get<double>();
      r.eer = p.at("eer").get<double>();
      s.by_gallery_size[p.at("G").get<int>()] = r;
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Schema, "sidecar " + path + ": " + e.what());
  }
}

/// EER threshold for the largest evaluated G not above the gallery size
/// (the smallest evaluated G when the gallery is smaller still). Without a
/// sidecar, half the training margin.
inline double default_threshold(const std::optional<Sidecar>& sidecar, std::size_t gallery_size, double margin) {
  if (!sidecar || sidecar->by_gallery_size.empty()) return margin / 2.0;
  const auto& m = sidecar->by_gallery_size;
  auto it = m.upper_bound(static_cast<int>(gallery_size));
  if (it == m.begin()) return it->second.threshold;
  return std::prev(it)->second.threshold;
}

// ---------------------------------------------------------------------------
// commands

inline std::string run_synth(const RunConfig& cfg, std::ostream& log) {
  const auto ds = synth_generate(cfg.users, cfg.swipes_per_user, cfg.seed);
  const auto manifest = export_dataset(ds, cfg.out_dir);
  log << "wrote " << ds.sequence_count() << " swipes for " << ds.user_count() << " users to " << manifest << '\n';
  return manifest;
}

/// One row per swipe: probe id, valid length, then the 11x100 matrix row-major.
inline std::string run_extract(const RunConfig& cfg, std::ostream& log) {
  const auto ds = load_manifest(cfg.manifest, log);
  std::ostringstream out;
  out << "probe_id,valid_length";
  for (int c = 0; c < kFeatureChannels; ++c)
    for (int t = 0; t < kFeatureSteps; ++t) out << ",c" << c << "_t" << t;
  out << '\n';
  std::size_t rows = 0;
  for (const auto& uid : ds.user_ids()) {
    for (const auto& e : chronological_swipes(ds, uid)) {
      const auto fm = featurize(*e.sequence);
      out << e.probe_id << ',' << fm.valid_length;
      for (int c = 0; c < kFeatureChannels; ++c)
        for (int t = 0; t < kFeatureSteps; ++t) out << ',' << textio::format_double(fm.values(c, t));
      out << '\n';
      ++rows;
    }
  }
  const auto path = (fs::path(cfg.out_dir) / "features.csv").string();
  write_output(path, out.str());
  log << "wrote " << rows << " feature rows to " << path << '\n';
  return path;
}

inline seqnet::Checkpoint run_train(const RunConfig& cfg, std::ostream& log) {
  const auto ds = load_manifest(cfg.manifest, log);
  const auto split = split_users(ds, cfg.train_fraction, cfg.seed);
  const auto users = featurize_users(split.train);
  seqnet::TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  log << "training on " << split.train.user_count() << " users (" << split.train.sequence_count() << " swipes), "
      << tc.epochs << "x" << tc.batches_per_epoch << " batches of " << tc.batch_size << " pairs\n";
  const auto result = seqnet::train(users, tc, cfg.hidden, [&](int epoch, int batch, double loss) {
    if (batch + 1 == tc.batches_per_epoch) log << "epoch " << epoch + 1 << " last batch loss " << loss << '\n';
  });
  seqnet::Checkpoint ck{result.params, tc, split.train.user_ids(), cfg.seed, cfg.train_fraction};
  ensure_parent(cfg.checkpoint);
  seqnet::save_checkpoint_file(cfg.checkpoint, ck);

  std::ostringstream losses;
  losses << "step,loss\n";
  for (std::size_t i = 0; i < result.batch_losses.size(); ++i) {
    losses << i << ',' << textio::format_double(result.batch_losses[i]) << '\n';
  }
  textio::write_file(cfg.checkpoint + ".losses.csv", losses.str());
  log << "wrote " << cfg.checkpoint << '\n';
  return ck;
}

inline constexpr const char* kReportHeader = "G,eer,threshold,genuine_count,impostor_count";

inline std::string format_report(const ProtocolResult& r) {
  std::ostringstream out;
  out << kReportHeader << '\n';
  for (const auto& [g, e] : r.eer) {
    const auto& s = r.scores.at(g);
    out << g << ',' << textio::format_double(e.eer) << ',' << textio::format_double(e.threshold) << ','
        << s.genuine.size() << ',' << s.impostor.size() << '\n';
  }
  return out.str();
}

struct ReportRow {
  int gallery_size = 0;
  double eer = 0.0;
  double threshold = 0.0;
  std::size_t genuine = 0;
  std::size_t impostor = 0;
};

inline std::vector<ReportRow> parse_report(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || textio::trim(line) != kReportHeader) throw Error(ErrorKind::Schema, "report: bad header");
  std::vector<ReportRow> rows;
  while (std::getline(in, line)) {
    if (textio::trim(line).empty()) continue;
    const auto f = textio::split(textio::trim(line), ',');
    if (f.size() != 5) throw Error(ErrorKind::Schema, "report: expected 5 fields");
    rows.push_back({textio::parse_int<int>(f[0]), textio::parse_double(f[1]), textio::parse_double(f[2]),
                    textio::parse_int<std::size_t>(f[3]), textio::parse_int<std::size_t>(f[4])});
  }
  return rows;
}

/// The evaluation users: the checkpoint's held-out split, or every user
/// when `all_users` is set. Either way the open-set guard runs.
inline Dataset evaluation_users(const Dataset& ds, const seqnet::Checkpoint& ck, bool all_users) {
  Dataset test = all_users ? ds : split_users(ds, ck.train_fraction, ck.split_seed).test;
  ensure_open_set(ck.train_users, test);
  return test;
}

inline ProtocolResult run_eval(const RunConfig& cfg, std::ostream& log) {
  const auto ck = seqnet::load_checkpoint_file(cfg.checkpoint);
  const auto ds = load_manifest(cfg.manifest, log);
  const auto test = evaluation_users(ds, ck, cfg.all_users);
  EmbeddingScorer scorer{ck.model};
  auto result = evaluate_protocol(test, cfg.gallery_sizes, scorer);
  for (const auto& msg : result.skipped) log << "skipped " << msg << '\n';

  write_output(cfg.report_path(), format_report(result));
  write_output(cfg.scores_path(), format_score_dump(result.rows));
  Sidecar sidecar{ck.model.version, result.eer};
  textio::write_file(sidecar_path(cfg.checkpoint), format_sidecar(sidecar));
  for (const auto& [g, e] : result.eer) log << "G=" << g << " EER=" << e.eer << " threshold=" << e.threshold << '\n';
  return result;
}

struct BaselineOutcome {
  ProtocolResult result;
  baseline::SvmParams params;
};

/// Picks C and gamma on the training users alone: half of them supply the
/// impostor pool, the other half are scored with the protocol.
inline baseline::SvmParams select_svm_params(const Dataset& train, std::span<const int> gallery_sizes,
                                             std::uint64_t seed, std::ostream& log) {
  const auto inner = split_users(train, 0.5, seed);
  const auto pool = baseline::feature_pool(inner.train);
  const double g0 = 1.0 / static_cast<double>(baseline::kGlobalFeatureCount);
  baseline::SvmParams best;
  double best_eer = 2.0;
  for (double C : {1.0, 10.0, 100.0}) {
    for (double gamma : {0.25 * g0, g0, 4.0 * g0}) {
      baseline::SvmScorer scorer{pool, {C, gamma, {}}};
      const auto r = evaluate_protocol(inner.test, gallery_sizes, scorer);
      double mean = 0.0;
      for (const auto& [g, e] : r.eer) mean += e.eer / static_cast<double>(r.eer.size());
      log << "grid C=" << C << " gamma=" << gamma << " mean EER=" << mean << '\n';
      if (mean < best_eer) {
        best_eer = mean;
        best = {C, gamma, {}};
      }
    }
  }
  return best;
}

inline BaselineOutcome run_baseline(const RunConfig& cfg, std::ostream& log) {
  const auto ds = load_manifest(cfg.manifest, log);
  std::uint64_t split_seed = cfg.seed;
  double fraction = cfg.train_fraction;
  if (!cfg.checkpoint.empty() && fs::exists(cfg.checkpoint)) {
    const auto ck = seqnet::load_checkpoint_file(cfg.checkpoint);
    split_seed = ck.split_seed;
    fraction = ck.train_fraction;
  }
  const auto split = split_users(ds, fraction, split_seed);
  baseline::SvmParams params{cfg.svm_c, cfg.svm_gamma, {}};
  if (cfg.svm_grid) params = select_svm_params(split.train, cfg.gallery_sizes, split_seed, log);
  baseline::SvmScorer scorer{baseline::feature_pool(split.train), params};
  auto result = evaluate_protocol(split.test, cfg.gallery_sizes, scorer);
  write_output(cfg.report_path("baseline_report.csv"), format_report(result));
  write_output(cfg.scores_path("baseline_scores.csv"), format_score_dump(result.rows));
  for (const auto& [g, e] : result.eer) log << "svm G=" << g << " EER=" << e.eer << '\n';
  return {std::move(result), params};
}

// ---------------------------------------------------------------------------
// galleries on disk

inline std::string gallery_path(const std::string& dir, const std::string& user) {
  if (!is_safe_id(user)) throw Error(ErrorKind::InvalidMetadata, "user id not usable as a file name: " + user);
  return (fs::path(dir) / (user + ".gallery")).string();
}

inline std::optional<Gallery> load_gallery(const std::string& dir, const std::string& user) {
  const auto path = gallery_path(dir, user);
  if (!fs::exists(path)) return std::nullopt;
  auto g = parse_gallery(textio::read_file(path));
  if (g.user_id != user) throw Error(ErrorKind::Schema, "gallery file " + path + " belongs to " + g.user_id);
  return g;
}

inline void save_gallery(const std::string& dir, const Gallery& g) {
  fs::create_directories(dir);
  const auto path = gallery_path(dir, g.user_id);
  // write-then-rename so readers never see a half-written gallery
  const auto tmp = path + ".tmp";
  textio::write_file(tmp, format_gallery(g));
  fs::rename(tmp, path);
}

/// Appends the swipes' embeddings to the user's stored gallery.
inline Gallery append_to_gallery(const std::string& dir, const std::string& user,
                                 std::span<const TouchSequence> swipes, const seqnet::ModelParams& model) {
  std::vector<FeatureMatrix> features;
  for (const auto& s : swipes) features.push_back(featurize(s));
  const auto fresh = enroll(user, features, model);
  Gallery g = load_gallery(dir, user).value_or(Gallery{user, {}});
  for (const auto& e : g.embeddings) {
    if (e.size() != model.embedding_size()) throw Error(ErrorKind::Schema, "stored gallery has a different dimension");
  }
  g.embeddings.insert(g.embeddings.end(), fresh.embeddings.begin(), fresh.embeddings.end());
  save_gallery(dir, g);
  return g;
}

inline Gallery run_enroll(const RunConfig& cfg, std::ostream& log) {
  const auto ck = seqnet::load_checkpoint_file(cfg.checkpoint);
  std::vector<TouchSequence> swipes;
  for (const auto& f : cfg.swipes) swipes.push_back(parse_swipe_file(textio::read_file(f)));
  auto g = append_to_gallery(cfg.gallery_dir, cfg.user_id, swipes, ck.model);
  log << "gallery_size " << g.size() << '\n';
  return g;
}

struct VerifyOutcome {
  Decision decision;
  double threshold = 0.0;
};

inline VerifyOutcome run_verify(const RunConfig& cfg, std::ostream& log) {
  const auto ck = seqnet::load_checkpoint_file(cfg.checkpoint);
  const auto gallery = load_gallery(cfg.gallery_dir, cfg.user_id);
  if (!gallery) throw Error(ErrorKind::Enrollment, "user " + cfg.user_id + " is not enrolled");
  const auto probe = parse_swipe_file(textio::read_file(cfg.swipes.front()));
  const double threshold =
      cfg.threshold.value_or(default_threshold(load_sidecar(cfg.checkpoint), gallery->size(), ck.config.margin));
  const auto d = verify(*gallery, seqnet::embed(ck.model, featurize(probe)), threshold);
  log << "score " << textio::format_double(d.score) << " threshold " << textio::format_double(threshold) << ' '
      << (d.accept ? "accept" : "reject") << '\n';
  return {d, threshold};
}

}  // namespace swipeauth::pipeline
