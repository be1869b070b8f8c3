#pragma once

// Dataset schema, manifest import/export, seeded synthetic swipes and
// user-disjoint splits.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "swipeauth/error.hpp"
#include "swipeauth/textio.hpp"
#include "swipeauth/touch.hpp"

namespace swipeauth {

inline constexpr const char* kRightSwipeTask = "drag_drop_right";
inline constexpr const char* kManifestFormat = "swipeauth-manifest";
inline constexpr const char* kSwipeFileMagic = "# swipeauth-swipe 1";

using SessionMap = std::map<std::string, std::vector<TouchSequence>>;

struct Dataset {
  std::map<std::string, SessionMap> users;
  std::string source = "synthetic";  // "synthetic" or "imported"
  std::optional<std::uint64_t> seed;

  std::size_t user_count() const { return users.size(); }

  std::size_t sequence_count() const {
    std::size_t n = 0;
    for (const auto& [u, sessions] : users)
      for (const auto& [s, swipes] : sessions) n += swipes.size();
    return n;
  }

  std::vector<std::string> user_ids() const {
    std::vector<std::string> ids;
    for (const auto& [u, _] : users) ids.push_back(u);
    return ids;
  }

  bool operator==(const Dataset&) const = default;
};

/// Throws unless every sequence sits under its own user/session and no user is empty.
inline void validate_dataset(const Dataset& ds) {
  for (const auto& [u, sessions] : ds.users) {
    std::size_t count = 0;
    for (const auto& [s, swipes] : sessions) {
      for (const auto& seq : swipes) {
        if (seq.user_id != u || seq.session_id != s) {
          throw Error(ErrorKind::Schema, "sequence filed under " + u + "/" + s + " claims " + seq.user_id + "/" +
                                             seq.session_id);
        }
        ++count;
      }
    }
    if (count == 0) throw Error(ErrorKind::Schema, "user " + u + " has no swipes");
  }
}

struct SwipeEntry {
  std::string probe_id;  // user/session/index
  const TouchSequence* sequence = nullptr;
};

/// A user's swipes in capture order: by first timestamp, ties by session then index.
inline std::vector<SwipeEntry> chronological_swipes(const Dataset& ds, const std::string& user) {
  std::vector<SwipeEntry> out;
  const auto it = ds.users.find(user);
  if (it == ds.users.end()) return out;
  for (const auto& [session, swipes] : it->second) {
    for (std::size_t i = 0; i < swipes.size(); ++i) {
      out.push_back({user + "/" + session + "/" + std::to_string(i), &swipes[i]});
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const SwipeEntry& a, const SwipeEntry& b) {
    return a.sequence->samples.front().t < b.sequence->samples.front().t;
  });
  return out;
}

// ---------------------------------------------------------------------------
// synthetic generation

/// Per-user behaviour for the generator. Coordinates are normalized units.
struct SynthUserStyle {
  double start_x = 0.2, start_y = 0.7, start_spread = 0.02;
  double end_x = 0.8, end_y = 0.7, end_spread = 0.02;
  double curvature = 0.0;  // peak lateral offset as a fraction of the swipe length
  double duration_mean_ms = 400.0;
  double duration_jitter_ms = 40.0;
  double sample_rate_hz = 60.0;
  double pressure_mean = 0.5;
  double pressure_jitter = 0.03;
  bool has_pressure = true;
  double noise_px = 1.0;
  double screen_width = 1080.0;
  double screen_height = 1920.0;
  std::string device_id = "device";

  void validate() const {
    auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in_unit(start_x) || !in_unit(start_y) || !in_unit(end_x) || !in_unit(end_y)) {
      throw Error(ErrorKind::Generation, "style regions must lie in [0,1]^2");
    }
    if (!(duration_mean_ms > 0.0) || !(sample_rate_hz > 0.0) || duration_jitter_ms < 0.0 || start_spread < 0.0 ||
        end_spread < 0.0 || noise_px < 0.0 || !(screen_width > 0.0) || !(screen_height > 0.0) ||
        !in_unit(pressure_mean) || pressure_jitter < 0.0) {
      throw Error(ErrorKind::Generation, "degenerate style parameters");
    }
  }
};

inline SynthUserStyle draw_style(std::mt19937_64& rng, std::size_t index) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto between = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  static constexpr std::pair<double, double> kScreens[] = {{720, 1280}, {1080, 1920}, {1080, 2340}, {1440, 2960}};
  SynthUserStyle s;
  s.start_x = between(0.08, 0.35);
  s.start_y = between(0.45, 0.9);
  s.start_spread = between(0.01, 0.03);
  s.end_x = between(0.6, 0.95);
  s.end_y = std::clamp(s.start_y + between(-0.12, 0.12), 0.05, 0.95);
  s.end_spread = between(0.01, 0.03);
  s.curvature = between(-0.2, 0.2);
  s.duration_mean_ms = between(300.0, 1100.0);
  s.duration_jitter_ms = s.duration_mean_ms * between(0.05, 0.15);
  s.sample_rate_hz = between(60.0, 240.0);
  s.pressure_mean = between(0.25, 0.75);
  s.pressure_jitter = between(0.01, 0.05);
  s.has_pressure = u(rng) >= 0.15;
  s.noise_px = between(0.5, 3.0);
  const auto& screen = kScreens[static_cast<std::size_t>(u(rng) * 4.0) % 4];
  s.screen_width = screen.first;
  s.screen_height = screen.second;
  s.device_id = "device-" + std::to_string(index);
  return s;
}

/// One swipe: minimum-jerk progress between sampled endpoints with a lateral
/// bow, sampled at the style's rate with jittered intervals, plus pixel noise.
inline TouchSequence synth_swipe(const SynthUserStyle& style, double start_time_ms, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double sx = std::clamp(style.start_x + style.start_spread * gauss(rng), 0.0, 1.0);
  const double sy = std::clamp(style.start_y + style.start_spread * gauss(rng), 0.0, 1.0);
  const double ex = std::clamp(style.end_x + style.end_spread * gauss(rng), 0.0, 1.0);
  const double ey = std::clamp(style.end_y + style.end_spread * gauss(rng), 0.0, 1.0);
  const double duration = std::max(40.0, style.duration_mean_ms + style.duration_jitter_ms * gauss(rng));
  const double dt = 1000.0 / style.sample_rate_hz;
  const auto n = std::max<std::size_t>(kMinSequenceLength + 1, static_cast<std::size_t>(std::lround(duration / dt)) + 1);

  std::vector<double> times(n);
  times[0] = start_time_ms;
  for (std::size_t k = 1; k < n; ++k) times[k] = times[k - 1] + dt * (0.85 + 0.3 * u(rng));
  const double span = times.back() - times.front();

  const double dx = ex - sx;
  const double dy = ey - sy;
  const double len = std::hypot(dx, dy);
  const double px = len > 0.0 ? -dy / len : 0.0;
  const double py = len > 0.0 ? dx / len : 0.0;
  const double bow = style.curvature * len;

  TouchSequence seq;
  seq.device_id = style.device_id;
  seq.screen_width = style.screen_width;
  seq.screen_height = style.screen_height;
  seq.pressure_available = style.has_pressure;
  seq.task = kRightSwipeTask;
  seq.samples.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double tau = (times[k] - times.front()) / span;
    const double prog = tau * tau * tau * (10.0 - 15.0 * tau + 6.0 * tau * tau);
    const double lateral = bow * std::sin(std::numbers::pi * prog);
    const double x = (sx + dx * prog + px * lateral) * style.screen_width + style.noise_px * gauss(rng);
    const double y = (sy + dy * prog + py * lateral) * style.screen_height + style.noise_px * gauss(rng);
    double p = 0.0;
    if (style.has_pressure) {
      const double envelope = std::min({1.0, tau / 0.2, (1.0 - tau) / 0.2});
      p = std::clamp(style.pressure_mean * (0.6 + 0.4 * envelope) + style.pressure_jitter * gauss(rng), 0.0, 1.0);
    }
    seq.samples.push_back({x, y, p, times[k]});
  }
  return seq;
}

inline std::string synth_user_id(std::size_t i) {
  std::ostringstream ss;
  ss << "u" << (i < 100 ? (i < 10 ? "00" : "0") : "") << i;
  return ss.str();
}

/// Generates swipes for explicit styles. Swipes are spread over up to five
/// sessions in capture order.
inline Dataset synth_from_styles(const std::vector<SynthUserStyle>& styles, std::size_t swipes_per_user,
                                 std::uint64_t seed) {
  if (styles.size() < 2 || swipes_per_user < 2) {
    throw Error(ErrorKind::Generation, "need at least 2 users with at least 2 swipes each");
  }
  for (const auto& s : styles) s.validate();
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t sessions = std::min<std::size_t>(5, swipes_per_user);
  Dataset ds;
  ds.source = "synthetic";
  ds.seed = seed;
  for (std::size_t u = 0; u < styles.size(); ++u) {
    const std::string uid = synth_user_id(u);
    for (std::size_t k = 0; k < swipes_per_user; ++k) {
      const std::size_t session = k * sessions / swipes_per_user;
      SynthUserStyle style = styles[u];
      // small per-session drift in where the finger lands
      std::mt19937_64 session_rng(seed + 7919 * u + 104729 * session);
      style.start_x = std::clamp(style.start_x + 0.008 * gauss(session_rng), 0.0, 1.0);
      style.start_y = std::clamp(style.start_y + 0.008 * gauss(session_rng), 0.0, 1.0);
      const double start = 3.6e6 * static_cast<double>(session) + 15000.0 * static_cast<double>(k) + 1000.0;
      TouchSequence seq = synth_swipe(style, start, rng);
      seq.user_id = uid;
      seq.session_id = "s" + std::to_string(session + 1);
      ds.users[uid][seq.session_id].push_back(std::move(seq));
    }
  }
  return ds;
}

inline Dataset synth_generate(std::size_t n_users, std::size_t swipes_per_user, std::uint64_t seed) {
  if (n_users < 2 || swipes_per_user < 2) {
    throw Error(ErrorKind::Generation, "need at least 2 users with at least 2 swipes each");
  }
  std::mt19937_64 rng(seed);
  std::vector<SynthUserStyle> styles;
  for (std::size_t u = 0; u < n_users; ++u) styles.push_back(draw_style(rng, u));
  return synth_from_styles(styles, swipes_per_user, seed);
}

// ---------------------------------------------------------------------------
// splits

struct UserSplit {
  Dataset train;
  Dataset test;
};

/// User-disjoint split with floor(fraction * U) users (seeded shuffle) in train.
inline UserSplit split_users(const Dataset& ds, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(ErrorKind::Split, "train fraction must be in (0,1)");
  }
  auto ids = ds.user_ids();
  // the epsilon absorbs products like 0.7 * U landing a hair under an integer
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(ids.size()) + 1e-9));
  if (n_train < 1 || n_train >= ids.size()) {
    throw Error(ErrorKind::Split, "split leaves an empty side (" + std::to_string(ids.size()) + " users)");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  UserSplit out;
  out.train.source = out.test.source = ds.source;
  out.train.seed = out.test.seed = ds.seed;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto& side = i < n_train ? out.train : out.test;
    side.users[ids[i]] = ds.users.at(ids[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// files

inline bool is_safe_id(const std::string& id) {
  if (id.empty() || id == "." || id == "..") return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-' ||
           c == '.';
  });
}

inline std::string format_swipe_file(const TouchSequence& seq) {
  using textio::format_double;
  std::ostringstream out;
  out << kSwipeFileMagic << '\n';
  out << "# user_id " << seq.user_id << '\n';
  out << "# session_id " << seq.session_id << '\n';
  out << "# device_id " << seq.device_id << '\n';
  out << "# screen " << format_double(seq.screen_width) << ' ' << format_double(seq.screen_height) << '\n';
  out << "# pressure " << (seq.pressure_available ? 1 : 0) << '\n';
  out << "# task " << seq.task << '\n';
  out << "x,y,p,t\n";
  for (const auto& s : seq.samples) {
    out << format_double(s.x) << ',' << format_double(s.y) << ',' << format_double(s.p) << ',' << format_double(s.t)
        << '\n';
  }
  return out.str();
}

/// Parses a swipe file. Throws Schema on malformed content; does not apply
/// sequence invariants (the caller decides whether to drop).
inline TouchSequence parse_swipe_file(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || textio::trim(line) != kSwipeFileMagic) {
    throw Error(ErrorKind::Schema, "swipe file: bad header");
  }
  TouchSequence seq;
  bool have_screen = false;
  bool in_body = false;
  while (std::getline(in, line)) {
    const auto view = textio::trim(line);
    if (view.empty()) continue;
    if (!in_body && view.front() == '#') {
      std::istringstream fields{std::string(view.substr(1))};
      std::string key;
      fields >> key;
      if (key == "user_id") fields >> seq.user_id;
      else if (key == "session_id") fields >> seq.session_id;
      else if (key == "device_id") fields >> seq.device_id;
      else if (key == "task") fields >> seq.task;
      else if (key == "pressure") {
        int flag = 1;
        fields >> flag;
        seq.pressure_available = flag != 0;
      } else if (key == "screen") {
        std::string w, h;
        fields >> w >> h;
        seq.screen_width = textio::parse_double(w);
        seq.screen_height = textio::parse_double(h);
        have_screen = true;
      }
      continue;
    }
    if (!in_body) {
      if (view != "x,y,p,t") throw Error(ErrorKind::Schema, "swipe file: expected column header x,y,p,t");
      in_body = true;
      continue;
    }
    const auto cols = textio::split(view, ',');
    if (cols.size() != 4) throw Error(ErrorKind::Schema, "swipe file: expected 4 columns");
    seq.samples.push_back({textio::parse_double(textio::trim(cols[0])), textio::parse_double(textio::trim(cols[1])),
                           textio::parse_double(textio::trim(cols[2])), textio::parse_double(textio::trim(cols[3]))});
  }
  if (!have_screen) throw Error(ErrorKind::Schema, "swipe file: missing screen dimensions");
  if (!in_body) throw Error(ErrorKind::Schema, "swipe file: missing sample table");
  return seq;
}

struct ImportReport {
  std::size_t declared = 0;
  std::size_t kept = 0;
  std::size_t dropped = 0;
  std::map<std::string, std::size_t> dropped_by_reason;

  void drop(const std::string& reason) {
    ++dropped;
    ++dropped_by_reason[reason];
  }
};

struct LoadOptions {
  std::set<std::string> tasks{kRightSwipeTask};
};

struct LoadResult {
  Dataset dataset;
  ImportReport report;
};

/// Loads a manifest and its swipe files. Invalid swipes, or swipes of other
/// tasks, are dropped and counted in the report.
inline LoadResult load_dataset(const std::string& manifest_path, const LoadOptions& options = {}) {
  namespace fs = std::filesystem;
  using nlohmann::json;
  std::string text;
  try {
    text = textio::read_file(manifest_path);
  } catch (const Error&) {
    throw Error(ErrorKind::Io, "cannot read manifest " + manifest_path);
  }
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Schema, std::string("manifest is not valid JSON: ") + e.what());
  }
  auto schema_fail = [](const std::string& m) { return Error(ErrorKind::Schema, "manifest: " + m); };
  if (!doc.is_object() || doc.value("format", "") != kManifestFormat) throw schema_fail("missing format tag");
  if (!doc.contains("users") || !doc["users"].is_array()) throw schema_fail("users must be an array");

  const fs::path base = fs::path(manifest_path).parent_path();
  LoadResult result;
  Dataset& ds = result.dataset;
  ImportReport& report = result.report;
  ds.source = "imported";
  if (doc.contains("provenance") && doc["provenance"].is_object()) {
    const auto& prov = doc["provenance"];
    ds.source = prov.value("source", "imported");
    if (prov.contains("seed") && prov["seed"].is_number_unsigned()) ds.seed = prov["seed"].get<std::uint64_t>();
  }

  std::size_t entries = 0;
  for (const auto& user : doc["users"]) {
    if (!user.is_object() || !user.contains("user_id") || !user["user_id"].is_string() || !user.contains("sessions") ||
        !user["sessions"].is_array()) {
      throw schema_fail("each user needs user_id and sessions");
    }
    const std::string uid = user["user_id"];
    for (const auto& session : user["sessions"]) {
      if (!session.is_object() || !session.contains("session_id") || !session["session_id"].is_string() ||
          !session.contains("swipes") || !session["swipes"].is_array()) {
        throw schema_fail("each session needs session_id and swipes");
      }
      const std::string sid = session["session_id"];
      for (const auto& swipe : session["swipes"]) {
        if (!swipe.is_object() || !swipe.contains("file") || !swipe["file"].is_string()) {
          throw schema_fail("each swipe needs a file");
        }
        ++entries;
        const std::string task = swipe.value("task", std::string(kRightSwipeTask));
        if (!options.tasks.contains(task)) {
          report.drop("task");
          continue;
        }
        TouchSequence seq;
        try {
          seq = parse_swipe_file(textio::read_file((base / swipe["file"].get<std::string>()).string()));
        } catch (const Error& e) {
          report.drop(e.kind() == ErrorKind::Io ? "unreadable" : "malformed-file");
          continue;
        }
        if (seq.user_id.empty()) seq.user_id = uid;
        if (seq.session_id.empty()) seq.session_id = sid;
        seq.task = task;
        if (seq.user_id != uid || seq.session_id != sid) {
          report.drop("metadata-mismatch");
          continue;
        }
        if (!is_valid_sequence(seq)) {
          report.drop("invalid-sequence");
          continue;
        }
        ds.users[uid][sid].push_back(std::move(seq));
        ++report.kept;
      }
    }
  }
  report.declared = entries;
  if (doc.contains("record_count")) {
    if (!doc["record_count"].is_number_unsigned() || doc["record_count"].get<std::size_t>() != entries) {
      throw schema_fail("record_count does not match the listed swipes");
    }
  }
  // sessions or users that lost every swipe are not kept
  for (auto uit = ds.users.begin(); uit != ds.users.end();) {
    for (auto sit = uit->second.begin(); sit != uit->second.end();) {
      sit = sit->second.empty() ? uit->second.erase(sit) : std::next(sit);
    }
    uit = uit->second.empty() ? ds.users.erase(uit) : std::next(uit);
  }
  if (ds.users.empty()) throw Error(ErrorKind::NoValidUsers, "manifest yielded no valid users");
  return result;
}

/// Writes manifest.json plus one swipe file per sequence under `dir`.
/// Returns the manifest path.
inline std::string export_dataset(const Dataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  using nlohmann::ordered_json;
  validate_dataset(ds);
  fs::create_directories(dir);
  ordered_json doc;
  doc["format"] = kManifestFormat;
  doc["version"] = 1;
  doc["provenance"]["source"] = ds.source;
  if (ds.seed) doc["provenance"]["seed"] = *ds.seed;
  doc["record_count"] = ds.sequence_count();
  doc["users"] = ordered_json::array();
  for (const auto& [uid, sessions] : ds.users) {
    if (!is_safe_id(uid)) throw Error(ErrorKind::Schema, "user id not usable as a path: " + uid);
    ordered_json user;
    user["user_id"] = uid;
    user["sessions"] = ordered_json::array();
    for (const auto& [sid, swipes] : sessions) {
      if (!is_safe_id(sid)) throw Error(ErrorKind::Schema, "session id not usable as a path: " + sid);
      ordered_json session;
      session["session_id"] = sid;
      session["swipes"] = ordered_json::array();
      fs::create_directories(fs::path(dir) / uid / sid);
      for (std::size_t i = 0; i < swipes.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "%04zu.csv", i);
        const std::string rel = uid + "/" + sid + "/" + name;
        textio::write_file((fs::path(dir) / rel).string(), format_swipe_file(swipes[i]));
        session["swipes"].push_back({{"file", rel}, {"task", swipes[i].task}});
      }
      user["sessions"].push_back(std::move(session));
    }
    doc["users"].push_back(std::move(user));
  }
  const std::string manifest = (fs::path(dir) / "manifest.json").string();
  textio::write_file(manifest, doc.dump(2) + "\n");
  return manifest;
}

}  // namespace swipeauth
