#pragma once

// Versioned text checkpoint. Every tensor is written by name with its
// shape and row-major values in shortest round-trip decimal, so save/load
// is bit-exact.

#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "swipeauth/error.hpp"
#include "swipeauth/seqnet/params.hpp"
#include "swipeauth/textio.hpp"

namespace swipeauth::seqnet {

inline constexpr const char* kCheckpointMagic = "swipeauth-checkpoint";
inline constexpr int kCheckpointFormat = 1;

struct Checkpoint {
  ModelParams model;
  TrainConfig config;
  // open-set bookkeeping: which users the model has seen
  std::vector<std::string> train_users;
  std::uint64_t split_seed = 0;
  double train_fraction = 0.7;

  bool operator==(const Checkpoint& o) const;
};

namespace detail {

inline void write_tensor(std::ostream& out, const std::string& name, const Eigen::MatrixXd& m, bool vector) {
  out << "tensor " << name;
  if (vector) {
    out << " 1 " << m.size() << '\n';
  } else {
    out << " 2 " << m.rows() << ' ' << m.cols() << '\n';
  }
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out << ' ';
      out << textio::format_double(m(r, c));
    }
    out << '\n';
  }
}

inline void write_lstm(std::ostream& out, const std::string& prefix, const LstmParams& l) {
  const int H = l.hidden();
  for (int g = 0; g < 4; ++g) {
    write_tensor(out, prefix + ".W_" + kGateNames[g], l.W.middleRows(g * H, H), false);
  }
  for (int g = 0; g < 4; ++g) {
    write_tensor(out, prefix + ".U_" + kGateNames[g], l.U.middleRows(g * H, H), false);
  }
  for (int g = 0; g < 4; ++g) {
    write_tensor(out, prefix + ".b_" + kGateNames[g], l.b.segment(g * H, H), true);
  }
}

inline bool models_equal(const ModelParams& a, const ModelParams& b) {
  auto same = [](const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
    return x.rows() == y.rows() && x.cols() == y.cols() && x == y;
  };
  return a.version == b.version && same(a.layer1.W, b.layer1.W) && same(a.layer1.U, b.layer1.U) &&
         same(a.layer1.b, b.layer1.b) && same(a.norm.gamma, b.norm.gamma) && same(a.norm.beta, b.norm.beta) &&
         same(a.norm.running_mean, b.norm.running_mean) && same(a.norm.running_var, b.norm.running_var) &&
         same(a.layer2.W, b.layer2.W) && same(a.layer2.U, b.layer2.U) && same(a.layer2.b, b.layer2.b);
}

}  // namespace detail

inline bool Checkpoint::operator==(const Checkpoint& o) const {
  return detail::models_equal(model, o.model) && config == o.config && train_users == o.train_users &&
         split_seed == o.split_seed && train_fraction == o.train_fraction;
}

inline void save_checkpoint(std::ostream& out, const Checkpoint& ck) {
  using textio::format_double;
  const auto& c = ck.config;
  out << kCheckpointMagic << ' ' << kCheckpointFormat << '\n';
  out << "model_version " << ck.model.version << '\n';
  out << "dims " << ck.model.input_size() << ' ' << ck.model.hidden_size() << ' ' << ck.model.embedding_size() << '\n';
  out << "config learning_rate " << format_double(c.learning_rate) << '\n';
  out << "config beta1 " << format_double(c.beta1) << '\n';
  out << "config beta2 " << format_double(c.beta2) << '\n';
  out << "config epsilon " << format_double(c.epsilon) << '\n';
  out << "config margin " << format_double(c.margin) << '\n';
  out << "config epochs " << c.epochs << '\n';
  out << "config batches_per_epoch " << c.batches_per_epoch << '\n';
  out << "config batch_size " << c.batch_size << '\n';
  out << "config dropout " << format_double(c.dropout) << '\n';
  out << "config recurrent_dropout " << format_double(c.recurrent_dropout) << '\n';
  out << "config seed " << c.seed << '\n';
  out << "split_seed " << ck.split_seed << '\n';
  out << "train_fraction " << format_double(ck.train_fraction) << '\n';
  out << "train_users " << ck.train_users.size();
  for (const auto& u : ck.train_users) {
    if (!textio::is_token(u)) throw Error(ErrorKind::Schema, "user id not storable in checkpoint: '" + u + "'");
    out << ' ' << u;
  }
  out << '\n';
  detail::write_lstm(out, "layer1", ck.model.layer1);
  detail::write_tensor(out, "norm.gamma", ck.model.norm.gamma, true);
  detail::write_tensor(out, "norm.beta", ck.model.norm.beta, true);
  detail::write_tensor(out, "norm.running_mean", ck.model.norm.running_mean, true);
  detail::write_tensor(out, "norm.running_var", ck.model.norm.running_var, true);
  detail::write_lstm(out, "layer2", ck.model.layer2);
  out << "end\n";
}

inline std::string checkpoint_to_string(const Checkpoint& ck) {
  std::ostringstream ss;
  save_checkpoint(ss, ck);
  return ss.str();
}

inline Checkpoint load_checkpoint(std::istream& in) {
  auto fail = [](const std::string& msg) -> Error { return Error(ErrorKind::Schema, "checkpoint: " + msg); };
  std::string word;
  int format = 0;
  if (!(in >> word >> format) || word != kCheckpointMagic) throw fail("bad magic");
  if (format != kCheckpointFormat) throw fail("unsupported format " + std::to_string(format));

  Checkpoint ck;
  int in_dim = 0, hidden = 0, emb = 0;
  std::map<std::string, Eigen::MatrixXd> tensors;
  std::string model_version;
  bool ended = false;
  while (in >> word) {
    if (word == "end") {
      ended = true;
      break;
    }
    if (word == "model_version") {
      in >> model_version;
    } else if (word == "dims") {
      in >> in_dim >> hidden >> emb;
    } else if (word == "config") {
      std::string key, value;
      in >> key >> value;
      auto& c = ck.config;
      if (key == "learning_rate") c.learning_rate = textio::parse_double(value);
      else if (key == "beta1") c.beta1 = textio::parse_double(value);
      else if (key == "beta2") c.beta2 = textio::parse_double(value);
      else if (key == "epsilon") c.epsilon = textio::parse_double(value);
      else if (key == "margin") c.margin = textio::parse_double(value);
      else if (key == "epochs") c.epochs = textio::parse_int<int>(value);
      else if (key == "batches_per_epoch") c.batches_per_epoch = textio::parse_int<int>(value);
      else if (key == "batch_size") c.batch_size = textio::parse_int<int>(value);
      else if (key == "dropout") c.dropout = textio::parse_double(value);
      else if (key == "recurrent_dropout") c.recurrent_dropout = textio::parse_double(value);
      else if (key == "seed") c.seed = textio::parse_int<std::uint64_t>(value);
      else throw fail("unknown config key " + key);
    } else if (word == "split_seed") {
      std::string v;
      in >> v;
      ck.split_seed = textio::parse_int<std::uint64_t>(v);
    } else if (word == "train_fraction") {
      std::string v;
      in >> v;
      ck.train_fraction = textio::parse_double(v);
    } else if (word == "train_users") {
      std::size_t n = 0;
      in >> n;
      ck.train_users.resize(n);
      for (auto& u : ck.train_users) in >> u;
    } else if (word == "tensor") {
      std::string name;
      int rank = 0;
      Eigen::Index rows = 0, cols = 1;
      in >> name >> rank;
      if (rank == 1) {
        in >> rows;
      } else if (rank == 2) {
        in >> rows >> cols;
      } else {
        throw fail("bad rank for " + name);
      }
      if (!in || rows < 0 || cols < 0) throw fail("bad shape for " + name);
      Eigen::MatrixXd m(rows, cols);
      std::string v;
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
          if (!(in >> v)) throw fail("truncated tensor " + name);
          m(r, c) = textio::parse_double(v);
        }
      }
      tensors[name] = std::move(m);
    } else {
      throw fail("unknown record '" + word + "'");
    }
    if (!in) throw fail("truncated record after '" + word + "'");
  }
  if (!ended) throw fail("missing end marker");
  if (in_dim <= 0 || hidden <= 0 || emb <= 0) throw fail("missing or invalid dims");

  auto take = [&](const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw fail("missing tensor " + name);
    if (it->second.rows() != rows || it->second.cols() != cols) throw fail("shape mismatch for " + name);
    return it->second;
  };
  auto read_lstm = [&](const std::string& prefix, int inputs, int units) {
    LstmParams l = LstmParams::zeros(inputs, units);
    for (int g = 0; g < 4; ++g) {
      l.W.middleRows(g * units, units) = take(prefix + ".W_" + kGateNames[g], units, inputs);
      l.U.middleRows(g * units, units) = take(prefix + ".U_" + kGateNames[g], units, units);
      l.b.segment(g * units, units) = take(prefix + ".b_" + kGateNames[g], units, 1);
    }
    return l;
  };
  ck.model.version = model_version;
  ck.model.layer1 = read_lstm("layer1", in_dim, hidden);
  ck.model.norm.gamma = take("norm.gamma", hidden, 1);
  ck.model.norm.beta = take("norm.beta", hidden, 1);
  ck.model.norm.running_mean = take("norm.running_mean", hidden, 1);
  ck.model.norm.running_var = take("norm.running_var", hidden, 1);
  ck.model.layer2 = read_lstm("layer2", hidden, emb);
  if (!all_finite(ck.model)) throw fail("non-finite or negative-variance parameters");
  return ck;
}

inline Checkpoint checkpoint_from_string(const std::string& text) {
  std::istringstream ss(text);
  return load_checkpoint(ss);
}

inline void save_checkpoint_file(const std::string& path, const Checkpoint& ck) {
  textio::write_file(path, checkpoint_to_string(ck));
}

inline Checkpoint load_checkpoint_file(const std::string& path) {
  return checkpoint_from_string(textio::read_file(path));
}

}  // namespace swipeauth::seqnet
