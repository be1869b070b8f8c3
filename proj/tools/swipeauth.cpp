// swipeauth command-line entry point. Flags mirror RunConfig field names.

#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <Eigen/Core>

#include "swipeauth/pipeline.hpp"
#include "swipeauth/service.hpp"

namespace {

using swipeauth::pipeline::RunConfig;

void add_paths(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--manifest", cfg.manifest, "dataset manifest (JSON)");
  cmd->add_option("--checkpoint", cfg.checkpoint, "model checkpoint path");
  cmd->add_option("--out_dir", cfg.out_dir, "output directory");
}

void add_seed(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--seed", cfg.seed, "seed for generation, split and training");
  cmd->add_option("--train_fraction", cfg.train_fraction, "share of users in the training split");
  cmd->add_flag("--deterministic,!--no-deterministic", cfg.deterministic, "single-threaded, bit-reproducible run");
}

void add_gallery_sizes(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--G,--gallery_sizes", cfg.gallery_sizes, "gallery sizes to evaluate")->delimiter(',');
  cmd->add_option("--report", cfg.report, "report path");
  cmd->add_option("--scores", cfg.scores, "score dump path");
}

int run(const RunConfig& cfg) {
  namespace p = swipeauth::pipeline;
  cfg.validate();
  if (cfg.deterministic) Eigen::setNbThreads(1);
  auto& log = std::cout;
  if (cfg.command == "synth") {
    p::run_synth(cfg, log);
  } else if (cfg.command == "extract") {
    p::run_extract(cfg, log);
  } else if (cfg.command == "train") {
    p::run_train(cfg, log);
  } else if (cfg.command == "eval") {
    p::run_eval(cfg, log);
  } else if (cfg.command == "baseline") {
    p::run_baseline(cfg, log);
  } else if (cfg.command == "enroll") {
    p::run_enroll(cfg, log);
  } else if (cfg.command == "verify") {
    const auto out = p::run_verify(cfg, log);
    return out.decision.accept ? 0 : 3;
  } else if (cfg.command == "serve") {
    auto service = swipeauth::service::AuthService::from_files(cfg.checkpoint, cfg.gallery_dir);
    httplib::Server server;
    service.bind(server);
    log << "serving " << service.checkpoint().model.version << " on " << cfg.host << ':' << cfg.port << std::endl;
    if (!server.listen(cfg.host, cfg.port)) {
      throw swipeauth::Error(swipeauth::ErrorKind::Io, "cannot listen on " + cfg.host + ":" + std::to_string(cfg.port));
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"swipe-gesture authentication: data, training, evaluation and service"};
  app.require_subcommand(1);
  RunConfig cfg;

  auto* synth = app.add_subcommand("synth", "generate a seeded synthetic dataset");
  synth->add_option("--out_dir", cfg.out_dir, "output directory")->required();
  synth->add_option("--users", cfg.users, "number of users");
  synth->add_option("--swipes_per_user", cfg.swipes_per_user, "swipes per user");
  synth->add_option("--seed", cfg.seed, "generator seed");

  auto* extract = app.add_subcommand("extract", "write the 11x100 feature matrix of every swipe");
  add_paths(extract, cfg);

  auto* train = app.add_subcommand("train", "train the recurrent embedding on the training split");
  add_paths(train, cfg);
  add_seed(train, cfg);
  train->add_option("--epochs", cfg.train.epochs);
  train->add_option("--batches_per_epoch", cfg.train.batches_per_epoch);
  train->add_option("--batch_size", cfg.train.batch_size, "pairs per batch (even)");
  train->add_option("--learning_rate", cfg.train.learning_rate);
  train->add_option("--beta1", cfg.train.beta1);
  train->add_option("--beta2", cfg.train.beta2);
  train->add_option("--epsilon", cfg.train.epsilon);
  train->add_option("--margin", cfg.train.margin);
  train->add_option("--dropout", cfg.train.dropout);
  train->add_option("--recurrent_dropout", cfg.train.recurrent_dropout);
  train->add_option("--hidden", cfg.hidden, "LSTM units per layer");

  auto* eval = app.add_subcommand("eval", "open-set EER over gallery sizes on held-out users");
  add_paths(eval, cfg);
  add_gallery_sizes(eval, cfg);
  eval->add_flag("--all_users", cfg.all_users, "evaluate every user in the manifest (guarded against overlap)");

  auto* base = app.add_subcommand("baseline", "global-feature SVM under the same protocol");
  add_paths(base, cfg);
  add_seed(base, cfg);
  add_gallery_sizes(base, cfg);
  base->add_option("--svm_c", cfg.svm_c, "box constraint C");
  base->add_option("--svm_gamma", cfg.svm_gamma, "RBF kernel width");
  base->add_flag("--svm_grid", cfg.svm_grid, "choose C and gamma on the training users");

  for (auto* cmd : {app.add_subcommand("enroll", "add swipe files to a user's gallery"),
                    app.add_subcommand("verify", "score one swipe file against a user's gallery")}) {
    cmd->add_option("--checkpoint", cfg.checkpoint)->required();
    cmd->add_option("--gallery_dir", cfg.gallery_dir)->required();
    cmd->add_option("--user_id", cfg.user_id)->required();
    cmd->add_option("--swipe", cfg.swipes, "swipe file(s)")->required();
    if (cmd->get_name() == "verify") cmd->add_option("--threshold", cfg.threshold, "override the sidecar threshold");
  }

  auto* serve = app.add_subcommand("serve", "HTTP JSON service for enroll/verify");
  serve->add_option("--checkpoint", cfg.checkpoint)->required();
  serve->add_option("--gallery_dir", cfg.gallery_dir)->required();
  serve->add_option("--host", cfg.host);
  serve->add_option("--port", cfg.port);

  CLI11_PARSE(app, argc, argv);
  cfg.command = app.get_subcommands().front()->get_name();
  try {
    return run(cfg);
  } catch (const swipeauth::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.kind() == swipeauth::ErrorKind::Configuration ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
