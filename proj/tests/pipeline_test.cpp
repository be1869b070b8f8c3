#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>

#include "swipeauth/pipeline.hpp"

namespace swipeauth::pipeline {
namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("swipeauth_pipeline_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

RunConfig small_run(const fs::path& dir) {
  RunConfig cfg;
  cfg.out_dir = (dir / "data").string();
  cfg.users = 10;
  cfg.swipes_per_user = 9;
  cfg.seed = 5;
  cfg.manifest = (dir / "data" / "manifest.json").string();
  cfg.checkpoint = (dir / "model.ckpt").string();
  cfg.train.epochs = 1;
  cfg.train.batches_per_epoch = 3;
  cfg.train.batch_size = 16;
  cfg.hidden = 8;
  return cfg;
}

// synth -> train -> eval under one directory; returns the eval config
RunConfig full_run(const fs::path& dir) {
  std::ostringstream log;
  RunConfig cfg = small_run(dir);
  cfg.command = "synth";
  run_synth(cfg, log);
  cfg.command = "train";
  run_train(cfg, log);
  cfg.command = "eval";
  cfg.out_dir = (dir / "eval").string();
  run_eval(cfg, log);
  return cfg;
}

TEST(RunConfig, RequiresPathsPerCommand) {
  RunConfig cfg;
  cfg.command = "train";
  EXPECT_THROW(cfg.validate(), Error);
  cfg.manifest = "m.json";
  cfg.checkpoint = "c";
  EXPECT_NO_THROW(cfg.validate());
  cfg.command = "eval";
  cfg.gallery_sizes = {0};
  EXPECT_THROW(cfg.validate(), Error);
  cfg.command = "launch";
  cfg.gallery_sizes = {1};
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Eval, ReportShapeAndReplay) {
  const auto dir = scratch("report");
  const auto cfg = full_run(dir);
  const auto rows = parse_report(textio::read_file(cfg.report_path()));
  ASSERT_EQ(rows.size(), 7u);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].gallery_size, static_cast<int>(i) + 1);
    EXPECT_GE(rows[i].eer, 0.0);
    EXPECT_LE(rows[i].eer, 0.5);
  }
  // an independent sweep over the dump reproduces the report
  const auto dump = parse_score_dump(textio::read_file(cfg.scores_path()));
  const auto sets = score_sets_from_rows(dump);
  for (const auto& row : rows) {
    const auto& s = sets.at(row.gallery_size);
    EXPECT_EQ(s.genuine.size(), row.genuine);
    EXPECT_EQ(s.impostor.size(), row.impostor);
    EXPECT_NEAR(compute_eer(s).eer, row.eer, 1e-12);
  }
  const auto sidecar = load_sidecar(cfg.checkpoint);
  ASSERT_TRUE(sidecar.has_value());
  EXPECT_EQ(sidecar->by_gallery_size.size(), 7u);
  EXPECT_EQ(sidecar->by_gallery_size.at(3).threshold, rows[2].threshold);
}

TEST(Eval, OutputsAreByteIdenticalAcrossRuns) {
  const auto a = full_run(scratch("det_a"));
  const auto b = full_run(scratch("det_b"));
  for (const auto& [pa, pb] : {std::pair{a.checkpoint, b.checkpoint}, std::pair{a.report_path(), b.report_path()},
                               std::pair{a.scores_path(), b.scores_path()}}) {
    EXPECT_EQ(textio::read_file(pa), textio::read_file(pb)) << pa;
  }
}

TEST(Eval, RefusesOverlappingUsers) {
  const auto dir = scratch("overlap");
  auto cfg = full_run(dir);
  cfg.all_users = true;
  std::ostringstream log;
  try {
    run_eval(cfg, log);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::OpenSetViolation);
  }
}

TEST(Eval, MissingInputsFail) {
  RunConfig cfg;
  cfg.command = "eval";
  cfg.manifest = "/nonexistent/manifest.json";
  cfg.checkpoint = "/nonexistent/model.ckpt";
  std::ostringstream log;
  EXPECT_THROW(run_eval(cfg, log), Error);
}

TEST(Train, LossFallsOnSyntheticSixtyUsers) {
  const auto ds = synth_generate(60, 10, 1);
  const auto split = split_users(ds, 0.7, 1);
  seqnet::TrainConfig c;
  c.epochs = 5;
  c.batches_per_epoch = 20;
  c.batch_size = 64;
  c.seed = 1;
  const auto r = seqnet::train(featurize_users(split.train), c);
  EXPECT_LT(r.mean_epoch_loss(4, 20), r.mean_epoch_loss(0, 20));
}

TEST(Threshold, SidecarLookup) {
  Sidecar s;
  s.by_gallery_size[1].threshold = 0.1;
  s.by_gallery_size[3].threshold = 0.3;
  s.by_gallery_size[6].threshold = 0.6;
  EXPECT_EQ(default_threshold(s, 1, 1.5), 0.1);
  EXPECT_EQ(default_threshold(s, 2, 1.5), 0.1);
  EXPECT_EQ(default_threshold(s, 5, 1.5), 0.3);
  EXPECT_EQ(default_threshold(s, 9, 1.5), 0.6);
  Sidecar late;
  late.by_gallery_size[4].threshold = 0.4;
  EXPECT_EQ(default_threshold(late, 2, 1.5), 0.4);
  EXPECT_EQ(default_threshold(std::nullopt, 3, 1.5), 0.75);
}

TEST(Gallery, EnrollAppendsAndVerifyScores) {
  const auto dir = scratch("gallery");
  auto cfg = full_run(dir);
  cfg.gallery_dir = (dir / "galleries").string();
  cfg.user_id = "u002";
  cfg.swipes = {(dir / "data/u002/s1/0000.csv").string(), (dir / "data/u002/s1/0001.csv").string()};
  std::ostringstream log;
  EXPECT_EQ(run_enroll(cfg, log).size(), 2u);
  cfg.swipes = {(dir / "data/u002/s2/0000.csv").string()};
  EXPECT_EQ(run_enroll(cfg, log).size(), 3u);
  cfg.threshold = 1e9;
  const auto out = run_verify(cfg, log);
  EXPECT_TRUE(out.decision.accept);
  EXPECT_EQ(out.threshold, 1e9);
  cfg.user_id = "nobody";
  try {
    run_verify(cfg, log);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Enrollment);
  }
  EXPECT_THROW(gallery_path(cfg.gallery_dir, "../escape"), Error);
}

TEST(Baseline, SameSplitAsCheckpoint) {
  const auto dir = scratch("baseline");
  auto cfg = full_run(dir);
  cfg.command = "baseline";
  cfg.gallery_sizes = {1, 3};
  std::ostringstream log;
  const auto out = run_baseline(cfg, log);
  const auto ck = seqnet::load_checkpoint_file(cfg.checkpoint);
  const auto test = split_users(load_dataset(cfg.manifest).dataset, ck.train_fraction, ck.split_seed).test;
  for (const auto& row : out.result.rows) EXPECT_TRUE(test.users.contains(row.user_id));
  EXPECT_TRUE(fs::exists(cfg.report_path("baseline_report.csv")));
  EXPECT_EQ(parse_score_dump(textio::read_file(cfg.scores_path("baseline_scores.csv"))), out.result.rows);
}

}  // namespace
}  // namespace swipeauth::pipeline
