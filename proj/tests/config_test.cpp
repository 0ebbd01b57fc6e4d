// Copyright (c) 2026 the mixdet authors. Licensed under the Apache License 2.0.

#include "mixdet/config.hpp"

#include <gtest/gtest.h>

#include <stdexcept>
#include <string>

namespace mixdet {
namespace {

TEST(Toml, ScalarsSectionsCommentsAndArrays) {
  const std::string text = R"(# top comment
title = "mix lab"   # trailing comment
count = 42
ratio = -0.5
big = 1e3
flag = true
other = false

[section]
name = "with \"quotes\" and \\ and \n"
values = [1, 2, 3]
floats = [0.5, 1, 1.5]
empty = []
trailing = [7, 8,]
)";
  const TomlTable t = parse_toml(text);
  EXPECT_EQ(t.get_string("", "title", ""), "mix lab");
  EXPECT_EQ(t.get_int("", "count", 0), 42);
  EXPECT_EQ(t.get_double("", "ratio", 0.0), -0.5);
  EXPECT_EQ(t.get_double("", "big", 0.0), 1000.0);
  EXPECT_TRUE(t.get_bool("", "flag", false));
  EXPECT_FALSE(t.get_bool("", "other", true));
  EXPECT_EQ(t.get_string("section", "name", ""), "with \"quotes\" and \\ and \n");
  EXPECT_EQ(t.get_int_array("section", "values", {}), (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(t.get_double_array("section", "floats", {}), (std::vector<double>{0.5, 1.0, 1.5}));
  EXPECT_TRUE(t.get_double_array("section", "empty", {1.0}).empty());
  EXPECT_EQ(t.get_int_array("section", "trailing", {}), (std::vector<int>{7, 8}));
  t.require_all_used();
}

TEST(Toml, MissingKeysFallBackToDefaults) {
  const TomlTable t = parse_toml("a = 1\n");
  EXPECT_EQ(t.get_int("", "missing", 7), 7);
  EXPECT_EQ(t.get_string("sec", "missing", "d"), "d");
  EXPECT_EQ(t.get_double("", "missing", 0.25), 0.25);
  EXPECT_TRUE(t.get_bool("", "missing", true));
  EXPECT_FALSE(t.has("", "missing"));
  EXPECT_TRUE(t.has("", "a"));
}

TEST(Toml, IntegerWidensToDoubleButNotTheReverse) {
  const TomlTable t = parse_toml("i = 3\nf = 2.5\n");
  EXPECT_EQ(t.get_double("", "i", 0.0), 3.0);
  EXPECT_THROW(t.get_int("", "f", 0), std::runtime_error);
  EXPECT_THROW(t.get_string("", "i", ""), std::runtime_error);
  EXPECT_THROW(t.get_bool("", "i", false), std::runtime_error);
}

TEST(Toml, ErrorsCarryLineNumbers) {
  auto message_of = [](const std::string& text) {
    try {
      parse_toml(text);
    } catch (const std::runtime_error& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message_of("ok = 1\nbroken\n").find("line 2"), std::string::npos);
  EXPECT_NE(message_of("x 1\n").find("expected '='"), std::string::npos);
  EXPECT_NE(message_of("x = \"unterminated\n").find("unterminated string"), std::string::npos);
  EXPECT_NE(message_of("x = [1, 2\n").find("']'"), std::string::npos);
  EXPECT_NE(message_of("[sec\nx = 1\n").find("missing ']'"), std::string::npos);
  EXPECT_NE(message_of("x = zebra\n").find("cannot parse value \"zebra\""), std::string::npos);
  EXPECT_NE(message_of("x = 1\nx = 2\n").find("duplicate key \"x\""), std::string::npos);
  EXPECT_NE(message_of("x = 1 y = 2\n").find("unexpected text"), std::string::npos);
  EXPECT_NE(message_of("x = \"a\\q\"\n").find("escape"), std::string::npos);
}

TEST(Toml, UnknownKeysAreReportedAfterTheFact) {
  const TomlTable t = parse_toml("a = 1\n[sec]\ntipo = 2\n");
  EXPECT_EQ(t.get_int("", "a", 0), 1);
  try {
    t.require_all_used();
    FAIL() << "expected unknown-key error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("sec.tipo"), std::string::npos);
  }
}

TEST(LabConfig, EmptyFileYieldsTheBenchmarkDefaults) {
  const LabConfig c = lab_config_from_toml(parse_toml(""));
  EXPECT_EQ(c.data.spec.image_size, 96);
  EXPECT_EQ(c.data.n_labeled, 200u);
  EXPECT_EQ(c.data.n_unlabeled, 2000u);
  EXPECT_EQ(c.data.n_eval, 500u);
  EXPECT_EQ(c.arch.input_size, 96);
  EXPECT_EQ(c.arch.num_classes, 3);
  EXPECT_EQ(c.train.mode, TrainMode::kCsdIsd);
  EXPECT_EQ(c.train.types, IsdTypes::kBoth);
  EXPECT_EQ(c.train.alpha, 100.0);
  EXPECT_EQ(c.train.gamma1, 0.1);
  EXPECT_EQ(c.train.gamma2, 1.0);
  EXPECT_EQ(c.train.labeled_fraction, 0.5);
  EXPECT_EQ(c.train.eval_every, 500u);
  EXPECT_EQ(c.train.checkpoint_every, 2000u);
  EXPECT_EQ(c.eval.score_threshold, 0.01);
  EXPECT_EQ(c.eval.nms_iou, 0.45);
  EXPECT_EQ(c.eval.max_detections, 200);
  EXPECT_EQ(c.eval.match_iou, 0.5);
  EXPECT_FALSE(c.eval.eleven_point);
}

TEST(LabConfig, FullOverlayReachesEveryField) {
  const std::string text = R"(
[data]
image_size = 48
min_objects = 2
max_objects = 2
min_box = 0.2
max_box = 0.4
max_overlap_iou = 0.1
color_jitter = 0.05
seed = 9
n_labeled = 10
n_unlabeled = 20
n_eval = 5
dir = "data/other"

[arch]
channels = [4, 8]
num_classes = 3
aspect_ratios = [1.0, 2.0]
anchor_scales = [0.3, 0.6]

[train]
mode = "isd"
types = "type2"
alpha = 1.5
gamma1 = 0.2
gamma2 = 0.7
batch_size = 4
labeled_fraction = 0.25
learning_rate = 0.005
momentum = 0.8
weight_decay = 0.0001
max_iterations = 100
ramp_up = 10
ramp_down = 10
eval_every = 25
checkpoint_every = 50
seed = 3
isd_unlabeled_only = true
match_iou = 0.4
neg_pos_ratio = 2.0

[eval]
score_threshold = 0.05
nms_iou = 0.5
max_detections = 50
match_iou = 0.6
eleven_point = true

[run]
out_dir = "runs/x"
)";
  const LabConfig c = lab_config_from_toml(parse_toml(text));
  EXPECT_EQ(c.data.spec.image_size, 48);
  EXPECT_EQ(c.data.spec.min_objects, 2);
  EXPECT_EQ(c.data.spec.max_objects, 2);
  EXPECT_EQ(c.data.spec.min_box, 0.2);
  EXPECT_EQ(c.data.spec.max_box, 0.4);
  EXPECT_EQ(c.data.spec.max_overlap_iou, 0.1);
  EXPECT_EQ(c.data.spec.color_jitter, 0.05);
  EXPECT_EQ(c.data.spec.seed, 9u);
  EXPECT_EQ(c.data.n_labeled, 10u);
  EXPECT_EQ(c.data.dir, "data/other");
  // arch.input_size was not given: it follows data.image_size.
  EXPECT_EQ(c.arch.input_size, 48);
  EXPECT_EQ(c.arch.channels, (std::vector<int>{4, 8}));
  EXPECT_EQ(c.arch.aspect_ratios, (std::vector<double>{1.0, 2.0}));
  EXPECT_EQ(c.arch.anchor_scales, (std::vector<double>{0.3, 0.6}));
  EXPECT_EQ(c.train.mode, TrainMode::kIsd);
  EXPECT_EQ(c.train.types, IsdTypes::kType2);
  EXPECT_EQ(c.train.alpha, 1.5);
  EXPECT_EQ(c.train.gamma1, 0.2);
  EXPECT_EQ(c.train.gamma2, 0.7);
  EXPECT_EQ(c.train.batch_size, 4u);
  EXPECT_EQ(c.train.labeled_fraction, 0.25);
  EXPECT_EQ(c.train.learning_rate, 0.005);
  EXPECT_EQ(c.train.momentum, 0.8);
  EXPECT_EQ(c.train.weight_decay, 0.0001);
  EXPECT_EQ(c.train.max_iterations, 100u);
  EXPECT_EQ(c.train.ramp_up, 10u);
  EXPECT_EQ(c.train.ramp_down, 10u);
  EXPECT_EQ(c.train.eval_every, 25u);
  EXPECT_EQ(c.train.checkpoint_every, 50u);
  EXPECT_EQ(c.train.seed, 3u);
  EXPECT_TRUE(c.train.isd_unlabeled_only);
  EXPECT_EQ(c.train.match_iou, 0.4);
  EXPECT_EQ(c.train.neg_pos_ratio, 2.0);
  EXPECT_EQ(c.eval.score_threshold, 0.05);
  EXPECT_EQ(c.eval.nms_iou, 0.5);
  EXPECT_EQ(c.eval.max_detections, 50);
  EXPECT_EQ(c.eval.match_iou, 0.6);
  EXPECT_TRUE(c.eval.eleven_point);
  EXPECT_EQ(c.out_dir, "runs/x");
}

TEST(LabConfig, RejectsUnknownAndInconsistentKeys) {
  EXPECT_THROW(lab_config_from_toml(parse_toml("[train]\nalhpa = 1\n")), std::runtime_error);
  // Explicit arch.input_size that disagrees with the dataset image size.
  EXPECT_THROW(lab_config_from_toml(
                   parse_toml("[data]\nimage_size = 48\n[arch]\ninput_size = 96\n")),
               std::invalid_argument);
  EXPECT_THROW(lab_config_from_toml(parse_toml("[train]\nmode = \"both\"\n")),
               std::invalid_argument);
  EXPECT_THROW(lab_config_from_toml(parse_toml("[train]\nbatch_size = 1\n")),
               std::invalid_argument);
  EXPECT_THROW(lab_config_from_toml(parse_toml("[data]\nn_labeled = -5\n")),
               std::runtime_error);
}

TEST(LabConfig, FileRoundTrip) {
  const std::string path = ::testing::TempDir() + "lab_config_test.toml";
  {
    std::ofstream f(path, std::ios::binary);
    f << "[train]\nseed = 11\nmode = \"csd\"\n";
  }
  const LabConfig c = load_lab_config(path);
  EXPECT_EQ(c.train.seed, 11u);
  EXPECT_EQ(c.train.mode, TrainMode::kCsd);
  EXPECT_THROW(load_lab_config(path + ".does-not-exist"), std::runtime_error);
}

}  // namespace
}  // namespace mixdet
