// Copyright 2026 The opvi Authors
// SPDX-License-Identifier: Apache-2.0

#include "opvi/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "opvi/errors.hpp"
#include "testutil.hpp"

namespace {

using namespace opvi;

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) {
    path = std::string("/tmp/opvi_test_") + name;
  }
  ~TempFile() { std::remove(path.c_str()); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

TEST_SUITE("io") {

TEST_CASE("dataset round-trips bit patterns exactly") {
  TempFile f("roundtrip.opvi");
  Eigen::MatrixXd data(3, 5);
  data << 0, 1, 1, 0, 1,
          1, 0, 0, 0, 1,
          1, 1, 1, 1, 0;
  save_dataset(f.path, data);
  Eigen::MatrixXd back = load_dataset(f.path);
  REQUIRE(back.rows() == 3);
  REQUIRE(back.cols() == 5);
  CHECK((back - data).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("dataset header layout is stable") {
  TempFile f("header.opvi");
  Eigen::MatrixXd data(1, 2);
  data << 1, 0;
  save_dataset(f.path, data);
  std::string bytes = slurp(f.path);
  REQUIRE(bytes.size() == 4 + 1 + 4 + 4 + 2);
  CHECK(bytes.substr(0, 4) == "OPVI");
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 1);  // rows, little-endian
  CHECK(bytes[6] == 0);
  CHECK(bytes[9] == 2);  // cols
  CHECK(bytes[13] == 1);
  CHECK(bytes[14] == 0);
}

TEST_CASE("dataset loader rejects malformed files") {
  TempFile f("bad.opvi");
  SUBCASE("wrong magic") {
    spit(f.path, std::string("JUNK") + '\x01');
    CHECK_THROWS_AS((void)load_dataset(f.path), IoError);
  }
  SUBCASE("wrong version") {
    std::string bytes = "OPVI";
    bytes += '\x02';
    spit(f.path, bytes);
    CHECK_THROWS_AS((void)load_dataset(f.path), IoError);
  }
  SUBCASE("truncated pixel payload") {
    Eigen::MatrixXd data = Eigen::MatrixXd::Ones(2, 4);
    save_dataset(f.path, data);
    std::string bytes = slurp(f.path);
    spit(f.path, bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS((void)load_dataset(f.path), IoError);
  }
  SUBCASE("non-binary pixel") {
    Eigen::MatrixXd data = Eigen::MatrixXd::Zero(1, 2);
    save_dataset(f.path, data);
    std::string bytes = slurp(f.path);
    bytes[bytes.size() - 1] = '\x07';
    spit(f.path, bytes);
    CHECK_THROWS_AS((void)load_dataset(f.path), IoError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS((void)load_dataset("/tmp/opvi_no_such_file.opvi"), IoError);
  }
}

TEST_CASE("saving non-binary data is rejected") {
  TempFile f("nonbinary.opvi");
  Eigen::MatrixXd data(1, 2);
  data << 0.0, 0.5;
  CHECK_THROWS_AS(save_dataset(f.path, data), InvalidArgumentError);
  CHECK_THROWS_AS(save_dataset(f.path, Eigen::MatrixXd(0, 0)),
                  InvalidArgumentError);
}

TEST_CASE("checkpoint round-trips named sections") {
  TempFile f("roundtrip.opvc");
  Checkpoint cp;
  cp["lambda"] = Eigen::Vector3d(0.25, -1.5, 1e-300);
  cp["theta"] = Eigen::VectorXd::LinSpaced(7, -3.0, 3.0);
  cp["adam_m"] = Eigen::VectorXd::Zero(2);
  save_checkpoint(f.path, cp);
  Checkpoint back = load_checkpoint(f.path);
  REQUIRE(back.size() == 3);
  for (const auto& [name, values] : cp) {
    REQUIRE(back.count(name) == 1);
    CHECK((back[name] - values).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("checkpoint supports empty sections and exotic doubles") {
  TempFile f("exotic.opvc");
  Checkpoint cp;
  cp["empty"] = Eigen::VectorXd(0);
  Eigen::VectorXd v(3);
  v << -0.0, 5e-324, 1.7976931348623157e308;
  cp["edge"] = v;
  save_checkpoint(f.path, cp);
  Checkpoint back = load_checkpoint(f.path);
  CHECK(back["empty"].size() == 0);
  CHECK(back["edge"][0] == 0.0);
  CHECK(std::signbit(back["edge"][0]));
  CHECK(back["edge"][1] == 5e-324);
  CHECK(back["edge"][2] == 1.7976931348623157e308);
}

TEST_CASE("checkpoint writes are byte-for-byte deterministic") {
  TempFile a("det_a.opvc");
  TempFile b("det_b.opvc");
  Checkpoint cp;
  cp["zulu"] = Eigen::Vector2d(1, 2);
  cp["alpha"] = Eigen::Vector2d(3, 4);
  save_checkpoint(a.path, cp);
  save_checkpoint(b.path, cp);
  CHECK(slurp(a.path) == slurp(b.path));
  // Sections are stored sorted by name.
  std::string bytes = slurp(a.path);
  CHECK(bytes.find("alpha") < bytes.find("zulu"));
}

TEST_CASE("checkpoint loader rejects malformed files") {
  TempFile f("bad.opvc");
  SUBCASE("wrong magic") {
    spit(f.path, std::string("OPVI") + '\x01');
    CHECK_THROWS_AS((void)load_checkpoint(f.path), IoError);
  }
  SUBCASE("truncated value array") {
    Checkpoint cp;
    cp["x"] = Eigen::Vector3d(1, 2, 3);
    save_checkpoint(f.path, cp);
    std::string bytes = slurp(f.path);
    spit(f.path, bytes.substr(0, bytes.size() - 4));
    CHECK_THROWS_AS((void)load_checkpoint(f.path), IoError);
  }
  SUBCASE("truncated name") {
    std::string bytes = "OPVC";
    bytes += '\x01';
    bytes += '\x05';
    bytes += '\x00';
    bytes += "ab";
    spit(f.path, bytes);
    CHECK_THROWS_AS((void)load_checkpoint(f.path), IoError);
  }
}

TEST_CASE("checkpoint_section fetches by name or throws") {
  Checkpoint cp;
  cp["present"] = Eigen::Vector2d(9, 8);
  CHECK(checkpoint_section(cp, "present")[1] == 8.0);
  CHECK_THROWS_AS((void)checkpoint_section(cp, "absent"), IoError);
}

TEST_CASE("metrics writer emits the documented header and rows") {
  TempFile f("metrics.csv");
  {
    MetricsWriter w(f.path, 2);
    IterationStats s;
    s.iteration = 0;
    s.objective = 1.5;
    s.grad_norm_lambda = 0.25;
    s.grad_norm_theta = 0.125;
    s.wall_ms = 3.5;
    s.lambda = Eigen::Vector2d(0.5, -2.0);
    w.write(s);
  }
  std::string text = slurp(f.path);
  std::istringstream lines(text);
  std::string header, row;
  std::getline(lines, header);
  std::getline(lines, row);
  CHECK(header ==
        "iter,objective,grad_norm_lambda,grad_norm_theta,wall_ms,"
        "lambda_0,lambda_1");
  CHECK(row == "0,1.5,0.25,0.125,3.5,0.5,-2");
}

TEST_CASE("metrics writer omits lambda columns when not requested") {
  TempFile f("metrics_plain.csv");
  {
    MetricsWriter w(f.path, 0);
    IterationStats s;
    s.iteration = 7;
    s.objective = -0.5;
    s.grad_norm_lambda = 1.0;
    s.grad_norm_theta = 0.0;
    s.wall_ms = 0.0;
    w.write(s);
  }
  std::string text = slurp(f.path);
  CHECK(text.find("lambda_0") == std::string::npos);
  CHECK(text.find("7,-0.5,1,0,0") != std::string::npos);
}

}  // TEST_SUITE

}  // namespace
