// Copyright 2026 The opvi Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <fstream>
#include <map>
#include <string>

#include "opvi/optimizer.hpp"

namespace opvi {

/// Binary image matrix container format: magic "OPVI", version byte 1,
/// u32 rows, u32 cols (little-endian), then row-major pixel bytes, each
/// 0 or 1. One row per image.
Eigen::MatrixXd load_dataset(const std::string& path);
void save_dataset(const std::string& path,
                  const Eigen::Ref<const Eigen::MatrixXd>& data);

/// Checkpoint format: magic "OPVC", version byte 1, then named sections
/// until end of file. Each section is a u16 name length, the UTF-8 name,
/// a u64 element count and that many little-endian f64 values. Sections
/// are written in name order, so saving is deterministic.
using Checkpoint = std::map<std::string, Eigen::VectorXd>;
Checkpoint load_checkpoint(const std::string& path);
void save_checkpoint(const std::string& path, const Checkpoint& sections);

/// Fetches a required checkpoint section or throws IoError.
const Eigen::VectorXd& checkpoint_section(const Checkpoint& cp,
                                          const std::string& name);

/// Streams iteration stats as CSV with header
/// `iter,objective,grad_norm_lambda,grad_norm_theta,wall_ms` and, when
/// requested, flattened variational parameters as lambda_0..lambda_{n-1}.
class MetricsWriter {
 public:
  MetricsWriter(const std::string& path, int lambda_columns = 0);

  void write(const IterationStats& stats);

 private:
  std::ofstream out_;
  int lambda_columns_;
};

}  // namespace opvi
